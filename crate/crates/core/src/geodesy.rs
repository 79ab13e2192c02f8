//! Measurement types, the local ENU frame and WGS-84 conversions.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;
const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

/// A vector in the local east-north-up frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnuVector {
    pub e: f64,
    pub n: f64,
    pub u: f64,
}

impl EnuVector {
    pub const ZERO: EnuVector = EnuVector {
        e: 0.0,
        n: 0.0,
        u: 0.0,
    };

    pub const fn new(e: f64, n: f64, u: f64) -> Self {
        Self { e, n, u }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.e, self.n, self.u)
    }

    pub fn norm(self) -> f64 {
        self.to_vector().norm()
    }

    pub fn is_finite(self) -> bool {
        self.e.is_finite() && self.n.is_finite() && self.u.is_finite()
    }
}

impl From<Vector3<f64>> for EnuVector {
    fn from(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

impl From<EnuVector> for Vector3<f64> {
    fn from(v: EnuVector) -> Self {
        v.to_vector()
    }
}

/// One IMU output: body-frame specific force and angular rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub accel: Vector3<f64>,
    pub gyro: Vector3<f64>,
}

/// A GNSS position/velocity solution in ENU with per-axis standard deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnssFix {
    pub t: f64,
    pub pos: EnuVector,
    pub vel: EnuVector,
    pub pos_std: Vector3<f64>,
    pub vel_std: Vector3<f64>,
    pub pos_valid: bool,
    pub vel_valid: bool,
}

impl GnssFix {
    /// A fix with neither position nor velocity, used to hold an epoch open during outages.
    pub fn missing(t: f64) -> Self {
        Self {
            t,
            pos: EnuVector::ZERO,
            vel: EnuVector::ZERO,
            pos_std: Vector3::repeat(1.0),
            vel_std: Vector3::repeat(1.0),
            pos_valid: false,
            vel_valid: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t.is_finite() {
            return Err(Error::NonFinite("fix timestamp"));
        }
        if self.pos_valid {
            if !self.pos.is_finite() {
                return Err(Error::NonFinite("fix position"));
            }
            if !self.pos_std.iter().all(|s| s.is_finite() && *s > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "fix at t={} has non-positive position std",
                    self.t
                )));
            }
        }
        if self.vel_valid {
            if !self.vel.is_finite() {
                return Err(Error::NonFinite("fix velocity"));
            }
            if !self.vel_std.iter().all(|s| s.is_finite() && *s > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "fix at t={} has non-positive velocity std",
                    self.t
                )));
            }
        }
        Ok(())
    }
}

/// Uniform gravity pointing down the local up axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityModel {
    pub g: EnuVector,
}

impl Default for GravityModel {
    fn default() -> Self {
        Self {
            g: EnuVector::new(0.0, 0.0, -STANDARD_GRAVITY),
        }
    }
}

impl GravityModel {
    pub fn vector(&self) -> Vector3<f64> {
        self.g.to_vector()
    }
}

/// Geodetic coordinates on the WGS-84 ellipsoid. Angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Llh {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub height: f64,
}

fn check_origin(origin: &Llh) -> Result<()> {
    if !(origin.lat_deg.is_finite() && origin.lon_deg.is_finite() && origin.height.is_finite()) {
        return Err(Error::NonFinite("origin"));
    }
    if !(-90.0..=90.0).contains(&origin.lat_deg) {
        return Err(Error::InvalidInput(format!(
            "origin latitude {} outside [-90, 90]",
            origin.lat_deg
        )));
    }
    Ok(())
}

pub fn llh_to_ecef(llh: &Llh) -> Vector3<f64> {
    let (slat, clat) = llh.lat_deg.to_radians().sin_cos();
    let (slon, clon) = llh.lon_deg.to_radians().sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * slat * slat).sqrt();
    Vector3::new(
        (n + llh.height) * clat * clon,
        (n + llh.height) * clat * slon,
        (n * (1.0 - WGS84_E2) + llh.height) * slat,
    )
}

/// Rotation taking ECEF difference vectors into ENU at `origin`.
fn ecef_to_enu_rotation(origin: &Llh) -> Matrix3<f64> {
    let (slat, clat) = origin.lat_deg.to_radians().sin_cos();
    let (slon, clon) = origin.lon_deg.to_radians().sin_cos();
    Matrix3::new(
        -slon, clon, 0.0, //
        -slat * clon, -slat * slon, clat, //
        clat * clon, clat * slon, slat,
    )
}

pub fn ecef_to_enu(p_ecef: &Vector3<f64>, origin: &Llh) -> Result<EnuVector> {
    check_origin(origin)?;
    if !p_ecef.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite("ECEF point"));
    }
    let d = p_ecef - llh_to_ecef(origin);
    Ok((ecef_to_enu_rotation(origin) * d).into())
}

pub fn enu_to_ecef(p: &EnuVector, origin: &Llh) -> Result<Vector3<f64>> {
    check_origin(origin)?;
    if !p.is_finite() {
        return Err(Error::NonFinite("ENU point"));
    }
    Ok(llh_to_ecef(origin) + ecef_to_enu_rotation(origin).transpose() * p.to_vector())
}

/// IMU data accumulated between two GNSS epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuWindow {
    pub t1: f64,
    pub t2: f64,
    /// Σ a_t over the window.
    pub sum_accel: Vector3<f64>,
    /// Σ ω_t·Δt_imu over the window.
    pub sum_gyro_dt: Vector3<f64>,
    pub n_samples: usize,
}

impl ImuWindow {
    /// Empirical IMU step (t2 − t1) / n.
    pub fn dt_imu(&self) -> f64 {
        (self.t2 - self.t1) / self.n_samples as f64
    }

    /// Average specific force over the window, (Δt_imu/Δt_gnss)·Σ a_t.
    pub fn mean_accel(&self) -> Vector3<f64> {
        self.sum_accel / self.n_samples as f64
    }
}

/// Sums IMU samples with `t1 < t <= t2`. `samples` must be sorted by time.
pub fn integrate_imu_window(samples: &[ImuSample], t1: f64, t2: f64) -> Result<ImuWindow> {
    if !(t1.is_finite() && t2.is_finite()) {
        return Err(Error::NonFinite("window bounds"));
    }
    if t1 >= t2 {
        return Err(Error::InvalidInput(format!(
            "window start {t1} not before end {t2}"
        )));
    }
    let start = samples.partition_point(|s| s.t <= t1);
    let end = samples.partition_point(|s| s.t <= t2);
    let window = &samples[start..end];
    if window.is_empty() {
        return Err(Error::NoImuCoverage { t1, t2 });
    }
    let dt = (t2 - t1) / window.len() as f64;
    let mut sum_accel = Vector3::zeros();
    let mut sum_gyro = Vector3::zeros();
    for s in window {
        sum_accel += s.accel;
        sum_gyro += s.gyro;
    }
    Ok(ImuWindow {
        t1,
        t2,
        sum_accel,
        sum_gyro_dt: sum_gyro * dt,
        n_samples: window.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tokyo() -> Llh {
        Llh {
            lat_deg: 35.68,
            lon_deg: 139.77,
            height: 40.0,
        }
    }

    #[test]
    fn origin_maps_to_zero() {
        let o = tokyo();
        let p = ecef_to_enu(&llh_to_ecef(&o), &o).unwrap();
        assert!(p.norm() < 1e-9);
    }

    #[test]
    fn ellipsoid_normal_is_up() {
        let o = tokyo();
        let above = Llh {
            height: o.height + 1.0,
            ..o
        };
        let p = ecef_to_enu(&llh_to_ecef(&above), &o).unwrap();
        assert!((p.u - 1.0).abs() < 1e-9, "{p:?}");
        assert!(p.e.abs() < 1e-9 && p.n.abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let o = tokyo();
        assert!(ecef_to_enu(&Vector3::new(f64::NAN, 0.0, 0.0), &o).is_err());
        let bad = Llh {
            lat_deg: 91.0,
            ..o
        };
        assert!(ecef_to_enu(&Vector3::zeros(), &bad).is_err());
    }

    #[test]
    fn gravity_magnitude() {
        assert_eq!(GravityModel::default().g.norm(), STANDARD_GRAVITY);
    }

    fn constant_stream(n: usize, rate: f64, accel: Vector3<f64>, gyro: Vector3<f64>) -> Vec<ImuSample> {
        (1..=n)
            .map(|k| ImuSample {
                t: k as f64 / rate,
                accel,
                gyro,
            })
            .collect()
    }

    #[test]
    fn constant_accel_window() {
        let s = constant_stream(100, 100.0, Vector3::new(0.0, 0.0, STANDARD_GRAVITY), Vector3::zeros());
        let w = integrate_imu_window(&s, 0.0, 1.0).unwrap();
        assert_eq!(w.n_samples, 100);
        assert!((w.sum_accel - Vector3::new(0.0, 0.0, 980.665)).norm() < 1e-9);
    }

    #[test]
    fn constant_gyro_window() {
        let s = constant_stream(100, 100.0, Vector3::zeros(), Vector3::new(0.0, 0.0, 0.1));
        let w = integrate_imu_window(&s, 0.0, 1.0).unwrap();
        assert!((w.sum_gyro_dt - Vector3::new(0.0, 0.0, 0.1)).norm() < 1e-12);
    }

    #[test]
    fn empty_window_is_reported() {
        let s = constant_stream(10, 100.0, Vector3::zeros(), Vector3::zeros());
        assert!(matches!(
            integrate_imu_window(&s, 5.0, 6.0),
            Err(Error::NoImuCoverage { .. })
        ));
        assert!(integrate_imu_window(&s, 1.0, 1.0).is_err());
    }

    #[test]
    fn sample_on_boundary_belongs_to_earlier_window() {
        let s = constant_stream(200, 100.0, Vector3::repeat(1.0), Vector3::zeros());
        let a = integrate_imu_window(&s, 0.0, 1.0).unwrap();
        let b = integrate_imu_window(&s, 1.0, 2.0).unwrap();
        assert_eq!(a.n_samples, 100);
        assert_eq!(b.n_samples, 100);
    }

    proptest! {
        #[test]
        fn enu_round_trip(
            lat in -89.0f64..89.0, lon in -180.0f64..180.0, h in -100.0f64..3000.0,
            e in -50_000.0f64..50_000.0, n in -50_000.0f64..50_000.0, u in -1000.0f64..1000.0,
        ) {
            let o = Llh { lat_deg: lat, lon_deg: lon, height: h };
            let p = EnuVector::new(e, n, u);
            let back = ecef_to_enu(&enu_to_ecef(&p, &o).unwrap(), &o).unwrap();
            prop_assert!((back.to_vector() - p.to_vector()).norm() < 1e-9);
            let x = enu_to_ecef(&p, &o).unwrap();
            let x2 = enu_to_ecef(&ecef_to_enu(&x, &o).unwrap(), &o).unwrap();
            prop_assert!((x2 - x).norm() < 1e-9);
        }

        #[test]
        fn window_count_matches_brute_force(
            mut ts in prop::collection::vec(0.0f64..10.0, 1..200),
            a in 0.0f64..5.0, len in 0.01f64..5.0,
        ) {
            ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let samples: Vec<_> = ts.iter().map(|&t| ImuSample { t, accel: Vector3::repeat(1.0), gyro: Vector3::zeros() }).collect();
            let b = a + len;
            let expected = ts.iter().filter(|&&t| t > a && t <= b).count();
            match integrate_imu_window(&samples, a, b) {
                Ok(w) => prop_assert_eq!(w.n_samples, expected),
                Err(Error::NoImuCoverage { .. }) => prop_assert_eq!(expected, 0),
                Err(e) => prop_assert!(false, "{}", e),
            }
        }

        #[test]
        fn window_partition(split in 1usize..299, vals in prop::collection::vec(-20i32..20, 300)) {
            // integer-valued samples so float sums are exact in any grouping
            let samples: Vec<_> = vals.iter().enumerate().map(|(k, &v)| ImuSample {
                t: (k + 1) as f64 / 100.0,
                accel: Vector3::new(v as f64, 2.0 * v as f64, 1.0),
                gyro: Vector3::new(0.0, 0.0, v as f64),
            }).collect();
            let t0 = 0.0;
            let t1 = split as f64 / 100.0 + 0.005;
            let t2 = 3.0;
            let whole = integrate_imu_window(&samples, t0, t2).unwrap();
            let left = integrate_imu_window(&samples, t0, t1).unwrap();
            let right = integrate_imu_window(&samples, t1, t2).unwrap();
            prop_assert_eq!(left.n_samples + right.n_samples, whole.n_samples);
            prop_assert_eq!(left.sum_accel + right.sum_accel, whole.sum_accel);
        }
    }
}
