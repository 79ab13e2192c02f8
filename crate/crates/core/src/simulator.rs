//! Synthetic ground truth and sensor data.
//!
//! Trajectories are chains of segments with quintic-smoothstep speed and yaw
//! profiles, so speed, heading, acceleration and yaw rate are all available in
//! closed form; only the horizontal position is integrated (Gauss-Legendre per
//! IMU interval). The IMU reports the mean specific force and mean angular rate
//! over each sample interval, i.e. delta-velocity and delta-angle outputs
//! divided by the interval.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geodesy::{EnuVector, GnssFix, GravityModel, ImuSample};

const RNG_STREAM_IMU: u64 = 1;
const RNG_STREAM_GNSS: u64 = 2;
const RNG_STREAM_ROUTE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub position: EnuVector,
    pub velocity: EnuVector,
    /// World → body.
    pub attitude: Rotation3<f64>,
    /// Body frame, rad/s.
    pub angular_rate: Vector3<f64>,
    /// World frame, m/s².
    pub acceleration: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Sample rate, Hz.
    pub rate: f64,
    pub samples: Vec<TruthSample>,
}

impl GroundTruth {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate
    }

    /// Sample exactly at `t` (within 1e-6 s), if the grid has one.
    pub fn sample_at(&self, t: f64) -> Option<&TruthSample> {
        let k = (t * self.rate).round();
        if k < 0.0 {
            return None;
        }
        self.samples
            .get(k as usize)
            .filter(|s| (s.t - t).abs() < 1e-6)
    }

    /// Builds truth from position/velocity samples alone (e.g. an imported file).
    /// Attitude follows the horizontal heading, held while nearly stationary; rates
    /// and accelerations come from central differences.
    pub fn from_kinematics(t: &[f64], pos: &[EnuVector], vel: &[EnuVector]) -> Result<Self> {
        let n = t.len();
        if n < 2 || pos.len() != n || vel.len() != n {
            return Err(Error::InvalidInput(
                "ground truth needs at least 2 samples with matching columns".into(),
            ));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("ground truth times not increasing".into()));
        }
        let rate = (n - 1) as f64 / (t[n - 1] - t[0]);
        let mut yaw = Vec::with_capacity(n);
        let mut last = vel
            .iter()
            .find(|v| v.e.hypot(v.n) > 0.5)
            .map_or(0.0, |v| v.n.atan2(v.e));
        for v in vel {
            if v.e.hypot(v.n) > 0.5 {
                let raw = v.n.atan2(v.e);
                // unwrap
                last += wrap_angle(raw - last);
            }
            yaw.push(last);
        }
        let diff = |k: usize, f: &dyn Fn(usize) -> Vector3<f64>| {
            let (a, b) = if k == 0 {
                (0, 1)
            } else if k == n - 1 {
                (n - 2, n - 1)
            } else {
                (k - 1, k + 1)
            };
            (f(b) - f(a)) / (t[b] - t[a])
        };
        let samples = (0..n)
            .map(|k| {
                let acceleration = diff(k, &|j| vel[j].to_vector());
                let yaw_rate = diff(k, &|j| Vector3::new(0.0, 0.0, yaw[j])).z;
                TruthSample {
                    t: t[k],
                    position: pos[k],
                    velocity: vel[k],
                    attitude: yaw_attitude(yaw[k]),
                    angular_rate: Vector3::new(0.0, 0.0, yaw_rate),
                    acceleration,
                }
            })
            .collect();
        Ok(Self { rate, samples })
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    a
}

/// World → body for a level vehicle with x forward, y left, z up.
fn yaw_attitude(yaw: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).inverse()
}

/// Quintic smoothstep and its integral/derivatives on [0, 1].
fn smooth(tau: f64) -> (f64, f64, f64) {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let s = t3 * (10.0 - 15.0 * tau + 6.0 * t2);
    let ds = 30.0 * t2 * (1.0 - tau) * (1.0 - tau);
    let integral = t2 * t2 * (2.5 - 3.0 * tau + t2);
    (s, ds, integral)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Yaw {
    /// Net heading change with zero rate at both ends.
    Bump(f64),
    /// Yaw rate moving smoothly between two values (constant when equal).
    Rate(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    duration: f64,
    v0: f64,
    v1: f64,
    yaw: Yaw,
}

#[derive(Debug, Clone, Copy)]
struct SegmentStart {
    t: f64,
    s: f64,
    heading: f64,
}

#[derive(Debug, Clone, Copy)]
struct Kinematics {
    speed: f64,
    speed_dot: f64,
    arc: f64,
    heading: f64,
    yaw_rate: f64,
}

#[derive(Debug, Clone)]
struct Route {
    segments: Vec<Segment>,
    starts: Vec<SegmentStart>,
    hill_amplitude: f64,
    hill_wavenumber: f64,
}

impl Route {
    fn new(segments: Vec<Segment>, heading0: f64, hill_amplitude: f64, hill_wavelength: f64) -> Self {
        let mut starts = Vec::with_capacity(segments.len());
        let mut cur = SegmentStart {
            t: 0.0,
            s: 0.0,
            heading: heading0,
        };
        for seg in &segments {
            starts.push(cur);
            let end = Self::eval_segment(seg, &cur, seg.duration);
            cur = SegmentStart {
                t: cur.t + seg.duration,
                s: end.arc,
                heading: end.heading,
            };
        }
        let hill_wavenumber = if hill_wavelength > 0.0 {
            2.0 * PI / hill_wavelength
        } else {
            0.0
        };
        Self {
            segments,
            starts,
            hill_amplitude,
            hill_wavenumber,
        }
    }

    fn end_time(&self) -> f64 {
        self.starts
            .last()
            .zip(self.segments.last())
            .map_or(0.0, |(s, g)| s.t + g.duration)
    }

    fn eval_segment(seg: &Segment, start: &SegmentStart, dt: f64) -> Kinematics {
        let big_t = seg.duration;
        let tau = (dt / big_t).clamp(0.0, 1.0);
        let (s, ds, is) = smooth(tau);
        let dv = seg.v1 - seg.v0;
        let speed = seg.v0 + dv * s;
        let speed_dot = dv * ds / big_t;
        let arc = start.s + big_t * (seg.v0 * tau + dv * is);
        let (heading, yaw_rate) = match seg.yaw {
            Yaw::Bump(angle) => (start.heading + angle * s, angle * ds / big_t),
            Yaw::Rate(a, b) => (
                start.heading + big_t * (a * tau + (b - a) * is),
                a + (b - a) * s,
            ),
        };
        Kinematics {
            speed,
            speed_dot,
            arc,
            heading,
            yaw_rate,
        }
    }

    fn kinematics(&self, t: f64) -> Kinematics {
        let idx = self.starts.partition_point(|s| s.t <= t).saturating_sub(1);
        Self::eval_segment(&self.segments[idx], &self.starts[idx], t - self.starts[idx].t)
    }

    fn horizontal_velocity(&self, t: f64) -> (f64, f64) {
        let k = self.kinematics(t);
        (k.speed * k.heading.cos(), k.speed * k.heading.sin())
    }

    fn sample(&self, t: f64, horizontal: (f64, f64)) -> TruthSample {
        let k = self.kinematics(t);
        let (ch, sh) = (k.heading.cos(), k.heading.sin());
        let (a, w) = (self.hill_amplitude, self.hill_wavenumber);
        let phase = w * k.arc;
        let up = a * phase.sin();
        let up_dot = a * w * phase.cos() * k.speed;
        let up_ddot = a * w * (-w * phase.sin() * k.speed * k.speed + phase.cos() * k.speed_dot);
        let velocity = EnuVector::new(k.speed * ch, k.speed * sh, up_dot);
        let acceleration = Vector3::new(
            k.speed_dot * ch - k.speed * k.yaw_rate * sh,
            k.speed_dot * sh + k.speed * k.yaw_rate * ch,
            up_ddot,
        );
        TruthSample {
            t,
            position: EnuVector::new(horizontal.0, horizontal.1, up),
            velocity,
            attitude: yaw_attitude(k.heading),
            angular_rate: Vector3::new(0.0, 0.0, k.yaw_rate),
            acceleration,
        }
    }

    fn sampled(&self, rate: f64, n: usize) -> GroundTruth {
        // 5-point Gauss-Legendre nodes/weights on [-1, 1]
        const NODES: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const WEIGHTS: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let dt = 1.0 / rate;
        let mut samples = Vec::with_capacity(n);
        let mut horiz = (0.0, 0.0);
        for k in 0..n {
            let t = k as f64 / rate;
            if k > 0 {
                let t0 = (k - 1) as f64 / rate;
                let mid = t0 + 0.5 * dt;
                for (x, wgt) in NODES.iter().zip(WEIGHTS) {
                    let (ve, vn) = self.horizontal_velocity(mid + 0.5 * dt * x);
                    horiz.0 += 0.5 * dt * wgt * ve;
                    horiz.1 += 0.5 * dt * wgt * vn;
                }
            }
            samples.push(self.sample(t, horiz));
        }
        GroundTruth { rate, samples }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    FigureEight,
    CityGrid,
    StopAndGo,
}

impl std::str::FromStr for TrajectoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "figure-eight" => Ok(Self::FigureEight),
            "city-grid" => Ok(Self::CityGrid),
            "stop-and-go" => Ok(Self::StopAndGo),
            other => Err(Error::InvalidInput(format!(
                "unknown trajectory '{other}' (expected figure-eight, city-grid or stop-and-go)"
            ))),
        }
    }
}

impl std::fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::FigureEight => "figure-eight",
            Self::CityGrid => "city-grid",
            Self::StopAndGo => "stop-and-go",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryParams {
    /// Cruise speed, m/s.
    pub speed: f64,
    /// Figure-eight loop radius, m.
    pub radius: f64,
    /// Speed through city-grid corners, m/s.
    pub turn_speed: f64,
    /// City-grid block length, m.
    pub block_length: f64,
    /// City-grid: a full stop every this many blocks. 0 disables stops; stop-and-go
    /// then degenerates to a constant-velocity straight drive from t = 0.
    pub stop_every: usize,
    /// Standstill duration at stops, s.
    pub dwell: f64,
    /// Limit on longitudinal acceleration, m/s².
    pub max_accel: f64,
    /// Amplitude of the sinusoidal height profile along the path, m.
    pub hill_amplitude: f64,
    /// Wavelength of the height profile along the path, m.
    pub hill_wavelength: f64,
    /// Heading at t = 0, rad from east.
    pub initial_heading: f64,
    /// Seed for route choices (city-grid turn directions).
    pub route_seed: u64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            speed: 12.0,
            radius: 50.0,
            turn_speed: 6.0,
            block_length: 150.0,
            stop_every: 3,
            dwell: 6.0,
            max_accel: 1.5,
            hill_amplitude: 2.0,
            hill_wavelength: 400.0,
            initial_heading: 0.3,
            route_seed: 7,
        }
    }
}

impl TrajectoryParams {
    fn validate(&self, kind: TrajectoryKind) -> Result<()> {
        let pos = [
            ("speed", self.speed),
            ("max_accel", self.max_accel),
            ("radius", self.radius),
            ("turn_speed", self.turn_speed),
            ("block_length", self.block_length),
        ];
        for (name, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("trajectory {name} must be positive, got {v}")));
            }
        }
        if !(self.dwell.is_finite() && self.dwell >= 0.0)
            || !(self.hill_amplitude.is_finite() && self.hill_amplitude >= 0.0)
            || !(self.hill_wavelength.is_finite() && self.hill_wavelength >= 0.0)
            || !self.initial_heading.is_finite()
        {
            return Err(Error::InvalidInput("invalid trajectory parameters".into()));
        }
        if kind == TrajectoryKind::CityGrid && self.turn_speed > self.speed {
            return Err(Error::InvalidInput("turn speed exceeds cruise speed".into()));
        }
        Ok(())
    }
}

/// Duration for a smoothstep speed change that peaks at `max_accel`.
fn ramp_time(dv: f64, max_accel: f64) -> f64 {
    (1.875 * dv.abs() / max_accel).max(1.0)
}

fn figure_eight(duration: f64, p: &TrajectoryParams) -> Vec<Segment> {
    let v = p.speed;
    let w = v / p.radius;
    let start = ramp_time(v, p.max_accel);
    let switch = 4.0;
    let mut segs = vec![Segment {
        duration: start,
        v0: 0.0,
        v1: v,
        yaw: Yaw::Rate(0.0, 0.0),
    }];
    segs.push(Segment {
        duration: 2.0,
        v0: v,
        v1: v,
        yaw: Yaw::Rate(0.0, w),
    });
    // Constant-rate arcs joined by smooth rate reversals; each lobe turns ~2π.
    let arc = (2.0 * PI / w - switch).max(1.0);
    let mut sign = 1.0;
    let mut t = start + 2.0;
    while t < duration + 10.0 {
        segs.push(Segment {
            duration: arc,
            v0: v,
            v1: v,
            yaw: Yaw::Rate(sign * w, sign * w),
        });
        segs.push(Segment {
            duration: switch,
            v0: v,
            v1: v,
            yaw: Yaw::Rate(sign * w, -sign * w),
        });
        sign = -sign;
        t += arc + switch;
    }
    segs
}

fn stop_and_go(duration: f64, p: &TrajectoryParams) -> Vec<Segment> {
    let ramp = ramp_time(p.speed, p.max_accel);
    let cruise = (p.block_length / p.speed).max(1.0);
    let hold = |d: f64, v: f64| Segment {
        duration: d,
        v0: v,
        v1: v,
        yaw: Yaw::Rate(0.0, 0.0),
    };
    if p.stop_every == 0 {
        return vec![hold(duration + 10.0, p.speed)];
    }
    let mut segs = vec![hold(p.dwell.max(1.0), 0.0)];
    let mut t = p.dwell.max(1.0);
    while t < duration + 10.0 {
        segs.push(Segment {
            duration: ramp,
            v0: 0.0,
            v1: p.speed,
            yaw: Yaw::Rate(0.0, 0.0),
        });
        segs.push(hold(cruise, p.speed));
        segs.push(Segment {
            duration: ramp,
            v0: p.speed,
            v1: 0.0,
            yaw: Yaw::Rate(0.0, 0.0),
        });
        segs.push(hold(p.dwell.max(1.0), 0.0));
        t += 2.0 * ramp + cruise + p.dwell.max(1.0);
    }
    segs
}

fn city_grid(duration: f64, p: &TrajectoryParams) -> Vec<Segment> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.route_seed);
    rng.set_stream(RNG_STREAM_ROUTE);
    let hold = |d: f64, v: f64| Segment {
        duration: d,
        v0: v,
        v1: v,
        yaw: Yaw::Rate(0.0, 0.0),
    };
    let ramp = |v0: f64, v1: f64| Segment {
        duration: ramp_time(v1 - v0, p.max_accel),
        v0,
        v1,
        yaw: Yaw::Rate(0.0, 0.0),
    };
    // Quarter turn at turn_speed along a path of ~ (π/2)·25 m.
    let turn_time = (FRAC_PI_2 * 25.0 / p.turn_speed).max(3.0);

    let mut segs = vec![hold(3.0, 0.0), ramp(0.0, p.speed)];
    let mut t: f64 = segs.iter().map(|s| s.duration).sum();
    let mut block = 0usize;
    while t < duration + 10.0 {
        block += 1;
        let cruise = (p.block_length / p.speed).max(1.0);
        segs.push(hold(cruise, p.speed));
        if p.stop_every > 0 && block % p.stop_every == 0 {
            segs.push(ramp(p.speed, 0.0));
            segs.push(hold(p.dwell.max(1.0), 0.0));
            segs.push(ramp(0.0, p.turn_speed));
        } else {
            segs.push(ramp(p.speed, p.turn_speed));
        }
        let dir = if rng.random::<bool>() { 1.0 } else { -1.0 };
        segs.push(Segment {
            duration: turn_time,
            v0: p.turn_speed,
            v1: p.turn_speed,
            yaw: Yaw::Bump(dir * FRAC_PI_2),
        });
        segs.push(ramp(p.turn_speed, p.speed));
        t = segs.iter().map(|s| s.duration).sum();
    }
    segs
}

/// Ground truth sampled at `rate` Hz for `duration` seconds (samples at k/rate, k < duration·rate).
pub fn generate_trajectory(
    kind: TrajectoryKind,
    duration: f64,
    rate: f64,
    params: &TrajectoryParams,
) -> Result<GroundTruth> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::InvalidInput(format!("duration must be positive, got {duration}")));
    }
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidInput(format!("rate must be positive, got {rate}")));
    }
    params.validate(kind)?;
    let segments = match kind {
        TrajectoryKind::FigureEight => figure_eight(duration, params),
        TrajectoryKind::CityGrid => city_grid(duration, params),
        TrajectoryKind::StopAndGo => stop_and_go(duration, params),
    };
    let hill = if kind == TrajectoryKind::StopAndGo {
        0.0
    } else {
        params.hill_amplitude
    };
    let route = Route::new(segments, params.initial_heading, hill, params.hill_wavelength);
    debug_assert!(route.end_time() >= duration);
    let n = (duration * rate).round() as usize;
    Ok(route.sampled(rate, n))
}

/// Sensor noise model: IMU white noise, bias random walk and constant bias, GNSS noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    /// (m/s²)/√Hz
    pub accel_noise_density: f64,
    /// (m/s²)·√Hz
    pub accel_random_walk: f64,
    /// m/s², applied on every axis
    pub accel_constant_bias: f64,
    pub accel_rate: f64,
    /// (rad/s)/√Hz
    pub gyro_noise_density: f64,
    /// (rad/s)·√Hz
    pub gyro_random_walk: f64,
    /// rad/s, applied on every axis
    pub gyro_constant_bias: f64,
    pub gyro_rate: f64,
    /// m, per axis
    pub gnss_pos_sigma: f64,
    pub gnss_pos_rate: f64,
    /// m/s, per axis
    pub gnss_vel_sigma: f64,
    pub gnss_vel_rate: f64,
    /// When false, fixes are exact but still report the nominal sigmas.
    pub gnss_noise: bool,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            accel_noise_density: 1.86e-3,
            accel_random_walk: 4.33e-4,
            accel_constant_bias: 0.19,
            accel_rate: 100.0,
            gyro_noise_density: 1.87e-4,
            gyro_random_walk: 2.66e-5,
            gyro_constant_bias: 0.0545,
            gyro_rate: 100.0,
            gnss_pos_sigma: 1.0,
            gnss_pos_rate: 1.0,
            gnss_vel_sigma: 0.2,
            gnss_vel_rate: 1.0,
            gnss_noise: true,
        }
    }
}

impl SensorModel {
    /// All stochastic and bias terms off; rates and reported sigmas unchanged.
    pub fn noiseless() -> Self {
        Self {
            accel_noise_density: 0.0,
            accel_random_walk: 0.0,
            accel_constant_bias: 0.0,
            gyro_noise_density: 0.0,
            gyro_random_walk: 0.0,
            gyro_constant_bias: 0.0,
            gnss_noise: false,
            ..Self::default()
        }
    }

    pub fn imu_rate(&self) -> f64 {
        self.accel_rate
    }

    pub fn gnss_rate(&self) -> f64 {
        self.gnss_pos_rate
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            self.accel_noise_density,
            self.accel_random_walk,
            self.accel_constant_bias.abs(),
            self.gyro_noise_density,
            self.gyro_random_walk,
            self.gyro_constant_bias.abs(),
        ];
        let positive = [
            self.accel_rate,
            self.gyro_rate,
            self.gnss_pos_sigma,
            self.gnss_pos_rate,
            self.gnss_vel_sigma,
            self.gnss_vel_rate,
        ];
        if !non_negative.iter().all(|v| v.is_finite() && *v >= 0.0)
            || !positive.iter().all(|v| v.is_finite() && *v > 0.0)
        {
            return Err(Error::Config(format!("invalid sensor model {self:?}")));
        }
        if self.accel_rate != self.gyro_rate || self.gnss_pos_rate != self.gnss_vel_rate {
            return Err(Error::Config(
                "accelerometer/gyro rates and GNSS position/velocity rates must match".into(),
            ));
        }
        let ratio = self.imu_rate() / self.gnss_rate();
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::Config("IMU rate must be an integer multiple of the GNSS rate".into()));
        }
        Ok(())
    }
}

/// IMU placement on the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountConfig {
    /// Offset from the center of rotation, body frame, m.
    pub lever_arm: Vector3<f64>,
    /// Body → IMU.
    pub mount_rotation: Rotation3<f64>,
}

impl Default for MountConfig {
    fn default() -> Self {
        Self {
            lever_arm: Vector3::zeros(),
            mount_rotation: Rotation3::identity(),
        }
    }
}

impl MountConfig {
    /// IMU displaced sideways (body y axis) by `arm` meters.
    pub fn lateral(arm: f64) -> Self {
        Self {
            lever_arm: Vector3::new(0.0, arm, 0.0),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultipathWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub max_pos_err: f64,
    pub max_vel_err: f64,
}

impl MultipathWindow {
    pub fn new(t_start: f64, t_end: f64) -> Self {
        Self {
            t_start,
            t_end,
            max_pos_err: 10.0,
            max_vel_err: 1.0,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end
    }
}

/// Windows are half-open, [t_start, t_end).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FaultSchedule {
    pub multipath_windows: Vec<MultipathWindow>,
    pub outage_windows: Vec<(f64, f64)>,
}

impl FaultSchedule {
    pub fn is_empty(&self) -> bool {
        self.multipath_windows.is_empty() && self.outage_windows.is_empty()
    }

    pub fn in_outage(&self, t: f64) -> bool {
        self.outage_windows.iter().any(|&(a, b)| t >= a && t < b)
    }

    pub fn multipath_at(&self, t: f64) -> Option<&MultipathWindow> {
        self.multipath_windows.iter().find(|w| w.contains(t))
    }

    pub fn validate(&self, span: (f64, f64)) -> Result<()> {
        let inside = |a: f64, b: f64| a.is_finite() && b.is_finite() && a < b && a >= span.0 && b <= span.1;
        for w in &self.multipath_windows {
            if !inside(w.t_start, w.t_end) || !(w.max_pos_err >= 0.0) || !(w.max_vel_err >= 0.0) {
                return Err(Error::Config(format!("invalid multipath window {w:?} for span {span:?}")));
            }
        }
        for &(a, b) in &self.outage_windows {
            if !inside(a, b) {
                return Err(Error::Config(format!("invalid outage window ({a}, {b}) for span {span:?}")));
            }
        }
        Ok(())
    }
}

fn gaussian3(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    let mut draw = || -> f64 { StandardNormal.sample(rng) };
    Vector3::new(draw(), draw(), draw()) * sigma
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mean specific force and angular rate over each sample interval, before sensor errors.
/// Returned in the IMU frame. The first sample uses instantaneous values.
pub fn ideal_imu(truth: &GroundTruth, mount: &MountConfig, gravity: &GravityModel) -> Vec<ImuSample> {
    let g = gravity.vector();
    let m = mount.mount_rotation;
    let r = mount.lever_arm;
    truth
        .samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let (accel_world, omega, attitude) = if k == 0 {
                (s.acceleration, s.angular_rate, s.attitude)
            } else {
                let p = &truth.samples[k - 1];
                let dt = s.t - p.t;
                let accel = (s.velocity.to_vector() - p.velocity.to_vector()) / dt;
                // body-frame rotation from the previous attitude to this one
                let delta = p.attitude * s.attitude.inverse();
                let omega = delta.scaled_axis() / dt;
                let mid = p.attitude.slerp(&s.attitude, 0.5);
                (accel, omega, mid)
            };
            let specific = attitude * (accel_world - g) + omega.cross(&omega.cross(&r));
            ImuSample {
                t: s.t,
                accel: m * specific,
                gyro: m * omega,
            }
        })
        .collect()
}

/// Body-frame IMU measurements with lever-arm, bias and noise effects.
pub fn synthesize_imu(
    truth: &GroundTruth,
    model: &SensorModel,
    mount: &MountConfig,
    seed: u64,
) -> Result<Vec<ImuSample>> {
    model.validate()?;
    if (truth.rate - model.imu_rate()).abs() > 1e-9 * model.imu_rate() {
        return Err(Error::Config(format!(
            "truth sampled at {} Hz but IMU rate is {} Hz",
            truth.rate,
            model.imu_rate()
        )));
    }
    let mut rng = seeded(seed, RNG_STREAM_IMU);
    let dt = 1.0 / model.imu_rate();
    let accel_white = model.accel_noise_density * model.imu_rate().sqrt();
    let gyro_white = model.gyro_noise_density * model.imu_rate().sqrt();
    let accel_step = model.accel_random_walk * dt.sqrt();
    let gyro_step = model.gyro_random_walk * dt.sqrt();
    let mut accel_walk = Vector3::zeros();
    let mut gyro_walk = Vector3::zeros();
    let accel_const = Vector3::repeat(model.accel_constant_bias);
    let gyro_const = Vector3::repeat(model.gyro_constant_bias);

    let mut out = ideal_imu(truth, mount, &GravityModel::default());
    for s in &mut out {
        accel_walk += gaussian3(&mut rng, accel_step);
        gyro_walk += gaussian3(&mut rng, gyro_step);
        s.accel += accel_const + accel_walk + gaussian3(&mut rng, accel_white);
        s.gyro += gyro_const + gyro_walk + gaussian3(&mut rng, gyro_white);
    }
    Ok(out)
}

fn random_direction(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = gaussian3(rng, 1.0);
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// GNSS fixes at the GNSS rate. Outage epochs are kept as invalid rows.
pub fn synthesize_gnss(
    truth: &GroundTruth,
    model: &SensorModel,
    faults: &FaultSchedule,
    seed: u64,
) -> Result<Vec<GnssFix>> {
    model.validate()?;
    faults.validate((0.0, truth.duration()))?;
    let mut rng = seeded(seed, RNG_STREAM_GNSS);
    let period = 1.0 / model.gnss_rate();
    let n = (truth.duration() * model.gnss_rate() - 1e-9).ceil() as usize;
    let pos_std = Vector3::repeat(model.gnss_pos_sigma);
    let vel_std = Vector3::repeat(model.gnss_vel_sigma);
    let mut fixes = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * period;
        let s = truth
            .sample_at(t)
            .ok_or_else(|| Error::Config(format!("no truth sample at GNSS epoch {t}")))?;
        // Draw noise unconditionally so the realization does not depend on the fault schedule.
        let mut dp = gaussian3(&mut rng, model.gnss_pos_sigma);
        let mut dv = gaussian3(&mut rng, model.gnss_vel_sigma);
        let mp_pos = random_direction(&mut rng) * rng.random::<f64>();
        let mp_vel = random_direction(&mut rng) * rng.random::<f64>();
        if !model.gnss_noise {
            dp = Vector3::zeros();
            dv = Vector3::zeros();
        }
        if let Some(w) = faults.multipath_at(t) {
            dp += mp_pos * w.max_pos_err;
            dv += mp_vel * w.max_vel_err;
        }
        let valid = !faults.in_outage(t);
        fixes.push(GnssFix {
            t,
            pos: (s.position.to_vector() + dp).into(),
            vel: (s.velocity.to_vector() + dv).into(),
            pos_std,
            vel_std,
            pos_valid: valid,
            vel_valid: valid,
        });
    }
    Ok(fixes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::STANDARD_GRAVITY;

    fn params() -> TrajectoryParams {
        TrajectoryParams::default()
    }

    #[test]
    fn sample_count() {
        let t = generate_trajectory(TrajectoryKind::CityGrid, 300.0, 100.0, &params()).unwrap();
        assert_eq!(t.samples.len(), 30000);
    }

    #[test]
    fn figure_eight_centripetal() {
        let p = TrajectoryParams {
            speed: 10.0,
            radius: 50.0,
            hill_amplitude: 0.0,
            ..params()
        };
        let t = generate_trajectory(TrajectoryKind::FigureEight, 200.0, 100.0, &p).unwrap();
        // well inside the first constant-rate arc
        let s = t.sample_at(40.0).unwrap();
        assert!((s.acceleration.norm() - 2.0).abs() < 1e-9, "{}", s.acceleration.norm());
        assert!((s.angular_rate.z.abs() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn stop_and_go_reaches_standstill() {
        let t = generate_trajectory(TrajectoryKind::StopAndGo, 120.0, 100.0, &params()).unwrap();
        let speeds: Vec<f64> = t.samples.iter().map(|s| s.velocity.norm()).collect();
        assert!(speeds.iter().any(|v| *v == 0.0));
        assert!(speeds.iter().any(|v| *v > 10.0));
    }

    #[test]
    fn stop_and_go_without_stops_cruises() {
        let p = TrajectoryParams {
            stop_every: 0,
            ..params()
        };
        let t = generate_trajectory(TrajectoryKind::StopAndGo, 30.0, 100.0, &p).unwrap();
        let v0 = t.samples[0].velocity;
        assert!((v0.norm() - p.speed).abs() < 1e-12);
        assert!(t.samples.iter().all(|s| s.velocity == v0 && s.acceleration.norm() < 1e-12));
    }

    #[test]
    fn kinematic_consistency() {
        for kind in [TrajectoryKind::FigureEight, TrajectoryKind::CityGrid, TrajectoryKind::StopAndGo] {
            let t = generate_trajectory(kind, 120.0, 100.0, &params()).unwrap();
            for w in t.samples.windows(3) {
                let dt = w[2].t - w[0].t;
                let v_num = (w[2].position.to_vector() - w[0].position.to_vector()) / dt;
                assert!((v_num - w[1].velocity.to_vector()).norm() < 1e-3, "{kind}");
                let a_num = (w[2].velocity.to_vector() - w[0].velocity.to_vector()) / dt;
                assert!((a_num - w[1].acceleration).norm() < 1e-3, "{kind}");
                let d = w[0].attitude * w[2].attitude.inverse();
                let rate = d.scaled_axis() / dt;
                assert!((rate - w[1].angular_rate).norm() < 1e-3, "{kind}");
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(generate_trajectory(TrajectoryKind::CityGrid, 0.0, 100.0, &params()).is_err());
        let bad = TrajectoryParams {
            speed: -1.0,
            ..params()
        };
        assert!(generate_trajectory(TrajectoryKind::FigureEight, 10.0, 100.0, &bad).is_err());
    }

    fn stationary(n: usize) -> GroundTruth {
        GroundTruth {
            rate: 100.0,
            samples: (0..n)
                .map(|k| TruthSample {
                    t: k as f64 / 100.0,
                    position: EnuVector::ZERO,
                    velocity: EnuVector::ZERO,
                    attitude: Rotation3::identity(),
                    angular_rate: Vector3::zeros(),
                    acceleration: Vector3::zeros(),
                })
                .collect(),
        }
    }

    #[test]
    fn rest_reads_gravity_reaction() {
        let imu = synthesize_imu(&stationary(50), &SensorModel::noiseless(), &MountConfig::default(), 0).unwrap();
        for s in imu {
            assert!((s.accel - Vector3::new(0.0, 0.0, STANDARD_GRAVITY)).norm() < 1e-12);
            assert_eq!(s.gyro, Vector3::zeros());
        }
    }

    #[test]
    fn lever_arm_centripetal() {
        // Spinning in place at 1 rad/s about up, IMU 1 m along body x.
        let n = 20;
        let truth = GroundTruth {
            rate: 100.0,
            samples: (0..n)
                .map(|k| {
                    let t = k as f64 / 100.0;
                    TruthSample {
                        t,
                        position: EnuVector::ZERO,
                        velocity: EnuVector::ZERO,
                        attitude: yaw_attitude(t),
                        angular_rate: Vector3::new(0.0, 0.0, 1.0),
                        acceleration: Vector3::zeros(),
                    }
                })
                .collect(),
        };
        let mount = MountConfig {
            lever_arm: Vector3::new(1.0, 0.0, 0.0),
            ..MountConfig::default()
        };
        let with = synthesize_imu(&truth, &SensorModel::noiseless(), &mount, 0).unwrap();
        let without = synthesize_imu(&truth, &SensorModel::noiseless(), &MountConfig::default(), 0).unwrap();
        for (a, b) in with.iter().zip(&without).skip(1) {
            assert!((a.accel - b.accel - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-9);
            assert_eq!(a.gyro, b.gyro);
        }
    }

    #[test]
    fn white_noise_level() {
        let model = SensorModel {
            accel_noise_density: 1.86e-3,
            ..SensorModel::noiseless()
        };
        let imu = synthesize_imu(&stationary(100_000), &model, &MountConfig::default(), 3).unwrap();
        let xs: Vec<f64> = imu.iter().map(|s| s.accel.x).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        assert!((sd / 0.0186 - 1.0).abs() < 0.05, "sd {sd}");
    }

    #[test]
    fn random_walk_step_size() {
        let model = SensorModel {
            accel_random_walk: 4.33e-4,
            ..SensorModel::noiseless()
        };
        let imu = synthesize_imu(&stationary(100_000), &model, &MountConfig::default(), 5).unwrap();
        let steps: Vec<f64> = imu.windows(2).map(|w| w[1].accel.y - w[0].accel.y).collect();
        let sd = (steps.iter().map(|x| x * x).sum::<f64>() / steps.len() as f64).sqrt();
        let expected = 4.33e-4 * 0.01f64.sqrt();
        assert!((sd / expected - 1.0).abs() < 0.05, "sd {sd} vs {expected}");
    }

    #[test]
    fn deterministic_given_seed() {
        let truth = generate_trajectory(TrajectoryKind::CityGrid, 30.0, 100.0, &params()).unwrap();
        let m = SensorModel::default();
        let a = synthesize_imu(&truth, &m, &MountConfig::default(), 11).unwrap();
        let b = synthesize_imu(&truth, &m, &MountConfig::default(), 11).unwrap();
        let c = synthesize_imu(&truth, &m, &MountConfig::default(), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let f = FaultSchedule::default();
        assert_eq!(
            synthesize_gnss(&truth, &m, &f, 11).unwrap(),
            synthesize_gnss(&truth, &m, &f, 11).unwrap()
        );
    }

    #[test]
    fn exact_fixes_without_noise() {
        let truth = generate_trajectory(TrajectoryKind::CityGrid, 20.0, 100.0, &params()).unwrap();
        let fixes = synthesize_gnss(&truth, &SensorModel::noiseless(), &FaultSchedule::default(), 0).unwrap();
        assert_eq!(fixes.len(), 20);
        for f in fixes {
            let s = truth.sample_at(f.t).unwrap();
            assert_eq!(f.pos, s.position);
            assert_eq!(f.vel, s.velocity);
            assert!(f.pos_valid && f.vel_valid);
            assert_eq!(f.pos_std, Vector3::repeat(1.0));
        }
    }

    #[test]
    fn outage_marks_fixes_invalid() {
        let truth = generate_trajectory(TrajectoryKind::CityGrid, 200.0, 100.0, &params()).unwrap();
        let faults = FaultSchedule {
            outage_windows: vec![(100.0, 105.0)],
            ..Default::default()
        };
        let fixes = synthesize_gnss(&truth, &SensorModel::default(), &faults, 0).unwrap();
        assert_eq!(fixes.len(), 200);
        let invalid: Vec<f64> = fixes.iter().filter(|f| !f.pos_valid).map(|f| f.t).collect();
        assert_eq!(invalid, vec![100.0, 101.0, 102.0, 103.0, 104.0]);
    }

    #[test]
    fn multipath_bounded() {
        let truth = generate_trajectory(TrajectoryKind::CityGrid, 200.0, 100.0, &params()).unwrap();
        let faults = FaultSchedule {
            multipath_windows: vec![MultipathWindow::new(50.0, 150.0)],
            ..Default::default()
        };
        let model = SensorModel {
            gnss_noise: false,
            ..SensorModel::default()
        };
        let fixes = synthesize_gnss(&truth, &model, &faults, 9).unwrap();
        let mut max_p: f64 = 0.0;
        for f in &fixes {
            let s = truth.sample_at(f.t).unwrap();
            let ep = (f.pos.to_vector() - s.position.to_vector()).norm();
            let ev = (f.vel.to_vector() - s.velocity.to_vector()).norm();
            if faults.multipath_at(f.t).is_some() {
                assert!(ep <= 10.0 + 1e-9 && ev <= 1.0 + 1e-9);
                max_p = max_p.max(ep);
            } else {
                assert!(ep < 1e-9 && ev < 1e-9);
            }
        }
        assert!(max_p > 5.0);
    }

    #[test]
    fn imported_truth_round_trip() {
        let truth = generate_trajectory(TrajectoryKind::FigureEight, 60.0, 100.0, &params()).unwrap();
        let t: Vec<f64> = truth.samples.iter().map(|s| s.t).collect();
        let p: Vec<EnuVector> = truth.samples.iter().map(|s| s.position).collect();
        let v: Vec<EnuVector> = truth.samples.iter().map(|s| s.velocity).collect();
        let back = GroundTruth::from_kinematics(&t, &p, &v).unwrap();
        assert!((back.rate - 100.0).abs() < 1e-6);
        for (a, b) in truth.samples.iter().zip(&back.samples).skip(1000).take(100) {
            assert!((a.acceleration - b.acceleration).norm() < 1e-3);
            assert!((a.angular_rate - b.angular_rate).norm() < 1e-3);
        }
    }
}
