mod common;

use attfree::factors::{accel_factor, gyro_factor, vector_angle};
use attfree::geodesy::{GravityModel, ImuWindow};
use attfree::state::EpochState;
use attfree::{AngleFormulation, HuberKernel};
use common::{all_factor_suites, rand_vec, FD_TOL};
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_factor_matches_central_differences() {
    for r in all_factor_suites(1000) {
        assert_eq!(r.checked, 1000);
        assert!(r.worst < FD_TOL, "{}: worst relative Jacobian error {:e}", r.name, r.worst);
    }
}

#[test]
fn angle_formulations_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 10_000 {
        let a = rand_vec(&mut rng, 10.0);
        let b = rand_vec(&mut rng, 10.0);
        let (t, _) = vector_angle(&a, &b, AngleFormulation::Atan2);
        // arccos loses precision like ε/sin θ; the clamp caps it at 1e-9 from the ends.
        if !(1e-6..std::f64::consts::PI - 1e-6).contains(&t) || t.sin() < 1e-3 {
            continue;
        }
        let (c, _) = vector_angle(&a, &b, AngleFormulation::Arccos);
        assert!((t - c).abs() < 1e-12, "{t} vs {c} for {a:?} {b:?}");
        checked += 1;
    }
}

#[test]
fn huber_is_c1_at_threshold() {
    let k = HuberKernel::default();
    let kk = k.k;
    let (lo, hi) = (k.rho(kk - 1e-9), k.rho(kk + 1e-9));
    assert!((hi - lo).abs() < 1e-8);
    let slope = |x: f64| (k.rho(x + 1e-7) - k.rho(x - 1e-7)) / 2e-7;
    assert!((slope(kk - 1e-5) - slope(kk + 1e-5)).abs() < 1e-4);
    assert!((k.rho(0.5) - 0.125).abs() < 1e-15);
    assert!((k.rho(3.0) - kk * (3.0 - kk / 2.0)).abs() < 1e-12);
}

fn window_from(sum_accel: Vector3<f64>, sum_gyro_dt: Vector3<f64>) -> ImuWindow {
    ImuWindow {
        t1: 0.0,
        t2: 1.0,
        sum_accel,
        sum_gyro_dt,
        n_samples: 100,
    }
}

proptest! {
    #[test]
    fn imu_factors_ignore_body_attitude(
        acc in prop::array::uniform3(-1500.0..1500.0f64),
        gyr in prop::array::uniform3(-2.0..2.0f64),
        rpy in prop::array::uniform3(-3.1..3.1f64),
        v1 in prop::array::uniform3(-20.0..20.0f64),
        v2 in prop::array::uniform3(-20.0..20.0f64),
    ) {
        let rot = Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]);
        let (acc, gyr) = (Vector3::from(acc), Vector3::from(gyr));
        let plain = window_from(acc, gyr);
        let rotated = window_from(rot * acc, rot * gyr);
        let s = |v: [f64; 3]| EpochState { v: Vector3::from(v).into(), ..EpochState::default() };
        let (a, b) = (s(v1), s(v2));
        let g = GravityModel::default();
        let e0 = accel_factor(0, &a, &b, &plain, 1.0, &g, 0.05).residual[0];
        let e1 = accel_factor(0, &a, &b, &rotated, 1.0, &g, 0.05).residual[0];
        prop_assert!((e0 - e1).abs() < 1e-9);
        let e0 = gyro_factor(0, &a, &b, &plain, AngleFormulation::Atan2, 0.2).residual[0];
        let e1 = gyro_factor(0, &a, &b, &rotated, AngleFormulation::Atan2, 0.2).residual[0];
        prop_assert!((e0 - e1).abs() < 1e-9);
    }

    #[test]
    fn angle_ignores_velocity_scale(
        v1 in prop::array::uniform3(-20.0..20.0f64),
        v2 in prop::array::uniform3(-20.0..20.0f64),
        s1 in 1e-3..1e3f64,
        s2 in 1e-3..1e3f64,
    ) {
        let (a, b) = (Vector3::from(v1), Vector3::from(v2));
        prop_assume!(a.norm() > 1e-3 && b.norm() > 1e-3);
        let (t0, _) = vector_angle(&a, &b, AngleFormulation::Atan2);
        let (t1, _) = vector_angle(&(a * s1), &(b * s2), AngleFormulation::Atan2);
        prop_assert!((t0 - t1).abs() < 1e-12);
    }
}
