//! Finite-difference Jacobian checks shared by the integration and acceptance targets.

use attfree::factors::{
    accel_factor, bias_factor, bias_prior, gnss_pos_factor, gnss_vel_factor, gyro_factor, motion_factor,
    vector_angle, BiasKind,
};
use attfree::geodesy::{EnuVector, GnssFix, GravityModel, ImuWindow};
use attfree::state::{EpochState, STATE_DIM};
use attfree::{AngleFormulation, FactorEval, HuberKernel};
use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-5;

pub fn rand_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

fn rand_state(rng: &mut ChaCha8Rng) -> EpochState {
    EpochState {
        x: rand_vec(rng, 500.0).into(),
        v: rand_vec(rng, 20.0).into(),
        b_acc: rng.random_range(-0.5..0.5),
        b_gyro: rng.random_range(-0.1..0.1),
    }
}

fn rand_window(rng: &mut ChaCha8Rng) -> ImuWindow {
    let n = 100;
    ImuWindow {
        t1: 0.0,
        t2: 1.0,
        sum_accel: rand_vec(rng, 12.0) * n as f64,
        sum_gyro_dt: rand_vec(rng, 0.5),
        n_samples: n,
    }
}

fn perturbed(s: &EpochState, k: usize, h: f64) -> EpochState {
    let mut flat = [s.x.e, s.x.n, s.x.u, s.v.e, s.v.n, s.v.u, s.b_acc, s.b_gyro];
    flat[k] += h;
    EpochState {
        x: EnuVector::new(flat[0], flat[1], flat[2]),
        v: EnuVector::new(flat[3], flat[4], flat[5]),
        b_acc: flat[6],
        b_gyro: flat[7],
    }
}

type Eval = dyn Fn(&EpochState, &EpochState) -> FactorEval;

/// Analytic Jacobian stacked over blocks 0 and 1 (r × 16); `None` if the block layout is wrong.
fn analytic(ev: &FactorEval) -> Option<DMatrix<f64>> {
    let mut j = DMatrix::zeros(ev.dim(), 2 * STATE_DIM);
    for (b, m) in &ev.jacobian_blocks {
        if *b >= 2 || m.shape() != (ev.dim(), STATE_DIM) {
            return None;
        }
        let mut view = j.view_mut((0, b * STATE_DIM), (ev.dim(), STATE_DIM));
        view += m;
    }
    Some(j)
}

fn numeric(f: &Eval, a: &EpochState, b: &EpochState) -> DMatrix<f64> {
    let r = f(a, b).dim();
    let mut j = DMatrix::zeros(r, 2 * STATE_DIM);
    let h2 = 2.0 * FD_STEP;
    for k in 0..STATE_DIM {
        let d = (f(&perturbed(a, k, FD_STEP), b).residual - f(&perturbed(a, k, -FD_STEP), b).residual) / h2;
        j.set_column(k, &d);
        let d = (f(a, &perturbed(b, k, FD_STEP)).residual - f(a, &perturbed(b, k, -FD_STEP)).residual) / h2;
        j.set_column(STATE_DIM + k, &d);
    }
    j
}

/// Relative Frobenius error between analytic and central-difference Jacobians.
pub fn jacobian_error(f: &Eval, a: &EpochState, b: &EpochState) -> f64 {
    let Some(ja) = analytic(&f(a, b)) else {
        return f64::INFINITY;
    };
    let jn = numeric(f, a, b);
    (&ja - &jn).norm() / jn.norm().max(1e-12)
}

pub struct SuiteResult {
    pub name: &'static str,
    pub worst: f64,
    pub checked: usize,
}

fn suite(
    name: &'static str,
    seed: u64,
    configs: usize,
    keep: impl Fn(&EpochState, &EpochState) -> bool,
    make: impl Fn(&mut ChaCha8Rng) -> Box<Eval>,
) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < configs {
        let (a, b) = (rand_state(&mut rng), rand_state(&mut rng));
        let f = make(&mut rng);
        if !keep(&a, &b) {
            continue;
        }
        let e = jacobian_error(&*f, &a, &b);
        worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
        checked += 1;
    }
    SuiteResult { name, worst, checked }
}

/// Turn-angle factor away from gated or degenerate geometry: both speeds ≥ 1e-3 and
/// the angle clear of the non-differentiable points 0 and π.
fn gyro_keep(a: &EpochState, b: &EpochState) -> bool {
    let (angle, _) = vector_angle(&a.vel(), &b.vel(), AngleFormulation::Atan2);
    a.vel().norm() > 1e-3 && b.vel().norm() > 1e-3 && (1e-3..std::f64::consts::PI - 1e-3).contains(&angle)
}

/// Runs every factor type over `configs` random configurations each.
pub fn all_factor_suites(configs: usize) -> Vec<SuiteResult> {
    let fix = GnssFix {
        t: 0.0,
        pos: EnuVector::new(10.0, -3.0, 2.0),
        vel: EnuVector::new(1.0, 2.0, 0.1),
        pos_std: Vector3::new(1.0, 2.0, 3.0),
        vel_std: Vector3::new(0.2, 0.2, 0.4),
        pos_valid: true,
        vel_valid: true,
    };
    let kernel = Some(HuberKernel::default());
    let all = |_: &EpochState, _: &EpochState| true;
    vec![
        suite("accel", 1, configs, all, |rng| {
            let w = rand_window(rng);
            let dt = rng.random_range(0.2..2.0);
            Box::new(move |a, b| accel_factor(0, a, b, &w, dt, &GravityModel::default(), 0.05))
        }),
        suite("gyro_atan2", 2, configs, gyro_keep, |rng| {
            let w = rand_window(rng);
            Box::new(move |a, b| gyro_factor(0, a, b, &w, AngleFormulation::Atan2, 0.2))
        }),
        suite("gyro_arccos", 3, configs, gyro_keep, |rng| {
            let w = rand_window(rng);
            Box::new(move |a, b| gyro_factor(0, a, b, &w, AngleFormulation::Arccos, 0.2))
        }),
        suite("gnss_pos", 4, configs, all, |_| Box::new(move |a, _| gnss_pos_factor(0, a, &fix, kernel))),
        suite("gnss_vel", 5, configs, all, |_| Box::new(move |a, _| gnss_vel_factor(0, a, &fix, kernel))),
        suite("motion", 6, configs, all, |rng| {
            let dt = rng.random_range(0.2..2.0);
            Box::new(move |a, b| motion_factor(0, a, b, dt, 0.05))
        }),
        suite("accel_bias", 7, configs, all, |_| {
            Box::new(|a, b| bias_factor(0, a, b, BiasKind::Accel, 1e-3))
        }),
        suite("gyro_bias", 8, configs, all, |_| {
            Box::new(|a, b| bias_factor(0, a, b, BiasKind::Gyro, 1e-3))
        }),
        suite("accel_bias_prior", 9, configs, all, |_| {
            Box::new(|a, _| bias_prior(0, a, BiasKind::Accel, 1.0))
        }),
        suite("gyro_bias_prior", 10, configs, all, |_| {
            Box::new(|a, _| bias_prior(0, a, BiasKind::Gyro, 1.0))
        }),
    ]
}
