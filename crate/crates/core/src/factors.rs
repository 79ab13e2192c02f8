//! Residuals, Jacobians and information for every factor type, plus the Huber kernel.
//!
//! Jacobian blocks are always 8 columns wide and keyed by epoch index, so the
//! optimizer can scatter them straight into the block-tridiagonal normal matrix.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::geodesy::{EnuVector, GnssFix, GravityModel, ImuWindow};
use crate::state::{EpochState, BIAS_ACC, BIAS_GYRO, POS, STATE_DIM, VEL};

/// Below this norm the gradient of a vector norm is treated as undefined.
pub const EPS_NORM: f64 = 1e-8;

/// Clamp bound for the literal arccos angle.
pub const ARCCOS_CLAMP: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberKernel {
    pub k: f64,
}

impl Default for HuberKernel {
    fn default() -> Self {
        Self { k: 1.345 }
    }
}

impl HuberKernel {
    pub fn new(k: f64) -> Option<Self> {
        (k > 0.0 && k.is_finite()).then_some(Self { k })
    }

    /// ρ(s): s²/2 inside the threshold, linear outside.
    pub fn rho(&self, s: f64) -> f64 {
        let a = s.abs();
        if a <= self.k {
            0.5 * a * a
        } else {
            self.k * (a - 0.5 * self.k)
        }
    }

    /// IRLS weight ρ'(s)/s.
    pub fn weight(&self, s: f64) -> f64 {
        let a = s.abs();
        if a <= self.k {
            1.0
        } else {
            self.k / a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AngleFormulation {
    #[default]
    Atan2,
    /// The literal arccos of the normalized dot product, clamped away from ±1.
    Arccos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasKind {
    Accel,
    Gyro,
}

impl BiasKind {
    fn offset(self) -> usize {
        match self {
            BiasKind::Accel => BIAS_ACC,
            BiasKind::Gyro => BIAS_GYRO,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorEval {
    pub residual: DVector<f64>,
    /// (epoch index, r×8 block).
    pub jacobian_blocks: Vec<(usize, DMatrix<f64>)>,
    pub information: DMatrix<f64>,
    pub kernel: Option<HuberKernel>,
}

impl FactorEval {
    fn new(
        residual: DVector<f64>,
        jacobian_blocks: Vec<(usize, DMatrix<f64>)>,
        information: DMatrix<f64>,
        kernel: Option<HuberKernel>,
    ) -> Self {
        debug_assert!(jacobian_blocks
            .iter()
            .all(|(_, j)| j.nrows() == residual.len() && j.ncols() == STATE_DIM));
        debug_assert_eq!(information.shape(), (residual.len(), residual.len()));
        Self {
            residual,
            jacobian_blocks,
            information,
            kernel,
        }
    }

    pub fn dim(&self) -> usize {
        self.residual.len()
    }

    /// eᵀΩe.
    pub fn squared_norm(&self) -> f64 {
        (self.residual.transpose() * &self.information * &self.residual)[(0, 0)]
    }

    pub fn whitened_norm(&self) -> f64 {
        self.squared_norm().max(0.0).sqrt()
    }

    /// Contribution to the objective: eᵀΩe, or 2ρ of the whitened norm when robustified.
    pub fn cost(&self) -> f64 {
        match self.kernel {
            None => self.squared_norm(),
            Some(k) => 2.0 * k.rho(self.whitened_norm()),
        }
    }

    pub fn robust_weight(&self) -> f64 {
        self.kernel.map_or(1.0, |k| k.weight(self.whitened_norm()))
    }

    /// Information scaled by the current robust weight.
    pub fn effective_information(&self) -> DMatrix<f64> {
        &self.information * self.robust_weight()
    }

    pub fn is_finite(&self) -> bool {
        self.residual.iter().all(|x| x.is_finite())
            && self
                .jacobian_blocks
                .iter()
                .all(|(_, j)| j.iter().all(|x| x.is_finite()))
    }
}

fn scalar_info(sigma: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, 1.0 / (sigma * sigma))
}

fn diag_info(std: &Vector3<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(3, std.iter().map(|s| 1.0 / (s * s))))
}

fn row_block(entries: &[(usize, f64)]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(1, STATE_DIM);
    for &(c, v) in entries {
        j[(0, c)] = v;
    }
    j
}

fn put_row3(j: &mut DMatrix<f64>, col: usize, row: &Vector3<f64>) {
    for k in 0..3 {
        j[(0, col + k)] = row[k];
    }
}

fn put_diag3(j: &mut DMatrix<f64>, col: usize, value: f64) {
    for k in 0..3 {
        j[(k, col + k)] = value;
    }
}

/// Acceleration-magnitude factor between epochs `i` and `i+1`:
/// ‖(v₂−v₁)/Δt − g‖ − ‖mean specific force‖ + b_acc.
pub fn accel_factor(
    i: usize,
    s_i: &EpochState,
    s_j: &EpochState,
    window: &ImuWindow,
    dt_gnss: f64,
    gravity: &GravityModel,
    sigma: f64,
) -> FactorEval {
    let u = (s_j.vel() - s_i.vel()) / dt_gnss - gravity.vector();
    let norm_u = u.norm();
    let measured = (window.sum_accel * (window.dt_imu() / dt_gnss)).norm();
    let e = norm_u - measured + s_i.b_acc;

    let mut j_i = row_block(&[(BIAS_ACC, 1.0)]);
    let mut j_j = DMatrix::zeros(1, STATE_DIM);
    if norm_u >= EPS_NORM {
        let g = u / (norm_u * dt_gnss);
        put_row3(&mut j_i, VEL, &(-g));
        put_row3(&mut j_j, VEL, &g);
    }
    FactorEval::new(
        DVector::from_element(1, e),
        vec![(i, j_i), (i + 1, j_j)],
        scalar_info(sigma),
        None,
    )
}

/// Whether the turn-angle factor applies between two epochs, judged on measured speeds.
pub fn gyro_gate(v_i: &EnuVector, v_j: &EnuVector, min_speed: f64) -> bool {
    v_i.norm() >= min_speed && v_j.norm() >= min_speed
}

/// Angle between two vectors and its gradients with respect to each.
/// Returns `None` for the gradients where the angle is not differentiable.
pub fn vector_angle(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    form: AngleFormulation,
) -> (f64, Option<(Vector3<f64>, Vector3<f64>)>) {
    match form {
        AngleFormulation::Atan2 => {
            let c = a.cross(b);
            let n = c.norm();
            let d = a.dot(b);
            let theta = n.atan2(d);
            let scale = a.norm() * b.norm();
            if n <= 1e-12 * scale {
                return (theta, None);
            }
            let c_hat = c / n;
            let den = n * n + d * d;
            let ga = (b.cross(&c_hat) * d - b * n) / den;
            let gb = (c_hat.cross(a) * d - a * n) / den;
            (theta, Some((ga, gb)))
        }
        AngleFormulation::Arccos => {
            let (na, nb) = (a.norm(), b.norm());
            let x = a.dot(b) / (na * nb);
            let xc = x.clamp(-ARCCOS_CLAMP, ARCCOS_CLAMP);
            let theta = xc.acos();
            if xc != x {
                return (theta, None);
            }
            let k = -1.0 / (1.0 - x * x).sqrt();
            let ga = (b / (na * nb) - a * (x / (na * na))) * k;
            let gb = (a / (na * nb) - b * (x / (nb * nb))) * k;
            (theta, Some((ga, gb)))
        }
    }
}

/// Turn-angle factor: angle(v₁, v₂) − ‖Σ ω Δt_imu‖ + b_gyro.
///
/// Degenerate velocities (norm below [`EPS_NORM`]) give a zero residual and zero Jacobian.
pub fn gyro_factor(
    i: usize,
    s_i: &EpochState,
    s_j: &EpochState,
    window: &ImuWindow,
    form: AngleFormulation,
    sigma: f64,
) -> FactorEval {
    let (a, b) = (s_i.vel(), s_j.vel());
    let info = scalar_info(sigma);
    if a.norm() < EPS_NORM || b.norm() < EPS_NORM {
        return FactorEval::new(
            DVector::zeros(1),
            vec![
                (i, DMatrix::zeros(1, STATE_DIM)),
                (i + 1, DMatrix::zeros(1, STATE_DIM)),
            ],
            info,
            None,
        );
    }
    let (theta, grads) = vector_angle(&a, &b, form);
    let e = theta - window.sum_gyro_dt.norm() + s_i.b_gyro;

    let mut j_i = row_block(&[(BIAS_GYRO, 1.0)]);
    let mut j_j = DMatrix::zeros(1, STATE_DIM);
    if let Some((ga, gb)) = grads {
        put_row3(&mut j_i, VEL, &ga);
        put_row3(&mut j_j, VEL, &gb);
    }
    FactorEval::new(
        DVector::from_element(1, e),
        vec![(i, j_i), (i + 1, j_j)],
        info,
        None,
    )
}

pub fn gnss_pos_factor(i: usize, s_i: &EpochState, fix: &GnssFix, kernel: Option<HuberKernel>) -> FactorEval {
    let e = s_i.pos() - fix.pos.to_vector();
    let mut j = DMatrix::zeros(3, STATE_DIM);
    put_diag3(&mut j, POS, 1.0);
    FactorEval::new(
        DVector::from_column_slice(e.as_slice()),
        vec![(i, j)],
        diag_info(&fix.pos_std),
        kernel,
    )
}

pub fn gnss_vel_factor(i: usize, s_i: &EpochState, fix: &GnssFix, kernel: Option<HuberKernel>) -> FactorEval {
    let e = s_i.vel() - fix.vel.to_vector();
    let mut j = DMatrix::zeros(3, STATE_DIM);
    put_diag3(&mut j, VEL, 1.0);
    FactorEval::new(
        DVector::from_column_slice(e.as_slice()),
        vec![(i, j)],
        diag_info(&fix.vel_std),
        kernel,
    )
}

/// Trapezoidal position/velocity consistency: (x₂−x₁)/Δt − (v₁+v₂)/2.
pub fn motion_factor(i: usize, s_i: &EpochState, s_j: &EpochState, dt_gnss: f64, sigma: f64) -> FactorEval {
    let e = (s_j.pos() - s_i.pos()) / dt_gnss - (s_i.vel() + s_j.vel()) * 0.5;
    let mut j_i = DMatrix::zeros(3, STATE_DIM);
    let mut j_j = DMatrix::zeros(3, STATE_DIM);
    put_diag3(&mut j_i, POS, -1.0 / dt_gnss);
    put_diag3(&mut j_i, VEL, -0.5);
    put_diag3(&mut j_j, POS, 1.0 / dt_gnss);
    put_diag3(&mut j_j, VEL, -0.5);
    FactorEval::new(
        DVector::from_column_slice(e.as_slice()),
        vec![(i, j_i), (i + 1, j_j)],
        DMatrix::from_diagonal_element(3, 3, 1.0 / (sigma * sigma)),
        None,
    )
}

fn bias_value(s: &EpochState, kind: BiasKind) -> f64 {
    match kind {
        BiasKind::Accel => s.b_acc,
        BiasKind::Gyro => s.b_gyro,
    }
}

/// Relative bias factor b₂ − b₁ with random-walk sigma per interval.
pub fn bias_factor(
    i: usize,
    s_i: &EpochState,
    s_j: &EpochState,
    kind: BiasKind,
    sigma_rw: f64,
) -> FactorEval {
    let e = bias_value(s_j, kind) - bias_value(s_i, kind);
    let c = kind.offset();
    FactorEval::new(
        DVector::from_element(1, e),
        vec![(i, row_block(&[(c, -1.0)])), (i + 1, row_block(&[(c, 1.0)]))],
        scalar_info(sigma_rw),
        None,
    )
}

/// Zero-mean prior on one bias at epoch `i`.
pub fn bias_prior(i: usize, s_i: &EpochState, kind: BiasKind, sigma: f64) -> FactorEval {
    FactorEval::new(
        DVector::from_element(1, bias_value(s_i, kind)),
        vec![(i, row_block(&[(kind.offset(), 1.0)]))],
        scalar_info(sigma),
        None,
    )
}
