//! Levenberg-Marquardt over the flat state vector.
//!
//! Every factor touches at most two consecutive epochs, so the Gauss-Newton
//! matrix is block tridiagonal and is factored with a block Cholesky sweep in
//! O(N) time. Huber-wrapped factors are handled by reweighting their
//! information at each linearization point.

use std::fmt;
use std::time::Instant;

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::FactorGraph;
use crate::state::{TrajectoryEstimate, STATE_DIM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub max_iterations: usize,
    pub cost_rel_tol: f64,
    pub step_norm_tol: f64,
    /// Consecutive factorization failures tolerated before giving up.
    pub max_singular_retries: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            initial_lambda: 1e-4,
            lambda_up: 10.0,
            lambda_down: 0.1,
            max_iterations: 100,
            cost_rel_tol: 1e-8,
            step_norm_tol: 1e-10,
            max_singular_retries: 12,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_lambda > 0.0
            && self.lambda_down > 0.0
            && self.lambda_down < 1.0
            && self.lambda_up > 1.0
            && self.max_iterations > 0
            && self.cost_rel_tol > 0.0
            && self.step_norm_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid LM settings: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    CostConverged,
    StepTooSmall,
    MaxIterations,
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminationReason::CostConverged => "relative cost decrease below tolerance",
            TerminationReason::StepTooSmall => "step norm below tolerance",
            TerminationReason::MaxIterations => "iteration limit reached",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub per_iteration_ms: Vec<f64>,
    pub converged: bool,
    pub termination_reason: TerminationReason,
    /// Accepted cost after each iteration.
    pub cost_history: Vec<f64>,
}

impl SolveReport {
    pub fn total_ms(&self) -> f64 {
        self.per_iteration_ms.iter().fold(0.0, |a, b| a + b)
    }

    pub fn mean_iteration_ms(&self) -> f64 {
        if self.per_iteration_ms.is_empty() {
            0.0
        } else {
            self.total_ms() / self.per_iteration_ms.len() as f64
        }
    }
}

/// Symmetric block-tridiagonal matrix with square blocks of one size, plus a right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonal {
    pub block: usize,
    /// H[i,i]
    pub diag: Vec<DMatrix<f64>>,
    /// H[i,i+1]
    pub upper: Vec<DMatrix<f64>>,
    pub rhs: DVector<f64>,
}

impl BlockTridiagonal {
    pub fn zeros(blocks: usize, block: usize) -> Self {
        Self {
            block,
            diag: vec![DMatrix::zeros(block, block); blocks],
            upper: vec![DMatrix::zeros(block, block); blocks.saturating_sub(1)],
            rhs: DVector::zeros(blocks * block),
        }
    }

    pub fn blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn dim(&self) -> usize {
        self.block * self.blocks()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let b = self.block;
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (i, d) in self.diag.iter().enumerate() {
            m.view_mut((i * b, i * b), (b, b)).copy_from(d);
        }
        for (i, u) in self.upper.iter().enumerate() {
            m.view_mut((i * b, (i + 1) * b), (b, b)).copy_from(u);
            m.view_mut(((i + 1) * b, i * b), (b, b)).copy_from(&u.transpose());
        }
        m
    }

    /// Solves (H + λ·diag(H))·δ = rhs by block Cholesky.
    pub fn solve_damped(&self, lambda: f64) -> Result<DVector<f64>> {
        let b = self.block;
        let n = self.blocks();
        // Zero diagonal entries would make the damping vanish; floor them relative to the largest.
        let max_diag = self
            .diag
            .iter()
            .flat_map(|d| d.diagonal().iter().copied().collect::<Vec<_>>())
            .fold(0.0f64, f64::max);
        if !(max_diag > 0.0) {
            return Err(Error::Numerical("normal matrix has no positive diagonal entries".into()));
        }
        let floor = 1e-12 * max_diag;

        let mut chol: Vec<nalgebra::Cholesky<f64, nalgebra::Dyn>> = Vec::with_capacity(n);
        // M_i = L_i⁻¹ H[i,i+1]
        let mut m: Vec<DMatrix<f64>> = Vec::with_capacity(n.saturating_sub(1));
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut s = self.diag[i].clone();
            for k in 0..b {
                s[(k, k)] += lambda * self.diag[i][(k, k)].max(floor);
            }
            let mut r = self.rhs.rows(i * b, b).into_owned();
            if i > 0 {
                s -= m[i - 1].transpose() * &m[i - 1];
                r -= m[i - 1].transpose() * &y[i - 1];
            }
            let c = s.cholesky().ok_or_else(|| {
                Error::Numerical(format!("normal matrix not positive definite at block {i}"))
            })?;
            let l = c.l();
            let yi = l
                .solve_lower_triangular(&r)
                .ok_or_else(|| Error::Numerical(format!("singular block {i}")))?;
            if i + 1 < n {
                let mi = l
                    .solve_lower_triangular(&self.upper[i])
                    .ok_or_else(|| Error::Numerical(format!("singular block {i}")))?;
                m.push(mi);
            }
            y.push(yi);
            chol.push(c);
        }
        let mut x = DVector::zeros(self.dim());
        let mut next: Option<DVector<f64>> = None;
        for i in (0..n).rev() {
            let mut r = y[i].clone();
            if let Some(xn) = &next {
                r -= &m[i] * xn;
            }
            let lt = chol[i].l().transpose();
            let xi = lt
                .solve_upper_triangular(&r)
                .ok_or_else(|| Error::Numerical(format!("singular block {i}")))?;
            x.rows_mut(i * b, b).copy_from(&xi);
            next = Some(xi);
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Error::Numerical("non-finite step".into()))
        }
    }
}

/// A nonlinear least-squares problem whose Gauss-Newton system is block tridiagonal.
pub trait LeastSquaresProblem {
    fn cost(&self, x: &DVector<f64>) -> Result<f64>;
    /// JᵀWJ and −JᵀWr at `x`, with robust weights evaluated at `x`.
    fn normal_equations(&self, x: &DVector<f64>) -> Result<BlockTridiagonal>;
}

/// Generic LM loop. Returns the final point and a report.
pub fn minimize<P: LeastSquaresProblem>(
    problem: &P,
    x0: DVector<f64>,
    cfg: &LmConfig,
) -> Result<(DVector<f64>, SolveReport)> {
    cfg.validate()?;
    let mut x = x0;
    let initial_cost = problem.cost(&x)?;
    if !initial_cost.is_finite() {
        return Err(Error::Numerical("non-finite cost at initial point".into()));
    }
    let mut cost = initial_cost;
    let mut lambda = cfg.initial_lambda;
    let mut per_iteration_ms = Vec::new();
    let mut cost_history = Vec::new();
    let mut reason = TerminationReason::MaxIterations;

    'outer: for iter in 0..cfg.max_iterations {
        let started = Instant::now();
        let system = problem.normal_equations(&x)?;
        let mut failures = 0;
        loop {
            let step = match system.solve_damped(lambda) {
                Ok(s) => s,
                Err(e) => {
                    failures += 1;
                    if failures > cfg.max_singular_retries {
                        return Err(Error::Numerical(format!(
                            "normal equations stayed singular after {failures} damping increases: {e}"
                        )));
                    }
                    lambda *= cfg.lambda_up;
                    continue;
                }
            };
            let step_norm = step.norm();
            let small_step = step_norm < cfg.step_norm_tol * (x.norm() + cfg.step_norm_tol);
            if small_step {
                reason = TerminationReason::StepTooSmall;
                break 'outer;
            }
            let candidate = &x + &step;
            let new_cost = problem.cost(&candidate).unwrap_or(f64::INFINITY);
            if new_cost.is_finite() && new_cost < cost {
                let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                debug!("iter {iter}: cost {cost:.6e} -> {new_cost:.6e}, lambda {lambda:.1e}");
                x = candidate;
                cost = new_cost;
                lambda = (lambda * cfg.lambda_down).max(1e-15);
                per_iteration_ms.push(started.elapsed().as_secs_f64() * 1e3);
                cost_history.push(cost);
                if rel < cfg.cost_rel_tol {
                    reason = TerminationReason::CostConverged;
                    break 'outer;
                }
                if step_norm < cfg.step_norm_tol * (x.norm() + cfg.step_norm_tol) * 1e2 {
                    reason = TerminationReason::StepTooSmall;
                    break 'outer;
                }
                break;
            }
            lambda *= cfg.lambda_up;
        }
    }
    let report = SolveReport {
        iterations: per_iteration_ms.len(),
        initial_cost,
        final_cost: cost,
        per_iteration_ms,
        converged: reason != TerminationReason::MaxIterations,
        termination_reason: reason,
        cost_history,
    };
    Ok((x, report))
}

/// Adapter presenting a factor graph over a fixed set of epoch times as a [`LeastSquaresProblem`].
struct GraphProblem<'a> {
    graph: &'a FactorGraph,
    template: &'a TrajectoryEstimate,
}

impl LeastSquaresProblem for GraphProblem<'_> {
    fn cost(&self, x: &DVector<f64>) -> Result<f64> {
        self.graph.objective(&self.template.with_flat(x)?)
    }

    fn normal_equations(&self, x: &DVector<f64>) -> Result<BlockTridiagonal> {
        assemble_normal_equations(self.graph, &self.template.with_flat(x)?)
    }
}

/// Accumulates JᵀWJ and −JᵀWr over all factors into block-tridiagonal form.
pub fn assemble_normal_equations(graph: &FactorGraph, states: &TrajectoryEstimate) -> Result<BlockTridiagonal> {
    let n = graph.layout.epochs();
    let mut sys = BlockTridiagonal::zeros(n, STATE_DIM);
    for ev in graph.evaluate(states)? {
        let w = ev.effective_information();
        let wr = &w * &ev.residual;
        for (a, ja) in &ev.jacobian_blocks {
            let ja_t_w = ja.transpose() * &w;
            let mut g = sys.rhs.rows_mut(a * STATE_DIM, STATE_DIM);
            g -= ja.transpose() * &wr;
            for (b, jb) in &ev.jacobian_blocks {
                if a == b {
                    sys.diag[*a] += &ja_t_w * jb;
                } else if b == &(a + 1) {
                    sys.upper[*a] += &ja_t_w * jb;
                } else if a.abs_diff(*b) > 1 {
                    return Err(Error::InvalidInput(format!(
                        "factor couples non-adjacent epochs {a} and {b}"
                    )));
                }
            }
        }
    }
    Ok(sys)
}

/// One damped Gauss-Newton step at `states`.
pub fn linearize_and_solve_normal_equations(
    graph: &FactorGraph,
    states: &TrajectoryEstimate,
    lambda: f64,
) -> Result<DVector<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("damping {lambda} must be non-negative")));
    }
    assemble_normal_equations(graph, states)?.solve_damped(lambda)
}

pub fn solve(
    graph: &FactorGraph,
    initial: &TrajectoryEstimate,
    cfg: &LmConfig,
) -> Result<(TrajectoryEstimate, SolveReport)> {
    graph.check_layout(initial)?;
    let problem = GraphProblem {
        graph,
        template: initial,
    };
    let (x, report) = minimize(&problem, initial.to_flat(), cfg)?;
    Ok((initial.with_flat(&x)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar residuals r_k(x) with analytic derivatives, one block of size 1.
    struct Scalar<F: Fn(f64) -> Vec<(f64, f64)>>(F);

    impl<F: Fn(f64) -> Vec<(f64, f64)>> LeastSquaresProblem for Scalar<F> {
        fn cost(&self, x: &DVector<f64>) -> Result<f64> {
            Ok((self.0)(x[0]).iter().map(|(r, _)| r * r).sum())
        }
        fn normal_equations(&self, x: &DVector<f64>) -> Result<BlockTridiagonal> {
            let mut s = BlockTridiagonal::zeros(1, 1);
            for (r, j) in (self.0)(x[0]) {
                s.diag[0][(0, 0)] += j * j;
                s.rhs[0] -= j * r;
            }
            Ok(s)
        }
    }

    #[test]
    fn linear_scalar_converges() {
        let p = Scalar(|x| vec![(x - 3.0, 1.0)]);
        let (x, rep) = minimize(&p, DVector::from_element(1, 0.0), &LmConfig::default()).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-10, "{}", x[0]);
        assert!(rep.iterations <= 3, "{rep:?}");
        assert!(rep.converged);
    }

    #[test]
    fn nonlinear_scalar_converges() {
        // r = x² − 2
        let p = Scalar(|x| vec![(x * x - 2.0, 2.0 * x)]);
        let (x, rep) = minimize(&p, DVector::from_element(1, 1.0), &LmConfig::default()).unwrap();
        assert!((x[0] - 2f64.sqrt()).abs() < 1e-6);
        assert!(rep.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn undamped_newton_step() {
        let mut s = BlockTridiagonal::zeros(1, 1);
        s.diag[0][(0, 0)] = 1.0;
        s.rhs[0] = -5.0;
        assert_eq!(s.solve_damped(0.0).unwrap()[0], -5.0);
    }

    #[test]
    fn damping_shrinks_step() {
        let mut s = BlockTridiagonal::zeros(3, 2);
        for (i, d) in s.diag.iter_mut().enumerate() {
            *d = DMatrix::from_row_slice(2, 2, &[4.0 + i as f64, 1.0, 1.0, 3.0]);
        }
        for u in s.upper.iter_mut() {
            *u = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]);
        }
        s.rhs = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, -1.0, 2.0]);
        let mut prev = f64::INFINITY;
        for lambda in [0.0, 0.1, 1.0, 10.0, 1e3, 1e6] {
            let n = s.solve_damped(lambda).unwrap().norm();
            assert!(n < prev);
            prev = n;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn block_solve_matches_dense() {
        let mut s = BlockTridiagonal::zeros(6, 3);
        let mut k = 0.0;
        for d in s.diag.iter_mut() {
            k += 1.0;
            *d = DMatrix::from_row_slice(3, 3, &[6.0 + k, 1.0, 0.5, 1.0, 5.0, -0.3, 0.5, -0.3, 7.0]);
        }
        for (i, u) in s.upper.iter_mut().enumerate() {
            *u = DMatrix::from_fn(3, 3, |r, c| ((r * 3 + c + i) as f64 * 0.37).sin());
        }
        s.rhs = DVector::from_fn(18, |i, _| (i as f64 * 0.9).cos());
        let lambda = 0.01;
        let x = s.solve_damped(lambda).unwrap();
        let mut dense = s.to_dense();
        for i in 0..18 {
            dense[(i, i)] *= 1.0 + lambda;
        }
        let reference = dense.lu().solve(&s.rhs).unwrap();
        assert!((x - reference).norm() < 1e-12);
    }

    #[test]
    fn singular_system_reported() {
        let s = BlockTridiagonal::zeros(2, 2);
        assert!(matches!(s.solve_damped(1.0), Err(Error::Numerical(_))));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = LmConfig {
            lambda_down: 2.0,
            ..LmConfig::default()
        };
        let p = Scalar(|x| vec![(x, 1.0)]);
        assert!(minimize(&p, DVector::from_element(1, 1.0), &cfg).is_err());
    }
}
