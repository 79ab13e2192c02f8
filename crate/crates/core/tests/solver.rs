use std::time::Instant;

use attfree::evaluation::Scenario;
use attfree::optimizer::{assemble_normal_equations, linearize_and_solve_normal_equations, TerminationReason};
use attfree::state::STATE_DIM;
use attfree::{solve, EpochState, FactorGraph, LmConfig, SensorModel, TrajectoryEstimate, TrajectoryKind,
    TrajectoryParams};
use nalgebra::{DMatrix, DVector};

fn graph_for(duration: f64, seed: u64) -> (FactorGraph, TrajectoryEstimate) {
    let scenario = Scenario {
        duration,
        ..Scenario::urban(seed)
    };
    let data = scenario.simulate().unwrap();
    let g = FactorGraph::build(&data.gnss, &data.imu, scenario.graph).unwrap();
    let init = g.initial_estimate().unwrap();
    (g, init)
}

/// Dense (JᵀWJ + λ·diag)⁻¹(−JᵀWr), assembled row by row from the factor evaluations.
fn dense_step(g: &FactorGraph, est: &TrajectoryEstimate, lambda: f64) -> DVector<f64> {
    let dim = g.layout.dim();
    let evals = g.evaluate(est).unwrap();
    let rows: usize = evals.iter().map(|e| e.dim()).sum();
    let mut j = DMatrix::zeros(rows, dim);
    let mut w = DMatrix::zeros(rows, rows);
    let mut r = DVector::zeros(rows);
    let mut row = 0;
    for ev in &evals {
        let d = ev.dim();
        for (block, jb) in &ev.jacobian_blocks {
            let mut v = j.view_mut((row, block * STATE_DIM), (d, STATE_DIM));
            v += jb;
        }
        w.view_mut((row, row), (d, d)).copy_from(&ev.effective_information());
        r.rows_mut(row, d).copy_from(&ev.residual);
        row += d;
    }
    let h = j.transpose() * &w * &j;
    let rhs = -(j.transpose() * &w * &r);
    let max = h.diagonal().max();
    let mut damped = h.clone();
    for k in 0..dim {
        damped[(k, k)] += lambda * h[(k, k)].max(1e-12 * max);
    }
    damped.lu().solve(&rhs).unwrap()
}

#[test]
fn sparse_solve_matches_dense_reference() {
    for (n, lambda) in [(50, 0.0), (50, 1e-3), (100, 1e-4), (100, 1.0)] {
        let (g, init) = graph_for(n as f64, 3);
        assert_eq!(g.layout.epochs(), n);
        let sparse = linearize_and_solve_normal_equations(&g, &init, lambda).unwrap();
        let dense = dense_step(&g, &init, lambda);
        let rel = (&sparse - &dense).norm() / dense.norm();
        assert!(rel < 1e-8, "N={n} λ={lambda}: relative difference {rel:e}");
    }
}

#[test]
fn dense_view_matches_blocks() {
    let (g, init) = graph_for(20.0, 1);
    let sys = assemble_normal_equations(&g, &init).unwrap();
    let h = sys.to_dense();
    assert!((&h - h.transpose()).norm() < 1e-9 * h.norm());
    let step = sys.solve_damped(0.0).unwrap();
    let back = &h * &step;
    assert!((&back - &sys.rhs).norm() < 1e-8 * sys.rhs.norm());
}

#[test]
fn iteration_cost_scales_linearly() {
    let mut per_epoch = vec![];
    for n in [100usize, 200, 400] {
        let (g, init) = graph_for(n as f64, 5);
        let reps = 3;
        let t0 = Instant::now();
        for _ in 0..reps {
            let step = linearize_and_solve_normal_equations(&g, &init, 1e-4).unwrap();
            assert_eq!(step.len(), n * STATE_DIM);
        }
        let secs = t0.elapsed().as_secs_f64() / reps as f64;
        per_epoch.push(secs / n as f64);
    }
    // Linear growth keeps the per-epoch cost flat; allow generous timer noise.
    let ratio = per_epoch[2] / per_epoch[0];
    assert!(ratio < 2.5, "per-epoch cost grew by {ratio:.2}x from N=100 to N=400");
}

#[test]
fn truth_start_terminates_immediately() {
    let scenario = Scenario {
        kind: TrajectoryKind::StopAndGo,
        params: TrajectoryParams {
            stop_every: 0,
            ..TrajectoryParams::default()
        },
        sensor: SensorModel::noiseless(),
        ..Scenario::urban(0)
    };
    let data = scenario.simulate().unwrap();
    let g = FactorGraph::build(&data.gnss, &data.imu, scenario.graph).unwrap();
    let states = g
        .times()
        .iter()
        .map(|&t| {
            let s = data.truth.sample_at(t).unwrap();
            EpochState {
                x: s.position,
                v: s.velocity,
                ..EpochState::default()
            }
        })
        .collect();
    let truth = TrajectoryEstimate::new(g.times(), states).unwrap();
    let (est, report) = solve(&g, &truth, &LmConfig::default()).unwrap();
    assert!(report.initial_cost < 1e-9, "cost at truth {}", report.initial_cost);
    assert_eq!(report.iterations, 0);
    assert_eq!(report.termination_reason, TerminationReason::StepTooSmall);
    let moved = (est.to_flat() - truth.to_flat()).amax();
    assert!(moved < 1e-9, "moved {moved}");
}

#[test]
fn accepted_costs_never_increase() {
    let (g, init) = graph_for(120.0, 9);
    let (_, report) = solve(&g, &init, &LmConfig::default()).unwrap();
    let mut prev = report.initial_cost;
    for &c in &report.cost_history {
        assert!(c < prev);
        prev = c;
    }
    assert!(report.converged);
    assert!(report.final_cost <= report.initial_cost);
    assert_eq!(report.per_iteration_ms.len(), report.iterations);
}
