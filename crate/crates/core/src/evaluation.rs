//! Error metrics and experiment drivers.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geodesy::{GnssFix, ImuSample};
use crate::graph::{FactorGraph, FactorStats, GraphConfig};
use crate::optimizer::{solve, LmConfig, SolveReport};
use crate::simulator::{
    generate_trajectory, synthesize_gnss, synthesize_imu, FaultSchedule, GroundTruth, MountConfig, SensorModel,
    TrajectoryKind, TrajectoryParams,
};
use crate::state::TrajectoryEstimate;

/// Maximum timestamp mismatch when pairing an estimate epoch with truth.
pub const ALIGN_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// (t, estimate − truth) per aligned epoch.
    pub errors: Vec<(f64, Vector3<f64>)>,
    /// East, north, up.
    pub rms: Vector3<f64>,
    pub rms_3d: f64,
    pub rms_horizontal: f64,
    pub max_3d: f64,
    /// Sorted per-epoch 3D errors.
    pub cdf: Vec<f64>,
    /// Sorted per-epoch horizontal errors.
    pub cdf_horizontal: Vec<f64>,
    pub solve_report: Option<SolveReport>,
}

impl ErrorReport {
    pub fn from_errors(errors: Vec<(f64, Vector3<f64>)>) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::InvalidInput("no epochs to evaluate".into()));
        }
        let n = errors.len() as f64;
        let mut sq = Vector3::zeros();
        for (_, e) in &errors {
            sq += e.component_mul(e);
        }
        let ms = sq / n;
        let rms = ms.map(f64::sqrt);
        let mut cdf: Vec<f64> = errors.iter().map(|(_, e)| e.norm()).collect();
        let mut cdf_horizontal: Vec<f64> = errors.iter().map(|(_, e)| e.x.hypot(e.y)).collect();
        cdf.sort_by(f64::total_cmp);
        cdf_horizontal.sort_by(f64::total_cmp);
        Ok(Self {
            rms,
            rms_3d: (ms.x + ms.y + ms.z).sqrt(),
            rms_horizontal: (ms.x + ms.y).sqrt(),
            max_3d: *cdf.last().unwrap_or(&0.0),
            cdf,
            cdf_horizontal,
            errors,
            solve_report: None,
        })
    }

    /// Per-epoch 3D error series.
    pub fn time_series(&self) -> Vec<(f64, f64)> {
        self.errors.iter().map(|(t, e)| (*t, e.norm())).collect()
    }

    /// Restricts to epochs satisfying `keep`; `None` when nothing remains.
    pub fn subset(&self, keep: impl Fn(f64) -> bool) -> Option<Self> {
        let errors: Vec<_> = self.errors.iter().filter(|(t, _)| keep(*t)).cloned().collect();
        Self::from_errors(errors).ok()
    }
}

/// Empirical distribution points (x, P[X ≤ x]) from sorted samples.
pub fn empirical_cdf(sorted: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (x, (i + 1) as f64 / n))
        .collect()
}

fn align(truth: &GroundTruth, points: impl Iterator<Item = (f64, Vector3<f64>)>) -> Result<ErrorReport> {
    let mut errors = Vec::new();
    for (t, p) in points {
        let k = (t * truth.rate).round();
        if k < 0.0 {
            continue;
        }
        let k = k as usize;
        let best = [k.saturating_sub(1), k, k + 1]
            .into_iter()
            .filter_map(|j| truth.samples.get(j))
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()));
        if let Some(s) = best.filter(|s| (s.t - t).abs() <= ALIGN_TOL) {
            errors.push((t, p - s.position.to_vector()));
        }
    }
    if errors.is_empty() {
        return Err(Error::InvalidInput("estimate and truth share no epochs".into()));
    }
    ErrorReport::from_errors(errors)
}

pub fn compute_errors(estimate: &TrajectoryEstimate, truth: &GroundTruth) -> Result<ErrorReport> {
    align(
        truth,
        estimate.times.iter().zip(&estimate.states).map(|(t, s)| (*t, s.pos())),
    )
}

/// Errors of the raw GNSS positions; epochs without a valid position are skipped.
pub fn gnss_only_errors(fixes: &[GnssFix], truth: &GroundTruth) -> Result<ErrorReport> {
    align(
        truth,
        fixes.iter().filter(|f| f.pos_valid).map(|f| (f.t, f.pos.to_vector())),
    )
}

/// Everything needed to reproduce one simulate → fuse → evaluate run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: TrajectoryKind,
    pub duration: f64,
    pub params: TrajectoryParams,
    pub sensor: SensorModel,
    pub mount: MountConfig,
    pub faults: FaultSchedule,
    pub seed: u64,
    pub graph: GraphConfig,
    pub lm: LmConfig,
}

impl Scenario {
    /// Default sensor model on a 300 s urban-style route.
    pub fn urban(seed: u64) -> Self {
        Self {
            kind: TrajectoryKind::CityGrid,
            duration: 300.0,
            params: TrajectoryParams::default(),
            sensor: SensorModel::default(),
            mount: MountConfig::default(),
            faults: FaultSchedule::default(),
            seed,
            graph: GraphConfig::default(),
            lm: LmConfig::default(),
        }
    }

    pub fn simulate(&self) -> Result<SimulatedData> {
        let truth = generate_trajectory(self.kind, self.duration, self.sensor.imu_rate(), &self.params)?;
        let imu = synthesize_imu(&truth, &self.sensor, &self.mount, self.seed)?;
        let gnss = synthesize_gnss(&truth, &self.sensor, &self.faults, self.seed)?;
        Ok(SimulatedData { truth, imu, gnss })
    }

    pub fn run(&self) -> Result<ScenarioRun> {
        let data = self.simulate()?;
        data.fuse(self.graph, &self.lm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub truth: GroundTruth,
    pub imu: Vec<ImuSample>,
    pub gnss: Vec<GnssFix>,
}

impl SimulatedData {
    pub fn fuse(self, graph_cfg: GraphConfig, lm: &LmConfig) -> Result<ScenarioRun> {
        let graph = FactorGraph::build(&self.gnss, &self.imu, graph_cfg)?;
        let init = graph.initial_estimate()?;
        let (estimate, report) = solve(&graph, &init, lm)?;
        let mut fused = compute_errors(&estimate, &self.truth)?;
        fused.solve_report = Some(report.clone());
        let gnss_only = gnss_only_errors(&self.gnss, &self.truth)?;
        Ok(ScenarioRun {
            data: self,
            estimate,
            report,
            stats: graph.stats,
            fused,
            gnss_only,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub data: SimulatedData,
    pub estimate: TrajectoryEstimate,
    pub report: SolveReport,
    pub stats: FactorStats,
    pub fused: ErrorReport,
    pub gnss_only: ErrorReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub arm: f64,
    pub gnss_rms_3d: f64,
    pub fused_rms_3d: f64,
    pub iterations: usize,
}

/// One fused run per lateral lever arm, all with the base scenario's seed.
pub fn run_lever_arm_sweep(base: &Scenario, arms: &[f64]) -> Result<Vec<SweepRow>> {
    if let Some(a) = arms.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::InvalidInput(format!("lever arm {a} must be non-negative")));
    }
    arms.iter()
        .map(|&arm| {
            let scenario = Scenario {
                mount: MountConfig {
                    lever_arm: Vector3::new(0.0, arm, 0.0),
                    ..base.mount
                },
                ..base.clone()
            };
            let run = scenario.run()?;
            Ok(SweepRow {
                arm,
                gnss_rms_3d: run.gnss_only.rms_3d,
                fused_rms_3d: run.fused.rms_3d,
                iterations: run.report.iterations,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Multipath,
    Outage,
}

impl WindowKind {
    pub fn label(self) -> &'static str {
        match self {
            WindowKind::Multipath => "multipath",
            WindowKind::Outage => "outage",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub kind: WindowKind,
    pub t_start: f64,
    pub t_end: f64,
    /// `None` when GNSS had no solution in the window.
    pub gnss: Option<ErrorReport>,
    pub fused: ErrorReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultExperiment {
    pub gnss_only: ErrorReport,
    pub fused: ErrorReport,
    pub windows: Vec<WindowStats>,
    pub outside_gnss: Option<ErrorReport>,
    pub outside_fused: Option<ErrorReport>,
    pub report: SolveReport,
}

impl FaultExperiment {
    /// Pools every window of one kind.
    pub fn pooled(&self, kind: WindowKind) -> (Option<ErrorReport>, Option<ErrorReport>) {
        let pick = |r: &ErrorReport, w: &WindowStats| {
            r.errors
                .iter()
                .filter(|(t, _)| *t >= w.t_start && *t < w.t_end)
                .cloned()
                .collect::<Vec<_>>()
        };
        let mut g = Vec::new();
        let mut f = Vec::new();
        for w in self.windows.iter().filter(|w| w.kind == kind) {
            g.extend(pick(&self.gnss_only, w));
            f.extend(pick(&self.fused, w));
        }
        (ErrorReport::from_errors(g).ok(), ErrorReport::from_errors(f).ok())
    }
}

pub fn run_fault_experiment(scenario: &Scenario) -> Result<FaultExperiment> {
    let run = scenario.run()?;
    let faults = &scenario.faults;
    let mut windows = Vec::new();
    let spans = faults
        .multipath_windows
        .iter()
        .map(|w| (WindowKind::Multipath, w.t_start, w.t_end))
        .chain(faults.outage_windows.iter().map(|&(a, b)| (WindowKind::Outage, a, b)));
    for (kind, a, b) in spans {
        let inside = |t: f64| t >= a && t < b;
        let fused = run
            .fused
            .subset(inside)
            .ok_or_else(|| Error::InvalidInput(format!("no estimate epochs inside [{a}, {b})")))?;
        windows.push(WindowStats {
            kind,
            t_start: a,
            t_end: b,
            gnss: run.gnss_only.subset(inside),
            fused,
        });
    }
    let outside = |t: f64| !windows.iter().any(|w: &WindowStats| t >= w.t_start && t < w.t_end);
    Ok(FaultExperiment {
        outside_gnss: run.gnss_only.subset(outside),
        outside_fused: run.fused.subset(outside),
        gnss_only: run.gnss_only,
        fused: run.fused,
        windows,
        report: run.report,
    })
}
