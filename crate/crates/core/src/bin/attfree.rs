//! `attfree` command-line front end: simulate, fuse, evaluate and run experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
//! Log verbosity comes from `ATTFREE_LOG` (e.g. `ATTFREE_LOG=info`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use nalgebra::{Rotation3, Vector3};

use attfree::evaluation::{
    compute_errors, empirical_cdf, gnss_only_errors, run_fault_experiment, run_lever_arm_sweep, ErrorReport,
    Scenario, WindowKind,
};
use attfree::io;
use attfree::{
    AngleFormulation, Error, FactorGraph, FaultSchedule, GraphConfig, HuberKernel, LmConfig, MountConfig,
    MultipathWindow, SensorModel, TrajectoryKind, TrajectoryParams,
};

const LOG_ENV: &str = "ATTFREE_LOG";

#[derive(Parser, Debug)]
#[command(name = "attfree", version, about = "Attitude-free GNSS/IMU fusion by factor graph optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate truth.csv, imu.csv and gnss.csv for a synthetic scenario.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// Output directory (created if missing).
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fuse gnss.csv and imu.csv into estimate.csv and report.txt.
    Fuse {
        #[arg(long)]
        gnss: PathBuf,
        #[arg(long)]
        imu: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        lm: LmArgs,
    },
    /// Compare an estimate (and optionally the raw GNSS fixes) against truth.
    Evaluate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Also score the raw GNSS positions.
        #[arg(long)]
        gnss: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run a named experiment end to end and write metrics CSVs.
    Experiment {
        name: ExperimentName,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        lm: LmArgs,
        /// Number of consecutive seeds, starting at --seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Lateral lever arms for lever_sweep, meters.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.6, 1.0, 2.0, 3.0])]
        arms: Vec<f64>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ExperimentName {
    #[value(name = "baseline")]
    Baseline,
    #[value(name = "lever_sweep", alias = "lever-sweep")]
    LeverSweep,
    #[value(name = "multipath")]
    Multipath,
    #[value(name = "outage")]
    Outage,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum KernelArg {
    Huber,
    None,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AngleArg {
    Atan2,
    Arccos,
}

#[derive(Args, Debug, Clone)]
struct SimArgs {
    /// Seed for all sensor noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scenario length, s.
    #[arg(long, default_value_t = 300.0)]
    duration: f64,
    /// figure-eight, city-grid or stop-and-go.
    #[arg(long, default_value = "city-grid", value_parser = parse_kind)]
    trajectory: TrajectoryKind,
    /// Seed for the random city-grid route.
    #[arg(long)]
    route_seed: Option<u64>,
    /// Cruise speed, m/s.
    #[arg(long)]
    speed: Option<f64>,
    /// Full stop every this many blocks; 0 turns stop-and-go into a constant-velocity drive.
    #[arg(long)]
    stop_every: Option<usize>,
    /// IMU position in the body frame, "x,y,z" meters.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    lever_arm: Option<Vector3<f64>>,
    /// Body-to-IMU mounting rotation, "roll,pitch,yaw" degrees.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    mount_rpy_deg: Option<Vector3<f64>>,
    /// GNSS outage "start:end" seconds; repeatable.
    #[arg(long = "outage", value_parser = parse_window)]
    outages: Vec<(f64, f64)>,
    /// Multipath window "start:end" seconds; repeatable.
    #[arg(long = "multipath", value_parser = parse_window)]
    multipath: Vec<(f64, f64)>,
    /// Multipath position error bound, m.
    #[arg(long, default_value_t = 10.0)]
    multipath_pos: f64,
    /// Multipath velocity error bound, m/s.
    #[arg(long, default_value_t = 1.0)]
    multipath_vel: f64,
    /// Turn off every noise, bias and GNSS error source.
    #[arg(long)]
    noiseless: bool,
}

#[derive(Args, Debug)]
struct GraphArgs {
    #[arg(long)]
    no_gyro_factor: bool,
    #[arg(long)]
    no_accel_factor: bool,
    /// Robust kernel on the GNSS factors.
    #[arg(long, value_enum, default_value_t = KernelArg::Huber)]
    kernel: KernelArg,
    /// Huber threshold in whitened units.
    #[arg(long, default_value_t = 1.345)]
    huber_k: f64,
    /// Vector angle formulation in the turn-angle factor.
    #[arg(long, value_enum, default_value_t = AngleArg::Atan2)]
    angle: AngleArg,
    /// Minimum speed for the turn-angle factor, m/s.
    #[arg(long)]
    gyro_min_speed: Option<f64>,
}

#[derive(Args, Debug)]
struct LmArgs {
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    initial_lambda: Option<f64>,
    /// Relative cost decrease below which LM stops.
    #[arg(long)]
    cost_tol: Option<f64>,
    /// Step norm below which LM stops.
    #[arg(long)]
    step_tol: Option<f64>,
}

fn parse_kind(s: &str) -> Result<TrajectoryKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_vec3(s: &str) -> Result<Vector3<f64>, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [x, y, z] if parts.iter().all(|v| v.is_finite()) => Ok(Vector3::new(x, y, z)),
        _ => Err(format!("expected three finite numbers 'x,y,z', got '{s}'")),
    }
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected 'start:end', got '{s}'"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("'{a}': {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("'{b}': {e}"))?;
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err(format!("window '{s}' must satisfy start < end"));
    }
    Ok((a, b))
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 1, msg: msg.into() }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numerical(_) | Error::NonFiniteResidual { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

impl SimArgs {
    fn scenario(&self, graph: GraphConfig, lm: LmConfig) -> CliResult<Scenario> {
        let mut params = TrajectoryParams::default();
        if let Some(s) = self.route_seed {
            params.route_seed = s;
        }
        if let Some(v) = self.speed {
            params.speed = v;
        }
        if let Some(n) = self.stop_every {
            params.stop_every = n;
        }
        let mut mount = MountConfig::default();
        if let Some(arm) = self.lever_arm {
            mount.lever_arm = arm;
        }
        if let Some(rpy) = self.mount_rpy_deg {
            let r = rpy.map(f64::to_radians);
            mount.mount_rotation = Rotation3::from_euler_angles(r.x, r.y, r.z);
        }
        let faults = FaultSchedule {
            multipath_windows: self
                .multipath
                .iter()
                .map(|&(a, b)| MultipathWindow {
                    max_pos_err: self.multipath_pos,
                    max_vel_err: self.multipath_vel,
                    ..MultipathWindow::new(a, b)
                })
                .collect(),
            outage_windows: self.outages.clone(),
        };
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(usage(format!("--duration must be positive, got {}", self.duration)));
        }
        faults
            .validate((0.0, self.duration))
            .map_err(|e| usage(e.to_string()))?;
        Ok(Scenario {
            kind: self.trajectory,
            duration: self.duration,
            params,
            sensor: if self.noiseless {
                SensorModel::noiseless()
            } else {
                SensorModel::default()
            },
            mount,
            faults,
            seed: self.seed,
            graph,
            lm,
        })
    }
}

impl GraphArgs {
    fn config(&self) -> CliResult<GraphConfig> {
        let mut cfg = GraphConfig {
            use_gyro_factor: !self.no_gyro_factor,
            use_accel_factor: !self.no_accel_factor,
            angle: match self.angle {
                AngleArg::Atan2 => AngleFormulation::Atan2,
                AngleArg::Arccos => AngleFormulation::Arccos,
            },
            kernel: match self.kernel {
                KernelArg::Huber => Some(
                    HuberKernel::new(self.huber_k)
                        .ok_or_else(|| usage(format!("--huber-k must be positive, got {}", self.huber_k)))?,
                ),
                KernelArg::None => None,
            },
            ..GraphConfig::default()
        };
        if let Some(s) = self.gyro_min_speed {
            cfg.gyro_min_speed = s;
        }
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

impl LmArgs {
    fn config(&self) -> CliResult<LmConfig> {
        let mut cfg = LmConfig::default();
        if let Some(v) = self.max_iterations {
            cfg.max_iterations = v;
        }
        if let Some(v) = self.initial_lambda {
            cfg.initial_lambda = v;
        }
        if let Some(v) = self.cost_tol {
            cfg.cost_rel_tol = v;
        }
        if let Some(v) = self.step_tol {
            cfg.step_norm_tol = v;
        }
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure {
        code: 2,
        msg: format!("cannot create output directory {}: {e}", dir.display()),
    })
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure {
        code: 2,
        msg: format!("cannot write {}: {e}", path.display()),
    })
}

fn cmd_simulate(sim: &SimArgs, out: &Path) -> CliResult<()> {
    let scenario = sim.scenario(GraphConfig::default(), LmConfig::default())?;
    let data = scenario.simulate()?;
    create_dir(out)?;
    io::write_truth_file(out.join("truth.csv"), &data.truth)?;
    io::write_imu_file(out.join("imu.csv"), &data.imu)?;
    io::write_gnss_file(out.join("gnss.csv"), &data.gnss)?;
    println!(
        "wrote {} truth, {} imu, {} gnss rows to {}",
        data.truth.samples.len(),
        data.imu.len(),
        data.gnss.len(),
        out.display()
    );
    Ok(())
}

fn cmd_fuse(gnss: &Path, imu: &Path, out: &Path, graph: &GraphArgs, lm: &LmArgs) -> CliResult<()> {
    let graph_cfg = graph.config()?;
    let lm_cfg = lm.config()?;
    let fixes = io::read_gnss_file(gnss)?;
    let samples = io::read_imu_file(imu)?;
    info!("read {} fixes and {} IMU samples", fixes.len(), samples.len());

    let t0 = Instant::now();
    let g = FactorGraph::build(&fixes, &samples, graph_cfg)?;
    let init = g.initial_estimate()?;
    let build_ms = t0.elapsed().as_secs_f64() * 1e3;
    let (estimate, report) = attfree::solve(&g, &init, &lm_cfg)?;
    let total_ms = t0.elapsed().as_secs_f64() * 1e3;

    create_dir(out)?;
    io::write_estimate_file(out.join("estimate.csv"), &estimate)?;
    let mut text = String::new();
    let _ = writeln!(text, "epochs: {}", estimate.len());
    let _ = writeln!(text, "factors: {}", g.stats);
    let _ = writeln!(text, "iterations: {}", report.iterations);
    let _ = writeln!(text, "termination: {}", report.termination_reason);
    let _ = writeln!(text, "converged: {}", report.converged);
    let _ = writeln!(text, "initial_cost: {:e}", report.initial_cost);
    let _ = writeln!(text, "final_cost: {:e}", report.final_cost);
    let _ = writeln!(text, "build_ms: {build_ms:.3}");
    let _ = writeln!(text, "solve_ms: {:.3}", report.total_ms());
    let _ = writeln!(text, "mean_iteration_ms: {:.3}", report.mean_iteration_ms());
    let _ = writeln!(text, "total_ms: {total_ms:.3}");
    write_text(&out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

const METRICS_HEADER: &str = "method,epochs,rms_e,rms_n,rms_u,rms_3d,rms_horizontal,max_3d";

fn metrics_row(method: &str, r: &ErrorReport) -> String {
    format!(
        "{method},{},{},{},{},{},{},{}",
        r.errors.len(),
        r.rms.x,
        r.rms.y,
        r.rms.z,
        r.rms_3d,
        r.rms_horizontal,
        r.max_3d
    )
}

fn cdf_rows(text: &mut String, method: &str, r: &ErrorReport) {
    for (metric, sorted) in [("3d", &r.cdf), ("horizontal", &r.cdf_horizontal)] {
        for (x, p) in empirical_cdf(sorted) {
            let _ = writeln!(text, "{method},{metric},{x},{p}");
        }
    }
}

fn error_rows(text: &mut String, method: &str, r: &ErrorReport) {
    for (t, e) in &r.errors {
        let _ = writeln!(text, "{method},{t},{},{},{},{}", e.x, e.y, e.z, e.norm());
    }
}

fn cmd_evaluate(estimate: &Path, truth: &Path, gnss: Option<&Path>, out: &Path) -> CliResult<()> {
    let est = io::read_estimate_file(estimate)?;
    let truth = io::read_truth_file(truth)?;
    let mut reports = vec![];
    if let Some(g) = gnss {
        let fixes = io::read_gnss_file(g)?;
        reports.push(("gnss_only", gnss_only_errors(&fixes, &truth)?));
    }
    reports.push(("fused", compute_errors(&est, &truth)?));

    create_dir(out)?;
    let mut metrics = format!("{METRICS_HEADER}\n");
    let mut cdf = String::from("method,metric,error,probability\n");
    let mut errors = String::from("method,t,err_e,err_n,err_u,err_3d\n");
    for (name, r) in &reports {
        let _ = writeln!(metrics, "{}", metrics_row(name, r));
        cdf_rows(&mut cdf, name, r);
        error_rows(&mut errors, name, r);
    }
    write_text(&out.join("metrics.csv"), &metrics)?;
    write_text(&out.join("cdf.csv"), &cdf)?;
    write_text(&out.join("errors.csv"), &errors)?;
    print!("{metrics}");
    Ok(())
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn opt_rms(r: &Option<ErrorReport>) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.rms_3d)
}

fn cmd_experiment(
    name: ExperimentName,
    sim: &SimArgs,
    graph: &GraphArgs,
    lm: &LmArgs,
    seeds: u64,
    arms: &[f64],
    out: &Path,
) -> CliResult<()> {
    if seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let mut sim_with_defaults;
    let sim = match name {
        ExperimentName::Multipath if sim.multipath.is_empty() => {
            sim_with_defaults = sim.clone();
            sim_with_defaults.multipath = vec![(100.0, 160.0)];
            &sim_with_defaults
        }
        ExperimentName::Outage if sim.outages.is_empty() => {
            sim_with_defaults = sim.clone();
            sim_with_defaults.outages = vec![(200.0, 205.0), (220.0, 225.0), (240.0, 245.0)];
            &sim_with_defaults
        }
        _ => sim,
    };
    let base = sim.scenario(graph.config()?, lm.config()?)?;
    create_dir(out)?;
    let seed_list: Vec<u64> = (0..seeds).map(|k| base.seed.wrapping_add(k)).collect();
    let at_seed = |seed| Scenario { seed, ..base.clone() };
    let mut summary = String::new();

    match name {
        ExperimentName::Baseline => {
            let mut runs = String::from("seed,method,rms_e,rms_n,rms_u,rms_3d,rms_horizontal,max_3d,iterations,solve_ms\n");
            let mut acc: Vec<(ErrorReport, ErrorReport, usize, f64)> = vec![];
            for &seed in &seed_list {
                let run = at_seed(seed).run()?;
                info!("seed {seed}: gnss {:.3} fused {:.3}", run.gnss_only.rms_3d, run.fused.rms_3d);
                for (m, r, it, ms) in [
                    ("gnss_only", &run.gnss_only, 0, 0.0),
                    ("proposed", &run.fused, run.report.iterations, run.report.total_ms()),
                ] {
                    let (e, n, u) = (r.rms.x, r.rms.y, r.rms.z);
                    let _ = writeln!(
                        runs,
                        "{seed},{m},{e},{n},{u},{},{},{},{it},{ms}",
                        r.rms_3d, r.rms_horizontal, r.max_3d
                    );
                }
                if acc.is_empty() {
                    let mut cdf = String::from("method,metric,error,probability\n");
                    cdf_rows(&mut cdf, "gnss_only", &run.gnss_only);
                    cdf_rows(&mut cdf, "proposed", &run.fused);
                    write_text(&out.join("baseline_cdf.csv"), &cdf)?;
                    let _ = writeln!(summary, "factors: {}", run.stats);
                }
                acc.push((run.gnss_only, run.fused, run.report.iterations, run.report.total_ms()));
            }
            let mut table = String::from("method,rms_e,rms_n,rms_u,rms_3d,rms_horizontal,iterations,solve_ms\n");
            for (m, pick) in [
                ("gnss_only", (|a: &(ErrorReport, ErrorReport, usize, f64)| &a.0) as fn(&_) -> &ErrorReport),
                ("proposed", |a| &a.1),
            ] {
                let it = if m == "proposed" { mean(acc.iter().map(|a| a.2 as f64)) } else { 0.0 };
                let ms = if m == "proposed" { mean(acc.iter().map(|a| a.3)) } else { 0.0 };
                let _ = writeln!(
                    table,
                    "{m},{},{},{},{},{},{it},{ms}",
                    mean(acc.iter().map(|a| pick(a).rms.x)),
                    mean(acc.iter().map(|a| pick(a).rms.y)),
                    mean(acc.iter().map(|a| pick(a).rms.z)),
                    mean(acc.iter().map(|a| pick(a).rms_3d)),
                    mean(acc.iter().map(|a| pick(a).rms_horizontal)),
                );
            }
            write_text(&out.join("baseline_runs.csv"), &runs)?;
            write_text(&out.join("baseline.csv"), &table)?;
            summary.push_str(&table);
        }
        ExperimentName::LeverSweep => {
            let mut per_arm: Vec<Vec<(f64, f64, usize)>> = vec![vec![]; arms.len()];
            for &seed in &seed_list {
                let rows = run_lever_arm_sweep(&at_seed(seed), arms)?;
                for (k, r) in rows.iter().enumerate() {
                    per_arm[k].push((r.gnss_rms_3d, r.fused_rms_3d, r.iterations));
                }
            }
            let mut table = String::from("arm,gnss_rms_3d,fused_rms_3d,iterations\n");
            for (arm, rs) in arms.iter().zip(&per_arm) {
                let _ = writeln!(
                    table,
                    "{arm},{},{},{}",
                    mean(rs.iter().map(|r| r.0)),
                    mean(rs.iter().map(|r| r.1)),
                    mean(rs.iter().map(|r| r.2 as f64))
                );
            }
            write_text(&out.join("lever_sweep.csv"), &table)?;
            summary.push_str(&table);
        }
        ExperimentName::Multipath | ExperimentName::Outage => {
            let kind = if name == ExperimentName::Multipath {
                WindowKind::Multipath
            } else {
                WindowKind::Outage
            };
            let mut table = String::from(
                "seed,kind,t_start,t_end,gnss_in_rms_3d,fused_in_rms_3d,fused_in_max_3d,gnss_out_rms_3d,fused_out_rms_3d\n",
            );
            let mut pooled = vec![];
            for (k, &seed) in seed_list.iter().enumerate() {
                let exp = run_fault_experiment(&at_seed(seed))?;
                for w in exp.windows.iter().filter(|w| w.kind == kind) {
                    let _ = writeln!(
                        table,
                        "{seed},{},{},{},{},{},{},{},{}",
                        kind.label(),
                        w.t_start,
                        w.t_end,
                        opt_rms(&w.gnss),
                        w.fused.rms_3d,
                        w.fused.max_3d,
                        opt_rms(&exp.outside_gnss),
                        opt_rms(&exp.outside_fused)
                    );
                }
                let (g, f) = exp.pooled(kind);
                pooled.push((opt_rms(&g), f.as_ref().map_or(f64::NAN, |f| f.rms_3d), f.map_or(f64::NAN, |f| f.max_3d)));
                if k == 0 {
                    let mut series = String::from("t,gnss_3d,fused_3d\n");
                    let gnss: std::collections::HashMap<u64, f64> = exp
                        .gnss_only
                        .time_series()
                        .into_iter()
                        .map(|(t, e)| (t.to_bits(), e))
                        .collect();
                    for (t, e) in exp.fused.time_series() {
                        let g = gnss.get(&t.to_bits()).copied().unwrap_or(f64::NAN);
                        let _ = writeln!(series, "{t},{g},{e}");
                    }
                    write_text(&out.join(format!("{}_errors.csv", kind.label())), &series)?;
                }
            }
            write_text(&out.join(format!("{}.csv", kind.label())), &table)?;
            let _ = writeln!(
                summary,
                "{} windows over {} seed(s): gnss in-window rms {:.4}, fused in-window rms {:.4}, fused max {:.4}",
                kind.label(),
                seeds,
                mean(pooled.iter().map(|p| p.0)),
                mean(pooled.iter().map(|p| p.1)),
                pooled.iter().map(|p| p.2).fold(0.0, f64::max)
            );
        }
    }
    write_text(&out.join("report.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { sim, out } => cmd_simulate(&sim, &out),
        Command::Fuse {
            gnss,
            imu,
            out,
            graph,
            lm,
        } => cmd_fuse(&gnss, &imu, &out, &graph, &lm),
        Command::Evaluate {
            estimate,
            truth,
            gnss,
            out,
        } => cmd_evaluate(&estimate, &truth, gnss.as_deref(), &out),
        Command::Experiment {
            name,
            sim,
            graph,
            lm,
            seeds,
            arms,
            out,
        } => cmd_experiment(name, &sim, &graph, &lm, seeds, &arms, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
