//! Python bindings for the attitude-free GNSS/IMU fusion library.

use attfree::evaluation::{self, run_lever_arm_sweep, Scenario};
use attfree::factors::vector_angle as core_vector_angle;
use attfree::{
    AngleFormulation, EnuVector, EpochState, Error, FactorGraph, FaultSchedule, GnssFix, GraphConfig, GroundTruth,
    HuberKernel, ImuSample, LmConfig, MultipathWindow, SensorModel, TrajectoryEstimate, TrajectoryKind,
};
use nalgebra::Vector3;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

type Vec3 = [f64; 3];

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        Error::Numerical(_) | Error::NonFiniteResidual { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn enu(v: Vec3) -> EnuVector {
    EnuVector::new(v[0], v[1], v[2])
}

fn arr(v: Vector3<f64>) -> Vec3 {
    [v.x, v.y, v.z]
}

fn parse_kernel(name: &str, k: f64) -> Result<Option<HuberKernel>, String> {
    match name {
        "huber" if k.is_finite() && k > 0.0 => Ok(Some(HuberKernel { k })),
        "huber" => Err(format!("huber threshold {k} must be positive")),
        "none" => Ok(None),
        other => Err(format!("unknown kernel '{other}' (expected huber or none)")),
    }
}

fn parse_angle(name: &str) -> Result<AngleFormulation, String> {
    match name {
        "atan2" => Ok(AngleFormulation::Atan2),
        "arccos" => Ok(AngleFormulation::Arccos),
        other => Err(format!("unknown angle formulation '{other}' (expected atan2 or arccos)")),
    }
}

fn check_window(w: (f64, f64)) -> Result<(f64, f64), String> {
    if w.0.is_finite() && w.1.is_finite() && w.0 < w.1 {
        Ok(w)
    } else {
        Err(format!("window {w:?} must satisfy start < end"))
    }
}

#[pyclass(name = "ImuSample", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyImuSample(ImuSample);

#[pymethods]
impl PyImuSample {
    #[new]
    fn new(t: f64, accel: Vec3, gyro: Vec3) -> PyResult<Self> {
        let s = ImuSample {
            t,
            accel: Vector3::from(accel),
            gyro: Vector3::from(gyro),
        };
        if !(t.is_finite() && s.accel.iter().chain(s.gyro.iter()).all(|x| x.is_finite())) {
            return Err(PyValueError::new_err("IMU sample must be finite"));
        }
        Ok(Self(s))
    }

    #[getter]
    fn t(&self) -> f64 {
        self.0.t
    }

    #[getter]
    fn accel(&self) -> Vec3 {
        arr(self.0.accel)
    }

    #[getter]
    fn gyro(&self) -> Vec3 {
        arr(self.0.gyro)
    }

    fn __repr__(&self) -> String {
        format!("ImuSample(t={}, accel={:?}, gyro={:?})", self.0.t, self.accel(), self.gyro())
    }
}

#[pyclass(name = "GnssFix", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGnssFix(GnssFix);

#[pymethods]
impl PyGnssFix {
    #[new]
    #[pyo3(signature = (t, pos, vel, pos_std=[1.0; 3], vel_std=[0.2; 3], pos_valid=true, vel_valid=true))]
    fn new(t: f64, pos: Vec3, vel: Vec3, pos_std: Vec3, vel_std: Vec3, pos_valid: bool, vel_valid: bool) -> PyResult<Self> {
        let fix = GnssFix {
            t,
            pos: enu(pos),
            vel: enu(vel),
            pos_std: Vector3::from(pos_std),
            vel_std: Vector3::from(vel_std),
            pos_valid,
            vel_valid,
        };
        fix.validate().map_err(to_py)?;
        Ok(Self(fix))
    }

    #[getter]
    fn t(&self) -> f64 {
        self.0.t
    }

    #[getter]
    fn pos(&self) -> Vec3 {
        arr(self.0.pos.to_vector())
    }

    #[getter]
    fn vel(&self) -> Vec3 {
        arr(self.0.vel.to_vector())
    }

    #[getter]
    fn pos_std(&self) -> Vec3 {
        arr(self.0.pos_std)
    }

    #[getter]
    fn vel_std(&self) -> Vec3 {
        arr(self.0.vel_std)
    }

    #[getter]
    fn pos_valid(&self) -> bool {
        self.0.pos_valid
    }

    #[getter]
    fn vel_valid(&self) -> bool {
        self.0.vel_valid
    }

    /// Same fix with position replaced, e.g. to inject an outlier.
    fn with_pos(&self, pos: Vec3) -> PyResult<Self> {
        let mut fix = self.0;
        fix.pos = enu(pos);
        fix.validate().map_err(to_py)?;
        Ok(Self(fix))
    }

    fn __repr__(&self) -> String {
        format!(
            "GnssFix(t={}, pos={:?}, vel={:?}, pos_valid={}, vel_valid={})",
            self.0.t,
            self.pos(),
            self.vel(),
            self.0.pos_valid,
            self.0.vel_valid
        )
    }
}

#[pyclass(name = "EpochState", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyEpochState(EpochState);

#[pymethods]
impl PyEpochState {
    #[new]
    #[pyo3(signature = (pos, vel, b_acc=0.0, b_gyro=0.0))]
    fn new(pos: Vec3, vel: Vec3, b_acc: f64, b_gyro: f64) -> PyResult<Self> {
        let s = EpochState {
            x: enu(pos),
            v: enu(vel),
            b_acc,
            b_gyro,
        };
        if !s.is_finite() {
            return Err(PyValueError::new_err("state must be finite"));
        }
        Ok(Self(s))
    }

    #[getter]
    fn pos(&self) -> Vec3 {
        arr(self.0.pos())
    }

    #[getter]
    fn vel(&self) -> Vec3 {
        arr(self.0.vel())
    }

    #[getter]
    fn b_acc(&self) -> f64 {
        self.0.b_acc
    }

    #[getter]
    fn b_gyro(&self) -> f64 {
        self.0.b_gyro
    }

    fn __repr__(&self) -> String {
        format!(
            "EpochState(pos={:?}, vel={:?}, b_acc={}, b_gyro={})",
            self.pos(),
            self.vel(),
            self.0.b_acc,
            self.0.b_gyro
        )
    }
}

/// Fused trajectory: one state per GNSS epoch.
#[pyclass(name = "Estimate", frozen, skip_from_py_object)]
struct PyEstimate(TrajectoryEstimate);

#[pymethods]
impl PyEstimate {
    #[new]
    fn new(times: Vec<f64>, states: Vec<PyRef<'_, PyEpochState>>) -> PyResult<Self> {
        let states = states.iter().map(|s| s.0).collect();
        Ok(Self(TrajectoryEstimate::new(times, states).map_err(to_py)?))
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times.clone()
    }

    #[getter]
    fn states(&self) -> Vec<PyEpochState> {
        self.0.states.iter().copied().map(PyEpochState).collect()
    }

    fn positions(&self) -> Vec<Vec3> {
        self.0.states.iter().map(|s| arr(s.pos())).collect()
    }

    fn velocities(&self) -> Vec<Vec3> {
        self.0.states.iter().map(|s| arr(s.vel())).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Simulated reference trajectory at the IMU rate.
#[pyclass(name = "GroundTruth", frozen, skip_from_py_object)]
struct PyGroundTruth(GroundTruth);

#[pymethods]
impl PyGroundTruth {
    fn times(&self) -> Vec<f64> {
        self.0.samples.iter().map(|s| s.t).collect()
    }

    fn positions(&self) -> Vec<Vec3> {
        self.0.samples.iter().map(|s| arr(s.position.to_vector())).collect()
    }

    fn velocities(&self) -> Vec<Vec3> {
        self.0.samples.iter().map(|s| arr(s.velocity.to_vector())).collect()
    }

    /// Position and velocity at a sample time, or None off the grid.
    fn sample_at(&self, t: f64) -> Option<(Vec3, Vec3)> {
        self.0
            .sample_at(t)
            .map(|s| (arr(s.position.to_vector()), arr(s.velocity.to_vector())))
    }

    fn __len__(&self) -> usize {
        self.0.samples.len()
    }
}

#[pyclass(name = "SimulatedData", frozen, skip_from_py_object)]
struct PySimulatedData {
    #[pyo3(get)]
    imu: Vec<Py<PyImuSample>>,
    #[pyo3(get)]
    gnss: Vec<Py<PyGnssFix>>,
    #[pyo3(get)]
    truth: Py<PyGroundTruth>,
}

#[pyclass(name = "SolveReport", frozen, skip_from_py_object)]
struct PySolveReport {
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    termination: String,
    #[pyo3(get)]
    initial_cost: f64,
    #[pyo3(get)]
    final_cost: f64,
    #[pyo3(get)]
    cost_history: Vec<f64>,
    #[pyo3(get)]
    total_ms: f64,
}

impl From<&attfree::SolveReport> for PySolveReport {
    fn from(r: &attfree::SolveReport) -> Self {
        Self {
            iterations: r.iterations,
            converged: r.converged,
            termination: r.termination_reason.to_string(),
            initial_cost: r.initial_cost,
            final_cost: r.final_cost,
            cost_history: r.cost_history.clone(),
            total_ms: r.total_ms(),
        }
    }
}

#[pymethods]
impl PySolveReport {
    fn __repr__(&self) -> String {
        format!(
            "SolveReport(iterations={}, converged={}, final_cost={:e})",
            self.iterations, self.converged, self.final_cost
        )
    }
}

#[pyclass(name = "ErrorReport", frozen, skip_from_py_object)]
struct PyErrorReport {
    #[pyo3(get)]
    rms_enu: Vec3,
    #[pyo3(get)]
    rms_3d: f64,
    #[pyo3(get)]
    rms_horizontal: f64,
    #[pyo3(get)]
    max_3d: f64,
    #[pyo3(get)]
    epochs: usize,
    /// (t, [e, n, u]) per aligned epoch.
    #[pyo3(get)]
    errors: Vec<(f64, Vec3)>,
    /// Sorted 3D errors.
    #[pyo3(get)]
    cdf: Vec<f64>,
}

impl From<&evaluation::ErrorReport> for PyErrorReport {
    fn from(r: &evaluation::ErrorReport) -> Self {
        Self {
            rms_enu: arr(r.rms),
            rms_3d: r.rms_3d,
            rms_horizontal: r.rms_horizontal,
            max_3d: r.max_3d,
            epochs: r.errors.len(),
            errors: r.errors.iter().map(|(t, e)| (*t, arr(*e))).collect(),
            cdf: r.cdf.clone(),
        }
    }
}

#[pymethods]
impl PyErrorReport {
    fn __repr__(&self) -> String {
        format!(
            "ErrorReport(epochs={}, rms_3d={:.4}, rms_horizontal={:.4}, max_3d={:.4})",
            self.epochs, self.rms_3d, self.rms_horizontal, self.max_3d
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn graph_config(
    kernel: &str,
    huber_k: f64,
    angle: &str,
    use_accel_factor: bool,
    use_gyro_factor: bool,
    gyro_min_speed: Option<f64>,
) -> PyResult<GraphConfig> {
    let mut cfg = GraphConfig {
        kernel: parse_kernel(kernel, huber_k).map_err(PyValueError::new_err)?,
        angle: parse_angle(angle).map_err(PyValueError::new_err)?,
        use_accel_factor,
        use_gyro_factor,
        ..GraphConfig::default()
    };
    if let Some(v) = gyro_min_speed {
        cfg.gyro_min_speed = v;
    }
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

fn lm_config(max_iterations: Option<usize>) -> PyResult<LmConfig> {
    let mut lm = LmConfig::default();
    if let Some(n) = max_iterations {
        lm.max_iterations = n;
    }
    lm.validate().map_err(to_py)?;
    Ok(lm)
}

#[allow(clippy::too_many_arguments)]
fn scenario(
    seed: u64,
    duration: f64,
    trajectory: &str,
    noiseless: bool,
    lever_arm: Option<Vec3>,
    outages: Vec<(f64, f64)>,
    multipath: Vec<(f64, f64)>,
) -> PyResult<Scenario> {
    let kind: TrajectoryKind = trajectory.parse().map_err(to_py)?;
    let mut sc = Scenario {
        kind,
        duration,
        ..Scenario::urban(seed)
    };
    if noiseless {
        sc.sensor = SensorModel::noiseless();
    }
    if let Some(arm) = lever_arm {
        sc.mount.lever_arm = Vector3::from(arm);
    }
    let window = |w| check_window(w).map_err(PyValueError::new_err);
    sc.faults = FaultSchedule {
        outage_windows: outages.into_iter().map(window).collect::<PyResult<_>>()?,
        multipath_windows: multipath
            .into_iter()
            .map(|w| window(w).map(|(a, b)| MultipathWindow::new(a, b)))
            .collect::<PyResult<_>>()?,
    };
    Ok(sc)
}

fn unwrap_inputs(gnss: &[PyRef<'_, PyGnssFix>], imu: &[PyRef<'_, PyImuSample>]) -> (Vec<GnssFix>, Vec<ImuSample>) {
    (gnss.iter().map(|f| f.0).collect(), imu.iter().map(|s| s.0).collect())
}

/// Simulates truth, IMU and GNSS for one scenario.
#[pyfunction]
#[pyo3(signature = (seed=0, duration=300.0, trajectory="city-grid", noiseless=false, lever_arm=None, outages=vec![], multipath=vec![], stop_every=None))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    seed: u64,
    duration: f64,
    trajectory: &str,
    noiseless: bool,
    lever_arm: Option<Vec3>,
    outages: Vec<(f64, f64)>,
    multipath: Vec<(f64, f64)>,
    stop_every: Option<usize>,
) -> PyResult<PySimulatedData> {
    let mut sc = scenario(seed, duration, trajectory, noiseless, lever_arm, outages, multipath)?;
    if let Some(n) = stop_every {
        sc.params.stop_every = n;
    }
    let data = py.detach(|| sc.simulate()).map_err(to_py)?;
    Ok(PySimulatedData {
        imu: data
            .imu
            .into_iter()
            .map(|s| Py::new(py, PyImuSample(s)))
            .collect::<PyResult<_>>()?,
        gnss: data
            .gnss
            .into_iter()
            .map(|f| Py::new(py, PyGnssFix(f)))
            .collect::<PyResult<_>>()?,
        truth: Py::new(py, PyGroundTruth(data.truth))?,
    })
}

/// Builds the factor graph, initializes from the fixes and runs Levenberg-Marquardt.
#[pyfunction]
#[pyo3(signature = (gnss, imu, kernel="huber", huber_k=1.345, angle="atan2", use_accel_factor=true, use_gyro_factor=true, gyro_min_speed=None, max_iterations=None))]
#[allow(clippy::too_many_arguments)]
fn fuse(
    py: Python<'_>,
    gnss: Vec<PyRef<'_, PyGnssFix>>,
    imu: Vec<PyRef<'_, PyImuSample>>,
    kernel: &str,
    huber_k: f64,
    angle: &str,
    use_accel_factor: bool,
    use_gyro_factor: bool,
    gyro_min_speed: Option<f64>,
    max_iterations: Option<usize>,
) -> PyResult<(PyEstimate, PySolveReport)> {
    let cfg = graph_config(kernel, huber_k, angle, use_accel_factor, use_gyro_factor, gyro_min_speed)?;
    let lm = lm_config(max_iterations)?;
    let (fixes, samples) = unwrap_inputs(&gnss, &imu);
    let (est, report, _) = py.detach(|| attfree::fuse(&fixes, &samples, cfg, &lm)).map_err(to_py)?;
    Ok((PyEstimate(est), PySolveReport::from(&report)))
}

/// Per-factor residuals at `estimate`, as (kind, epoch, residual) tuples.
#[pyfunction]
#[pyo3(signature = (gnss, imu, estimate, kernel="huber", angle="atan2"))]
fn factor_residuals(
    gnss: Vec<PyRef<'_, PyGnssFix>>,
    imu: Vec<PyRef<'_, PyImuSample>>,
    estimate: &PyEstimate,
    kernel: &str,
    angle: &str,
) -> PyResult<Vec<(String, Option<usize>, Vec<f64>)>> {
    let cfg = graph_config(kernel, 1.345, angle, true, true, None)?;
    let (fixes, samples) = unwrap_inputs(&gnss, &imu);
    let graph = FactorGraph::build(&fixes, &samples, cfg).map_err(to_py)?;
    graph.check_layout(&estimate.0).map_err(to_py)?;
    Ok(graph
        .factors
        .iter()
        .map(|f| {
            let ev = graph.evaluate_factor(f, &estimate.0);
            (f.kind().to_owned(), f.epoch(), ev.residual.iter().copied().collect())
        })
        .collect())
}

/// Position errors of an estimate against ground truth.
#[pyfunction]
fn evaluate(estimate: &PyEstimate, truth: &PyGroundTruth) -> PyResult<PyErrorReport> {
    let r = evaluation::compute_errors(&estimate.0, &truth.0).map_err(to_py)?;
    Ok(PyErrorReport::from(&r))
}

/// Position errors of the valid GNSS fixes themselves.
#[pyfunction]
fn gnss_only_errors(gnss: Vec<PyRef<'_, PyGnssFix>>, truth: &PyGroundTruth) -> PyResult<PyErrorReport> {
    let fixes: Vec<GnssFix> = gnss.iter().map(|f| f.0).collect();
    let r = evaluation::gnss_only_errors(&fixes, &truth.0).map_err(to_py)?;
    Ok(PyErrorReport::from(&r))
}

/// Simulate, fuse and evaluate in one call; returns (gnss_only, fused, solve_report).
#[pyfunction]
#[pyo3(signature = (seed=0, duration=300.0, trajectory="city-grid", lever_arm=None, outages=vec![], multipath=vec![], kernel="huber", angle="atan2"))]
#[allow(clippy::too_many_arguments)]
fn run_scenario(
    py: Python<'_>,
    seed: u64,
    duration: f64,
    trajectory: &str,
    lever_arm: Option<Vec3>,
    outages: Vec<(f64, f64)>,
    multipath: Vec<(f64, f64)>,
    kernel: &str,
    angle: &str,
) -> PyResult<(PyErrorReport, PyErrorReport, PySolveReport)> {
    let mut sc = scenario(seed, duration, trajectory, false, lever_arm, outages, multipath)?;
    sc.graph = graph_config(kernel, 1.345, angle, true, true, None)?;
    let run = py.detach(|| sc.run()).map_err(to_py)?;
    Ok((
        PyErrorReport::from(&run.gnss_only),
        PyErrorReport::from(&run.fused),
        PySolveReport::from(&run.report),
    ))
}

/// One run per lateral lever arm with a shared seed: (arm, gnss_rms_3d, fused_rms_3d, iterations).
#[pyfunction]
#[pyo3(signature = (arms, seed=0, duration=300.0))]
fn lever_arm_sweep(py: Python<'_>, arms: Vec<f64>, seed: u64, duration: f64) -> PyResult<Vec<(f64, f64, f64, usize)>> {
    let base = Scenario {
        duration,
        ..Scenario::urban(seed)
    };
    let rows = py.detach(|| run_lever_arm_sweep(&base, &arms)).map_err(to_py)?;
    Ok(rows
        .iter()
        .map(|r| (r.arm, r.gnss_rms_3d, r.fused_rms_3d, r.iterations))
        .collect())
}

/// Angle between two vectors, rad.
#[pyfunction]
#[pyo3(signature = (a, b, angle="atan2"))]
fn vector_angle(a: Vec3, b: Vec3, angle: &str) -> PyResult<f64> {
    let form = parse_angle(angle).map_err(PyValueError::new_err)?;
    Ok(core_vector_angle(&Vector3::from(a), &Vector3::from(b), form).0)
}

#[pymodule]
fn attfree_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImuSample>()?;
    m.add_class::<PyGnssFix>()?;
    m.add_class::<PyEpochState>()?;
    m.add_class::<PyEstimate>()?;
    m.add_class::<PyGroundTruth>()?;
    m.add_class::<PySimulatedData>()?;
    m.add_class::<PySolveReport>()?;
    m.add_class::<PyErrorReport>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(factor_residuals, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(gnss_only_errors, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(lever_arm_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(vector_angle, m)?)?;
    Ok(())
}
