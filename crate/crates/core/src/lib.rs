//! Attitude-free GNSS/IMU fusion by batch factor graph optimization.
//!
//! Each GNSS epoch carries an 8-dimensional state (position, velocity and two
//! scalar IMU biases). The IMU enters only through quantities that do not
//! depend on orientation: the magnitude of the mean specific force between
//! epochs, and the total rotation angle compared against the angle between
//! consecutive velocity vectors.

pub mod error;
pub mod evaluation;
pub mod factors;
pub mod geodesy;
pub mod graph;
pub mod io;
pub mod optimizer;
pub mod simulator;
pub mod state;

pub use error::{Error, Result};
pub use factors::{AngleFormulation, FactorEval, HuberKernel};
pub use geodesy::{EnuVector, GnssFix, GravityModel, ImuSample, ImuWindow};
pub use graph::{FactorGraph, FactorStats, GraphConfig, ImuNoiseConfig};
pub use optimizer::{solve, LmConfig, SolveReport};
pub use simulator::{
    FaultSchedule, GroundTruth, MountConfig, MultipathWindow, SensorModel, TrajectoryKind, TrajectoryParams,
};
pub use state::{EpochState, TrajectoryEstimate};

/// Builds the graph, initializes from the fixes and runs LM.
pub fn fuse(
    fixes: &[GnssFix],
    imu: &[ImuSample],
    graph_cfg: GraphConfig,
    lm_cfg: &LmConfig,
) -> Result<(TrajectoryEstimate, SolveReport, FactorStats)> {
    let graph = FactorGraph::build(fixes, imu, graph_cfg)?;
    let init = graph.initial_estimate()?;
    let (est, report) = solve(&graph, &init, lm_cfg)?;
    Ok((est, report, graph.stats))
}
