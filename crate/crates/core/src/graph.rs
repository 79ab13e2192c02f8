//! Factor graph assembly over GNSS epochs and objective evaluation.

use std::fmt;

use log::warn;

use crate::error::{Error, Result};
use crate::factors::{
    accel_factor, bias_factor, bias_prior, gnss_pos_factor, gnss_vel_factor, gyro_factor, gyro_gate,
    motion_factor, AngleFormulation, BiasKind, FactorEval, HuberKernel,
};
use crate::geodesy::{integrate_imu_window, GnssFix, GravityModel, ImuSample, ImuWindow};
use crate::state::{initialize, StateLayout, TrajectoryEstimate};

/// Noise figures used to weight the IMU-derived factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuNoiseConfig {
    /// (m/s²)/√Hz
    pub accel_noise_density: f64,
    /// (m/s²)·√Hz, per-sample bias random walk
    pub accel_random_walk: f64,
    /// (rad/s)/√Hz
    pub gyro_noise_density: f64,
    /// (rad/s)/√Hz
    pub gyro_random_walk: f64,
    /// Added in quadrature to the white-noise sigma of each acceleration factor, m/s².
    pub accel_sigma_floor: f64,
    /// Added in quadrature to the white-noise sigma of each turn-angle factor, rad.
    pub gyro_sigma_floor: f64,
}

impl Default for ImuNoiseConfig {
    fn default() -> Self {
        Self {
            accel_noise_density: 1.86e-3,
            accel_random_walk: 4.33e-4,
            gyro_noise_density: 1.87e-4,
            gyro_random_walk: 2.66e-5,
            accel_sigma_floor: 0.05,
            gyro_sigma_floor: 0.2,
        }
    }
}

impl ImuNoiseConfig {
    /// Sigma of the window-mean specific force magnitude.
    pub fn accel_sigma(&self, window: &ImuWindow) -> f64 {
        let white = self.accel_noise_density / window.dt_imu().sqrt() / (window.n_samples as f64).sqrt();
        white.hypot(self.accel_sigma_floor)
    }

    /// Sigma of the integrated turn angle ‖Σ ω Δt‖.
    pub fn gyro_sigma(&self, window: &ImuWindow) -> f64 {
        let white = self.gyro_noise_density * (window.t2 - window.t1).sqrt();
        white.hypot(self.gyro_sigma_floor)
    }

    pub fn accel_bias_sigma(&self, dt_gnss: f64) -> f64 {
        self.accel_random_walk * dt_gnss.sqrt()
    }

    /// The gyro bias state is an angle per interval, so its walk scales with Δt as well.
    pub fn gyro_bias_sigma(&self, dt_gnss: f64) -> f64 {
        self.gyro_random_walk * dt_gnss.sqrt() * dt_gnss
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphConfig {
    pub gravity: GravityModel,
    /// Kernel for the GNSS position and velocity factors; `None` for plain least squares.
    pub kernel: Option<HuberKernel>,
    pub angle: AngleFormulation,
    pub use_accel_factor: bool,
    pub use_gyro_factor: bool,
    /// Turn-angle factor is used only when both measured speeds reach this, m/s.
    pub gyro_min_speed: f64,
    /// m/s
    pub motion_sigma: f64,
    pub imu_noise: ImuNoiseConfig,
    /// Weak prior on the first epoch's acceleration bias, m/s².
    pub accel_bias_prior_sigma: f64,
    /// Weak prior on the first epoch's turn-angle bias, rad.
    pub gyro_bias_prior_sigma: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            gravity: GravityModel::default(),
            kernel: Some(HuberKernel::default()),
            angle: AngleFormulation::Atan2,
            use_accel_factor: true,
            use_gyro_factor: true,
            gyro_min_speed: 1.0,
            motion_sigma: 0.05,
            imu_noise: ImuNoiseConfig::default(),
            accel_bias_prior_sigma: 1.0,
            gyro_bias_prior_sigma: 1.0,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        let n = &self.imu_noise;
        let positive = [
            ("gyro_min_speed", self.gyro_min_speed, true),
            ("motion_sigma", self.motion_sigma, false),
            ("accel_noise_density", n.accel_noise_density, true),
            ("accel_random_walk", n.accel_random_walk, false),
            ("gyro_noise_density", n.gyro_noise_density, true),
            ("gyro_random_walk", n.gyro_random_walk, false),
            ("accel_sigma_floor", n.accel_sigma_floor, true),
            ("gyro_sigma_floor", n.gyro_sigma_floor, true),
            ("accel_bias_prior_sigma", self.accel_bias_prior_sigma, false),
            ("gyro_bias_prior_sigma", self.gyro_bias_prior_sigma, false),
        ];
        for (name, v, zero_ok) in positive {
            let ok = v.is_finite() && if zero_ok { v >= 0.0 } else { v > 0.0 };
            if !ok {
                return Err(Error::Config(format!("{name} = {v} is out of range")));
            }
        }
        if n.accel_noise_density == 0.0 && n.accel_sigma_floor == 0.0 {
            return Err(Error::Config("acceleration factor sigma would be zero".into()));
        }
        if n.gyro_noise_density == 0.0 && n.gyro_sigma_floor == 0.0 {
            return Err(Error::Config("turn-angle factor sigma would be zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Accel { i: usize, window: ImuWindow, dt: f64, sigma: f64 },
    Gyro { i: usize, window: ImuWindow, sigma: f64 },
    GnssPos { i: usize, fix: GnssFix },
    GnssVel { i: usize, fix: GnssFix },
    Motion { i: usize, dt: f64 },
    AccelBias { i: usize, sigma: f64 },
    GyroBias { i: usize, sigma: f64 },
    AccelBiasPrior { sigma: f64 },
    GyroBiasPrior { sigma: f64 },
}

impl Factor {
    pub fn kind(&self) -> &'static str {
        match self {
            Factor::Accel { .. } => "accel",
            Factor::Gyro { .. } => "gyro",
            Factor::GnssPos { .. } => "gnss_pos",
            Factor::GnssVel { .. } => "gnss_vel",
            Factor::Motion { .. } => "motion",
            Factor::AccelBias { .. } => "accel_bias",
            Factor::GyroBias { .. } => "gyro_bias",
            Factor::AccelBiasPrior { .. } => "accel_bias_prior",
            Factor::GyroBiasPrior { .. } => "gyro_bias_prior",
        }
    }

    /// First epoch the factor touches; `None` for the bias priors, which act on epoch 0.
    pub fn epoch(&self) -> Option<usize> {
        match *self {
            Factor::Accel { i, .. }
            | Factor::Gyro { i, .. }
            | Factor::GnssPos { i, .. }
            | Factor::GnssVel { i, .. }
            | Factor::Motion { i, .. }
            | Factor::AccelBias { i, .. }
            | Factor::GyroBias { i, .. } => Some(i),
            Factor::AccelBiasPrior { .. } | Factor::GyroBiasPrior { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FactorStats {
    pub accel: usize,
    pub gyro: usize,
    pub gnss_pos: usize,
    pub gnss_vel: usize,
    pub motion: usize,
    pub accel_bias: usize,
    pub gyro_bias: usize,
    pub priors: usize,
}

impl FactorStats {
    pub fn total(&self) -> usize {
        self.accel
            + self.gyro
            + self.gnss_pos
            + self.gnss_vel
            + self.motion
            + self.accel_bias
            + self.gyro_bias
            + self.priors
    }

    fn count(&mut self, f: &Factor) {
        match f {
            Factor::Accel { .. } => self.accel += 1,
            Factor::Gyro { .. } => self.gyro += 1,
            Factor::GnssPos { .. } => self.gnss_pos += 1,
            Factor::GnssVel { .. } => self.gnss_vel += 1,
            Factor::Motion { .. } => self.motion += 1,
            Factor::AccelBias { .. } => self.accel_bias += 1,
            Factor::GyroBias { .. } => self.gyro_bias += 1,
            Factor::AccelBiasPrior { .. } | Factor::GyroBiasPrior { .. } => self.priors += 1,
        }
    }
}

impl fmt::Display for FactorStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "accel={} gyro={} gnss_pos={} gnss_vel={} motion={} accel_bias={} gyro_bias={} priors={} total={}",
            self.accel,
            self.gyro,
            self.gnss_pos,
            self.gnss_vel,
            self.motion,
            self.accel_bias,
            self.gyro_bias,
            self.priors,
            self.total()
        )
    }
}

#[derive(Debug, Clone)]
pub struct FactorGraph {
    pub factors: Vec<Factor>,
    /// One entry per state epoch; grid points without a fix hold an invalid placeholder.
    pub epochs: Vec<GnssFix>,
    pub layout: StateLayout,
    pub stats: FactorStats,
    pub config: GraphConfig,
}

/// Fills missing points of the nominal GNSS grid with invalid placeholder fixes.
pub fn regularize_epochs(fixes: &[GnssFix]) -> Result<Vec<GnssFix>> {
    if fixes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 GNSS epochs, got {}",
            fixes.len()
        )));
    }
    let mut diffs: Vec<f64> = fixes.windows(2).map(|w| w[1].t - w[0].t).collect();
    if diffs.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidInput("GNSS timestamps not strictly increasing".into()));
    }
    diffs.sort_by(f64::total_cmp);
    let period = diffs[diffs.len() / 2];

    let mut out = Vec::with_capacity(fixes.len());
    for w in fixes.windows(2) {
        out.push(w[0]);
        let gap = w[1].t - w[0].t;
        let steps = (gap / period).round() as usize;
        if gap > 1.5 * period && steps >= 2 {
            let h = gap / steps as f64;
            for k in 1..steps {
                out.push(GnssFix::missing(w[0].t + h * k as f64));
            }
        }
    }
    out.push(fixes[fixes.len() - 1]);
    Ok(out)
}

fn nominal_imu_period(imu: &[ImuSample]) -> Option<f64> {
    let mut d: Vec<f64> = imu.windows(2).map(|w| w[1].t - w[0].t).filter(|d| *d > 0.0).collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    Some(d[d.len() / 2])
}

impl FactorGraph {
    pub fn build(fixes: &[GnssFix], imu: &[ImuSample], config: GraphConfig) -> Result<Self> {
        config.validate()?;
        for f in fixes {
            f.validate()?;
        }
        if imu.windows(2).any(|w| !(w[1].t >= w[0].t)) {
            return Err(Error::InvalidInput("IMU samples not sorted by time".into()));
        }
        let epochs = regularize_epochs(fixes)?;
        if !epochs.iter().any(|f| f.pos_valid) {
            return Err(Error::Config("no valid GNSS position fix; position is unobservable".into()));
        }
        let (t_first, t_last) = (epochs[0].t, epochs[epochs.len() - 1].t);
        if imu.is_empty() || imu[imu.len() - 1].t <= t_first || imu[0].t > t_last {
            return Err(Error::InvalidInput(
                "IMU and GNSS time ranges do not overlap".into(),
            ));
        }
        let imu_period = nominal_imu_period(imu);

        // Gating speeds: measured where available, interpolated otherwise.
        let gate_ref = initialize(&epochs)?;
        let n = epochs.len();
        let noise = config.imu_noise;
        let mut factors = Vec::new();

        for i in 0..n - 1 {
            let dt = epochs[i + 1].t - epochs[i].t;
            factors.push(Factor::Motion { i, dt });
            factors.push(Factor::AccelBias {
                i,
                sigma: noise.accel_bias_sigma(dt),
            });
            factors.push(Factor::GyroBias {
                i,
                sigma: noise.gyro_bias_sigma(dt),
            });

            if !(config.use_accel_factor || config.use_gyro_factor) {
                continue;
            }
            let window = match integrate_imu_window(imu, epochs[i].t, epochs[i + 1].t) {
                Ok(w) => w,
                Err(Error::NoImuCoverage { t1, t2 }) => {
                    warn!("no IMU samples in ({t1}, {t2}]; dropping IMU factors for this interval");
                    continue;
                }
                Err(e) => return Err(e),
            };
            if let Some(p) = imu_period {
                let expected = dt / p;
                if (window.n_samples as f64) < 0.9 * expected - 1.0 {
                    warn!(
                        "partial IMU coverage in ({}, {}]: {} of ~{:.0} samples; dropping IMU factors",
                        window.t1, window.t2, window.n_samples, expected
                    );
                    continue;
                }
            }
            if config.use_accel_factor {
                factors.push(Factor::Accel {
                    i,
                    window,
                    dt,
                    sigma: noise.accel_sigma(&window),
                });
            }
            if config.use_gyro_factor
                && gyro_gate(&gate_ref.states[i].v, &gate_ref.states[i + 1].v, config.gyro_min_speed)
            {
                factors.push(Factor::Gyro {
                    i,
                    window,
                    sigma: noise.gyro_sigma(&window),
                });
            }
        }
        for (i, fix) in epochs.iter().enumerate() {
            if fix.pos_valid {
                factors.push(Factor::GnssPos { i, fix: *fix });
            }
            if fix.vel_valid {
                factors.push(Factor::GnssVel { i, fix: *fix });
            }
        }
        factors.push(Factor::AccelBiasPrior {
            sigma: config.accel_bias_prior_sigma,
        });
        factors.push(Factor::GyroBiasPrior {
            sigma: config.gyro_bias_prior_sigma,
        });

        let mut stats = FactorStats::default();
        for f in &factors {
            stats.count(f);
        }
        let times: Vec<f64> = epochs.iter().map(|f| f.t).collect();
        Ok(Self {
            factors,
            layout: StateLayout::for_times(&times)?,
            epochs,
            stats,
            config,
        })
    }

    pub fn times(&self) -> Vec<f64> {
        self.epochs.iter().map(|f| f.t).collect()
    }

    /// Starting point for the optimizer: the GNSS fixes, gap-filled.
    pub fn initial_estimate(&self) -> Result<TrajectoryEstimate> {
        initialize(&self.epochs)
    }

    pub fn check_layout(&self, states: &TrajectoryEstimate) -> Result<()> {
        if states.len() != self.layout.epochs() {
            return Err(Error::InvalidInput(format!(
                "estimate has {} epochs, graph has {}",
                states.len(),
                self.layout.epochs()
            )));
        }
        Ok(())
    }

    pub fn evaluate_factor(&self, factor: &Factor, states: &TrajectoryEstimate) -> FactorEval {
        let s = &states.states;
        let cfg = &self.config;
        match *factor {
            Factor::Accel { i, ref window, dt, sigma } => {
                accel_factor(i, &s[i], &s[i + 1], window, dt, &cfg.gravity, sigma)
            }
            Factor::Gyro { i, ref window, sigma } => gyro_factor(i, &s[i], &s[i + 1], window, cfg.angle, sigma),
            Factor::GnssPos { i, ref fix } => gnss_pos_factor(i, &s[i], fix, cfg.kernel),
            Factor::GnssVel { i, ref fix } => gnss_vel_factor(i, &s[i], fix, cfg.kernel),
            Factor::Motion { i, dt } => motion_factor(i, &s[i], &s[i + 1], dt, cfg.motion_sigma),
            Factor::AccelBias { i, sigma } => bias_factor(i, &s[i], &s[i + 1], BiasKind::Accel, sigma),
            Factor::GyroBias { i, sigma } => bias_factor(i, &s[i], &s[i + 1], BiasKind::Gyro, sigma),
            Factor::AccelBiasPrior { sigma } => bias_prior(0, &s[0], BiasKind::Accel, sigma),
            Factor::GyroBiasPrior { sigma } => bias_prior(0, &s[0], BiasKind::Gyro, sigma),
        }
    }

    /// Evaluates every factor, failing on the first non-finite residual or Jacobian.
    pub fn evaluate(&self, states: &TrajectoryEstimate) -> Result<Vec<FactorEval>> {
        self.check_layout(states)?;
        self.factors
            .iter()
            .enumerate()
            .map(|(id, f)| {
                let ev = self.evaluate_factor(f, states);
                if ev.is_finite() {
                    Ok(ev)
                } else {
                    Err(Error::NonFiniteResidual { id, kind: f.kind() })
                }
            })
            .collect()
    }

    /// Total robustified cost: Σ eᵀΩe, with 2ρ(‖e‖_Ω) for kernel-wrapped factors.
    pub fn objective(&self, states: &TrajectoryEstimate) -> Result<f64> {
        self.check_layout(states)?;
        let mut total = 0.0;
        for (id, f) in self.factors.iter().enumerate() {
            let c = self.evaluate_factor(f, states).cost();
            if !c.is_finite() {
                return Err(Error::NonFiniteResidual { id, kind: f.kind() });
            }
            total += c;
        }
        Ok(total)
    }
}
