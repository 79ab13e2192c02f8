//! The reduced per-epoch state: position, velocity and two scalar IMU biases.

use nalgebra::{DVector, Vector3};

use crate::error::{Error, Result};
use crate::geodesy::{EnuVector, GnssFix};

/// Scalars per epoch: x(3), v(3), b_acc, b_gyro.
pub const STATE_DIM: usize = 8;

pub const POS: usize = 0;
pub const VEL: usize = 3;
pub const BIAS_ACC: usize = 6;
pub const BIAS_GYRO: usize = 7;

/// Field of an epoch block in the flat state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateField {
    Pos(usize),
    Vel(usize),
    BiasAcc,
    BiasGyro,
}

impl StateField {
    fn local_offset(self) -> usize {
        match self {
            StateField::Pos(axis) => POS + axis,
            StateField::Vel(axis) => VEL + axis,
            StateField::BiasAcc => BIAS_ACC,
            StateField::BiasGyro => BIAS_GYRO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochState {
    pub x: EnuVector,
    pub v: EnuVector,
    pub b_acc: f64,
    /// Angular-change bias per inter-epoch interval, rad.
    pub b_gyro: f64,
}

impl EpochState {
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_finite() && self.b_acc.is_finite() && self.b_gyro.is_finite()
    }

    pub fn pos(&self) -> Vector3<f64> {
        self.x.to_vector()
    }

    pub fn vel(&self) -> Vector3<f64> {
        self.v.to_vector()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryEstimate {
    pub times: Vec<f64>,
    pub states: Vec<EpochState>,
}

impl TrajectoryEstimate {
    pub fn new(times: Vec<f64>, states: Vec<EpochState>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::InvalidInput(format!(
                "{} timestamps for {} states",
                times.len(),
                states.len()
            )));
        }
        check_increasing(&times)?;
        Ok(Self { times, states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Δt_gnss of interval `i` (between epochs i and i+1).
    pub fn dt(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let mut out = DVector::zeros(STATE_DIM * self.len());
        for (i, s) in self.states.iter().enumerate() {
            let o = i * STATE_DIM;
            out[o + POS] = s.x.e;
            out[o + POS + 1] = s.x.n;
            out[o + POS + 2] = s.x.u;
            out[o + VEL] = s.v.e;
            out[o + VEL + 1] = s.v.n;
            out[o + VEL + 2] = s.v.u;
            out[o + BIAS_ACC] = s.b_acc;
            out[o + BIAS_GYRO] = s.b_gyro;
        }
        out
    }

    /// Inverse of [`to_flat`](Self::to_flat), reusing this estimate's timestamps.
    pub fn with_flat(&self, flat: &DVector<f64>) -> Result<Self> {
        if flat.len() != STATE_DIM * self.len() {
            return Err(Error::InvalidInput(format!(
                "flat vector has {} entries, layout expects {}",
                flat.len(),
                STATE_DIM * self.len()
            )));
        }
        let states = flat
            .as_slice()
            .chunks_exact(STATE_DIM)
            .map(|b| EpochState {
                x: EnuVector::new(b[POS], b[POS + 1], b[POS + 2]),
                v: EnuVector::new(b[VEL], b[VEL + 1], b[VEL + 2]),
                b_acc: b[BIAS_ACC],
                b_gyro: b[BIAS_GYRO],
            })
            .collect();
        Ok(Self {
            times: self.times.clone(),
            states,
        })
    }
}

fn check_increasing(times: &[f64]) -> Result<()> {
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite epoch time {t}")));
    }
    for w in times.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidInput(format!(
                "epoch times not strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Mapping from (epoch, field) to flat-vector offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    epochs: usize,
}

impl StateLayout {
    pub fn new(epochs: usize) -> Self {
        Self { epochs }
    }

    pub fn for_times(times: &[f64]) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidInput("layout needs at least one epoch".into()));
        }
        check_increasing(times)?;
        Ok(Self::new(times.len()))
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn dim(&self) -> usize {
        STATE_DIM * self.epochs
    }

    pub fn block(&self, epoch: usize) -> usize {
        debug_assert!(epoch < self.epochs);
        epoch * STATE_DIM
    }

    pub fn offset(&self, epoch: usize, field: StateField) -> usize {
        self.block(epoch) + field.local_offset()
    }
}

pub fn layout(estimate: &TrajectoryEstimate) -> Result<StateLayout> {
    StateLayout::for_times(&estimate.times)
}

/// Builds a starting trajectory from GNSS fixes: measured values where valid,
/// linear interpolation across gaps, constant extrapolation at the ends, zero biases.
pub fn initialize(fixes: &[GnssFix]) -> Result<TrajectoryEstimate> {
    if fixes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 fixes, got {}",
            fixes.len()
        )));
    }
    let times: Vec<f64> = fixes.iter().map(|f| f.t).collect();
    check_increasing(&times)?;

    let pos = fill_gaps(&times, fixes, |f| f.pos_valid.then_some(f.pos.to_vector()));
    let vel = fill_gaps(&times, fixes, |f| f.vel_valid.then_some(f.vel.to_vector()));
    let pos = pos.ok_or_else(|| Error::Config("no valid GNSS position fix".into()))?;
    // Velocity may be absent entirely; fall back to differenced positions.
    let vel = vel.unwrap_or_else(|| differenced(&times, &pos));

    let states = pos
        .iter()
        .zip(&vel)
        .map(|(p, v)| EpochState {
            x: (*p).into(),
            v: (*v).into(),
            b_acc: 0.0,
            b_gyro: 0.0,
        })
        .collect();
    Ok(TrajectoryEstimate { times, states })
}

fn fill_gaps(
    times: &[f64],
    fixes: &[GnssFix],
    get: impl Fn(&GnssFix) -> Option<Vector3<f64>>,
) -> Option<Vec<Vector3<f64>>> {
    let known: Vec<(usize, Vector3<f64>)> = fixes
        .iter()
        .enumerate()
        .filter_map(|(i, f)| get(f).map(|v| (i, v)))
        .collect();
    let (first, last) = (known.first()?, known.last()?);
    let mut out = vec![Vector3::zeros(); fixes.len()];
    for slot in out.iter_mut().take(first.0 + 1) {
        *slot = first.1;
    }
    for slot in out.iter_mut().skip(last.0) {
        *slot = last.1;
    }
    for pair in known.windows(2) {
        let ((ia, va), (ib, vb)) = (pair[0], pair[1]);
        for (k, slot) in out.iter_mut().enumerate().take(ib + 1).skip(ia) {
            let s = (times[k] - times[ia]) / (times[ib] - times[ia]);
            *slot = va + (vb - va) * s;
        }
    }
    Some(out)
}

fn differenced(times: &[f64], pos: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let n = pos.len();
    (0..n)
        .map(|k| {
            let (a, b) = if k + 1 < n { (k, k + 1) } else { (k - 1, k) };
            (pos[b] - pos[a]) / (times[b] - times[a])
        })
        .collect()
}
