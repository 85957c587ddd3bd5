//! Pool datasets, acquisition trajectories, and sampling without replacement.

use std::collections::HashSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proposals::Proposal;
use crate::rng::{substream, unit_f64};

/// Slack allowed on the total mass a proposal emits before it is rejected.
pub const MASS_SUM_TOLERANCE: f64 = 1e-9;

/// The `N`-point pool: inputs, oracle-held labels, and optionally the cached
/// per-point losses of one fixed function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPool {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    losses: Option<Vec<f64>>,
}

impl LabeledPool {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Argument("pool must contain at least one point".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::Argument(format!(
                "{} feature vectors but {} labels",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            losses: None,
        })
    }

    /// Pool that only carries losses. Each point gets its index as a scalar
    /// feature and a zero label.
    pub fn from_losses(losses: Vec<f64>) -> Result<Self> {
        let n = losses.len();
        let features = (0..n).map(|i| vec![i as f64]).collect();
        Self::new(features, vec![0.0; n])?.with_losses(losses)
    }

    pub fn with_losses(mut self, losses: Vec<f64>) -> Result<Self> {
        if losses.len() != self.len() {
            return Err(Error::Argument(format!(
                "{} losses for a pool of {} points",
                losses.len(),
                self.len()
            )));
        }
        if let Some(i) = losses.iter().position(|l| !l.is_finite()) {
            return Err(Error::Argument(format!("loss at index {i} is not finite")));
        }
        self.losses = Some(losses);
        Ok(self)
    }

    /// Copy of the pool with losses recomputed by `loss(features, label)`.
    pub fn relabeled<F>(&self, loss: F) -> Result<Self>
    where
        F: Fn(&[f64], f64) -> f64,
    {
        let losses = self
            .features
            .iter()
            .zip(&self.labels)
            .map(|(x, &y)| loss(x, y))
            .collect();
        self.clone().with_losses(losses)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn losses(&self) -> Option<&[f64]> {
        self.losses.as_deref()
    }

    pub fn require_losses(&self) -> Result<&[f64]> {
        self.losses
            .as_deref()
            .ok_or_else(|| Error::Config("pool has no cached losses".into()))
    }
}

/// Mean loss over the whole pool.
pub fn pool_empirical_risk(pool: &LabeledPool) -> Result<f64> {
    let losses = pool.require_losses()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// One acquisition: the drawn index, the mass the proposal gave it at draw
/// time, and its loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub index: usize,
    pub mass: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    steps: Vec<TrajectoryStep>,
    pool_size: usize,
}

impl Trajectory {
    /// Builds a trajectory without checking it; see [`validate_trajectory`].
    pub fn new(steps: Vec<TrajectoryStep>, pool_size: usize) -> Self {
        Self { steps, pool_size }
    }

    pub fn steps(&self) -> &[TrajectoryStep] {
        &self.steps
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.index).collect()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.mass).collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    /// The first `m` acquisitions. A prefix of a sampled trajectory is itself
    /// distributed as a trajectory of length `m` from the same proposal.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.steps.len() {
            return Err(Error::Argument(format!(
                "prefix length {m} outside 1..={}",
                self.steps.len()
            )));
        }
        Ok(Self {
            steps: self.steps[..m].to_vec(),
            pool_size: self.pool_size,
        })
    }

    /// Same acquisitions and masses, with losses taken from `pool`.
    pub fn relabel(&self, pool: &LabeledPool) -> Result<Self> {
        let losses = pool.require_losses()?;
        if pool.len() != self.pool_size {
            return Err(Error::Argument(format!(
                "trajectory over {} points relabelled with a pool of {}",
                self.pool_size,
                pool.len()
            )));
        }
        let steps = self
            .steps
            .iter()
            .map(|s| {
                losses
                    .get(s.index)
                    .map(|&loss| TrajectoryStep { loss, ..*s })
                    .ok_or_else(|| Error::Argument(format!("index {} out of range", s.index)))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            steps,
            pool_size: self.pool_size,
        })
    }
}

/// Checks a proposal's output for `history` and returns it.
pub(crate) fn check_masses(masses: &[f64], history: &[usize], n: usize) -> Result<()> {
    if masses.len() != n {
        return Err(Error::Proposal(format!(
            "mass vector has length {}, pool has {n} points",
            masses.len()
        )));
    }
    if let Some(i) = masses.iter().position(|q| !q.is_finite() || *q < 0.0) {
        return Err(Error::Proposal(format!(
            "mass {} at index {i} is negative or not finite",
            masses[i]
        )));
    }
    if let Some(&i) = history.iter().find(|&&i| masses[i] != 0.0) {
        return Err(Error::Proposal(format!(
            "already-sampled index {i} has mass {}",
            masses[i]
        )));
    }
    let total: f64 = masses.iter().sum();
    if (total - 1.0).abs() > MASS_SUM_TOLERANCE {
        return Err(Error::Proposal(format!("masses sum to {total}, not 1")));
    }
    Ok(())
}

/// Inverse-CDF draw over indices in ascending order.
pub(crate) fn draw_index<R: Rng + ?Sized>(masses: &[f64], rng: &mut R) -> usize {
    let u = unit_f64(rng);
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &q) in masses.iter().enumerate() {
        if q > 0.0 {
            cumulative += q;
            last_positive = i;
            if u < cumulative {
                return i;
            }
        }
    }
    last_positive
}

/// Samples `m` distinct indices sequentially from `proposal`, drawing
/// randomness from `rng`.
pub fn sample_trajectory_with_rng<P, R>(
    pool: &LabeledPool,
    proposal: &P,
    m: usize,
    rng: &mut R,
) -> Result<Trajectory>
where
    P: Proposal + ?Sized,
    R: Rng + ?Sized,
{
    let n = pool.len();
    if m == 0 || m > n {
        return Err(Error::Argument(format!(
            "trajectory length {m} outside 1..={n}"
        )));
    }
    let losses = pool.require_losses()?;
    let mut history = Vec::with_capacity(m);
    let mut steps = Vec::with_capacity(m);
    for _ in 0..m {
        let masses = proposal.masses(pool, &history)?;
        check_masses(&masses, &history, n)?;
        let index = draw_index(&masses, rng);
        steps.push(TrajectoryStep {
            index,
            mass: masses[index],
            loss: losses[index],
        });
        history.push(index);
    }
    Ok(Trajectory { steps, pool_size: n })
}

/// Samples a trajectory of length `m` using stream 0 of `seed`.
pub fn sample_trajectory<P>(pool: &LabeledPool, proposal: &P, m: usize, seed: u64) -> Result<Trajectory>
where
    P: Proposal + ?Sized,
{
    sample_trajectory_with_rng(pool, proposal, m, &mut substream(seed, 0))
}

/// First structural problem found in a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    TooLong { len: usize, pool_size: usize },
    PoolSizeMismatch { trajectory: usize, pool: usize },
    IndexOutOfRange { step: usize, index: usize },
    DuplicateIndex { step: usize, index: usize },
    ZeroMass { step: usize },
    MassOutOfRange { step: usize, mass: f64 },
    MissingLosses,
    LossMismatch { step: usize, expected: f64, found: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "empty trajectory"),
            Violation::TooLong { len, pool_size } => {
                write!(f, "trajectory length {len} exceeds pool size {pool_size}")
            }
            Violation::PoolSizeMismatch { trajectory, pool } => {
                write!(f, "trajectory pool size {trajectory} but pool has {pool} points")
            }
            Violation::IndexOutOfRange { step, index } => {
                write!(f, "index out of range: {index} at step {step}")
            }
            Violation::DuplicateIndex { step, index } => {
                write!(f, "duplicate index {index} at step {step}")
            }
            Violation::ZeroMass { step } => write!(f, "zero mass at step {step}"),
            Violation::MassOutOfRange { step, mass } => {
                write!(f, "mass {mass} outside (0, 1] at step {step}")
            }
            Violation::MissingLosses => write!(f, "pool has no cached losses"),
            Violation::LossMismatch {
                step,
                expected,
                found,
            } => write!(f, "loss mismatch at step {step}: pool has {expected}, step has {found}"),
        }
    }
}

impl std::error::Error for Violation {}

pub fn validate_trajectory(traj: &Trajectory, pool: &LabeledPool) -> Result<(), Violation> {
    let n = pool.len();
    if traj.pool_size != n {
        return Err(Violation::PoolSizeMismatch {
            trajectory: traj.pool_size,
            pool: n,
        });
    }
    if traj.steps.is_empty() {
        return Err(Violation::Empty);
    }
    if traj.steps.len() > n {
        return Err(Violation::TooLong {
            len: traj.steps.len(),
            pool_size: n,
        });
    }
    let losses = pool.losses().ok_or(Violation::MissingLosses)?;
    let mut seen = HashSet::with_capacity(traj.steps.len());
    for (step, s) in traj.steps.iter().enumerate() {
        if s.index >= n {
            return Err(Violation::IndexOutOfRange {
                step,
                index: s.index,
            });
        }
        if !seen.insert(s.index) {
            return Err(Violation::DuplicateIndex {
                step,
                index: s.index,
            });
        }
        if s.mass == 0.0 {
            return Err(Violation::ZeroMass { step });
        }
        if !(s.mass > 0.0 && s.mass <= 1.0) {
            return Err(Violation::MassOutOfRange { step, mass: s.mass });
        }
        if s.loss != losses[s.index] {
            return Err(Violation::LossMismatch {
                step,
                expected: losses[s.index],
                found: s.loss,
            });
        }
    }
    Ok(())
}
