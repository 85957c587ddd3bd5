//! Exact moments of the estimators on tiny pools.
//!
//! Every ordered sequence of `M` distinct indices is enumerated together with
//! its probability (the product of the step masses the proposal assigns along
//! the way). Expectations are then plain weighted sums, conditional on the
//! pool. Sequences rather than sets are enumerated because the masses depend
//! on the acquisition order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{self, lure_constants, EstimatorKind, WeightedRisk, IDENTITY_TOLERANCE};
use crate::pool::{check_masses, pool_empirical_risk, LabeledPool, Trajectory, TrajectoryStep};
use crate::proposals::Proposal;

/// Default cap on enumerated sequences: N = 10, M = 6 gives 10!/4! = 151,200.
pub const DEFAULT_MAX_SEQUENCES: u64 = 151_200;

/// Slack on the total enumerated probability.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub max_sequences: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            max_sequences: DEFAULT_MAX_SEQUENCES,
        }
    }
}

impl OracleOptions {
    /// Raises the enumeration cap. The cap can only be raised this way.
    pub fn allow_up_to(max_sequences: u64) -> Self {
        Self {
            max_sequences: max_sequences.max(DEFAULT_MAX_SEQUENCES),
        }
    }
}

/// `N!/(N-M)!`, saturating.
pub fn sequence_count(n: usize, m: usize) -> u64 {
    ((n - m + 1)..=n).fold(1u64, |acc, k| acc.saturating_mul(k as u64))
}

#[derive(Debug, Clone)]
struct Leaf {
    probability: f64,
    steps: Vec<TrajectoryStep>,
}

#[derive(Debug, Clone, Default)]
struct Subtree {
    leaves: Vec<Leaf>,
    /// Probability-weighted conditional variance of `w_m L_m` at each depth.
    conditional_variance: Vec<f64>,
}

/// All acquisition sequences of length `M` with their probabilities.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pool_size: usize,
    m: usize,
    leaves: Vec<Leaf>,
    conditional_variance: Vec<f64>,
    probability_total: f64,
}

impl Enumeration {
    pub fn new<P>(pool: &LabeledPool, proposal: &P, m: usize, options: OracleOptions) -> Result<Self>
    where
        P: Proposal + ?Sized,
    {
        let n = pool.len();
        if m == 0 || m > n {
            return Err(Error::Argument(format!("need 1 <= M <= N, got M={m}, N={n}")));
        }
        let count = sequence_count(n, m);
        if count > options.max_sequences {
            return Err(Error::Resource(format!(
                "N={n}, M={m} has {count} sequences, above the cap of {}",
                options.max_sequences
            )));
        }
        let losses = pool.require_losses()?;

        let root = proposal.masses(pool, &[])?;
        check_masses(&root, &[], n)?;
        let mut conditional_variance = vec![0.0; m];
        conditional_variance[0] = weighted_loss_variance(&root, losses);

        let subtrees: Vec<Subtree> = (0..n)
            .into_par_iter()
            .filter(|&i| root[i] > 0.0)
            .map(|i| {
                let mut sub = Subtree {
                    leaves: Vec::new(),
                    conditional_variance: vec![0.0; m],
                };
                let first = TrajectoryStep {
                    index: i,
                    mass: root[i],
                    loss: losses[i],
                };
                let mut path = vec![first];
                let mut history = vec![i];
                descend(pool, proposal, losses, m, root[i], &mut path, &mut history, &mut sub)?;
                Ok(sub)
            })
            .collect::<Result<_>>()?;

        let mut leaves = Vec::with_capacity(count as usize);
        for sub in subtrees {
            for (acc, v) in conditional_variance.iter_mut().zip(&sub.conditional_variance) {
                *acc += v;
            }
            leaves.extend(sub.leaves);
        }
        let probability_total = compensated_sum(leaves.iter().map(|l| l.probability));
        if (probability_total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::Proposal(format!(
                "enumerated sequence probabilities sum to {probability_total}"
            )));
        }
        Ok(Self {
            pool_size: n,
            m,
            leaves,
            conditional_variance,
            probability_total,
        })
    }

    pub fn sequence_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn probability_total(&self) -> f64 {
        self.probability_total
    }

    /// `E[Var(w_m L_m | history)]` for `m = 1..=M`.
    pub fn conditional_variances(&self) -> &[f64] {
        &self.conditional_variance
    }

    fn trajectories(&self) -> impl Iterator<Item = (f64, Trajectory)> + '_ {
        self.leaves
            .iter()
            .map(|l| (l.probability, Trajectory::new(l.steps.clone(), self.pool_size)))
    }

    /// Exact moments of an arbitrary weighted estimator.
    pub fn moments_with<F>(&self, estimator: F) -> Result<ExactMoments>
    where
        F: Fn(&Trajectory) -> Result<WeightedRisk>,
    {
        let mut values = Vec::with_capacity(self.leaves.len());
        let mut weight_means = vec![Neumaier::default(); self.m];
        let mut loss_means = vec![Neumaier::default(); self.m];
        for (p, traj) in self.trajectories() {
            let risk = estimator(&traj)?;
            for (acc, w) in weight_means.iter_mut().zip(&risk.per_point_weights) {
                acc.add(p * w);
            }
            for (acc, step) in loss_means.iter_mut().zip(traj.steps()) {
                acc.add(p * step.loss);
            }
            values.push((p, risk.value));
        }
        let mean = compensated_sum(values.iter().map(|(p, v)| p * v));
        let variance = compensated_sum(values.iter().map(|(p, v)| p * (v - mean) * (v - mean)));
        Ok(ExactMoments {
            mean,
            variance,
            per_step_weight_means: weight_means.iter().map(Neumaier::value).collect(),
            per_step_loss_means: loss_means.iter().map(Neumaier::value).collect(),
            trajectory_count: self.leaves.len() as u64,
        })
    }

    pub fn moments(&self, kind: EstimatorKind) -> Result<ExactMoments> {
        self.moments_with(|t| estimators::estimate(kind, t))
    }
}

// Hundreds of thousands of tiny leaf probabilities; plain summation drifts
// past the probability tolerance.
#[derive(Debug, Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    carry: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = Neumaier::default();
    values.for_each(|v| acc.add(v));
    acc.value()
}

/// `Var(w L)` under `masses`, with `w = 1/(N q)`, over the indices with
/// positive mass.
fn weighted_loss_variance(masses: &[f64], losses: &[f64]) -> f64 {
    let n = losses.len() as f64;
    let mut second = 0.0;
    let mut first = 0.0;
    for (&q, &l) in masses.iter().zip(losses) {
        if q > 0.0 {
            second += l * l / (n * n * q);
            first += l / n;
        }
    }
    // the two-moment form can dip a hair below zero when every term is equal
    (second - first * first).max(0.0)
}

#[allow(clippy::too_many_arguments)]
fn descend<P>(
    pool: &LabeledPool,
    proposal: &P,
    losses: &[f64],
    m: usize,
    probability: f64,
    path: &mut Vec<TrajectoryStep>,
    history: &mut Vec<usize>,
    out: &mut Subtree,
) -> Result<()>
where
    P: Proposal + ?Sized,
{
    if path.len() == m {
        out.leaves.push(Leaf {
            probability,
            steps: path.clone(),
        });
        return Ok(());
    }
    let masses = proposal.masses(pool, history)?;
    check_masses(&masses, history, pool.len())?;
    out.conditional_variance[path.len()] += probability * weighted_loss_variance(&masses, losses);
    for (j, &q) in masses.iter().enumerate() {
        if q > 0.0 {
            path.push(TrajectoryStep {
                index: j,
                mass: q,
                loss: losses[j],
            });
            history.push(j);
            descend(pool, proposal, losses, m, probability * q, path, history, out)?;
            history.pop();
            path.pop();
        }
    }
    Ok(())
}

/// Exact conditional-on-pool moments of one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactMoments {
    pub mean: f64,
    pub variance: f64,
    /// `E[weight_m]` for each step: `E[v_m]` for LURE, the PURE weight for
    /// PURE, and one for the naive estimator.
    pub per_step_weight_means: Vec<f64>,
    /// `E[L_{i_m}]` for each step.
    pub per_step_loss_means: Vec<f64>,
    pub trajectory_count: u64,
}

pub fn enumerate_moments<P>(pool: &LabeledPool, proposal: &P, m: usize, kind: EstimatorKind) -> Result<ExactMoments>
where
    P: Proposal + ?Sized,
{
    Enumeration::new(pool, proposal, m, OracleOptions::default())?.moments(kind)
}

/// `E[v_m]` for `m = 1..=M`.
pub fn enumerate_weight_expectations<P>(pool: &LabeledPool, proposal: &P, m: usize) -> Result<Vec<f64>>
where
    P: Proposal + ?Sized,
{
    Ok(enumerate_moments(pool, proposal, m, EstimatorKind::Lure)?.per_step_weight_means)
}

/// Direct and decomposed variances of PURE and LURE for one pool.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDecomposition {
    pub pure_direct: f64,
    pub pure_decomposed: f64,
    pub lure_direct: f64,
    pub lure_decomposed: f64,
    /// `E[Var(w_m L_m | history)]` per step.
    pub conditional_variances: Vec<f64>,
    /// The same, divided by `((N - m + 1)/N)^2`.
    pub normalized_variances: Vec<f64>,
    pub lure_not_worse: bool,
    pub lure_strictly_better: bool,
}

/// True when `a` and `b` agree to `tol` relative to `max(|a|, |b|, 1)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

impl Enumeration {
    pub fn variance_decomposition(&self) -> Result<VarianceDecomposition> {
        let (m, n) = (self.m, self.pool_size);
        let mf2 = (m * m) as f64;
        let pure_decomposed = self.conditional_variance.iter().sum::<f64>() / mf2;
        let c = lure_constants(m, n)?.c;
        let lure_decomposed = c
            .iter()
            .zip(&self.conditional_variance)
            .map(|(c, e)| c * c * e)
            .sum::<f64>()
            / mf2;
        let pure_direct = self.moments(EstimatorKind::Pure)?.variance;
        let lure_direct = self.moments(EstimatorKind::Lure)?.variance;
        for (name, direct, decomposed) in [
            ("PURE", pure_direct, pure_decomposed),
            ("LURE", lure_direct, lure_decomposed),
        ] {
            if !close(direct, decomposed, IDENTITY_TOLERANCE) {
                return Err(Error::Consistency(format!(
                    "{name} variance: direct {direct} vs decomposed {decomposed}"
                )));
            }
        }
        let normalized_variances = self
            .conditional_variance
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let ratio = n as f64 / (n - i) as f64;
                e * ratio * ratio
            })
            .collect();
        let slack = IDENTITY_TOLERANCE * pure_direct.max(1.0);
        Ok(VarianceDecomposition {
            pure_direct,
            pure_decomposed,
            lure_direct,
            lure_decomposed,
            conditional_variances: self.conditional_variance.clone(),
            normalized_variances,
            lure_not_worse: lure_direct <= pure_direct + slack,
            lure_strictly_better: lure_direct < pure_direct - slack,
        })
    }
}

pub fn enumerate_variance_decomposition<P>(pool: &LabeledPool, proposal: &P, m: usize) -> Result<VarianceDecomposition>
where
    P: Proposal + ?Sized,
{
    Enumeration::new(pool, proposal, m, OracleOptions::default())?.variance_decomposition()
}

/// Exact bias of PURE and LURE relative to the pool risk.
pub fn enumerate_bias<P>(pool: &LabeledPool, proposal: &P, m: usize) -> Result<(f64, f64)>
where
    P: Proposal + ?Sized,
{
    let e = Enumeration::new(pool, proposal, m, OracleOptions::default())?;
    let r = pool_empirical_risk(pool)?;
    Ok((
        e.moments(EstimatorKind::Pure)?.mean - r,
        e.moments(EstimatorKind::Lure)?.mean - r,
    ))
}
