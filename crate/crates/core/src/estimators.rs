//! Risk estimators over an acquisition trajectory.
//!
//! All weights are computed from the masses recorded in the trajectory, so
//! the estimators never need to know which proposal produced it. Steps are
//! 0-based in storage; the formulas below use the 1-based step number `m`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::{LabeledPool, Trajectory};

/// Relative tolerance for identities that hold exactly in real arithmetic.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Unweighted mean of the acquired losses.
    Naive,
    /// Plain unbiased risk estimator.
    Pure,
    /// Levelled unbiased risk estimator.
    Lure,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::Naive, EstimatorKind::Pure, EstimatorKind::Lure];

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Naive => "naive",
            EstimatorKind::Pure => "pure",
            EstimatorKind::Lure => "lure",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(EstimatorKind::Naive),
            "pure" => Ok(EstimatorKind::Pure),
            "lure" => Ok(EstimatorKind::Lure),
            other => Err(Error::Argument(format!("unknown estimator '{other}'"))),
        }
    }
}

/// An estimate together with the coefficient applied to each acquired loss:
/// `value = (1/M) * sum_m weights[m] * loss[m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedRisk {
    pub kind: EstimatorKind,
    pub value: f64,
    pub per_point_weights: Vec<f64>,
}

impl WeightedRisk {
    fn from_weights(kind: EstimatorKind, weights: Vec<f64>, losses: &[f64]) -> Self {
        let value = weighted_mean(&weights, losses);
        Self {
            kind,
            value,
            per_point_weights: weights,
        }
    }
}

fn weighted_mean(weights: &[f64], losses: &[f64]) -> f64 {
    weights.iter().zip(losses).map(|(w, l)| w * l).sum::<f64>() / losses.len() as f64
}

fn check_shape(masses: &[f64], m: usize, n: usize) -> Result<()> {
    if m == 0 || m > n {
        return Err(Error::Argument(format!("need 1 <= M <= N, got M={m}, N={n}")));
    }
    if masses.len() != m {
        return Err(Error::Argument(format!(
            "{} masses for M={m}",
            masses.len()
        )));
    }
    if let Some((i, q)) = masses.iter().enumerate().find(|(_, q)| !(**q > 0.0) || !q.is_finite()) {
        return Err(Error::Proposal(format!(
            "step {} has non-positive mass {q}",
            i + 1
        )));
    }
    Ok(())
}

/// `1/(N q_m) + (M - m)/N` for each step.
pub fn pure_weights(masses: &[f64], m: usize, n: usize) -> Result<Vec<f64>> {
    check_shape(masses, m, n)?;
    let nf = n as f64;
    Ok(masses
        .iter()
        .enumerate()
        .map(|(i, &q)| 1.0 / (nf * q) + (m - (i + 1)) as f64 / nf)
        .collect())
}

/// `1 + (N - M)/(N - m) * (1/((N - m + 1) q_m) - 1)` for each step; all ones
/// when `M = N`.
pub fn lure_weights(masses: &[f64], m: usize, n: usize) -> Result<Vec<f64>> {
    check_shape(masses, m, n)?;
    if m == n {
        return Ok(vec![1.0; m]);
    }
    let (mf, nf) = (m as f64, n as f64);
    Ok(masses
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let step = (i + 1) as f64;
            1.0 + (nf - mf) / (nf - step) * (1.0 / ((nf - step + 1.0) * q) - 1.0)
        })
        .collect())
}

/// The constants `c_m = N(N - M)/((N - m)(N - m + 1))` that level the PURE
/// terms into LURE.
#[derive(Debug, Clone, PartialEq)]
pub struct LureConstants {
    pub c: Vec<f64>,
    pub m: usize,
    pub n: usize,
}

pub fn lure_constants(m: usize, n: usize) -> Result<LureConstants> {
    if m == 0 || m > n {
        return Err(Error::Argument(format!("need 1 <= M <= N, got M={m}, N={n}")));
    }
    let (mf, nf) = (m as f64, n as f64);
    let c = (1..=m)
        .map(|step| {
            if m == n {
                0.0
            } else {
                let s = step as f64;
                nf * (nf - mf) / ((nf - s) * (nf - s + 1.0))
            }
        })
        .collect();
    Ok(LureConstants { c, m, n })
}

fn checked_parts(traj: &Trajectory) -> Result<(Vec<f64>, Vec<f64>)> {
    if traj.is_empty() {
        return Err(Error::Argument("empty trajectory".into()));
    }
    let n = traj.pool_size();
    let mut seen = vec![false; n];
    for (i, step) in traj.steps().iter().enumerate() {
        if step.index >= n {
            return Err(Error::Argument(format!(
                "step {} index {} outside a pool of {n}",
                i + 1,
                step.index
            )));
        }
        if std::mem::replace(&mut seen[step.index], true) {
            return Err(Error::Argument(format!("step {} repeats index {}", i + 1, step.index)));
        }
        if !step.loss.is_finite() {
            return Err(Error::Argument(format!("step {} has non-finite loss", i + 1)));
        }
    }
    Ok((traj.masses(), traj.losses()))
}

pub fn naive_estimate(traj: &Trajectory) -> Result<WeightedRisk> {
    let (_, losses) = checked_parts(traj)?;
    Ok(WeightedRisk::from_weights(
        EstimatorKind::Naive,
        vec![1.0; losses.len()],
        &losses,
    ))
}

/// The per-step terms `a_m = w_m L_m + (1/N) sum_{t<m} L_t`, each an unbiased
/// estimate of the pool risk on its own.
pub fn pure_terms(traj: &Trajectory) -> Result<Vec<f64>> {
    let (masses, losses) = checked_parts(traj)?;
    let n = traj.pool_size();
    check_shape(&masses, masses.len(), n)?;
    let nf = n as f64;
    let mut acquired = 0.0;
    Ok(masses
        .iter()
        .zip(&losses)
        .map(|(&q, &l)| {
            let a = l / (nf * q) + acquired / nf;
            acquired += l;
            a
        })
        .collect())
}

pub fn pure_estimate(traj: &Trajectory) -> Result<WeightedRisk> {
    let (masses, losses) = checked_parts(traj)?;
    let m = masses.len();
    let weights = pure_weights(&masses, m, traj.pool_size())?;
    let risk = WeightedRisk::from_weights(EstimatorKind::Pure, weights, &losses);

    let terms = pure_terms(traj)?;
    let term_form = terms.iter().sum::<f64>() / m as f64;
    let scale = risk
        .per_point_weights
        .iter()
        .zip(&losses)
        .map(|(w, l)| (w * l).abs())
        .sum::<f64>()
        / m as f64;
    if (term_form - risk.value).abs() > IDENTITY_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Consistency(format!(
            "PURE forms disagree: weighted {} vs term sum {term_form}",
            risk.value
        )));
    }
    Ok(risk)
}

pub fn lure_estimate(traj: &Trajectory) -> Result<WeightedRisk> {
    let (masses, losses) = checked_parts(traj)?;
    let weights = lure_weights(&masses, masses.len(), traj.pool_size())?;
    Ok(WeightedRisk::from_weights(EstimatorKind::Lure, weights, &losses))
}

pub fn estimate(kind: EstimatorKind, traj: &Trajectory) -> Result<WeightedRisk> {
    match kind {
        EstimatorKind::Naive => naive_estimate(traj),
        EstimatorKind::Pure => pure_estimate(traj),
        EstimatorKind::Lure => lure_estimate(traj),
    }
}

/// Expected shift of PURE and LURE, conditional on the pool, when the
/// proposal never proposes the indices in `ignored`: `-(1/N) sum_{n in I} L_n`.
pub fn partial_support_bias(pool: &LabeledPool, ignored: &[usize]) -> Result<f64> {
    let losses = pool.require_losses()?;
    let mut ignored = ignored.to_vec();
    ignored.sort_unstable();
    ignored.dedup();
    let mut total = 0.0;
    for i in ignored {
        total += losses
            .get(i)
            .ok_or_else(|| Error::Argument(format!("ignored index {i} outside pool")))?;
    }
    Ok(-total / pool.len() as f64)
}
