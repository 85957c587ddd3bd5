//! Acquisition proposals: mass functions over the unsampled indices of a pool.
//!
//! Every emitted mass vector has one entry per pool index, is exactly zero on
//! sampled (and explicitly ignored) indices, and sums to one.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::LabeledPool;

/// Anything that can propose the next index to acquire.
pub trait Proposal: Send + Sync {
    /// Mass on each of the pool's `N` indices given the indices acquired so
    /// far.
    fn masses(&self, pool: &LabeledPool, history: &[usize]) -> Result<Vec<f64>>;
}

/// Pure acquisition score of an unsampled candidate.
pub trait Scorer: Send + Sync {
    fn score(&self, candidate: usize, history: &[usize], pool: &LabeledPool) -> f64;
}

impl<F> Scorer for F
where
    F: Fn(usize, &[usize], &LabeledPool) -> f64 + Send + Sync,
{
    fn score(&self, candidate: usize, history: &[usize], pool: &LabeledPool) -> f64 {
        self(candidate, history, pool)
    }
}

/// Where a score-driven proposal gets its scores from.
#[derive(Clone)]
pub enum ScoreSource {
    /// One fixed score per pool index.
    Fixed(Vec<f64>),
    /// Sum of squared distances to the acquired points.
    SquaredDistance,
    /// Sum of Euclidean distances to the acquired points.
    Distance,
    Custom(Arc<dyn Scorer>),
}

impl fmt::Debug for ScoreSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreSource::Fixed(s) => f.debug_tuple("Fixed").field(s).finish(),
            ScoreSource::SquaredDistance => f.write_str("SquaredDistance"),
            ScoreSource::Distance => f.write_str("Distance"),
            ScoreSource::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl ScoreSource {
    fn score(&self, candidate: usize, history: &[usize], pool: &LabeledPool) -> Result<f64> {
        let s = match self {
            ScoreSource::Fixed(scores) => {
                if scores.len() != pool.len() {
                    return Err(Error::Argument(format!(
                        "{} fixed scores for a pool of {} points",
                        scores.len(),
                        pool.len()
                    )));
                }
                scores[candidate]
            }
            ScoreSource::SquaredDistance => geometric_scores(candidate, history, pool),
            ScoreSource::Distance => distance_scores(candidate, history, pool),
            ScoreSource::Custom(scorer) => scorer.score(candidate, history, pool),
        };
        if !s.is_finite() {
            return Err(Error::Argument(format!(
                "score for index {candidate} is not finite"
            )));
        }
        Ok(s)
    }

    /// Scores of every available index; unavailable entries are left at zero.
    fn scores_over(&self, available: &[bool], history: &[usize], pool: &LabeledPool) -> Result<Vec<f64>> {
        let mut out = vec![0.0; pool.len()];
        for (j, _) in available.iter().enumerate().filter(|(_, &a)| a) {
            out[j] = self.score(j, history, pool)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProposalKind {
    Uniform,
    Boltzmann { temperature: f64 },
    EpsilonGreedy { epsilon: f64 },
    OptimalLoss,
    GeometricBoltzmann { beta: f64 },
}

impl ProposalKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProposalKind::Uniform => "uniform",
            ProposalKind::Boltzmann { .. } => "boltzmann",
            ProposalKind::EpsilonGreedy { .. } => "epsilon_greedy",
            ProposalKind::OptimalLoss => "optimal_loss",
            ProposalKind::GeometricBoltzmann { .. } => "geometric_boltzmann",
        }
    }
}

/// A configured acquisition proposal.
///
/// `ignored` lists indices the proposal never proposes; a non-empty list makes
/// the proposal partial-support, and the unbiased estimators then miss the
/// ignored points' share of the pool risk.
#[derive(Debug, Clone)]
pub struct ProposalRule {
    kind: ProposalKind,
    scores: ScoreSource,
    ignored: Vec<usize>,
}

impl ProposalRule {
    pub fn uniform() -> Self {
        Self {
            kind: ProposalKind::Uniform,
            scores: ScoreSource::Fixed(Vec::new()),
            ignored: Vec::new(),
        }
    }

    pub fn boltzmann(temperature: f64, scores: ScoreSource) -> Result<Self> {
        if !temperature.is_finite() {
            return Err(Error::Argument("temperature must be finite".into()));
        }
        Ok(Self {
            kind: ProposalKind::Boltzmann { temperature },
            scores,
            ignored: Vec::new(),
        })
    }

    pub fn epsilon_greedy(epsilon: f64, scores: ScoreSource) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self {
            kind: ProposalKind::EpsilonGreedy { epsilon },
            scores,
            ignored: Vec::new(),
        })
    }

    pub fn optimal_loss() -> Self {
        Self {
            kind: ProposalKind::OptimalLoss,
            scores: ScoreSource::Fixed(Vec::new()),
            ignored: Vec::new(),
        }
    }

    /// Sum-of-squared-distance scores, divided by their maximum over the
    /// unsampled points, fed to a Boltzmann distribution with inverse
    /// temperature `beta`.
    pub fn geometric_boltzmann(beta: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::Argument("beta must be finite".into()));
        }
        Ok(Self {
            kind: ProposalKind::GeometricBoltzmann { beta },
            scores: ScoreSource::SquaredDistance,
            ignored: Vec::new(),
        })
    }

    /// Restricts the proposal to never propose any index in `ignored`.
    pub fn with_ignored(mut self, ignored: impl IntoIterator<Item = usize>) -> Self {
        let mut ignored: Vec<usize> = ignored.into_iter().collect();
        ignored.sort_unstable();
        ignored.dedup();
        self.ignored = ignored;
        self
    }

    pub fn kind(&self) -> ProposalKind {
        self.kind
    }

    pub fn ignored(&self) -> &[usize] {
        &self.ignored
    }

    pub fn is_full_support(&self) -> bool {
        self.ignored.is_empty() && self.kind != ProposalKind::OptimalLoss
    }

    fn available(&self, n: usize, history: &[usize]) -> Result<Vec<bool>> {
        let mut available = vec![true; n];
        for &i in history.iter().chain(&self.ignored) {
            if i >= n {
                return Err(Error::Argument(format!("index {i} outside pool of {n}")));
            }
            available[i] = false;
        }
        if !available.iter().any(|&a| a) {
            return Err(Error::Argument("no unsampled index left to propose".into()));
        }
        Ok(available)
    }
}

impl Proposal for ProposalRule {
    fn masses(&self, pool: &LabeledPool, history: &[usize]) -> Result<Vec<f64>> {
        let n = pool.len();
        let available = self.available(n, history)?;
        match self.kind {
            ProposalKind::Uniform => Ok(uniform_over(&available)),
            ProposalKind::Boltzmann { temperature } => {
                let s = self.scores.scores_over(&available, history, pool)?;
                boltzmann_over(&s, temperature, &available)
            }
            ProposalKind::EpsilonGreedy { epsilon } => {
                let s = self.scores.scores_over(&available, history, pool)?;
                let best = argmax_over(&s, &available);
                epsilon_greedy_over(best, epsilon, &available)
            }
            ProposalKind::OptimalLoss => optimal_over(pool.require_losses()?, &available),
            ProposalKind::GeometricBoltzmann { beta } => {
                let mut s = self.scores.scores_over(&available, history, pool)?;
                normalize_by_max(&mut s, &available);
                boltzmann_over(&s, beta, &available)
            }
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon <= 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "epsilon must lie in (0, 1], got {epsilon}"
        )))
    }
}

fn availability(history: &[usize], n: usize) -> Result<Vec<bool>> {
    let mut available = vec![true; n];
    for &i in history {
        if i >= n {
            return Err(Error::Argument(format!("index {i} outside pool of {n}")));
        }
        available[i] = false;
    }
    if !available.iter().any(|&a| a) {
        return Err(Error::Argument("history exhausts the pool".into()));
    }
    Ok(available)
}

fn uniform_over(available: &[bool]) -> Vec<f64> {
    let count = available.iter().filter(|&&a| a).count();
    let q = 1.0 / count as f64;
    available.iter().map(|&a| if a { q } else { 0.0 }).collect()
}

fn boltzmann_over(scores: &[f64], temperature: f64, available: &[bool]) -> Result<Vec<f64>> {
    let mut shift = f64::NEG_INFINITY;
    for (j, _) in available.iter().enumerate().filter(|(_, &a)| a) {
        if !scores[j].is_finite() {
            return Err(Error::Argument(format!("score for index {j} is not finite")));
        }
        shift = shift.max(temperature * scores[j]);
    }
    let mut out: Vec<f64> = scores
        .iter()
        .zip(available)
        .map(|(&s, &a)| if a { (temperature * s - shift).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|q| *q /= total);
    Ok(out)
}

fn argmax_over(scores: &[f64], available: &[bool]) -> usize {
    let mut best: Option<usize> = None;
    for (j, _) in available.iter().enumerate().filter(|(_, &a)| a) {
        match best {
            Some(b) if scores[j] <= scores[b] => {}
            _ => best = Some(j),
        }
    }
    best.expect("availability checked by caller")
}

fn epsilon_greedy_over(best: usize, epsilon: f64, available: &[bool]) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    if !available.get(best).copied().unwrap_or(false) {
        return Err(Error::Argument(format!(
            "best index {best} is not available"
        )));
    }
    let count = available.iter().filter(|&&a| a).count();
    let floor = epsilon / count as f64;
    let mut out: Vec<f64> = available.iter().map(|&a| if a { floor } else { 0.0 }).collect();
    out[best] += 1.0 - epsilon;
    Ok(out)
}

fn optimal_over(losses: &[f64], available: &[bool]) -> Result<Vec<f64>> {
    if losses.len() != available.len() {
        return Err(Error::Argument(format!(
            "{} losses for a pool of {} points",
            losses.len(),
            available.len()
        )));
    }
    let mut total = 0.0;
    for (j, _) in available.iter().enumerate().filter(|(_, &a)| a) {
        if !(losses[j] >= 0.0) || !losses[j].is_finite() {
            return Err(Error::Argument(format!(
                "loss-proportional proposal needs finite non-negative losses, index {j} has {}",
                losses[j]
            )));
        }
        total += losses[j];
    }
    if total <= 0.0 {
        return Err(Error::DegenerateProposal(
            "every unsampled loss is zero".into(),
        ));
    }
    Ok(losses
        .iter()
        .zip(available)
        .map(|(&l, &a)| if a { l / total } else { 0.0 })
        .collect())
}

fn normalize_by_max(scores: &mut [f64], available: &[bool]) {
    let max = scores
        .iter()
        .zip(available)
        .filter(|(_, &a)| a)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max > 0.0 {
        scores.iter_mut().for_each(|s| *s /= max);
    }
}

/// Mass `1/(N - m + 1)` on every unsampled index, with `m - 1 = history.len()`.
pub fn uniform_masses(history: &[usize], n: usize) -> Result<Vec<f64>> {
    Ok(uniform_over(&availability(history, n)?))
}

/// Softmax of `temperature * scores` over the unsampled indices.
pub fn boltzmann_masses(scores: &[f64], temperature: f64, history: &[usize]) -> Result<Vec<f64>> {
    if !temperature.is_finite() {
        return Err(Error::Argument("temperature must be finite".into()));
    }
    boltzmann_over(scores, temperature, &availability(history, scores.len())?)
}

/// `1 - ε + ε/U` on `best_index`, `ε/U` on every other unsampled index, where
/// `U` is the number of unsampled indices.
pub fn epsilon_greedy_masses(best_index: usize, epsilon: f64, history: &[usize], n: usize) -> Result<Vec<f64>> {
    epsilon_greedy_over(best_index, epsilon, &availability(history, n)?)
}

/// Mass proportional to loss over the unsampled indices.
pub fn optimal_loss_masses(losses: &[f64], history: &[usize]) -> Result<Vec<f64>> {
    optimal_over(losses, &availability(history, losses.len())?)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of squared distances from `candidate` to every acquired point.
pub fn geometric_scores(candidate: usize, history: &[usize], pool: &LabeledPool) -> f64 {
    let x = &pool.features()[candidate];
    history
        .iter()
        .map(|&k| squared_distance(&pool.features()[k], x))
        .sum()
}

/// Sum of Euclidean distances from `candidate` to every acquired point.
pub fn distance_scores(candidate: usize, history: &[usize], pool: &LabeledPool) -> f64 {
    let x = &pool.features()[candidate];
    history
        .iter()
        .map(|&k| squared_distance(&pool.features()[k], x).sqrt())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreName {
    SquaredDistance,
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoreSpec {
    Named(ScoreName),
    Fixed(Vec<f64>),
}

impl From<&ScoreSpec> for ScoreSource {
    fn from(spec: &ScoreSpec) -> Self {
        match spec {
            ScoreSpec::Named(ScoreName::SquaredDistance) => ScoreSource::SquaredDistance,
            ScoreSpec::Named(ScoreName::Distance) => ScoreSource::Distance,
            ScoreSpec::Fixed(s) => ScoreSource::Fixed(s.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalName {
    Uniform,
    Boltzmann,
    EpsilonGreedy,
    OptimalLoss,
    GeometricBoltzmann,
}

/// Serializable description of a proposal, as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalSpec {
    pub kind: ProposalName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ignored: Vec<usize>,
}

impl ProposalSpec {
    pub fn build(&self) -> Result<ProposalRule> {
        let missing = |p: &str| Error::Config(format!("proposal '{:?}' needs '{p}'", self.kind));
        let rule = match self.kind {
            ProposalName::Uniform => ProposalRule::uniform(),
            ProposalName::OptimalLoss => ProposalRule::optimal_loss(),
            ProposalName::Boltzmann => {
                let t = self.temperature.ok_or_else(|| missing("temperature"))?;
                let s = self.scores.as_ref().ok_or_else(|| missing("scores"))?;
                ProposalRule::boltzmann(t, s.into())?
            }
            ProposalName::EpsilonGreedy => {
                let e = self.epsilon.ok_or_else(|| missing("epsilon"))?;
                let s = self
                    .scores
                    .as_ref()
                    .map(ScoreSource::from)
                    .unwrap_or(ScoreSource::Distance);
                ProposalRule::epsilon_greedy(e, s)?
            }
            ProposalName::GeometricBoltzmann => {
                ProposalRule::geometric_boltzmann(self.beta.unwrap_or(1.0))?
            }
        };
        Ok(rule.with_ignored(self.ignored.iter().copied()))
    }
}
