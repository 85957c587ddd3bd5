//! Exhaustive self-check of the estimators on randomized tiny pools.
//!
//! Case `i` draws everything it needs (pool size, features, losses, proposal
//! parameters, ignored set) from stream `ORACLE_STREAM_BASE + i` of the root
//! seed, so any failing case can be rebuilt from `(root_seed, case)` with
//! [`oracle_case`].

use std::cell::Cell;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{self, lure_constants, partial_support_bias, EstimatorKind, WeightedRisk};
use crate::harness::config::{ExperimentConfig, ExperimentKind, OracleGrid};
use crate::oracle::{close, Enumeration, OracleOptions};
use crate::pool::{pool_empirical_risk, LabeledPool, Trajectory};
use crate::proposals::{ProposalRule, ScoreSource};
use crate::rng::{substream, unit_f64, StreamRng, ORACLE_STREAM_BASE};

/// Tolerance of every oracle comparison.
pub const ORACLE_TOLERANCE: f64 = 1e-10;

/// One randomized pool and the proposals it is checked under.
#[derive(Debug, Clone)]
pub struct OracleCase {
    pub case: usize,
    pub pool: LabeledPool,
    /// Named proposals; names ending in `_partial` ignore `ignored`.
    pub proposals: Vec<(String, ProposalRule)>,
    pub ignored: Vec<usize>,
}

fn uniform_in(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit_f64(rng)
}

/// Rebuilds case `case` of the grid.
pub fn oracle_case(root_seed: u64, case: usize, grid: &OracleGrid) -> Result<OracleCase> {
    let mut rng = substream(root_seed, ORACLE_STREAM_BASE + case as u64);
    let n = rng.gen_range(grid.min_pool_size..=grid.max_pool_size);
    let features: Vec<Vec<f64>> = (0..n).map(|_| vec![unit_f64(&mut rng)]).collect();
    // 1 - u keeps every loss strictly positive
    let losses: Vec<f64> = (0..n).map(|_| grid.loss_max * (1.0 - unit_f64(&mut rng))).collect();
    let pool = LabeledPool::new(features, vec![0.0; n])?.with_losses(losses)?;

    let scores: Vec<f64> = (0..n).map(|_| uniform_in(&mut rng, 0.0, 3.0)).collect();
    let temperature = uniform_in(&mut rng, 0.5, 3.0);
    let epsilon = uniform_in(&mut rng, 0.05, 0.95);
    let beta = uniform_in(&mut rng, 0.5, 2.5);
    let mut proposals = vec![
        ("uniform".to_string(), ProposalRule::uniform()),
        (
            "boltzmann".to_string(),
            ProposalRule::boltzmann(temperature, ScoreSource::Fixed(scores.clone()))?,
        ),
        (
            "epsilon_greedy".to_string(),
            ProposalRule::epsilon_greedy(epsilon, ScoreSource::Fixed(scores.clone()))?,
        ),
        ("optimal_loss".to_string(), ProposalRule::optimal_loss()),
        ("geometric_boltzmann".to_string(), ProposalRule::geometric_boltzmann(beta)?),
    ];

    let mut ignored = Vec::new();
    if grid.partial_support && n >= 2 {
        let count = rng.gen_range(1..n);
        let mut order: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = rng.gen_range(i..n);
            order.swap(i, j);
        }
        ignored = order[..count].to_vec();
        ignored.sort_unstable();
        proposals.push(("uniform_partial".to_string(), ProposalRule::uniform().with_ignored(ignored.clone())));
        proposals.push((
            "boltzmann_partial".to_string(),
            ProposalRule::boltzmann(temperature, ScoreSource::Fixed(scores))?.with_ignored(ignored.clone()),
        ));
    }
    Ok(OracleCase {
        case,
        pool,
        proposals,
        ignored,
    })
}

/// Outcome of one comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub case: usize,
    pub pool_size: usize,
    pub proposal: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub check: String,
    pub expected: f64,
    pub observed: f64,
    pub passed: bool,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "case {} ({}, N={}, M={}): {} expected {:e}, observed {:e}",
            self.case, self.proposal, self.pool_size, self.m, self.check, self.expected, self.observed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub root_seed: u64,
    pub cases: usize,
    pub checks: Vec<CheckResult>,
}

pub const REPORT_HEADER: &str = "case,pool_size,proposal,M,check,expected,observed,passed";

impl OracleReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Number of checks whose name starts with `prefix`.
    pub fn count(&self, prefix: &str) -> usize {
        self.checks.iter().filter(|c| c.check.starts_with(prefix)).count()
    }

    pub fn failure_count(&self, prefix: &str) -> usize {
        self.failures().filter(|c| c.check.starts_with(prefix)).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for c in &self.checks {
            out.push_str(&format!(
                "{},{},{},{},{},{:.16e},{:.16e},{}\n",
                c.case, c.pool_size, c.proposal, c.m, c.check, c.expected, c.observed, c.passed
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Estimator under test; the default is [`estimators::estimate`].
pub type EstimatorFn = dyn Fn(EstimatorKind, &Trajectory) -> Result<WeightedRisk> + Sync;

pub fn run_oracle_check(cfg: &ExperimentConfig) -> Result<OracleReport> {
    run_oracle_check_with(cfg, &estimators::estimate)
}

/// Runs the grid with a substitute estimator, so that a deliberately broken
/// formula can be shown to be caught.
pub fn run_oracle_check_with(cfg: &ExperimentConfig, estimator: &EstimatorFn) -> Result<OracleReport> {
    if cfg.experiment != ExperimentKind::OracleCheck {
        return Err(Error::Config(format!(
            "config is for '{}', not 'oracle_check'",
            cfg.experiment.as_str()
        )));
    }
    let cfg = cfg.clone().resolved()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        builder = builder.num_threads(n);
    }
    let threads = builder
        .build()
        .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?;
    let per_case: Vec<Vec<CheckResult>> = threads.install(|| {
        (0..cfg.oracle.pools)
            .into_par_iter()
            .map(|i| check_case(&oracle_case(cfg.root_seed, i, &cfg.oracle)?, estimator))
            .collect::<Result<_>>()
    })?;
    Ok(OracleReport {
        root_seed: cfg.root_seed,
        cases: cfg.oracle.pools,
        checks: per_case.into_iter().flatten().collect(),
    })
}

struct Recorder<'a> {
    case: &'a OracleCase,
    proposal: &'a str,
    m: usize,
    out: Vec<CheckResult>,
}

impl Recorder<'_> {
    fn record(&mut self, check: &str, expected: f64, observed: f64, passed: bool) {
        self.out.push(CheckResult {
            case: self.case.case,
            pool_size: self.case.pool.len(),
            proposal: self.proposal.to_string(),
            m: self.m,
            check: check.to_string(),
            expected,
            observed,
            passed,
        });
    }

    fn close(&mut self, check: &str, expected: f64, observed: f64) {
        let passed = close(expected, observed, ORACLE_TOLERANCE);
        self.record(check, expected, observed, passed);
    }
}

fn check_case(case: &OracleCase, estimator: &EstimatorFn) -> Result<Vec<CheckResult>> {
    let pool = &case.pool;
    let n = pool.len();
    let losses = pool.require_losses()?;
    let r_hat = pool_empirical_risk(pool)?;
    let constant_losses = losses.iter().all(|&l| l == losses[0]);
    let mut out = Vec::new();
    for (name, rule) in &case.proposals {
        let partial = !rule.ignored().is_empty();
        let reachable = n - rule.ignored().len();
        for m in 1..=reachable {
            let enumeration = Enumeration::new(pool, rule, m, OracleOptions::default())?;
            let mut rec = Recorder {
                case,
                proposal: name,
                m,
                out: Vec::new(),
            };
            let pure = enumeration.moments_with(|t| estimator(EstimatorKind::Pure, t))?;
            let lure = enumeration.moments_with(|t| estimator(EstimatorKind::Lure, t))?;

            if partial {
                let want = r_hat + partial_support_bias(pool, rule.ignored())?;
                rec.close("partial_support_bias_pure", want, pure.mean);
                rec.close("partial_support_bias_lure", want, lure.mean);
                out.extend(rec.out);
                continue;
            }

            rec.close("unbiased_pure", r_hat, pure.mean);
            rec.close("unbiased_lure", r_hat, lure.mean);
            let worst = lure
                .per_step_weight_means
                .iter()
                .copied()
                .max_by(|a, b| (a - 1.0).abs().total_cmp(&(b - 1.0).abs()))
                .unwrap_or(1.0);
            rec.record("lure_weight_mean", 1.0, worst, (worst - 1.0).abs() <= ORACLE_TOLERANCE);

            let e = enumeration.conditional_variances();
            let mf2 = (m * m) as f64;
            let pure_decomposed = e.iter().sum::<f64>() / mf2;
            let c = lure_constants(m, n)?.c;
            let lure_decomposed = c.iter().zip(e).map(|(c, e)| c * c * e).sum::<f64>() / mf2;
            rec.close("variance_decomposition_pure", pure_decomposed, pure.variance);
            rec.close("variance_decomposition_lure", lure_decomposed, lure.variance);

            if name == "uniform" || name == "boltzmann" {
                let slack = ORACLE_TOLERANCE * pure.variance.max(1.0);
                rec.record(
                    "variance_ordering",
                    pure.variance,
                    lure.variance,
                    lure.variance <= pure.variance + slack,
                );
                if m > 1 && !constant_losses {
                    rec.record(
                        "variance_ordering_strict",
                        pure.variance,
                        lure.variance,
                        lure.variance < pure.variance - slack,
                    );
                }
            }

            if name == "optimal_loss" {
                let worst = Cell::new(0.0f64);
                enumeration.moments_with(|t| {
                    for kind in [EstimatorKind::Pure, EstimatorKind::Lure] {
                        let v = estimator(kind, t)?;
                        let dev = (v.value - r_hat).abs() / r_hat.abs().max(1.0);
                        worst.set(worst.get().max(dev));
                    }
                    estimator(EstimatorKind::Lure, t)
                })?;
                rec.record("optimal_exact", 0.0, worst.get(), worst.get() <= ORACLE_TOLERANCE);
            }
            out.extend(rec.out);
        }
    }
    Ok(out)
}
