//! Seeded Monte Carlo experiments on the synthetic regression problem.
//!
//! Every experiment shares the same ingredients, each drawn from its own
//! named stream of the root seed:
//!
//! * the pool ([`POOL_STREAM`]), built with `pool_counts` points per segment;
//! * a fixed reference model, fitted by unweighted least squares on
//!   `eval_points` population draws ([`REFERENCE_FIT_STREAM`]); pool losses
//!   are its squared errors;
//! * a held-out sample of `eval_points` draws ([`EVAL_STREAM`]) standing in
//!   for the population risk.
//!
//! Trajectory `k` draws from stream `k`. One trajectory of length `max(M)` is
//! sampled per index and its prefixes serve every `M` in the grid. Rows are
//! ordered by `M`, then estimator, then trajectory, and do not depend on the
//! number of workers.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{estimate, lure_estimate, EstimatorKind};
use crate::harness::config::{ExperimentConfig, ExperimentKind};
use crate::harness::results::{ReferenceKind, ResultRow, ResultSet};
use crate::models::{fit_weighted_least_squares, FeatureMap, LinearModel, WeightedSampleSet};
use crate::pool::{pool_empirical_risk, sample_trajectory_with_rng, LabeledPool, Trajectory};
use crate::proposals::ProposalRule;
use crate::rng::{substream, StreamRng, AUX_STREAM_BASE, EVAL_STREAM, POOL_STREAM, REFERENCE_FIT_STREAM};
use crate::synth::PopulationSpec;

/// Largest share of singular fits tolerated in any `(estimator, M)` group.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.01;

/// Held-out sample with its design matrix precomputed for one feature map.
#[derive(Debug, Clone)]
pub struct EvalSet {
    design: DMatrix<f64>,
    targets: DVector<f64>,
}

impl EvalSet {
    pub fn new(inputs: &[Vec<f64>], targets: &[f64], feature_map: FeatureMap) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::Argument(format!(
                "evaluation set has {} inputs and {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let p = feature_map.dimension(inputs[0].len());
        let design = DMatrix::from_fn(inputs.len(), p, |i, j| feature_map.features(&inputs[i])[j]);
        Ok(Self {
            design,
            targets: DVector::from_column_slice(targets),
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Mean squared error of `model`, which must use this set's feature map.
    pub fn risk(&self, model: &LinearModel) -> f64 {
        let theta = DVector::from_column_slice(&model.coefficients);
        let residual = &self.design * theta - &self.targets;
        residual.norm_squared() / self.len() as f64
    }
}

/// The pool, fixed model and held-out sample shared by every trajectory.
#[derive(Debug, Clone)]
pub struct Setup {
    /// Pool with losses under `model`.
    pub pool: LabeledPool,
    pub model: LinearModel,
    pub eval: EvalSet,
    pub proposal: ProposalRule,
}

fn scalar_points(xs: Vec<f64>) -> Vec<Vec<f64>> {
    xs.into_iter().map(|x| vec![x]).collect()
}

/// Unweighted least-squares fit on a disjoint population sample.
pub fn reference_model(cfg: &ExperimentConfig) -> Result<LinearModel> {
    let (xs, ys) = cfg
        .population
        .sample_with_rng(cfg.eval_points, &mut substream(cfg.root_seed, REFERENCE_FIT_STREAM))?;
    fit_weighted_least_squares(&WeightedSampleSet::unweighted(scalar_points(xs), ys)?, cfg.feature_map)
}

pub fn eval_sample(cfg: &ExperimentConfig) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let (xs, ys) = cfg
        .population
        .sample_with_rng(cfg.eval_points, &mut substream(cfg.root_seed, EVAL_STREAM))?;
    Ok((scalar_points(xs), ys))
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let model = reference_model(cfg)?;
        let pool = cfg
            .population
            .build_pool_with_rng(&cfg.pool_counts, &mut substream(cfg.root_seed, POOL_STREAM))?;
        let pool = model.pool_losses(&pool)?;
        let (inputs, targets) = eval_sample(cfg)?;
        Ok(Self {
            pool,
            model,
            eval: EvalSet::new(&inputs, &targets, cfg.feature_map)?,
            proposal: cfg.proposal.build()?,
        })
    }

    pub fn trajectory(&self, root_seed: u64, k: usize, m: usize) -> Result<Trajectory> {
        sample_trajectory_with_rng(&self.pool, &self.proposal, m, &mut substream(root_seed, k as u64))
    }
}

/// Dispatches on `cfg.experiment`. Oracle checks have their own runner.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultSet> {
    match cfg.experiment {
        ExperimentKind::BiasFixedFunction => run_bias_experiment(cfg),
        ExperimentKind::DownstreamTraining => run_downstream_experiment(cfg),
        ExperimentKind::Ofb => run_ofb_experiment(cfg),
        ExperimentKind::Sweep => run_sweep(cfg),
        ExperimentKind::OracleCheck => Err(Error::Config(
            "oracle_check produces a report, not result rows; use run_oracle_check".into(),
        )),
    }
}

fn resolve(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<ExperimentConfig> {
    if cfg.experiment != kind {
        return Err(Error::Config(format!(
            "config is for '{}', not '{}'",
            cfg.experiment.as_str(),
            kind.as_str()
        )));
    }
    cfg.clone().resolved()
}

/// Runs `work(k)` for every trajectory on a pool of `cfg.workers` threads and
/// returns the results in trajectory order.
fn per_trajectory<T, F>(cfg: &ExperimentConfig, work: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Send + Sync,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        builder = builder.num_threads(n);
    }
    let threads = builder
        .build()
        .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?;
    threads.install(|| (0..cfg.trajectories).into_par_iter().map(&work).collect())
}

/// One value per `(M, estimator)` for a single trajectory, `M`-major.
struct TrajectoryValues {
    values: Vec<f64>,
    references: Vec<f64>,
}

/// Flattens per-trajectory results into rows ordered by `M`, estimator,
/// trajectory.
fn collect_rows(
    cfg: &ExperimentConfig,
    experiment: &str,
    estimators: &[String],
    reference: ReferenceKind,
    per_traj: &[TrajectoryValues],
) -> Vec<ResultRow> {
    let mut rows = Vec::with_capacity(per_traj.len() * cfg.m_grid.len() * estimators.len());
    for (mi, &m) in cfg.m_grid.iter().enumerate() {
        for (ei, estimator) in estimators.iter().enumerate() {
            let slot = mi * estimators.len() + ei;
            for (k, t) in per_traj.iter().enumerate() {
                let value = t.values[slot];
                rows.push(ResultRow {
                    experiment: experiment.to_string(),
                    estimator: estimator.clone(),
                    m,
                    trajectory: k,
                    value,
                    bias: value - t.references[slot],
                    reference,
                    seed: cfg.root_seed,
                });
            }
        }
    }
    rows
}

fn estimator_names(cfg: &ExperimentConfig) -> Vec<String> {
    cfg.estimators.iter().map(|e| e.as_str().to_string()).collect()
}

fn finish(cfg: &ExperimentConfig, rows: Vec<ResultRow>) -> Result<ResultSet> {
    let limit = MAX_EXCLUDED_FRACTION * cfg.trajectories as f64;
    for chunk in rows.chunks(cfg.trajectories) {
        let excluded = chunk.iter().filter(|r| r.is_excluded()).count();
        if excluded as f64 > limit {
            let r = &chunk[0];
            return Err(Error::Consistency(format!(
                "{excluded}/{} fits failed for {} {} at M={}",
                cfg.trajectories, r.experiment, r.estimator, r.m
            )));
        }
    }
    let mut set = ResultSet::from_rows(rows);
    set.config = Some(serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))?);
    Ok(set)
}

fn max_m(cfg: &ExperimentConfig) -> usize {
    cfg.m_grid.iter().copied().max().unwrap_or(1)
}

/// Estimated risk of the fixed model against the pool risk.
pub fn run_bias_experiment(cfg: &ExperimentConfig) -> Result<ResultSet> {
    let cfg = resolve(cfg, ExperimentKind::BiasFixedFunction)?;
    let setup = Setup::new(&cfg)?;
    let r_hat = pool_empirical_risk(&setup.pool)?;
    let per_traj = per_trajectory(&cfg, |k| {
        let full = setup.trajectory(cfg.root_seed, k, max_m(&cfg))?;
        let mut values = Vec::new();
        for &m in &cfg.m_grid {
            let prefix = full.prefix(m)?;
            for &kind in &cfg.estimators {
                values.push(estimate(kind, &prefix)?.value);
            }
        }
        let references = vec![r_hat; values.len()];
        Ok(TrajectoryValues { values, references })
    })?;
    let rows = collect_rows(
        &cfg,
        cfg.experiment.as_str(),
        &estimator_names(&cfg),
        ReferenceKind::PoolRisk,
        &per_traj,
    );
    finish(&cfg, rows)
}

/// Objective weights for `kind` on a trajectory prefix.
fn objective_weights(cfg: &ExperimentConfig, kind: EstimatorKind, traj: &Trajectory) -> Result<Vec<f64>> {
    if cfg.force_unit_weights {
        return Ok(vec![1.0; traj.len()]);
    }
    Ok(estimate(kind, traj)?.per_point_weights)
}

/// Fits a model to the acquired points; `None` when the system is singular.
fn fit_on(cfg: &ExperimentConfig, pool: &LabeledPool, traj: &Trajectory, weights: &[f64]) -> Result<Option<LinearModel>> {
    let samples = WeightedSampleSet::from_trajectory(pool, traj, weights)?;
    match fit_weighted_least_squares(&samples, cfg.feature_map) {
        Ok(model) => Ok(Some(model)),
        Err(Error::Singular(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Held-out risk of models trained on each estimator's objective. The
/// reference is the held-out risk of an unweighted fit to the whole pool.
pub fn run_downstream_experiment(cfg: &ExperimentConfig) -> Result<ResultSet> {
    let cfg = resolve(cfg, ExperimentKind::DownstreamTraining)?;
    let setup = Setup::new(&cfg)?;
    let ideal = fit_weighted_least_squares(
        &WeightedSampleSet::unweighted(setup.pool.features().to_vec(), setup.pool.labels().to_vec())?,
        cfg.feature_map,
    )?;
    let r_ideal = setup.eval.risk(&ideal);
    let per_traj = per_trajectory(&cfg, |k| {
        let full = setup.trajectory(cfg.root_seed, k, max_m(&cfg))?;
        let mut values = Vec::new();
        for &m in &cfg.m_grid {
            let prefix = full.prefix(m)?;
            for &kind in &cfg.estimators {
                let weights = objective_weights(&cfg, kind, &prefix)?;
                let risk = fit_on(&cfg, &setup.pool, &prefix, &weights)?
                    .map_or(f64::NAN, |model| setup.eval.risk(&model));
                values.push(risk);
            }
        }
        let references = vec![r_ideal; values.len()];
        Ok(TrajectoryValues { values, references })
    })?;
    let rows = collect_rows(
        &cfg,
        cfg.experiment.as_str(),
        &estimator_names(&cfg),
        ReferenceKind::PopulationProxy,
        &per_traj,
    );
    finish(&cfg, rows)
}

/// Name of the rows that carry the estimators' statistical bias at the fixed
/// model in the OFB experiment.
pub const ALB_EXPERIMENT: &str = "alb";

/// Overfitting bias of models trained on each objective, plus the statistical
/// bias of every estimator at the fixed model on the same trajectories.
///
/// `ofb` rows hold `LURE(theta*)` against the held-out risk of `theta*`, so
/// `B_OFB = -bias`. `alb` rows hold each estimator at the fixed model
/// against the pool risk, so the active learning bias `R_hat - E[estimate]`
/// is also `-bias`. With `ofb_disjoint`, `theta*` is scored on a fresh pool
/// and trajectory instead of its own training points.
pub fn run_ofb_experiment(cfg: &ExperimentConfig) -> Result<ResultSet> {
    let cfg = resolve(cfg, ExperimentKind::Ofb)?;
    let setup = Setup::new(&cfg)?;
    let r_hat = pool_empirical_risk(&setup.pool)?;
    let names = estimator_names(&cfg);
    let per_traj = per_trajectory(&cfg, |k| {
        let full = setup.trajectory(cfg.root_seed, k, max_m(&cfg))?;
        let scoring = if cfg.ofb_disjoint {
            let mut rng = substream(cfg.root_seed, AUX_STREAM_BASE + k as u64);
            let pool = cfg.population.build_pool_with_rng(&cfg.pool_counts, &mut rng)?;
            let pool = setup.model.pool_losses(&pool)?;
            let traj = sample_trajectory_with_rng(&pool, &setup.proposal, max_m(&cfg), &mut rng)?;
            Some((pool, traj))
        } else {
            None
        };
        let mut ofb = TrajectoryValues {
            values: Vec::new(),
            references: Vec::new(),
        };
        let mut alb = TrajectoryValues {
            values: Vec::new(),
            references: Vec::new(),
        };
        for &m in &cfg.m_grid {
            let prefix = full.prefix(m)?;
            for &kind in &cfg.estimators {
                alb.values.push(estimate(kind, &prefix)?.value);
                alb.references.push(r_hat);

                let weights = objective_weights(&cfg, kind, &prefix)?;
                match fit_on(&cfg, &setup.pool, &prefix, &weights)? {
                    Some(model) => {
                        let (pool, traj) = match &scoring {
                            Some((pool, traj)) => (pool, traj.prefix(m)?),
                            None => (&setup.pool, prefix.clone()),
                        };
                        let relabeled = model.pool_losses(pool)?;
                        ofb.values.push(lure_estimate(&traj.relabel(&relabeled)?)?.value);
                        ofb.references.push(setup.eval.risk(&model));
                    }
                    None => {
                        ofb.values.push(f64::NAN);
                        ofb.references.push(f64::NAN);
                    }
                }
            }
        }
        Ok((ofb, alb))
    })?;
    let (ofb, alb): (Vec<_>, Vec<_>) = per_traj.into_iter().unzip();
    let mut rows = collect_rows(&cfg, cfg.experiment.as_str(), &names, ReferenceKind::PopulationProxy, &ofb);
    rows.extend(collect_rows(&cfg, ALB_EXPERIMENT, &names, ReferenceKind::PoolRisk, &alb));
    finish(&cfg, rows)
}

/// Pool of `n` fresh population draws with the fixed model's losses.
fn fresh_pool(population: &PopulationSpec, model: &LinearModel, n: usize, rng: &mut StreamRng) -> Result<LabeledPool> {
    let (xs, ys) = population.sample_with_rng(n, rng)?;
    model.pool_losses(&LabeledPool::new(scalar_points(xs), ys)?)
}

/// Estimator error as the pool grows with `M` at a fixed ratio `N / M`. Each
/// row's reference is the risk of its own pool.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<ResultSet> {
    let cfg = resolve(cfg, ExperimentKind::Sweep)?;
    let model = reference_model(&cfg)?;
    let proposal = cfg.proposal.build()?;
    let per_traj = per_trajectory(&cfg, |k| {
        let mut out = TrajectoryValues {
            values: Vec::new(),
            references: Vec::new(),
        };
        for (g, &m) in cfg.m_grid.iter().enumerate() {
            let stream = AUX_STREAM_BASE + ((g as u64) << 32) + k as u64;
            let mut rng = substream(cfg.root_seed, stream);
            let pool = fresh_pool(&cfg.population, &model, cfg.sweep_pool_ratio * m, &mut rng)?;
            let r_hat = pool_empirical_risk(&pool)?;
            let traj = sample_trajectory_with_rng(&pool, &proposal, m, &mut rng)?;
            for &kind in &cfg.estimators {
                out.values.push(estimate(kind, &traj)?.value);
                out.references.push(r_hat);
            }
        }
        Ok(out)
    })?;
    let rows = collect_rows(
        &cfg,
        cfg.experiment.as_str(),
        &estimator_names(&cfg),
        ReferenceKind::PoolRisk,
        &per_traj,
    );
    finish(&cfg, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::results::to_csv;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(kind);
        cfg.trajectories = 40;
        cfg.eval_points = 500;
        cfg.m_grid = vec![5, 20];
        cfg.root_seed = 11;
        cfg
    }

    #[test]
    fn eval_set_matches_pointwise_proxy() {
        let inputs: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 10.0 - 1.0]).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| crate::synth::target_fn(x[0])).collect();
        let map = FeatureMap::Polynomial { degree: 4 };
        let model = LinearModel {
            coefficients: vec![0.1, -0.2, 0.3, 0.0, 0.5],
            feature_map: map,
        };
        let set = EvalSet::new(&inputs, &targets, map).unwrap();
        let want = crate::models::population_risk_proxy(&model, &inputs, &targets).unwrap();
        assert!((set.risk(&model) - want).abs() < 1e-12 * want.max(1.0));
    }

    #[test]
    fn rows_are_ordered_and_complete() {
        let set = run_bias_experiment(&small(ExperimentKind::BiasFixedFunction)).unwrap();
        assert_eq!(set.rows.len(), 2 * 3 * 40);
        assert_eq!(set.rows[0].m, 5);
        assert_eq!(set.rows[0].estimator, "naive");
        assert_eq!(set.rows[39].trajectory, 39);
        assert_eq!(set.rows[40].estimator, "pure");
        assert_eq!(set.rows[120].m, 20);
        assert_eq!(set.aggregates.len(), 6);
        assert!(set.config.is_some());
    }

    #[test]
    fn output_does_not_depend_on_workers() {
        for kind in [ExperimentKind::BiasFixedFunction, ExperimentKind::Ofb, ExperimentKind::Sweep] {
            let mut cfg = small(kind);
            cfg.m_grid = vec![4, 8];
            cfg.workers = Some(1);
            let one = to_csv(&run_experiment(&cfg).unwrap());
            cfg.workers = Some(4);
            assert_eq!(one, to_csv(&run_experiment(&cfg).unwrap()), "{kind:?}");
        }
    }

    #[test]
    fn optimal_proposal_removes_all_bias() {
        let mut cfg = small(ExperimentKind::BiasFixedFunction);
        cfg.proposal.kind = crate::proposals::ProposalName::OptimalLoss;
        let set = run_bias_experiment(&cfg).unwrap();
        for row in &set.rows {
            if row.estimator != "naive" {
                assert!(row.bias.abs() < 1e-10 * row.value.abs().max(1.0), "{row:?}");
            }
        }
        assert!(set.find("bias_fixed_function", "naive", 5).unwrap().mean_bias > 0.0);
    }

    #[test]
    fn unit_weights_give_identical_fits() {
        let mut cfg = small(ExperimentKind::DownstreamTraining);
        cfg.force_unit_weights = true;
        let set = run_downstream_experiment(&cfg).unwrap();
        let per = set.rows.len() / 3;
        for m in 0..2 {
            for k in 0..40 {
                let at = |e: usize| set.rows[m * 3 * 40 + e * 40 + k].value;
                assert_eq!(at(0), at(1));
                assert_eq!(at(0), at(2));
            }
        }
        assert_eq!(per, 80);
    }

    #[test]
    fn full_pool_lure_and_naive_fits_coincide() {
        let mut cfg = small(ExperimentKind::DownstreamTraining);
        cfg.m_grid = vec![101];
        cfg.trajectories = 3;
        let set = run_downstream_experiment(&cfg).unwrap();
        let naive = set.find("downstream_training", "naive", 101).unwrap();
        let lure = set.find("downstream_training", "lure", 101).unwrap();
        assert!((naive.mean - lure.mean).abs() < 1e-9 * naive.mean);
        assert!(naive.mean_bias.abs() < 1e-9);
    }

    #[test]
    fn mismatched_experiment_is_a_config_error() {
        let cfg = small(ExperimentKind::Ofb);
        assert!(matches!(run_bias_experiment(&cfg), Err(Error::Config(_))));
        assert!(matches!(
            run_experiment(&small(ExperimentKind::OracleCheck)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn exclusions_above_one_percent_fail_the_run() {
        let mut cfg = small(ExperimentKind::DownstreamTraining);
        cfg.trajectories = 200;
        let rows = |failed: usize| -> Vec<ResultRow> {
            (0..200)
                .map(|k| ResultRow {
                    experiment: "downstream_training".into(),
                    estimator: "lure".into(),
                    m: 5,
                    trajectory: k,
                    value: if k < failed { f64::NAN } else { 1.0 },
                    bias: 0.0,
                    reference: ReferenceKind::PopulationProxy,
                    seed: 0,
                })
                .collect()
        };
        let set = finish(&cfg, rows(2)).unwrap();
        assert_eq!(set.excluded, 2);
        assert!(matches!(finish(&cfg, rows(3)), Err(Error::Consistency(_))));
    }
}
