//! Experiment configuration, read from a TOML file.
//!
//! ```toml
//! experiment = "bias_fixed_function"  # downstream_training | ofb | oracle_check | sweep
//! root_seed = 7
//! trajectories = 1000
//! eval_points = 10100
//! m_grid = [10, 20, 30]
//! estimators = ["naive", "pure", "lure"]
//! pool_counts = [5, 48, 48]
//! workers = 8
//!
//! [proposal]
//! kind = "geometric_boltzmann"   # uniform | boltzmann | epsilon_greedy | optimal_loss
//! beta = 1.0
//!
//! [feature_map]
//! kind = "polynomial"            # or "identity"
//! degree = 12
//! ```
//!
//! Every omitted key takes the default listed on [`ExperimentConfig`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::models::FeatureMap;
use crate::proposals::{ProposalName, ProposalSpec};
use crate::synth::{PopulationSpec, DEFAULT_COUNTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    BiasFixedFunction,
    DownstreamTraining,
    Ofb,
    OracleCheck,
    Sweep,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::BiasFixedFunction => "bias_fixed_function",
            ExperimentKind::DownstreamTraining => "downstream_training",
            ExperimentKind::Ofb => "ofb",
            ExperimentKind::OracleCheck => "oracle_check",
            ExperimentKind::Sweep => "sweep",
        }
    }

    fn default_m_grid(&self) -> Vec<usize> {
        match self {
            ExperimentKind::Sweep => vec![8, 16, 32, 64],
            ExperimentKind::Ofb => vec![10, 20, 30],
            _ => (1..=10).map(|k| 10 * k).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    /// Format implied by a file extension, if any.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(OutputFormat::Csv),
            "json" => Some(OutputFormat::Json),
            _ => None,
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown format '{other}'"))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

/// Grid of randomized tiny pools for the oracle self-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleGrid {
    pub pools: usize,
    pub min_pool_size: usize,
    pub max_pool_size: usize,
    /// Losses are drawn uniformly from `[0, loss_max)`.
    pub loss_max: f64,
    pub partial_support: bool,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            pools: 50,
            min_pool_size: 3,
            max_pool_size: 7,
            loss_max: 5.0,
            partial_support: true,
        }
    }
}

fn default_trajectories() -> usize {
    1000
}

fn default_eval_points() -> usize {
    10_100
}

fn default_estimators() -> Vec<EstimatorKind> {
    EstimatorKind::ALL.to_vec()
}

fn default_counts() -> Vec<usize> {
    DEFAULT_COUNTS.to_vec()
}

fn default_proposal() -> ProposalSpec {
    ProposalSpec {
        kind: ProposalName::GeometricBoltzmann,
        temperature: None,
        epsilon: None,
        beta: Some(1.0),
        scores: None,
        ignored: Vec::new(),
    }
}

fn default_pool_ratio() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub root_seed: u64,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    /// Size of the held-out sample standing in for the population risk, and
    /// of the disjoint sample the fixed model is fitted on.
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
    /// Acquisition counts `M` to evaluate; the experiment's default when empty.
    #[serde(default)]
    pub m_grid: Vec<usize>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub population: PopulationSpec,
    /// Points per population segment in the pool.
    #[serde(default = "default_counts")]
    pub pool_counts: Vec<usize>,
    #[serde(default = "default_proposal")]
    pub proposal: ProposalSpec,
    /// Model family for fitted and fixed models.
    #[serde(default = "default_feature_map")]
    pub feature_map: FeatureMap,
    /// Worker threads; all available cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
    /// Downstream training: fit every objective with unit weights.
    #[serde(default)]
    pub force_unit_weights: bool,
    /// OFB: evaluate the trained model on a fresh pool and trajectory instead
    /// of on the points it was trained on.
    #[serde(default)]
    pub ofb_disjoint: bool,
    /// Sweep: pool size as a multiple of `M`.
    #[serde(default = "default_pool_ratio")]
    pub sweep_pool_ratio: usize,
    #[serde(default)]
    pub oracle: OracleGrid,
}

fn default_feature_map() -> FeatureMap {
    FeatureMap::Identity
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            root_seed: 0,
            trajectories: default_trajectories(),
            eval_points: default_eval_points(),
            m_grid: Vec::new(),
            estimators: default_estimators(),
            population: PopulationSpec::default(),
            pool_counts: default_counts(),
            proposal: default_proposal(),
            feature_map: default_feature_map(),
            workers: None,
            output: None,
            format: None,
            force_unit_weights: false,
            ofb_disjoint: false,
            sweep_pool_ratio: default_pool_ratio(),
            oracle: OracleGrid::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn pool_size(&self) -> usize {
        self.pool_counts.iter().sum()
    }

    /// Fills defaults and checks the invariants.
    pub fn resolved(mut self) -> Result<Self> {
        if self.m_grid.is_empty() {
            self.m_grid = self.experiment.default_m_grid();
        }
        if self.estimators.is_empty() {
            self.estimators = default_estimators();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories == 0 {
            return Err(Error::Config("trajectories must be at least 1".into()));
        }
        if self.eval_points == 0 {
            return Err(Error::Config("eval_points must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.population.validate()?;
        self.proposal.build()?;
        match self.experiment {
            ExperimentKind::OracleCheck => {
                let g = &self.oracle;
                if g.min_pool_size < 2 || g.min_pool_size > g.max_pool_size {
                    return Err(Error::Config(format!(
                        "oracle pool sizes {}..={} invalid",
                        g.min_pool_size, g.max_pool_size
                    )));
                }
                if !(g.loss_max > 0.0) {
                    return Err(Error::Config("oracle loss_max must be positive".into()));
                }
            }
            ExperimentKind::Sweep => {
                if self.sweep_pool_ratio < 1 {
                    return Err(Error::Config("sweep_pool_ratio must be at least 1".into()));
                }
                if self.m_grid.iter().any(|&m| m == 0) {
                    return Err(Error::Config("m_grid values must be at least 1".into()));
                }
            }
            _ => {
                if self.pool_counts.len() != self.population.segments.len() {
                    return Err(Error::Config(format!(
                        "{} pool counts for {} population segments",
                        self.pool_counts.len(),
                        self.population.segments.len()
                    )));
                }
                let n = self.pool_size();
                if let Some(&m) = self.m_grid.iter().find(|&&m| m == 0 || m > n) {
                    return Err(Error::Config(format!("M={m} outside 1..={n}")));
                }
            }
        }
        Ok(())
    }
}
