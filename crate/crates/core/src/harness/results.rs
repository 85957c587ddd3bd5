//! Result rows, per-group aggregates, and CSV/JSON export.
//!
//! CSV layout: a per-trajectory table with the header
//! `experiment,estimator,M,trajectory,value,bias,reference,seed`, followed,
//! when aggregates are present, by a blank line and an aggregate table with
//! the header [`AGGREGATE_HEADER`]. Reals are written with 17 significant
//! digits so a read-back reproduces every value bit for bit.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::OutputFormat;

pub const ROW_HEADER: &str = "experiment,estimator,M,trajectory,value,bias,reference,seed";
pub const AGGREGATE_HEADER: &str = "experiment,estimator,M,reference,mean,sd,se,n,mean_bias,sd_bias,se_bias,mse";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    PoolRisk,
    PopulationProxy,
}

impl ReferenceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReferenceKind::PoolRisk => "pool_risk",
            ReferenceKind::PopulationProxy => "population_proxy",
        }
    }
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReferenceKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pool_risk" => Ok(ReferenceKind::PoolRisk),
            "population_proxy" => Ok(ReferenceKind::PopulationProxy),
            other => Err(format!("unknown reference kind '{other}'")),
        }
    }
}

/// One estimator evaluated on one trajectory. `bias = value - reference`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub estimator: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub trajectory: usize,
    #[serde(with = "nullable_real")]
    pub value: f64,
    #[serde(with = "nullable_real")]
    pub bias: f64,
    pub reference: ReferenceKind,
    pub seed: u64,
}

impl ResultRow {
    /// Rows with a non-finite value (failed fits) are kept in the output but
    /// left out of aggregates.
    pub fn is_excluded(&self) -> bool {
        !self.value.is_finite()
    }
}

/// Summary of one `(experiment, estimator, M, reference)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub experiment: String,
    pub estimator: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub reference: ReferenceKind,
    #[serde(with = "nullable_real")]
    pub mean: f64,
    #[serde(with = "nullable_real")]
    pub sd: f64,
    #[serde(with = "nullable_real")]
    pub se: f64,
    pub n: usize,
    #[serde(with = "nullable_real")]
    pub mean_bias: f64,
    #[serde(with = "nullable_real")]
    pub sd_bias: f64,
    #[serde(with = "nullable_real")]
    pub se_bias: f64,
    /// Mean squared bias.
    #[serde(with = "nullable_real")]
    pub mse: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    /// The resolved configuration that produced these rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub rows: Vec<ResultRow>,
    #[serde(default)]
    pub aggregates: Vec<Aggregate>,
    /// Rows left out of aggregates.
    #[serde(default)]
    pub excluded: usize,
}

impl ResultSet {
    /// Builds a set from rows and computes its aggregates.
    pub fn from_rows(rows: Vec<ResultRow>) -> Self {
        let aggregates = aggregate(&rows);
        let excluded = rows.iter().filter(|r| r.is_excluded()).count();
        Self {
            config: None,
            rows,
            aggregates,
            excluded,
        }
    }

    pub fn find(&self, experiment: &str, estimator: &str, m: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.experiment == experiment && a.estimator == estimator && a.m == m)
    }
}

/// Mean, sample standard deviation and standard error.
pub fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    (mean, sd, sd / (n as f64).sqrt())
}

/// Aggregates in order of each group's first appearance.
pub fn aggregate(rows: &[ResultRow]) -> Vec<Aggregate> {
    let mut groups: Vec<((&str, &str, usize, ReferenceKind), Vec<&ResultRow>)> = Vec::new();
    for row in rows.iter().filter(|r| !r.is_excluded()) {
        let key = (row.experiment.as_str(), row.estimator.as_str(), row.m, row.reference);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    groups
        .into_iter()
        .map(|((experiment, estimator, m, reference), members)| {
            let values: Vec<f64> = members.iter().map(|r| r.value).collect();
            let biases: Vec<f64> = members.iter().map(|r| r.bias).collect();
            let (mean, sd, se) = summarize(&values);
            let (mean_bias, sd_bias, se_bias) = summarize(&biases);
            let mse = biases.iter().map(|b| b * b).sum::<f64>() / biases.len() as f64;
            Aggregate {
                experiment: experiment.to_string(),
                estimator: estimator.to_string(),
                m,
                reference,
                mean,
                sd,
                se,
                n: members.len(),
                mean_bias,
                sd_bias,
                se_bias,
                mse,
            }
        })
        .collect()
}

// JSON has no NaN or infinity; non-finite reals go out as null and come back
// as NaN.
mod nullable_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV text for a result set.
pub fn to_csv(set: &ResultSet) -> String {
    let mut out = String::with_capacity(64 * (set.rows.len() + 2));
    out.push_str(ROW_HEADER);
    out.push('\n');
    for r in &set.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.experiment,
            r.estimator,
            r.m,
            r.trajectory,
            real(r.value),
            real(r.bias),
            r.reference,
            r.seed
        ));
    }
    if !set.aggregates.is_empty() {
        out.push('\n');
        out.push_str(AGGREGATE_HEADER);
        out.push('\n');
        for a in &set.aggregates {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                a.experiment,
                a.estimator,
                a.m,
                a.reference,
                real(a.mean),
                real(a.sd),
                real(a.se),
                a.n,
                real(a.mean_bias),
                real(a.sd_bias),
                real(a.se_bias),
                real(a.mse)
            ));
        }
    }
    out
}

fn parse_field<T: FromStr>(fields: &[&str], i: usize, line: usize) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    let raw = fields.get(i).ok_or_else(|| format!("line {line}: missing column {}", i + 1))?;
    raw.parse::<T>().map_err(|e| format!("line {line}: column {}: {e}", i + 1))
}

/// Parses CSV produced by [`to_csv`].
pub fn from_csv(text: &str) -> std::result::Result<ResultSet, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == ROW_HEADER => {}
        _ => return Err(format!("expected header '{ROW_HEADER}'")),
    }
    let mut set = ResultSet::default();
    let mut in_aggregates = false;
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        if line == AGGREGATE_HEADER {
            in_aggregates = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if in_aggregates {
            if f.len() != 12 {
                return Err(format!("line {lineno}: expected 12 columns, found {}", f.len()));
            }
            set.aggregates.push(Aggregate {
                experiment: f[0].to_string(),
                estimator: f[1].to_string(),
                m: parse_field(&f, 2, lineno)?,
                reference: parse_field(&f, 3, lineno)?,
                mean: parse_field(&f, 4, lineno)?,
                sd: parse_field(&f, 5, lineno)?,
                se: parse_field(&f, 6, lineno)?,
                n: parse_field(&f, 7, lineno)?,
                mean_bias: parse_field(&f, 8, lineno)?,
                sd_bias: parse_field(&f, 9, lineno)?,
                se_bias: parse_field(&f, 10, lineno)?,
                mse: parse_field(&f, 11, lineno)?,
            });
        } else {
            if f.len() != 8 {
                return Err(format!("line {lineno}: expected 8 columns, found {}", f.len()));
            }
            set.rows.push(ResultRow {
                experiment: f[0].to_string(),
                estimator: f[1].to_string(),
                m: parse_field(&f, 2, lineno)?,
                trajectory: parse_field(&f, 3, lineno)?,
                value: parse_field(&f, 4, lineno)?,
                bias: parse_field(&f, 5, lineno)?,
                reference: parse_field(&f, 6, lineno)?,
                seed: parse_field(&f, 7, lineno)?,
            });
        }
    }
    set.excluded = set.rows.iter().filter(|r| r.is_excluded()).count();
    Ok(set)
}

pub fn to_json(set: &ResultSet) -> Result<String> {
    serde_json::to_string_pretty(set).map_err(|e| Error::Config(e.to_string()))
}

pub fn export_results(set: &ResultSet, path: &Path, format: OutputFormat) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => to_csv(set),
        OutputFormat::Json => to_json(set)?,
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a result file; the format comes from `format` or the extension.
pub fn import_results(path: &Path, format: Option<OutputFormat>) -> Result<ResultSet> {
    let format = format
        .or_else(|| OutputFormat::from_path(path))
        .ok_or_else(|| Error::format(path, "cannot tell the format; pass --format"))?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        OutputFormat::Csv => from_csv(&text).map_err(|e| Error::format(path, e)),
        OutputFormat::Json => serde_json::from_str(&text).map_err(|e| Error::format(path, e)),
    }
}
