//! Synthetic 1-D regression population: a piecewise-uniform input density
//! over three disjoint segments and a fixed nonlinear target.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::LabeledPool;
use crate::rng::{substream, unit_f64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
}

impl Segment {
    pub fn mass(&self) -> f64 {
        self.density * (self.hi - self.lo)
    }
}

/// Per-segment pool sizes that give `N = 101`.
pub const DEFAULT_COUNTS: [usize; 3] = [5, 48, 48];
/// The larger per-segment sizes (`N = 197`).
pub const LITERAL_COUNTS: [usize; 3] = [5, 96, 96];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub segments: Vec<Segment>,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            segments: vec![
                Segment { lo: -1.2, hi: -0.8, density: 0.12 },
                Segment { lo: 0.0, hi: 0.5, density: 0.95 },
                Segment { lo: 1.0, hi: 1.5, density: 0.95 },
            ],
        }
    }
}

/// `max(0, x) * (|x|^{3/2} + sin(20x)/4)`
pub fn target_fn(x: f64) -> f64 {
    x.max(0.0) * (x.abs().powf(1.5) + (20.0 * x).sin() / 4.0)
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Config("population has no segments".into()));
        }
        for s in &self.segments {
            if !(s.lo < s.hi) || !(s.density > 0.0) || !s.lo.is_finite() || !s.hi.is_finite() || !s.density.is_finite() {
                return Err(Error::Config(format!("invalid segment {s:?}")));
            }
        }
        let mut sorted = self.segments.clone();
        sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        if sorted.windows(2).any(|w| w[0].hi > w[1].lo) {
            return Err(Error::Config("population segments overlap".into()));
        }
        Ok(())
    }

    /// Segment probabilities after renormalizing the total mass to one.
    pub fn segment_probabilities(&self) -> Vec<f64> {
        let total: f64 = self.segments.iter().map(Segment::mass).sum();
        self.segments.iter().map(|s| s.mass() / total).collect()
    }

    fn draw<R: Rng + ?Sized>(&self, probs: &[f64], rng: &mut R) -> f64 {
        let u = unit_f64(rng);
        let mut cumulative = 0.0;
        let mut chosen = self.segments.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                chosen = i;
                break;
            }
        }
        uniform_in(&self.segments[chosen], rng)
    }

    pub fn sample_with_rng<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        self.validate()?;
        if count == 0 {
            return Err(Error::Argument("sample count must be at least 1".into()));
        }
        let probs = self.segment_probabilities();
        let inputs: Vec<f64> = (0..count).map(|_| self.draw(&probs, rng)).collect();
        let targets = inputs.iter().map(|&x| target_fn(x)).collect();
        Ok((inputs, targets))
    }

    /// A pool with exactly `counts[i]` points drawn uniformly from segment `i`,
    /// listed segment by segment.
    pub fn build_pool_with_rng<R: Rng + ?Sized>(&self, counts: &[usize], rng: &mut R) -> Result<LabeledPool> {
        self.validate()?;
        if counts.len() != self.segments.len() {
            return Err(Error::Config(format!(
                "{} counts for {} segments",
                counts.len(),
                self.segments.len()
            )));
        }
        let mut features = Vec::new();
        for (segment, &count) in self.segments.iter().zip(counts) {
            features.extend((0..count).map(|_| vec![uniform_in(segment, rng)]));
        }
        let labels = features.iter().map(|x| target_fn(x[0])).collect();
        LabeledPool::new(features, labels)
    }
}

fn uniform_in<R: Rng + ?Sized>(segment: &Segment, rng: &mut R) -> f64 {
    segment.lo + (segment.hi - segment.lo) * unit_f64(rng)
}

/// `count` input/target pairs from the population, using stream 0 of `seed`.
pub fn sample_population(spec: &PopulationSpec, count: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.sample_with_rng(count, &mut substream(seed, 0))
}

/// Pool with the given per-segment counts, using stream 0 of `seed`.
pub fn build_pool(spec: &PopulationSpec, cluster_counts: &[usize], seed: u64) -> Result<LabeledPool> {
    spec.build_pool_with_rng(cluster_counts, &mut substream(seed, 0))
}
