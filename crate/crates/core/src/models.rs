//! Squared-error regression models fitted to weighted risk objectives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::lure_estimate;
use crate::pool::{LabeledPool, Trajectory};

/// Ridge term added to the diagonal of every normal-equation system.
pub const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    /// Intercept followed by the raw input vector.
    Identity,
    /// `(1, x, x^2, ..., x^degree)` of a scalar input.
    Polynomial { degree: usize },
}

impl FeatureMap {
    pub fn dimension(&self, input_dim: usize) -> usize {
        match self {
            FeatureMap::Identity => input_dim + 1,
            FeatureMap::Polynomial { degree } => degree + 1,
        }
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Identity => std::iter::once(1.0).chain(x.iter().copied()).collect(),
            FeatureMap::Polynomial { degree } => {
                let x0 = x.first().copied().unwrap_or(0.0);
                let mut out = Vec::with_capacity(degree + 1);
                let mut p = 1.0;
                for _ in 0..=*degree {
                    out.push(p);
                    p *= x0;
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub feature_map: FeatureMap,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.feature_map
            .features(x)
            .iter()
            .zip(&self.coefficients)
            .map(|(f, c)| f * c)
            .sum()
    }

    /// Squared-error loss of this model on every pool point.
    pub fn pool_losses(&self, pool: &LabeledPool) -> Result<LabeledPool> {
        pool.relabeled(|x, y| squared_error_loss(self.predict(x), y))
    }
}

pub fn squared_error_loss(prediction: f64, target: f64) -> f64 {
    let d = prediction - target;
    d * d
}

/// Paired inputs and targets with one objective weight each.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSampleSet {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedSampleSet {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() || inputs.len() != weights.len() {
            return Err(Error::Argument(format!(
                "{} inputs, {} targets, {} weights",
                inputs.len(),
                targets.len(),
                weights.len()
            )));
        }
        if inputs.is_empty() {
            return Err(Error::Argument("no samples to fit".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Argument("weights must be finite".into()));
        }
        Ok(Self {
            inputs,
            targets,
            weights,
        })
    }

    pub fn unweighted(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        let n = targets.len();
        Self::new(inputs, targets, vec![1.0; n])
    }

    /// The acquired points of `traj` with the given per-step weights.
    pub fn from_trajectory(pool: &LabeledPool, traj: &Trajectory, weights: &[f64]) -> Result<Self> {
        let inputs = traj.steps().iter().map(|s| pool.features()[s.index].clone()).collect();
        let targets = traj.steps().iter().map(|s| pool.labels()[s.index]).collect();
        Self::new(inputs, targets, weights.to_vec())
    }
}

/// `argmin_theta sum_m w_m (f_theta(x_m) - y_m)^2 + RIDGE * |theta|^2`, via the
/// normal equations.
pub fn fit_weighted_least_squares(samples: &WeightedSampleSet, feature_map: FeatureMap) -> Result<LinearModel> {
    let input_dim = samples.inputs[0].len();
    let p = feature_map.dimension(input_dim);
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for ((x, &y), &w) in samples.inputs.iter().zip(&samples.targets).zip(&samples.weights) {
        if x.len() != input_dim {
            return Err(Error::Argument("inputs have inconsistent dimension".into()));
        }
        let phi = DVector::from_vec(feature_map.features(x));
        gram.syger(w, &phi, &phi, 1.0);
        rhs.axpy(w * y, &phi, 1.0);
    }
    for i in 0..p {
        gram[(i, i)] += RIDGE;
    }
    let solution = match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("normal equations are singular".into()))?,
    };
    if solution.iter().any(|c| !c.is_finite()) {
        return Err(Error::Singular("normal-equation solution is not finite".into()));
    }
    Ok(LinearModel {
        coefficients: solution.iter().copied().collect(),
        feature_map,
    })
}

/// Mean squared error on a held-out sample.
pub fn population_risk_proxy(model: &LinearModel, inputs: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::Argument(format!(
            "evaluation set has {} inputs and {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    Ok(inputs
        .iter()
        .zip(targets)
        .map(|(x, &y)| squared_error_loss(model.predict(x), y))
        .sum::<f64>()
        / inputs.len() as f64)
}

/// `r - LURE(theta*)`, with the trajectory's losses recomputed under
/// `model_star`.
pub fn overfitting_bias(pool: &LabeledPool, traj: &Trajectory, model_star: &LinearModel, r_proxy: f64) -> Result<f64> {
    let relabeled = model_star.pool_losses(pool)?;
    Ok(r_proxy - lure_estimate(&traj.relabel(&relabeled)?)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::sample_trajectory;
    use crate::proposals::ProposalRule;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    fn objective(samples: &WeightedSampleSet, model: &LinearModel) -> f64 {
        samples
            .inputs
            .iter()
            .zip(&samples.targets)
            .zip(&samples.weights)
            .map(|((x, &y), &w)| w * squared_error_loss(model.predict(x), y))
            .sum::<f64>()
            + RIDGE * model.coefficients.iter().map(|c| c * c).sum::<f64>()
    }

    #[test]
    fn squared_error_examples() {
        assert_eq!(squared_error_loss(3.0, 3.0), 0.0);
        assert_eq!(squared_error_loss(0.0, 2.0), 4.0);
        assert_eq!(squared_error_loss(-1.0, 1.0), 4.0);
    }

    #[test]
    fn interpolates_two_points() {
        let s = WeightedSampleSet::unweighted(scalar(&[0.0, 1.0]), vec![1.0, 3.0]).unwrap();
        let m = fit_weighted_least_squares(&s, FeatureMap::Identity).unwrap();
        assert_relative_eq!(m.coefficients[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(m.coefficients[1], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn common_weight_is_irrelevant() {
        for w in [0.1, 1.0, 7.5] {
            let s = WeightedSampleSet::new(scalar(&[0.0, 1.0, 2.0]), vec![0.0, 1.0, 2.0], vec![w; 3]).unwrap();
            let m = fit_weighted_least_squares(&s, FeatureMap::Identity).unwrap();
            assert!(m.coefficients[0].abs() < 1e-8);
            assert_relative_eq!(m.coefficients[1], 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_weight_drops_a_point() {
        let s = WeightedSampleSet::new(scalar(&[0.0, 1.0]), vec![1.0, 99.0], vec![1.0, 0.0]).unwrap();
        let m = fit_weighted_least_squares(&s, FeatureMap::Identity).unwrap();
        // oracle: the only remaining point is (0, 1); ridge shrinks the
        // unconstrained slope to zero
        let reduced = WeightedSampleSet::unweighted(scalar(&[0.0]), vec![1.0]).unwrap();
        let r = fit_weighted_least_squares(&reduced, FeatureMap::Identity).unwrap();
        assert_relative_eq!(m.coefficients[0], 1.0, epsilon = 1e-8);
        assert!(m.coefficients[1].abs() < 1e-8);
        assert_relative_eq!(m.coefficients[0], r.coefficients[0], epsilon = 1e-12);
        assert_relative_eq!(m.coefficients[1], r.coefficients[1], epsilon = 1e-12);
    }

    #[test]
    fn polynomial_features() {
        let f = FeatureMap::Polynomial { degree: 3 };
        assert_eq!(f.features(&[2.0]), vec![1.0, 2.0, 4.0, 8.0]);
        assert_eq!(f.dimension(1), 4);
        assert_eq!(FeatureMap::Identity.features(&[2.0, 3.0]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn fit_errors() {
        assert!(WeightedSampleSet::new(scalar(&[0.0]), vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(WeightedSampleSet::new(vec![], vec![], vec![]).is_err());
        assert!(WeightedSampleSet::new(scalar(&[0.0]), vec![1.0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn risk_proxy_examples() {
        let truth = LinearModel {
            coefficients: vec![1.0, 2.0],
            feature_map: FeatureMap::Identity,
        };
        let xs = scalar(&[0.0, 0.5, 3.0]);
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x[0]).collect();
        assert_eq!(population_risk_proxy(&truth, &xs, &ys).unwrap(), 0.0);
        let zero = LinearModel {
            coefficients: vec![0.0, 0.0],
            feature_map: FeatureMap::Identity,
        };
        assert_eq!(population_risk_proxy(&zero, &xs, &[2.0; 3]).unwrap(), 4.0);
        assert!(population_risk_proxy(&zero, &[], &[]).is_err());
    }

    #[test]
    fn full_pool_unit_weights_match_ideal_fit() {
        let xs = [0.0, 0.3, 0.7, 1.1, 1.4, 2.0];
        let ys = [0.1, 0.5, 0.4, 1.3, 1.2, 2.5];
        let pool = LabeledPool::new(scalar(&xs), ys.to_vec()).unwrap();
        let ideal = fit_weighted_least_squares(
            &WeightedSampleSet::unweighted(scalar(&xs), ys.to_vec()).unwrap(),
            FeatureMap::Identity,
        )
        .unwrap();
        let pool = ideal.pool_losses(&pool).unwrap();
        let t = sample_trajectory(&pool, &ProposalRule::uniform(), 6, 3).unwrap();
        let s = WeightedSampleSet::from_trajectory(&pool, &t, &[1.0; 6]).unwrap();
        let fit = fit_weighted_least_squares(&s, FeatureMap::Identity).unwrap();
        for (a, b) in fit.coefficients.iter().zip(&ideal.coefficients) {
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
    }

    #[test]
    fn interpolating_polynomial_has_positive_overfitting_bias() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (6.0 * x).sin()).collect();
        let pool = LabeledPool::new(scalar(&xs), ys.clone()).unwrap();
        let pool = pool.with_losses(vec![1.0; 8]).unwrap();
        let t = sample_trajectory(&pool, &ProposalRule::uniform(), 4, 1).unwrap();
        let s = WeightedSampleSet::from_trajectory(&pool, &t, &[1.0; 4]).unwrap();
        let star = fit_weighted_least_squares(&s, FeatureMap::Polynomial { degree: 3 }).unwrap();
        let r = population_risk_proxy(&star, &scalar(&xs), &ys).unwrap();
        let b = overfitting_bias(&pool, &t, &star, r).unwrap();
        assert!(r > 0.0);
        assert_relative_eq!(b, r, max_relative = 1e-6);
    }

    proptest! {
        #[test]
        fn solution_zeroes_the_gradient(
            xs in prop::collection::vec(-2.0f64..2.0, 4..12),
            noise in prop::collection::vec(-1.0f64..1.0, 12),
            ws in prop::collection::vec(0.1f64..3.0, 12),
        ) {
            let n = xs.len();
            let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, e)| 0.5 - 1.5 * x + e).collect();
            let s = WeightedSampleSet::new(scalar(&xs), ys, ws[..n].to_vec()).unwrap();
            let model = fit_weighted_least_squares(&s, FeatureMap::Polynomial { degree: 2 }).unwrap();
            let h = 1e-6;
            for k in 0..model.coefficients.len() {
                let mut plus = model.clone();
                let mut minus = model.clone();
                plus.coefficients[k] += h;
                minus.coefficients[k] -= h;
                let grad = (objective(&s, &plus) - objective(&s, &minus)) / (2.0 * h);
                let scale = objective(&s, &model).max(1.0);
                prop_assert!(grad.abs() < 1e-4 * scale, "coefficient {k}: gradient {grad}");
            }
        }
    }
}
