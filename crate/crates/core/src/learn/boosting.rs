//! Boosted ensembles: gradient boosting with binomial deviance and a
//! single Newton step per leaf, plus SAMME AdaBoost over decision stumps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::tree::{
    ClassificationTree, RegTreeBuilder, RegressionTree, SplitStyle, TreeBuilder,
};
use super::{HyperParams, MaxFeatures};

const DEFAULT_GB_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct GradientBoosting<S: Scalar> {
    pub stages: Vec<RegressionTree<S>>,
    pub init_score: f64,
    pub learning_rate: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(super) fn train_gradient_boosting<S: Scalar>(
    rows: &[Vec<S>],
    labels: &[bool],
    params: &HyperParams,
) -> GradientBoosting<S> {
    let n = rows.len();
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let p0 = (pos / n as f64).clamp(1e-12, 1.0 - 1e-12);
    let init_score = (p0 / (1.0 - p0)).ln();

    let max_depth = params.max_depth.unwrap_or(DEFAULT_GB_DEPTH);
    let mut scores = vec![init_score; n];
    let mut stages = Vec::with_capacity(params.n_estimators);
    let idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    for _ in 0..params.n_estimators {
        let mut gradients = Vec::with_capacity(n);
        let mut hessians = Vec::with_capacity(n);
        for i in 0..n {
            let p = sigmoid(scores[i]);
            gradients.push((labels[i] as usize as f64) - p);
            hessians.push((p * (1.0 - p)).max(1e-16));
        }
        let builder = RegTreeBuilder {
            rows,
            gradients: &gradients,
            hessians: &hessians,
            params,
            max_depth,
        };
        let tree = builder.fit(&idx, &mut rng);
        for (i, row) in rows.iter().enumerate() {
            scores[i] += params.learning_rate * tree.predict_row(row);
        }
        stages.push(tree);
    }
    GradientBoosting {
        stages,
        init_score,
        learning_rate: params.learning_rate,
    }
}

impl<S: Scalar> GradientBoosting<S> {
    /// Logistic of the summed leaf scores.
    pub fn predict_proba_row(&self, row: &[S]) -> [S; 2] {
        let mut score = self.init_score;
        for tree in &self.stages {
            score += self.learning_rate * tree.predict_row(row);
        }
        let p = sigmoid(score);
        [S::from_f64_lossy(1.0 - p), S::from_f64_lossy(p)]
    }
}

// ---------------------------------------------------------------------------
// AdaBoost (SAMME, decision stumps)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct AdaBoost<S: Scalar> {
    pub stumps: Vec<ClassificationTree<S>>,
    pub alphas: Vec<f64>,
}

pub(super) fn train_adaboost<S: Scalar>(
    rows: &[Vec<S>],
    labels: &[bool],
    params: &HyperParams,
) -> AdaBoost<S> {
    let n = rows.len();
    let mut weights = vec![1.0 / n as f64; n];
    let mut stumps = Vec::new();
    let mut alphas = Vec::new();
    let idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let stump_params = HyperParams {
        max_depth: Some(1),
        max_features: MaxFeatures::All,
        min_samples_split: 2,
        min_samples_leaf: 1,
        ..params.clone()
    };

    for _ in 0..params.n_estimators {
        let builder = TreeBuilder {
            rows,
            params: &stump_params,
            style: SplitStyle::Best,
        };
        let stump = builder.fit(&idx, labels, Some(&weights), &mut rng);
        let err: f64 = rows
            .iter()
            .zip(labels)
            .zip(&weights)
            .filter(|((row, &label), _)| stump.predict_row(row) != label)
            .map(|(_, &w)| w)
            .sum();
        if err >= 0.5 {
            break;
        }
        let err = err.max(1e-12);
        let alpha = ((1.0 - err) / err).ln();
        for ((row, &label), w) in rows.iter().zip(labels).zip(weights.iter_mut()) {
            if stump.predict_row(row) != label {
                *w *= (1.0 - err) / err;
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        stumps.push(stump);
        alphas.push(alpha);
        if err <= 1e-12 {
            break; // perfect stump
        }
    }
    AdaBoost { stumps, alphas }
}

impl<S: Scalar> AdaBoost<S> {
    /// Normalized weighted vote of the stumps.
    pub fn predict_proba_row(&self, row: &[S]) -> [S; 2] {
        if self.stumps.is_empty() {
            return [S::from_f64_lossy(0.5), S::from_f64_lossy(0.5)];
        }
        let total: f64 = self.alphas.iter().sum();
        let pos: f64 = self
            .stumps
            .iter()
            .zip(&self.alphas)
            .filter(|(stump, _)| stump.predict_row(row))
            .map(|(_, &a)| a)
            .sum();
        let p = pos / total;
        [S::from_f64_lossy(1.0 - p), S::from_f64_lossy(p)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy() -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let labels = rows.iter().map(|r| r[0] > 0.5).collect();
        (rows, labels)
    }

    #[test]
    fn gradient_boosting_learns_separable_data() {
        let (rows, labels) = toy();
        let params = HyperParams {
            n_estimators: 20,
            ..Default::default()
        };
        let model = train_gradient_boosting(&rows, &labels, &params);
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(row, &l)| (model.predict_proba_row(row)[1] > 0.5) == l)
            .count();
        assert_eq!(correct, rows.len());
    }

    #[test]
    fn proba_sums_to_one() {
        let (rows, labels) = toy();
        let params = HyperParams {
            n_estimators: 5,
            ..Default::default()
        };
        let gb = train_gradient_boosting(&rows, &labels, &params);
        let ada = train_adaboost(&rows, &labels, &params);
        for row in rows.iter().take(10) {
            let p = gb.predict_proba_row(row);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
            let p = ada.predict_proba_row(row);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn adaboost_learns_separable_data() {
        let (rows, labels) = toy();
        let params = HyperParams {
            n_estimators: 10,
            ..Default::default()
        };
        let model = train_adaboost(&rows, &labels, &params);
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(row, &l)| (model.predict_proba_row(row)[1] > 0.5) == l)
            .count();
        assert_eq!(correct, rows.len());
    }
}
