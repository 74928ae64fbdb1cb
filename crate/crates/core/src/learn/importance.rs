//! Permutation feature importance: F1 drop when one column is shuffled.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::features::EncodedMatrix;
use crate::scalar::Scalar;

use super::{Classifier, LearnError};

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct FeatureImportance<S: Scalar> {
    pub feature: String,
    /// Baseline F1 minus F1 with the column shuffled, one per repeat.
    pub drops: Vec<S>,
    pub mean_drop: S,
    pub median_drop: S,
}

fn median<S: Scalar>(values: &[S]) -> S {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / S::from_f64_lossy(2.0)
    }
}

/// Shuffle seed for (feature, repeat), independent of iteration order.
fn shuffle_seed(seed: u64, feature: usize, repeat: usize) -> u64 {
    seed.wrapping_mul(0x100_0000_01b3)
        .wrapping_add((feature as u64) << 20)
        .wrapping_add(repeat as u64)
}

/// Permutation importance of every column on held-out data.
pub fn permutation_importance<S: Scalar, C: Classifier<S>>(
    classifier: &C,
    matrix: &EncodedMatrix<S>,
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureImportance<S>>, LearnError> {
    let baseline = classifier.evaluate(matrix)?.f1;
    let mut out = Vec::with_capacity(matrix.n_cols());
    for feature in 0..matrix.n_cols() {
        let mut drops = Vec::with_capacity(n_repeats);
        for repeat in 0..n_repeats {
            let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed(seed, feature, repeat));
            let mut column: Vec<S> = matrix.rows.iter().map(|r| r[feature]).collect();
            column.shuffle(&mut rng);
            let mut shuffled = matrix.clone();
            for (row, v) in shuffled.rows.iter_mut().zip(column) {
                row[feature] = v;
            }
            let f1 = classifier.evaluate(&shuffled)?.f1;
            drops.push(baseline - f1);
        }
        out.push(FeatureImportance {
            feature: matrix.columns[feature].clone(),
            mean_drop: drops.iter().copied().sum::<S>() / S::from_usize_lossy(drops.len()),
            median_drop: median(&drops),
            drops,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{train, Algorithm, HyperParams};
    use rand::Rng;

    fn synthetic(n: usize, seed: u64) -> EncodedMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let label = rng.gen_bool(0.5);
            let informative = if label {
                rng.gen_range(0.6..1.0)
            } else {
                rng.gen_range(0.0..0.4)
            };
            let mut row = vec![informative];
            for _ in 0..5 {
                row.push(rng.gen_range(0.0..1.0));
            }
            rows.push(row);
            labels.push(label);
        }
        EncodedMatrix {
            columns: (0..6).map(|i| format!("f{i}")).collect(),
            rows,
            labels,
            schema_fingerprint: "test".to_string(),
        }
    }

    #[test]
    fn constant_column_has_zero_drop() {
        let mut m = synthetic(200, 1);
        for row in &mut m.rows {
            row[3] = 1.0;
        }
        let params = HyperParams {
            n_estimators: 10,
            ..Default::default()
        };
        let model = train(Algorithm::RandomForest, &m, &params).unwrap();
        let imp = permutation_importance(&model, &m, 5, 2).unwrap();
        assert!(imp[3].drops.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn informative_feature_has_top_median_drop() {
        let train_m = synthetic(1000, 3);
        let test_m = synthetic(400, 4);
        let params = HyperParams {
            n_estimators: 30,
            ..Default::default()
        };
        let model = train(Algorithm::RandomForest, &train_m, &params).unwrap();
        let imp = permutation_importance(&model, &test_m, 10, 2).unwrap();
        let top = imp
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.median_drop.partial_cmp(&b.1.median_drop).unwrap())
            .unwrap()
            .0;
        assert_eq!(top, 0);
    }

    #[test]
    fn deterministic_given_seed() {
        let m = synthetic(200, 5);
        let params = HyperParams {
            n_estimators: 5,
            ..Default::default()
        };
        let model = train(Algorithm::RandomForest, &m, &params).unwrap();
        let a = permutation_importance(&model, &m, 3, 9).unwrap();
        let b = permutation_importance(&model, &m, 3, 9).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.drops, y.drops);
        }
    }
}
