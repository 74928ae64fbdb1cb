//! Bagged tree ensembles: random forest (bootstrap + best splits) and
//! extra trees (full sample + random thresholds).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::tree::{ClassificationTree, SplitStyle, TreeBuilder};
use super::HyperParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Forest<S: Scalar> {
    pub trees: Vec<ClassificationTree<S>>,
    pub bootstrap: bool,
}

/// Seed for tree `i`, independent of training schedule.
fn tree_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub(super) fn train_forest<S: Scalar>(
    rows: &[Vec<S>],
    labels: &[bool],
    params: &HyperParams,
    style: SplitStyle,
    bootstrap: bool,
) -> Forest<S> {
    let n = rows.len();
    let trees: Vec<ClassificationTree<S>> = (0..params.n_estimators)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(params.seed, i));
            let idx: Vec<usize> = if bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let builder = TreeBuilder {
                rows,
                params,
                style,
            };
            builder.fit(&idx, labels, None, &mut rng)
        })
        .collect();
    Forest { trees, bootstrap }
}

impl<S: Scalar> Forest<S> {
    /// Arithmetic mean of member-tree leaf frequencies.
    pub fn predict_proba_row(&self, row: &[S]) -> [S; 2] {
        let mut sum = [S::zero(), S::zero()];
        for tree in &self.trees {
            let p = tree.predict_proba_row(row);
            sum[0] = sum[0] + p[0];
            sum[1] = sum[1] + p[1];
        }
        let n = S::from_usize_lossy(self.trees.len());
        [sum[0] / n, sum[1] / n]
    }
}
