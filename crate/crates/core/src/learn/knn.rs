//! K-nearest-neighbors baseline (Euclidean distance, k = 5).

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub const K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct KnnModel<S: Scalar> {
    pub rows: Vec<Vec<S>>,
    pub labels: Vec<bool>,
    pub k: usize,
}

pub(super) fn train_knn<S: Scalar>(rows: &[Vec<S>], labels: &[bool]) -> KnnModel<S> {
    KnnModel {
        rows: rows.to_vec(),
        labels: labels.to_vec(),
        k: K.min(rows.len()),
    }
}

impl<S: Scalar> KnnModel<S> {
    pub fn predict_proba_row(&self, row: &[S]) -> [S; 2] {
        let mut dists: Vec<(S, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let d: S = r
                    .iter()
                    .zip(row)
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .fold(S::zero(), |acc, v| acc + v);
                (d, i)
            })
            .collect();
        // Stable by training index on distance ties.
        dists.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });
        let pos = dists
            .iter()
            .take(self.k)
            .filter(|&&(_, i)| self.labels[i])
            .count();
        let p = S::from_usize_lossy(pos) / S::from_usize_lossy(self.k);
        [S::one() - p, p]
    }
}
