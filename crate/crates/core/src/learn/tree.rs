//! CART decision trees: Gini classification trees (with optional instance
//! weights and extra-trees randomized thresholds) and variance-reduction
//! regression trees used by the boosting stages.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::{HyperParams, MaxFeatures};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub enum ClassNode<S: Scalar> {
    Split {
        feature: usize,
        threshold: S,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Weighted class mass at the leaf: [negative, positive].
        counts: [f64; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ClassificationTree<S: Scalar> {
    pub nodes: Vec<ClassNode<S>>,
}

/// How split thresholds are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStyle {
    /// Exhaustive best threshold per candidate feature.
    Best,
    /// One uniform random threshold per candidate feature (extra trees).
    Random,
}

fn gini(counts: [f64; 2]) -> f64 {
    let n = counts[0] + counts[1];
    if n <= 0.0 {
        return 0.0;
    }
    let p0 = counts[0] / n;
    let p1 = counts[1] / n;
    1.0 - p0 * p0 - p1 * p1
}

/// Candidate feature indices for one node, ascending for deterministic
/// tie-breaking.
fn sample_features(n_cols: usize, max_features: MaxFeatures, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let count = match max_features {
        MaxFeatures::All => n_cols,
        MaxFeatures::Count(c) => c.clamp(1, n_cols),
        MaxFeatures::Fraction(f) => {
            (((n_cols as f64) * f).round() as usize).clamp(1, n_cols)
        }
    };
    if count >= n_cols {
        return (0..n_cols).collect();
    }
    let mut all: Vec<usize> = (0..n_cols).collect();
    all.shuffle(rng);
    let mut picked: Vec<usize> = all.into_iter().take(count).collect();
    picked.sort_unstable();
    picked
}

struct BestSplit<S> {
    feature: usize,
    threshold: S,
    /// Weighted child impurity (lower is better).
    score: f64,
}

pub(super) struct TreeBuilder<'a, S: Scalar> {
    pub rows: &'a [Vec<S>],
    pub params: &'a HyperParams,
    pub style: SplitStyle,
}

impl<'a, S: Scalar> TreeBuilder<'a, S> {
    fn class_counts(&self, idx: &[usize], labels: &[bool], weights: Option<&[f64]>) -> [f64; 2] {
        let mut counts = [0.0, 0.0];
        for &i in idx {
            let w = weights.map_or(1.0, |w| w[i]);
            counts[labels[i] as usize] += w;
        }
        counts
    }

    fn best_threshold_for_feature(
        &self,
        idx: &[usize],
        labels: &[bool],
        weights: Option<&[f64]>,
        feature: usize,
        parent: [f64; 2],
        rng: &mut ChaCha8Rng,
    ) -> Option<(S, f64)> {
        let min_leaf = self.params.min_samples_leaf;
        match self.style {
            SplitStyle::Best => {
                let mut sorted: Vec<usize> = idx.to_vec();
                sorted.sort_by(|&a, &b| {
                    self.rows[a][feature]
                        .partial_cmp(&self.rows[b][feature])
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                let total = parent;
                let total_n = total[0] + total[1];
                let mut left = [0.0, 0.0];
                let mut best: Option<(S, f64)> = None;
                for (pos, &i) in sorted.iter().enumerate() {
                    let w = weights.map_or(1.0, |w| w[i]);
                    left[labels[i] as usize] += w;
                    let next = pos + 1;
                    if next < min_leaf || sorted.len() - next < min_leaf || next == sorted.len() {
                        continue;
                    }
                    let here = self.rows[i][feature];
                    let after = self.rows[sorted[next]][feature];
                    if here == after {
                        continue;
                    }
                    let right = [total[0] - left[0], total[1] - left[1]];
                    let left_n = left[0] + left[1];
                    let right_n = right[0] + right[1];
                    let score = (left_n * gini(left) + right_n * gini(right)) / total_n;
                    let threshold = (here + after) / S::from_f64_lossy(2.0);
                    if best.as_ref().is_none_or(|b| score < b.1) {
                        best = Some((threshold, score));
                    }
                }
                best
            }
            SplitStyle::Random => {
                let (mut lo, mut hi) = (S::infinity(), S::neg_infinity());
                for &i in idx {
                    let v = self.rows[i][feature];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                if lo >= hi {
                    return None;
                }
                let u: f64 = rng.gen_range(0.0..1.0);
                let threshold = lo + (hi - lo) * S::from_f64_lossy(u);
                // Degenerate draw lands everything on one side.
                let mut split = [[0.0, 0.0], [0.0, 0.0]];
                let mut sizes = [0usize, 0usize];
                for &i in idx {
                    let side = (self.rows[i][feature] > threshold) as usize;
                    split[side][labels[i] as usize] += weights.map_or(1.0, |w| w[i]);
                    sizes[side] += 1;
                }
                if sizes[0] < min_leaf || sizes[1] < min_leaf {
                    return None;
                }
                let total_n = parent[0] + parent[1];
                let left_n = split[0][0] + split[0][1];
                let right_n = split[1][0] + split[1][1];
                let score =
                    (left_n * gini(split[0]) + right_n * gini(split[1])) / total_n;
                Some((threshold, score))
            }
        }
    }

    fn find_split(
        &self,
        idx: &[usize],
        labels: &[bool],
        weights: Option<&[f64]>,
        parent: [f64; 2],
        rng: &mut ChaCha8Rng,
    ) -> Option<BestSplit<S>> {
        let n_cols = self.rows[idx[0]].len();
        let candidates = sample_features(n_cols, self.params.max_features, rng);
        let mut best: Option<BestSplit<S>> = None;
        for feature in candidates {
            if let Some((threshold, score)) =
                self.best_threshold_for_feature(idx, labels, weights, feature, parent, rng)
            {
                if best.as_ref().is_none_or(|b| score < b.score) {
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        score,
                    });
                }
            }
        }
        // Reject splits that do not reduce impurity at all.
        best.filter(|b| b.score < gini(parent) - 1e-12)
    }

    pub fn fit(
        &self,
        idx: &[usize],
        labels: &[bool],
        weights: Option<&[f64]>,
        rng: &mut ChaCha8Rng,
    ) -> ClassificationTree<S> {
        let mut nodes = Vec::new();
        self.grow(idx, labels, weights, 0, rng, &mut nodes);
        ClassificationTree { nodes }
    }

    fn grow(
        &self,
        idx: &[usize],
        labels: &[bool],
        weights: Option<&[f64]>,
        depth: usize,
        rng: &mut ChaCha8Rng,
        nodes: &mut Vec<ClassNode<S>>,
    ) -> usize {
        let counts = self.class_counts(idx, labels, weights);
        let leaf = |nodes: &mut Vec<ClassNode<S>>| {
            nodes.push(ClassNode::Leaf { counts });
            nodes.len() - 1
        };
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok
            || idx.len() < self.params.min_samples_split
            || counts[0] == 0.0
            || counts[1] == 0.0
        {
            return leaf(nodes);
        }
        let Some(split) = self.find_split(idx, labels, weights, counts, rng) else {
            return leaf(nodes);
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.rows[i][split.feature] <= split.threshold);
        if left_idx.len() < self.params.min_samples_leaf
            || right_idx.len() < self.params.min_samples_leaf
        {
            return leaf(nodes);
        }
        let node = nodes.len();
        nodes.push(ClassNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: 0,
            right: 0,
        });
        let left = self.grow(&left_idx, labels, weights, depth + 1, rng, nodes);
        let right = self.grow(&right_idx, labels, weights, depth + 1, rng, nodes);
        if let ClassNode::Split {
            left: l, right: r, ..
        } = &mut nodes[node]
        {
            *l = left;
            *r = right;
        }
        node
    }
}

impl<S: Scalar> ClassificationTree<S> {
    /// Leaf class-frequency probability [negative, positive].
    pub fn predict_proba_row(&self, row: &[S]) -> [S; 2] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                ClassNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
                ClassNode::Leaf { counts } => {
                    let n = counts[0] + counts[1];
                    if n == 0.0 {
                        return [S::from_f64_lossy(0.5), S::from_f64_lossy(0.5)];
                    }
                    return [
                        S::from_f64_lossy(counts[0] / n),
                        S::from_f64_lossy(counts[1] / n),
                    ];
                }
            }
        }
    }

    pub fn predict_row(&self, row: &[S]) -> bool {
        let p = self.predict_proba_row(row);
        p[1] > p[0]
    }
}

// ---------------------------------------------------------------------------
// Regression tree for gradient boosting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub enum RegNode<S: Scalar> {
    Split {
        feature: usize,
        threshold: S,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RegressionTree<S: Scalar> {
    pub nodes: Vec<RegNode<S>>,
}

pub(super) struct RegTreeBuilder<'a, S: Scalar> {
    pub rows: &'a [Vec<S>],
    /// Per-instance gradients (the regression targets).
    pub gradients: &'a [f64],
    /// Per-instance hessians, for the Newton leaf value.
    pub hessians: &'a [f64],
    pub params: &'a HyperParams,
    pub max_depth: usize,
}

impl<'a, S: Scalar> RegTreeBuilder<'a, S> {
    fn sums(&self, idx: &[usize]) -> (f64, f64, f64) {
        let mut g = 0.0;
        let mut g2 = 0.0;
        let mut h = 0.0;
        for &i in idx {
            g += self.gradients[i];
            g2 += self.gradients[i] * self.gradients[i];
            h += self.hessians[i];
        }
        (g, g2, h)
    }

    /// Sum of squared errors around the node mean.
    fn sse(g: f64, g2: f64, n: f64) -> f64 {
        if n <= 0.0 {
            0.0
        } else {
            g2 - g * g / n
        }
    }

    fn leaf_value(&self, idx: &[usize]) -> f64 {
        let (g, _, h) = self.sums(idx);
        // Single Newton step for binomial deviance.
        g / (h + 1e-16)
    }

    fn find_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, S)> {
        let n_cols = self.rows[idx[0]].len();
        let candidates = sample_features(n_cols, self.params.max_features, rng);
        let min_leaf = self.params.min_samples_leaf;
        let (g_total, g2_total, _) = self.sums(idx);
        let parent_sse = Self::sse(g_total, g2_total, idx.len() as f64);

        let mut best: Option<(usize, S, f64)> = None;
        for feature in candidates {
            let mut sorted: Vec<usize> = idx.to_vec();
            sorted.sort_by(|&a, &b| {
                self.rows[a][feature]
                    .partial_cmp(&self.rows[b][feature])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut g_left = 0.0;
            let mut g2_left = 0.0;
            for (pos, &i) in sorted.iter().enumerate() {
                g_left += self.gradients[i];
                g2_left += self.gradients[i] * self.gradients[i];
                let next = pos + 1;
                if next < min_leaf || sorted.len() - next < min_leaf || next == sorted.len() {
                    continue;
                }
                let here = self.rows[i][feature];
                let after = self.rows[sorted[next]][feature];
                if here == after {
                    continue;
                }
                let score = Self::sse(g_left, g2_left, next as f64)
                    + Self::sse(
                        g_total - g_left,
                        g2_total - g2_left,
                        (sorted.len() - next) as f64,
                    );
                if best.as_ref().is_none_or(|b| score < b.2) {
                    let threshold = (here + after) / S::from_f64_lossy(2.0);
                    best = Some((feature, threshold, score));
                }
            }
        }
        best.filter(|b| b.2 < parent_sse - 1e-12)
            .map(|(f, t, _)| (f, t))
    }

    pub fn fit(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> RegressionTree<S> {
        let mut nodes = Vec::new();
        self.grow(idx, 0, rng, &mut nodes);
        RegressionTree { nodes }
    }

    fn grow(
        &self,
        idx: &[usize],
        depth: usize,
        rng: &mut ChaCha8Rng,
        nodes: &mut Vec<RegNode<S>>,
    ) -> usize {
        if depth >= self.max_depth || idx.len() < self.params.min_samples_split {
            nodes.push(RegNode::Leaf {
                value: self.leaf_value(idx),
            });
            return nodes.len() - 1;
        }
        let Some((feature, threshold)) = self.find_split(idx, rng) else {
            nodes.push(RegNode::Leaf {
                value: self.leaf_value(idx),
            });
            return nodes.len() - 1;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.rows[i][feature] <= threshold);
        let node = nodes.len();
        nodes.push(RegNode::Split {
            feature,
            threshold,
            left: 0,
            right: 0,
        });
        let left = self.grow(&left_idx, depth + 1, rng, nodes);
        let right = self.grow(&right_idx, depth + 1, rng, nodes);
        if let RegNode::Split {
            left: l, right: r, ..
        } = &mut nodes[node]
        {
            *l = left;
            *r = right;
        }
        node
    }
}

impl<S: Scalar> RegressionTree<S> {
    pub fn predict_row(&self, row: &[S]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
                RegNode::Leaf { value } => return *value,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn params() -> HyperParams {
        HyperParams::default()
    }

    #[test]
    fn separable_one_feature_perfect_fit() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0]).collect();
        let labels: Vec<bool> = (0..10).map(|i| i >= 5).collect();
        let mut p = params();
        p.max_depth = Some(1);
        let builder = TreeBuilder {
            rows: &rows,
            params: &p,
            style: SplitStyle::Best,
        };
        let idx: Vec<usize> = (0..10).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = builder.fit(&idx, &labels, None, &mut rng);
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(r, &l)| tree.predict_row(r) == l)
            .count();
        assert_eq!(correct, 10);
    }

    #[test]
    fn gini_closed_forms() {
        assert_eq!(gini([4.0, 0.0]), 0.0);
        assert!((gini([5.0, 5.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn leaf_frequency_probability() {
        let tree = ClassificationTree::<f64> {
            nodes: vec![ClassNode::Leaf { counts: [1.0, 3.0] }],
        };
        assert_eq!(tree.predict_proba_row(&[0.0]), [0.25, 0.75]);
    }

    #[test]
    fn consistent_data_unlimited_depth_fits_training_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] + r[1] > 1.0).collect();
        let builder = TreeBuilder {
            rows: &rows,
            params: &params(),
            style: SplitStyle::Best,
        };
        let idx: Vec<usize> = (0..rows.len()).collect();
        let tree = builder.fit(&idx, &labels, None, &mut rng);
        assert!(rows.iter().zip(&labels).all(|(r, &l)| tree.predict_row(r) == l));
    }
}
