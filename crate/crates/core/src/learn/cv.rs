//! Stratified k-fold cross-validation and exhaustive grid search.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::features::EncodedMatrix;
use crate::scalar::Scalar;

use super::{train, Algorithm, Classifier, HyperParams, LearnError, MaxFeatures};

/// Validation-fold index sets: disjoint, covering all rows, with per-fold
/// class counts within one instance of the global ratio.
pub fn stratified_kfold(
    labels: &[bool],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, LearnError> {
    if k < 2 {
        return Err(LearnError::InvalidParams("k must be >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in [false, true] {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < k {
            return Err(LearnError::TooFewInstances(class, k));
        }
        members.shuffle(&mut rng);
        for (pos, idx) in members.into_iter().enumerate() {
            folds[pos % k].push(idx);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct CvScores<S: Scalar> {
    pub fold_f1: Vec<S>,
    pub mean: S,
    pub std: S,
}

impl<S: Scalar> CvScores<S> {
    fn from_folds(fold_f1: Vec<S>) -> Self {
        let n = S::from_usize_lossy(fold_f1.len());
        let mean = fold_f1.iter().copied().sum::<S>() / n;
        let var = fold_f1
            .iter()
            .map(|&f| (f - mean) * (f - mean))
            .sum::<S>()
            / n;
        CvScores {
            fold_f1,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Per-fold F1 of `algorithm` under stratified k-fold CV.
pub fn cross_validate<S: Scalar>(
    algorithm: Algorithm,
    matrix: &EncodedMatrix<S>,
    params: &HyperParams,
    k: usize,
) -> Result<CvScores<S>, LearnError> {
    let folds = stratified_kfold(&matrix.labels, k, params.seed)?;
    let all: Vec<usize> = (0..matrix.n_rows()).collect();
    let mut fold_f1 = Vec::with_capacity(k);
    for fold in &folds {
        let train_idx: Vec<usize> =
            all.iter().copied().filter(|i| !fold.contains(i)).collect();
        let model = train(algorithm, &matrix.subset(&train_idx), params)?;
        let validate = matrix.subset(fold);
        fold_f1.push(model.evaluate(&validate)?.f1);
    }
    Ok(CvScores::from_folds(fold_f1))
}

/// Grid of candidate values per hyper-parameter. Empty axes fall back to
/// the base parameter value; the cartesian product is walked in field
/// order with earlier points winning ties.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ParamGrid {
    pub max_features: Vec<MaxFeatures>,
    pub min_samples_split: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
    pub n_estimators: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub max_depth: Vec<Option<usize>>,
}

impl ParamGrid {
    /// All grid points, substituting base values for empty axes.
    pub fn points(&self, base: &HyperParams) -> Vec<HyperParams> {
        fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
            if values.is_empty() {
                vec![base]
            } else {
                values.to_vec()
            }
        }
        let mut points = Vec::new();
        for mf in axis(&self.max_features, base.max_features) {
            for mss in axis(&self.min_samples_split, base.min_samples_split) {
                for msl in axis(&self.min_samples_leaf, base.min_samples_leaf) {
                    for ne in axis(&self.n_estimators, base.n_estimators) {
                        for lr in axis(&self.learning_rate, base.learning_rate) {
                            for md in axis(&self.max_depth, base.max_depth) {
                                points.push(HyperParams {
                                    max_features: mf,
                                    min_samples_split: mss,
                                    min_samples_leaf: msl,
                                    n_estimators: ne,
                                    learning_rate: lr,
                                    max_depth: md,
                                    seed: base.seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        points
    }

    /// Single-point grid at the best settings found in training for this
    /// algorithm and instance type (site vs request).
    pub fn tuned_best(algorithm: Algorithm, target: crate::features::Target) -> ParamGrid {
        use crate::features::Target;
        let mut grid = ParamGrid::default();
        match (algorithm, target) {
            (Algorithm::RandomForest, Target::Site) => {
                grid.max_features = vec![MaxFeatures::Count(1)];
                grid.min_samples_split = vec![8];
                grid.min_samples_leaf = vec![3];
                grid.n_estimators = vec![100];
            }
            (Algorithm::RandomForest, Target::Request) => {
                grid.max_features = vec![MaxFeatures::Count(1)];
                grid.min_samples_split = vec![2];
                grid.min_samples_leaf = vec![1];
                grid.n_estimators = vec![300];
            }
            (Algorithm::ExtraTrees, Target::Site) => {
                grid.max_features = vec![MaxFeatures::Count(10)];
                grid.min_samples_split = vec![2];
                grid.min_samples_leaf = vec![3];
                grid.n_estimators = vec![300];
            }
            (Algorithm::ExtraTrees, Target::Request) => {
                grid.max_features = vec![MaxFeatures::Count(1)];
                grid.min_samples_split = vec![2];
                grid.min_samples_leaf = vec![1];
                grid.n_estimators = vec![100];
            }
            (Algorithm::GradientBoosting, Target::Site) => {
                grid.max_features = vec![MaxFeatures::Fraction(0.3)];
                grid.min_samples_leaf = vec![100];
                grid.n_estimators = vec![300];
                grid.learning_rate = vec![0.2];
                grid.max_depth = vec![Some(8)];
            }
            _ => {}
        }
        grid
    }
}

/// Exhaustive grid search by mean CV F1; first-in-grid order wins ties.
pub fn grid_search<S: Scalar>(
    algorithm: Algorithm,
    matrix: &EncodedMatrix<S>,
    grid: &ParamGrid,
    base: &HyperParams,
    k: usize,
) -> Result<(HyperParams, CvScores<S>), LearnError> {
    let points = grid.points(base);
    let mut best: Option<(HyperParams, CvScores<S>)> = None;
    for params in points {
        let scores = cross_validate(algorithm, matrix, &params, k)?;
        if best.as_ref().is_none_or(|(_, b)| scores.mean > b.mean) {
            best = Some((params, scores));
        }
    }
    best.ok_or(LearnError::EmptyInput("parameter grid"))
}
