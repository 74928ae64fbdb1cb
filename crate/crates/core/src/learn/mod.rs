//! Classifier training and evaluation: CART trees, bagged and boosted
//! ensembles, stratified cross-validation, grid search, soft voting, and
//! permutation importance.

pub mod boosting;
pub mod cv;
pub mod forest;
pub mod importance;
pub mod knn;
pub mod linear;
pub mod metrics;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::EncodedMatrix;
use crate::scalar::Scalar;

pub use cv::{cross_validate, grid_search, stratified_kfold, CvScores, ParamGrid};
pub use importance::{permutation_importance, FeatureImportance};
pub use metrics::{baseline_filterlist, Metrics};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training data contains a single class")]
    DegenerateData,
    #[error("invalid hyper-parameters: {0}")]
    InvalidParams(String),
    #[error("algorithm {0:?} is not supported in this artifact")]
    NotSupported(Algorithm),
    #[error("schema mismatch: model fingerprint {model}, data fingerprint {data}")]
    SchemaMismatch { model: String, data: String },
    #[error("class {0:?} has fewer than k={1} members")]
    TooFewInstances(bool, usize),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    DecisionTree,
    RandomForest,
    ExtraTrees,
    GradientBoosting,
    AdaBoost,
    Knn,
    LogisticRegression,
    /// Declared but unimplemented: the selected final models are all
    /// tree-based.
    Svc,
    Mlp,
    Lda,
}

impl Algorithm {
    pub const IMPLEMENTED: [Algorithm; 7] = [
        Algorithm::DecisionTree,
        Algorithm::RandomForest,
        Algorithm::ExtraTrees,
        Algorithm::GradientBoosting,
        Algorithm::AdaBoost,
        Algorithm::Knn,
        Algorithm::LogisticRegression,
    ];
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "decisiontree" | "tree" => Ok(Algorithm::DecisionTree),
            "randomforest" | "rf" => Ok(Algorithm::RandomForest),
            "extratrees" | "et" => Ok(Algorithm::ExtraTrees),
            "gradientboosting" | "gb" => Ok(Algorithm::GradientBoosting),
            "adaboost" => Ok(Algorithm::AdaBoost),
            "knn" => Ok(Algorithm::Knn),
            "logisticregression" | "logistic" => Ok(Algorithm::LogisticRegression),
            "svc" => Ok(Algorithm::Svc),
            "mlp" => Ok(Algorithm::Mlp),
            "lda" => Ok(Algorithm::Lda),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

/// Candidate features considered per split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    /// Absolute count of candidate features.
    Count(usize),
    /// Fraction of columns in (0, 1].
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for HyperParams {
    /// The common convention: 100 trees, Gini, unlimited depth, seed 2.
    fn default() -> Self {
        HyperParams {
            max_features: MaxFeatures::All,
            min_samples_split: 2,
            min_samples_leaf: 1,
            n_estimators: 100,
            learning_rate: 0.1,
            max_depth: None,
            seed: 2,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.min_samples_split < 2 {
            return Err(LearnError::InvalidParams("min_samples_split must be >= 2".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(LearnError::InvalidParams("min_samples_leaf must be >= 1".into()));
        }
        if self.n_estimators < 1 {
            return Err(LearnError::InvalidParams("n_estimators must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(LearnError::InvalidParams("learning_rate must be positive".into()));
        }
        if let MaxFeatures::Fraction(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return Err(LearnError::InvalidParams(
                    "max_features fraction must be in (0, 1]".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", rename_all = "snake_case")]
pub enum ModelKind<S: Scalar> {
    Tree(tree::ClassificationTree<S>),
    Forest(forest::Forest<S>),
    Boosted(boosting::GradientBoosting<S>),
    Ada(boosting::AdaBoost<S>),
    Knn(knn::KnnModel<S>),
    Logistic(linear::LogisticModel<S>),
}

/// A fitted model with its provenance: algorithm tag, parameters, class
/// list, and the fingerprint of the feature schema it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TrainedModel<S: Scalar> {
    pub algorithm: Algorithm,
    pub params: HyperParams,
    pub classes: [String; 2],
    pub schema_fingerprint: String,
    pub kind: ModelKind<S>,
}

/// Train `algorithm` on an encoded matrix. Deterministic given
/// (matrix, params, seed).
pub fn train<S: Scalar>(
    algorithm: Algorithm,
    matrix: &EncodedMatrix<S>,
    params: &HyperParams,
) -> Result<TrainedModel<S>, LearnError> {
    params.validate()?;
    if matrix.rows.is_empty() {
        return Err(LearnError::EmptyInput("training matrix"));
    }
    let positives = matrix.positives();
    if positives == 0 || positives == matrix.n_rows() {
        return Err(LearnError::DegenerateData);
    }

    let kind = match algorithm {
        Algorithm::DecisionTree => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed);
            let builder = tree::TreeBuilder {
                rows: &matrix.rows,
                params,
                style: tree::SplitStyle::Best,
            };
            let idx: Vec<usize> = (0..matrix.n_rows()).collect();
            ModelKind::Tree(builder.fit(&idx, &matrix.labels, None, &mut rng))
        }
        Algorithm::RandomForest => ModelKind::Forest(forest::train_forest(
            &matrix.rows,
            &matrix.labels,
            params,
            tree::SplitStyle::Best,
            true,
        )),
        Algorithm::ExtraTrees => ModelKind::Forest(forest::train_forest(
            &matrix.rows,
            &matrix.labels,
            params,
            tree::SplitStyle::Random,
            false,
        )),
        Algorithm::GradientBoosting => ModelKind::Boosted(boosting::train_gradient_boosting(
            &matrix.rows,
            &matrix.labels,
            params,
        )),
        Algorithm::AdaBoost => {
            ModelKind::Ada(boosting::train_adaboost(&matrix.rows, &matrix.labels, params))
        }
        Algorithm::Knn => ModelKind::Knn(knn::train_knn(&matrix.rows, &matrix.labels)),
        Algorithm::LogisticRegression => {
            ModelKind::Logistic(linear::train_logistic(&matrix.rows, &matrix.labels))
        }
        Algorithm::Svc | Algorithm::Mlp | Algorithm::Lda => {
            return Err(LearnError::NotSupported(algorithm))
        }
    };
    Ok(TrainedModel {
        algorithm,
        params: params.clone(),
        classes: ["negative".to_string(), "positive".to_string()],
        schema_fingerprint: matrix.schema_fingerprint.clone(),
        kind,
    })
}

/// Anything that scores encoded instances: a single model or a voting
/// ensemble.
pub trait Classifier<S: Scalar> {
    /// Per-instance class scores [negative, positive]. For single models
    /// these are probabilities summing to 1.
    fn predict_proba(&self, matrix: &EncodedMatrix<S>) -> Result<Vec<[S; 2]>, LearnError>;

    /// Argmax labels; exact ties break toward the negative class.
    fn predict(&self, matrix: &EncodedMatrix<S>) -> Result<Vec<bool>, LearnError> {
        Ok(self
            .predict_proba(matrix)?
            .into_iter()
            .map(|p| p[1] > p[0])
            .collect())
    }

    fn evaluate(&self, matrix: &EncodedMatrix<S>) -> Result<Metrics<S>, LearnError> {
        let predicted = self.predict(matrix)?;
        Ok(Metrics::from_predictions(&predicted, &matrix.labels))
    }
}

impl<S: Scalar> TrainedModel<S> {
    fn check_schema(&self, matrix: &EncodedMatrix<S>) -> Result<(), LearnError> {
        if self.schema_fingerprint != matrix.schema_fingerprint {
            return Err(LearnError::SchemaMismatch {
                model: self.schema_fingerprint.clone(),
                data: matrix.schema_fingerprint.clone(),
            });
        }
        Ok(())
    }

    pub fn predict_proba_row(&self, row: &[S]) -> [S; 2] {
        match &self.kind {
            ModelKind::Tree(m) => m.predict_proba_row(row),
            ModelKind::Forest(m) => m.predict_proba_row(row),
            ModelKind::Boosted(m) => m.predict_proba_row(row),
            ModelKind::Ada(m) => m.predict_proba_row(row),
            ModelKind::Knn(m) => m.predict_proba_row(row),
            ModelKind::Logistic(m) => m.predict_proba_row(row),
        }
    }
}

impl<S: Scalar> Classifier<S> for TrainedModel<S> {
    fn predict_proba(&self, matrix: &EncodedMatrix<S>) -> Result<Vec<[S; 2]>, LearnError> {
        self.check_schema(matrix)?;
        Ok(matrix.rows.iter().map(|row| self.predict_proba_row(row)).collect())
    }
}

/// Soft-voting ensemble: class scores are the *sums* of member
/// probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct VotingEnsemble<S: Scalar> {
    pub members: Vec<TrainedModel<S>>,
}

impl<S: Scalar> VotingEnsemble<S> {
    pub fn new(members: Vec<TrainedModel<S>>) -> Result<Self, LearnError> {
        if members.is_empty() {
            return Err(LearnError::EmptyInput("voting members"));
        }
        let fp = &members[0].schema_fingerprint;
        if members.iter().any(|m| &m.schema_fingerprint != fp) {
            return Err(LearnError::SchemaMismatch {
                model: fp.clone(),
                data: "mixed member fingerprints".to_string(),
            });
        }
        Ok(VotingEnsemble { members })
    }

    pub fn schema_fingerprint(&self) -> &str {
        &self.members[0].schema_fingerprint
    }
}

impl<S: Scalar> Classifier<S> for VotingEnsemble<S> {
    fn predict_proba(&self, matrix: &EncodedMatrix<S>) -> Result<Vec<[S; 2]>, LearnError> {
        let mut sums = vec![[S::zero(), S::zero()]; matrix.n_rows()];
        for member in &self.members {
            for (sum, p) in sums.iter_mut().zip(member.predict_proba(matrix)?) {
                sum[0] = sum[0] + p[0];
                sum[1] = sum[1] + p[1];
            }
        }
        Ok(sums)
    }
}

/// Soft-vote labels: argmax over summed member probabilities, ties toward
/// the negative class.
pub fn soft_vote<S: Scalar>(
    models: &[TrainedModel<S>],
    matrix: &EncodedMatrix<S>,
) -> Result<Vec<bool>, LearnError> {
    VotingEnsemble::new(models.to_vec())?.predict(matrix)
}
