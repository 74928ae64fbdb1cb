//! Pipeline configuration: a TOML document, with every key overridable
//! from the command line. The effective config is echoed into the output
//! directory for provenance.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Target;
use crate::learn::{Algorithm, MaxFeatures, ParamGrid};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("missing required setting: {0}")]
    Missing(&'static str),
    #[error("invalid setting: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolverMode {
    Offline,
    Live,
}

/// One grid axis value for `max_features`: integers are absolute counts,
/// reals in (0, 1) are column fractions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaxFeaturesSpec {
    Count(usize),
    Fraction(f64),
}

impl MaxFeaturesSpec {
    pub fn to_max_features(self) -> Result<MaxFeatures, ConfigError> {
        match self {
            MaxFeaturesSpec::Count(c) if c >= 1 => Ok(MaxFeatures::Count(c)),
            MaxFeaturesSpec::Fraction(f) if f > 0.0 && f < 1.0 => Ok(MaxFeatures::Fraction(f)),
            // A fraction of exactly 1.0 means all columns.
            MaxFeaturesSpec::Fraction(f) if (f - 1.0).abs() < f64::EPSILON => {
                Ok(MaxFeatures::All)
            }
            other => Err(ConfigError::Invalid(format!("max_features {other:?}"))),
        }
    }
}

/// Grid axes for one algorithm, as written in the config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub max_features: Vec<MaxFeaturesSpec>,
    #[serde(default)]
    pub min_samples_split: Vec<usize>,
    #[serde(default)]
    pub min_samples_leaf: Vec<usize>,
    #[serde(default)]
    pub n_estimators: Vec<usize>,
    #[serde(default)]
    pub learning_rate: Vec<f64>,
    /// 0 means unlimited depth.
    #[serde(default)]
    pub max_depth: Vec<usize>,
}

impl GridConfig {
    pub fn to_param_grid(&self) -> Result<ParamGrid, ConfigError> {
        Ok(ParamGrid {
            max_features: self
                .max_features
                .iter()
                .map(|s| s.to_max_features())
                .collect::<Result<_, _>>()?,
            min_samples_split: self.min_samples_split.clone(),
            min_samples_leaf: self.min_samples_leaf.clone(),
            n_estimators: self.n_estimators.clone(),
            learning_rate: self.learning_rate.clone(),
            max_depth: self
                .max_depth
                .iter()
                .map(|&d| if d == 0 { None } else { Some(d) })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub crawl: Option<PathBuf>,
    pub fdns: Option<PathBuf>,
    pub filters: Vec<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub psl: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub resolver: Option<ResolverMode>,
    pub upstream: Option<String>,
    pub seed: Option<u64>,
    pub k_folds: Option<usize>,
    pub train_fraction: Option<f64>,
    /// Cap on request instances fed to training; negatives beyond the cap
    /// are downsampled (seeded), positives are always kept.
    pub max_request_instances: Option<usize>,
    pub n_repeats: Option<usize>,
    /// grids.<site|request>.<algorithm> axes; missing entries use the
    /// tuned defaults.
    pub grids: BTreeMap<String, BTreeMap<String, GridConfig>>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(toml::from_str(&text)?)
    }

    /// Settings from `other` (CLI flags) override settings from `self`.
    pub fn overridden_by(mut self, other: PipelineConfig) -> PipelineConfig {
        if other.crawl.is_some() {
            self.crawl = other.crawl;
        }
        if other.fdns.is_some() {
            self.fdns = other.fdns;
        }
        if !other.filters.is_empty() {
            self.filters = other.filters;
        }
        if other.dictionary.is_some() {
            self.dictionary = other.dictionary;
        }
        if other.psl.is_some() {
            self.psl = other.psl;
        }
        if other.out.is_some() {
            self.out = other.out;
        }
        if other.resolver.is_some() {
            self.resolver = other.resolver;
        }
        if other.upstream.is_some() {
            self.upstream = other.upstream;
        }
        if other.seed.is_some() {
            self.seed = other.seed;
        }
        if other.k_folds.is_some() {
            self.k_folds = other.k_folds;
        }
        if other.train_fraction.is_some() {
            self.train_fraction = other.train_fraction;
        }
        if other.max_request_instances.is_some() {
            self.max_request_instances = other.max_request_instances;
        }
        if other.n_repeats.is_some() {
            self.n_repeats = other.n_repeats;
        }
        if !other.grids.is_empty() {
            self.grids = other.grids;
        }
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(2)
    }

    pub fn k_folds(&self) -> usize {
        self.k_folds.unwrap_or(10)
    }

    pub fn train_fraction(&self) -> f64 {
        self.train_fraction.unwrap_or(0.8)
    }

    pub fn n_repeats(&self) -> usize {
        self.n_repeats.unwrap_or(10)
    }

    pub fn resolver(&self) -> ResolverMode {
        self.resolver.unwrap_or(ResolverMode::Offline)
    }

    /// Grid for (target, algorithm): configured axes, else the tuned
    /// defaults.
    pub fn grid_for(
        &self,
        target: Target,
        algorithm: Algorithm,
    ) -> Result<ParamGrid, ConfigError> {
        let target_key = match target {
            Target::Site => "site",
            Target::Request => "request",
        };
        let algo_key = match algorithm {
            Algorithm::RandomForest => "random_forest",
            Algorithm::ExtraTrees => "extra_trees",
            Algorithm::GradientBoosting => "gradient_boosting",
            Algorithm::DecisionTree => "decision_tree",
            Algorithm::AdaBoost => "ada_boost",
            Algorithm::Knn => "knn",
            Algorithm::LogisticRegression => "logistic_regression",
            _ => "unsupported",
        };
        match self.grids.get(target_key).and_then(|m| m.get(algo_key)) {
            Some(grid) => grid.to_param_grid(),
            None => Ok(ParamGrid::tuned_best(algorithm, target)),
        }
    }

    /// Write the effective configuration into the output directory.
    pub fn echo_into(&self, out_dir: &Path) -> std::io::Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        std::fs::write(out_dir.join("config_effective.toml"), text)
    }
}
