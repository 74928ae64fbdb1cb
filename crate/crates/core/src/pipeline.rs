//! End-to-end flows behind the CLI subcommands: labeling runs, feature
//! preparation with a seeded stratified split, training with grid search
//! and soft-vote assembly, evaluation with filter-list baselines,
//! permutation importance, and concept-drift comparison.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig, ResolverMode};
use crate::features::{
    encode_requests, encode_sites, request_features, site_features, Dictionary, EncodedMatrix,
    EncodingSchema, FeatureError, RequestFeatures, SiteFeatures, Target,
};
use crate::filterlist::{load_list, FilterList};
use crate::ingest::{
    dataset_summary, load_crawl, load_fdns, DatasetSummary, IngestError,
};
use crate::labeler::{label_sites, LabelStats, LabeledRequest, LabeledSite, Resolver};
use crate::learn::{
    baseline_filterlist, cross_validate, grid_search, permutation_importance, Algorithm,
    Classifier, CvScores, FeatureImportance, HyperParams, LearnError, Metrics, TrainedModel,
    VotingEnsemble,
};
use crate::psl::{PslError, PublicSuffixList};
use crate::scalar::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Psl(#[from] PslError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("unsupported model format version {0}")]
    ModelVersion(u32),
}

impl PipelineError {
    /// Process exit code: 2 config, 3 data, 4 model/schema.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Learn(LearnError::SchemaMismatch { .. })
            | PipelineError::ModelVersion(_) => 4,
            _ => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Shared read-only inputs: suffix list, dictionary, and filter lists.
pub struct Resources {
    pub psl: PublicSuffixList,
    pub dictionary: Dictionary,
    pub lists: Vec<FilterList>,
}

impl Resources {
    pub fn load(config: &PipelineConfig) -> Result<Self, PipelineError> {
        let psl = match &config.psl {
            Some(path) => PublicSuffixList::load(path)?,
            None => PublicSuffixList::bundled(),
        };
        let dictionary = match &config.dictionary {
            Some(path) => Dictionary::load(path).map_err(io_err(path))?,
            None => Dictionary::bundled(),
        };
        let mut lists = Vec::with_capacity(config.filters.len());
        for path in &config.filters {
            lists.push(load_list(path).map_err(io_err(path))?);
        }
        Ok(Resources {
            psl,
            dictionary,
            lists,
        })
    }
}

// ---------------------------------------------------------------------------
// Labeled dataset file: one JSON-serialized labeled site per line.
// ---------------------------------------------------------------------------

pub fn write_labeled(path: &Path, sites: &[LabeledSite]) -> Result<(), PipelineError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = std::io::BufWriter::new(file);
    for site in sites {
        serde_json::to_writer(&mut out, site).map_err(|source| PipelineError::Json {
            path: path.display().to_string(),
            source,
        })?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn load_labeled(path: &Path) -> Result<Vec<LabeledSite>, PipelineError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut sites = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        sites.push(
            serde_json::from_str(&line).map_err(|source| PipelineError::Json {
                path: path.display().to_string(),
                source,
            })?,
        );
    }
    Ok(sites)
}

/// Report written next to the labeled dataset: request party breakdown in
/// the shape of the published summary table, plus labeling counters.
#[derive(Debug, Serialize)]
pub struct LabelReport {
    pub summary: DatasetSummary,
    pub stats: LabelStats,
    pub skipped_lines: usize,
    pub resolver: ResolverMode,
}

/// `label` flow: load the crawl, resolve CNAME chains, match tracker
/// lists, and return the labeled sites with their report.
pub fn run_label(
    config: &PipelineConfig,
    resources: &Resources,
) -> Result<(Vec<LabeledSite>, LabelReport), PipelineError> {
    let crawl_path = config
        .crawl
        .as_ref()
        .ok_or(ConfigError::Missing("crawl"))?;
    if resources.lists.is_empty() {
        return Err(ConfigError::Missing("filters").into());
    }
    let load = load_crawl(crawl_path)?;

    let mode = config.resolver();
    let fdns_index;
    let resolver = match mode {
        ResolverMode::Offline => {
            let fdns_path = config.fdns.as_ref().ok_or(ConfigError::Missing("fdns"))?;
            fdns_index = load_fdns(fdns_path)?;
            Resolver::Offline(&fdns_index)
        }
        ResolverMode::Live => {
            let upstream = config
                .upstream
                .as_ref()
                .ok_or(ConfigError::Missing("upstream"))?;
            let addr = upstream.parse().map_err(|_| {
                ConfigError::Invalid(format!("upstream {upstream:?} is not addr:port"))
            })?;
            Resolver::Live(crate::labeler::LiveResolver::new(addr))
        }
    };

    let (labeled, stats) = label_sites(&load.sites, &resolver, &resources.lists, &resources.psl);
    let report = LabelReport {
        summary: dataset_summary(&load.sites, &resources.psl),
        stats,
        skipped_lines: load.skipped.len(),
        resolver: mode,
    };
    Ok((labeled, report))
}

// ---------------------------------------------------------------------------
// Instance preparation: features, downsampling, stratified split, encoding.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct PrepareOptions {
    pub seed: u64,
    pub train_fraction: f64,
    /// Request-instance cap; negatives beyond it are downsampled (seeded).
    pub max_request_instances: Option<usize>,
}

impl PrepareOptions {
    pub fn from_config(config: &PipelineConfig) -> Self {
        PrepareOptions {
            seed: config.seed(),
            train_fraction: config.train_fraction(),
            max_request_instances: config.max_request_instances,
        }
    }
}

/// Seeded stratified split into (train, test) index sets, both ordered.
/// Every class contributes at least one instance to each side.
pub fn stratified_split(
    labels: &[bool],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), PipelineError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ConfigError::Invalid(format!("train_fraction {fraction}")).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [false, true] {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < 2 {
            return Err(PipelineError::Data(format!(
                "class {class} has {} instance(s); need at least 2 to split",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n = members.len();
        let take = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&members[..take]);
        test.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

enum Instances<S: Scalar> {
    Sites(Vec<(SiteFeatures<S>, bool)>),
    Requests(Vec<(RequestFeatures<S>, bool, LabeledRequest)>),
}

impl<S: Scalar> Instances<S> {
    fn labels(&self) -> Vec<bool> {
        match self {
            Instances::Sites(v) => v.iter().map(|(_, l)| *l).collect(),
            Instances::Requests(v) => v.iter().map(|(_, l, _)| *l).collect(),
        }
    }

    fn len(&self) -> usize {
        match self {
            Instances::Sites(v) => v.len(),
            Instances::Requests(v) => v.len(),
        }
    }
}

/// Compute per-instance features. Instances whose features cannot be
/// computed (empty sites, IP-host requests) are skipped and counted.
/// Request instances beyond the configured cap are downsampled: all
/// positives kept, negatives sampled with a seed derived from `opts.seed`.
fn collect_instances<S: Scalar>(
    sites: &[LabeledSite],
    target: Target,
    opts: &PrepareOptions,
    resources: &Resources,
) -> (Instances<S>, usize) {
    let mut errors = 0usize;
    match target {
        Target::Site => {
            let mut out = Vec::with_capacity(sites.len());
            for site in sites {
                match site_features::<S>(&site.site, &resources.psl) {
                    Ok(f) => out.push((f, site.label)),
                    Err(_) => errors += 1,
                }
            }
            (Instances::Sites(out), errors)
        }
        Target::Request => {
            let mut out = Vec::new();
            for site in sites {
                for req in &site.requests {
                    match request_features::<S>(
                        &req.request,
                        &resources.dictionary,
                        &resources.lists,
                        &resources.psl,
                    ) {
                        Ok(f) => out.push((f, req.label, req.clone())),
                        Err(_) => errors += 1,
                    }
                }
            }
            if let Some(cap) = opts.max_request_instances {
                out = downsample_requests(out, cap, opts.seed);
            }
            (Instances::Requests(out), errors)
        }
    }
}

fn downsample_requests<S: Scalar>(
    instances: Vec<(RequestFeatures<S>, bool, LabeledRequest)>,
    cap: usize,
    seed: u64,
) -> Vec<(RequestFeatures<S>, bool, LabeledRequest)> {
    if instances.len() <= cap {
        return instances;
    }
    let positives = instances.iter().filter(|(_, l, _)| *l).count();
    let keep_negatives = cap.saturating_sub(positives);
    let mut negative_idx: Vec<usize> = instances
        .iter()
        .enumerate()
        .filter(|(_, (_, l, _))| !*l)
        .map(|(i, _)| i)
        .collect();
    // Distinct stream from the split/tree seeds.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD01D_5A3B_17E4_C909);
    negative_idx.shuffle(&mut rng);
    negative_idx.truncate(keep_negatives);
    let kept: std::collections::HashSet<usize> = negative_idx.into_iter().collect();
    instances
        .into_iter()
        .enumerate()
        .filter(|(i, (_, l, _))| *l || kept.contains(i))
        .map(|(_, inst)| inst)
        .collect()
}

/// Encoded train/test matrices with the schema built from the training
/// split only, plus the raw labeled requests of the test split (for
/// filter-list baselines; empty for the site target).
pub struct Prepared<S: Scalar> {
    pub schema: EncodingSchema,
    pub train: EncodedMatrix<S>,
    pub test: EncodedMatrix<S>,
    pub test_requests: Vec<LabeledRequest>,
    pub feature_errors: usize,
}

pub fn prepare<S: Scalar>(
    sites: &[LabeledSite],
    target: Target,
    opts: &PrepareOptions,
    resources: &Resources,
) -> Result<Prepared<S>, PipelineError> {
    let (instances, feature_errors) = collect_instances::<S>(sites, target, opts, resources);
    if instances.len() == 0 {
        return Err(PipelineError::Data("no usable instances".to_string()));
    }
    let labels = instances.labels();
    let (train_idx, test_idx) = stratified_split(&labels, opts.train_fraction, opts.seed)?;

    let (schema, train, test, test_requests) = match &instances {
        Instances::Sites(v) => {
            let train_feats: Vec<SiteFeatures<S>> =
                train_idx.iter().map(|&i| v[i].0.clone()).collect();
            let test_feats: Vec<SiteFeatures<S>> =
                test_idx.iter().map(|&i| v[i].0.clone()).collect();
            let schema = EncodingSchema::for_sites(&train_feats);
            let train_labels: Vec<bool> = train_idx.iter().map(|&i| labels[i]).collect();
            let test_labels: Vec<bool> = test_idx.iter().map(|&i| labels[i]).collect();
            (
                schema.clone(),
                encode_sites(&schema, &train_feats, &train_labels),
                encode_sites(&schema, &test_feats, &test_labels),
                Vec::new(),
            )
        }
        Instances::Requests(v) => {
            let train_feats: Vec<RequestFeatures<S>> =
                train_idx.iter().map(|&i| v[i].0.clone()).collect();
            let test_feats: Vec<RequestFeatures<S>> =
                test_idx.iter().map(|&i| v[i].0.clone()).collect();
            let schema = EncodingSchema::for_requests(&train_feats);
            let train_labels: Vec<bool> = train_idx.iter().map(|&i| labels[i]).collect();
            let test_labels: Vec<bool> = test_idx.iter().map(|&i| labels[i]).collect();
            let test_requests = test_idx.iter().map(|&i| v[i].2.clone()).collect();
            (
                schema.clone(),
                encode_requests(&schema, &train_feats, &train_labels),
                encode_requests(&schema, &test_feats, &test_labels),
                test_requests,
            )
        }
    };
    Ok(Prepared {
        schema,
        train,
        test,
        test_requests,
        feature_errors,
    })
}

/// Encode only the *test* split of `sites` against a fixed schema taken
/// from a trained model. Used by evaluate / importance / drift so the
/// column layout always matches the model.
pub fn encode_test_split<S: Scalar>(
    sites: &[LabeledSite],
    target: Target,
    schema: &EncodingSchema,
    opts: &PrepareOptions,
    resources: &Resources,
) -> Result<(EncodedMatrix<S>, Vec<LabeledRequest>), PipelineError> {
    let (instances, _) = collect_instances::<S>(sites, target, opts, resources);
    if instances.len() == 0 {
        return Err(PipelineError::Data("no usable instances".to_string()));
    }
    let labels = instances.labels();
    let (_, test_idx) = stratified_split(&labels, opts.train_fraction, opts.seed)?;
    let test_labels: Vec<bool> = test_idx.iter().map(|&i| labels[i]).collect();
    Ok(match &instances {
        Instances::Sites(v) => {
            let feats: Vec<SiteFeatures<S>> = test_idx.iter().map(|&i| v[i].0.clone()).collect();
            (encode_sites(schema, &feats, &test_labels), Vec::new())
        }
        Instances::Requests(v) => {
            let feats: Vec<RequestFeatures<S>> =
                test_idx.iter().map(|&i| v[i].0.clone()).collect();
            let requests = test_idx.iter().map(|&i| v[i].2.clone()).collect();
            (encode_requests(schema, &feats, &test_labels), requests)
        }
    })
}

// ---------------------------------------------------------------------------
// Model document: the on-disk serialization of a trained voting ensemble.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ModelDocument<S: Scalar> {
    pub version: u32,
    pub target: Target,
    pub seed: u64,
    pub train_fraction: f64,
    pub schema: EncodingSchema,
    pub members: Vec<TrainedModel<S>>,
}

impl<S: Scalar> ModelDocument<S> {
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let file = std::fs::File::create(path).map_err(io_err(path))?;
        let mut out = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut out, self).map_err(|source| PipelineError::Json {
            path: path.display().to_string(),
            source,
        })?;
        out.write_all(b"\n").map_err(io_err(path))?;
        out.flush().map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let file = std::fs::File::open(path).map_err(io_err(path))?;
        let doc: ModelDocument<S> = serde_json::from_reader(BufReader::new(file)).map_err(
            |source| PipelineError::Json {
                path: path.display().to_string(),
                source,
            },
        )?;
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(PipelineError::ModelVersion(doc.version));
        }
        Ok(doc)
    }

    pub fn ensemble(&self) -> Result<VotingEnsemble<S>, PipelineError> {
        Ok(VotingEnsemble::new(self.members.clone())?)
    }
}

// ---------------------------------------------------------------------------
// Training: split -> optional CV comparison -> grid search -> soft vote.
// ---------------------------------------------------------------------------

/// Voting members per target, matching the selected final models.
pub fn voting_members(target: Target) -> &'static [Algorithm] {
    match target {
        Target::Site => &[
            Algorithm::RandomForest,
            Algorithm::ExtraTrees,
            Algorithm::GradientBoosting,
        ],
        Target::Request => &[Algorithm::RandomForest, Algorithm::ExtraTrees],
    }
}

#[derive(Debug, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct ComparisonEntry<S: Scalar> {
    pub algorithm: Algorithm,
    pub cv: CvScores<S>,
}

#[derive(Debug, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct MemberReport<S: Scalar> {
    pub algorithm: Algorithm,
    pub best_params: HyperParams,
    pub cv: CvScores<S>,
}

#[derive(Debug, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct BaselineReport<S: Scalar> {
    pub list: String,
    pub metrics: Metrics<S>,
}

#[derive(Debug, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct TrainReport<S: Scalar> {
    pub target: Target,
    pub seed: u64,
    pub train_fraction: f64,
    pub schema_fingerprint: String,
    pub train_rows: usize,
    pub train_positives: usize,
    pub test_rows: usize,
    pub test_positives: usize,
    pub feature_errors: usize,
    /// Cross-validated F1 of every implemented algorithm at default
    /// parameters; empty when the comparison stage is skipped.
    pub comparison: Vec<ComparisonEntry<S>>,
    pub members: Vec<MemberReport<S>>,
    pub ensemble_test: Metrics<S>,
    pub baselines: Vec<BaselineReport<S>>,
}

/// `train` flow. `compare` toggles the all-algorithm CV comparison stage
/// (expensive on large request matrices; the grid-search and voting
/// stages always run).
pub fn train_target<S: Scalar>(
    sites: &[LabeledSite],
    target: Target,
    config: &PipelineConfig,
    resources: &Resources,
    compare: bool,
) -> Result<(ModelDocument<S>, TrainReport<S>), PipelineError> {
    let opts = PrepareOptions::from_config(config);
    let prepared = prepare::<S>(sites, target, &opts, resources)?;
    let k = config.k_folds();
    let base = HyperParams {
        seed: opts.seed,
        ..HyperParams::default()
    };

    let mut comparison = Vec::new();
    if compare {
        for algorithm in Algorithm::IMPLEMENTED {
            let cv = cross_validate::<S>(algorithm, &prepared.train, &base, k)?;
            comparison.push(ComparisonEntry { algorithm, cv });
        }
    }

    let mut members = Vec::new();
    let mut member_reports = Vec::new();
    for &algorithm in voting_members(target) {
        let grid = config.grid_for(target, algorithm)?;
        let (best_params, cv) = grid_search::<S>(algorithm, &prepared.train, &grid, &base, k)?;
        let model = crate::learn::train(algorithm, &prepared.train, &best_params)?;
        member_reports.push(MemberReport {
            algorithm,
            best_params,
            cv,
        });
        members.push(model);
    }

    let document = ModelDocument {
        version: MODEL_FORMAT_VERSION,
        target,
        seed: opts.seed,
        train_fraction: opts.train_fraction,
        schema: prepared.schema.clone(),
        members,
    };
    let ensemble = document.ensemble()?;
    let ensemble_test = ensemble.evaluate(&prepared.test)?;
    let baselines = baseline_reports(&prepared.test_requests, resources);

    let report = TrainReport {
        target,
        seed: opts.seed,
        train_fraction: opts.train_fraction,
        schema_fingerprint: prepared.schema.fingerprint(),
        train_rows: prepared.train.n_rows(),
        train_positives: prepared.train.positives(),
        test_rows: prepared.test.n_rows(),
        test_positives: prepared.test.positives(),
        feature_errors: prepared.feature_errors,
        comparison,
        members: member_reports,
        ensemble_test,
        baselines,
    };
    Ok((document, report))
}

fn baseline_reports<S: Scalar>(
    test_requests: &[LabeledRequest],
    resources: &Resources,
) -> Vec<BaselineReport<S>> {
    if test_requests.is_empty() {
        return Vec::new();
    }
    resources
        .lists
        .iter()
        .map(|list| BaselineReport {
            list: list.source_name.clone(),
            metrics: baseline_filterlist(test_requests, list),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Evaluate / importance / drift.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct EvaluateReport<S: Scalar> {
    pub target: Target,
    pub seed: u64,
    pub train_fraction: f64,
    pub schema_fingerprint: String,
    pub test_rows: usize,
    pub test_positives: usize,
    pub model: Metrics<S>,
    pub baselines: Vec<BaselineReport<S>>,
}

/// `evaluate` flow: score a stored model on the held-out split of a
/// labeled dataset. Split seed/fraction come from the model document.
pub fn evaluate_model<S: Scalar>(
    document: &ModelDocument<S>,
    sites: &[LabeledSite],
    config: &PipelineConfig,
    resources: &Resources,
) -> Result<EvaluateReport<S>, PipelineError> {
    let opts = PrepareOptions {
        seed: document.seed,
        train_fraction: document.train_fraction,
        max_request_instances: config.max_request_instances,
    };
    let (test, test_requests) =
        encode_test_split::<S>(sites, document.target, &document.schema, &opts, resources)?;
    let ensemble = document.ensemble()?;
    let model = ensemble.evaluate(&test)?;
    Ok(EvaluateReport {
        target: document.target,
        seed: document.seed,
        train_fraction: document.train_fraction,
        schema_fingerprint: document.schema.fingerprint(),
        test_rows: test.n_rows(),
        test_positives: test.positives(),
        model,
        baselines: baseline_reports(&test_requests, resources),
    })
}

#[derive(Debug, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct ImportanceReport<S: Scalar> {
    pub target: Target,
    pub seed: u64,
    pub n_repeats: usize,
    pub schema_fingerprint: String,
    pub importances: Vec<FeatureImportance<S>>,
}

/// `importance` flow: permutation importance of the stored ensemble on
/// the held-out split.
pub fn importance_model<S: Scalar>(
    document: &ModelDocument<S>,
    sites: &[LabeledSite],
    config: &PipelineConfig,
    resources: &Resources,
) -> Result<ImportanceReport<S>, PipelineError> {
    let opts = PrepareOptions {
        seed: document.seed,
        train_fraction: document.train_fraction,
        max_request_instances: config.max_request_instances,
    };
    let (test, _) =
        encode_test_split::<S>(sites, document.target, &document.schema, &opts, resources)?;
    let ensemble = document.ensemble()?;
    let n_repeats = config.n_repeats();
    let importances = permutation_importance(&ensemble, &test, n_repeats, document.seed)?;
    Ok(ImportanceReport {
        target: document.target,
        seed: document.seed,
        n_repeats,
        schema_fingerprint: document.schema.fingerprint(),
        importances,
    })
}

pub fn write_importance_csv<S: Scalar, W: Write>(
    report: &ImportanceReport<S>,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "mean_drop", "median_drop"])?;
    for imp in &report.importances {
        w.write_record([
            imp.feature.as_str(),
            &format!("{}", imp.mean_drop),
            &format!("{}", imp.median_drop),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct DriftReport<S: Scalar> {
    pub target: Target,
    pub seed: u64,
    pub train_fraction: f64,
    /// Ensemble metrics on the training dataset's held-out split.
    pub same_year: Metrics<S>,
    /// Ensemble metrics on the evaluation dataset's held-out split,
    /// encoded with the training dataset's schema.
    pub cross_year: Metrics<S>,
    /// same-year F1 minus cross-year F1.
    pub delta_f1: S,
}

/// `drift` flow: train on dataset A, evaluate on dataset B's held-out
/// split (same seed and fraction), and report the F1 delta. With A = B
/// the two evaluations share the test split and the delta is exactly 0.
pub fn drift_compare<S: Scalar>(
    sites_a: &[LabeledSite],
    sites_b: &[LabeledSite],
    target: Target,
    config: &PipelineConfig,
    resources: &Resources,
) -> Result<(ModelDocument<S>, DriftReport<S>), PipelineError> {
    let (document, report) = train_target::<S>(sites_a, target, config, resources, false)?;
    let opts = PrepareOptions::from_config(config);
    let (test_b, _) =
        encode_test_split::<S>(sites_b, target, &document.schema, &opts, resources)?;
    let ensemble = document.ensemble()?;
    let cross_year = ensemble.evaluate(&test_b)?;
    let delta_f1 = report.ensemble_test.f1 - cross_year.f1;
    Ok((
        document,
        DriftReport {
            target,
            seed: opts.seed,
            train_fraction: opts.train_fraction,
            same_year: report.ensemble_test,
            cross_year,
            delta_f1,
        },
    ))
}

// ---------------------------------------------------------------------------
// Feature export.
// ---------------------------------------------------------------------------

/// `features` flow: encode the whole labeled dataset (schema built over
/// all instances) and write it as CSV.
pub fn export_features<S: Scalar, W: Write>(
    sites: &[LabeledSite],
    target: Target,
    resources: &Resources,
    out: W,
) -> Result<(), PipelineError> {
    let opts = PrepareOptions {
        seed: 0,
        train_fraction: 0.5,
        max_request_instances: None,
    };
    let (instances, _) = collect_instances::<S>(sites, target, &opts, resources);
    let labels = instances.labels();
    let matrix = match &instances {
        Instances::Sites(v) => {
            let feats: Vec<SiteFeatures<S>> = v.iter().map(|(f, _)| f.clone()).collect();
            let schema = EncodingSchema::for_sites(&feats);
            encode_sites(&schema, &feats, &labels)
        }
        Instances::Requests(v) => {
            let feats: Vec<RequestFeatures<S>> = v.iter().map(|(f, _, _)| f.clone()).collect();
            let schema = EncodingSchema::for_requests(&feats);
            encode_requests(&schema, &feats, &labels)
        }
    };
    matrix.write_csv(out).map_err(|e| {
        PipelineError::Data(format!("writing feature csv: {e}"))
    })
}

/// Serialize any report as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|source| PipelineError::Json {
        path: path.display().to_string(),
        source,
    })?;
    out.write_all(b"\n").map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}
