//! `cloakscan` command-line interface.
//!
//! Subcommands: label, features, train, evaluate, importance, drift,
//! summary. Every flag overrides the corresponding key of the optional
//! TOML config file; the effective configuration is echoed into the
//! output directory. Exit codes: 0 success, 2 config error, 3 data
//! error, 4 model/schema error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cloakscan::config::{ConfigError, PipelineConfig, ResolverMode};
use cloakscan::features::Target;
use cloakscan::ingest::{dataset_summary, load_crawl};
use cloakscan::pipeline::{self, ModelDocument, PipelineError, Resources};
use cloakscan::psl::PublicSuffixList;
use cloakscan::DefaultScalar;

#[derive(Parser)]
#[command(
    name = "cloakscan",
    version,
    about = "Detect CNAME-cloaking-based web tracking from crawl and DNS data"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by all subcommands; each overrides the config-file key of
/// the same name.
#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Crawl JSONL file (plain or gzip).
    #[arg(long, global = true)]
    crawl: Option<PathBuf>,
    /// Forward-DNS JSONL file (plain or gzip).
    #[arg(long, global = true)]
    fdns: Option<PathBuf>,
    /// Filter list file; repeatable.
    #[arg(long, global = true)]
    filters: Vec<PathBuf>,
    /// Dictionary word list (one word per line).
    #[arg(long, global = true)]
    dictionary: Option<PathBuf>,
    /// Public suffix list snapshot.
    #[arg(long, global = true)]
    psl: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// CNAME resolution source.
    #[arg(long, global = true, value_parser = parse_resolver)]
    resolver: Option<ResolverMode>,
    /// Upstream DNS server as addr:port (live resolver only).
    #[arg(long, global = true)]
    upstream: Option<String>,
    /// RNG seed recorded into every artifact.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cross-validation fold count.
    #[arg(long, global = true)]
    k_folds: Option<usize>,
    /// Train split fraction in (0, 1).
    #[arg(long, global = true)]
    train_fraction: Option<f64>,
    /// Cap on request instances (negatives downsampled, seeded).
    #[arg(long, global = true)]
    max_request_instances: Option<usize>,
    /// Permutation-importance repeats.
    #[arg(long, global = true)]
    n_repeats: Option<usize>,
}

fn parse_resolver(s: &str) -> Result<ResolverMode, String> {
    match s {
        "offline" => Ok(ResolverMode::Offline),
        "live" => Ok(ResolverMode::Live),
        other => Err(format!("expected offline|live, got {other:?}")),
    }
}

fn parse_target(s: &str) -> Result<Target, String> {
    match s {
        "site" => Ok(Target::Site),
        "request" => Ok(Target::Request),
        other => Err(format!("expected site|request, got {other:?}")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Resolve CNAME chains, match tracker lists, write the labeled
    /// dataset and its summary.
    Label,
    /// Export the encoded feature matrix of a labeled dataset as CSV.
    Features {
        /// Labeled dataset produced by `label`.
        #[arg(long)]
        labeled: PathBuf,
        /// Feature level: `site` or `request`.
        #[arg(long, value_parser = parse_target)]
        target: Target,
    },
    /// Split, grid-search the voting members, and write the model with
    /// its CV report.
    Train {
        /// Labeled dataset produced by `label`.
        #[arg(long)]
        labeled: PathBuf,
        /// Feature level: `site` or `request`.
        #[arg(long, value_parser = parse_target)]
        target: Target,
        /// Skip the all-algorithm CV comparison stage (grid search and
        /// voting still run).
        #[arg(long)]
        no_compare: bool,
    },
    /// Score a stored model on the held-out split, with filter-list
    /// baselines.
    Evaluate {
        /// Labeled dataset produced by `label`.
        #[arg(long)]
        labeled: PathBuf,
        /// Model file produced by `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Permutation feature importance of a stored model on the held-out
    /// split.
    Importance {
        /// Labeled dataset produced by `label`.
        #[arg(long)]
        labeled: PathBuf,
        /// Model file produced by `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Train on dataset A, evaluate on dataset B's held-out split, and
    /// report the F1 delta.
    Drift {
        /// Labeled training-year dataset (A).
        #[arg(long)]
        labeled_a: PathBuf,
        /// Labeled evaluation-year dataset (B).
        #[arg(long)]
        labeled_b: PathBuf,
        /// Feature level: `site` or `request`.
        #[arg(long, value_parser = parse_target)]
        target: Target,
    },
    /// Request party breakdown of a crawl file.
    Summary,
}

fn effective_config(common: &CommonArgs) -> Result<PipelineConfig, PipelineError> {
    let base = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let overrides = PipelineConfig {
        crawl: common.crawl.clone(),
        fdns: common.fdns.clone(),
        filters: common.filters.clone(),
        dictionary: common.dictionary.clone(),
        psl: common.psl.clone(),
        out: common.out.clone(),
        resolver: common.resolver,
        upstream: common.upstream.clone(),
        seed: common.seed,
        k_folds: common.k_folds,
        train_fraction: common.train_fraction,
        max_request_instances: common.max_request_instances,
        n_repeats: common.n_repeats,
        grids: Default::default(),
    };
    Ok(base.overridden_by(overrides))
}

/// Output directory from config, created if absent, with the effective
/// config echoed into it.
fn out_dir(config: &PipelineConfig) -> Result<PathBuf, PipelineError> {
    let dir = config.out.clone().ok_or(ConfigError::Missing("out"))?;
    std::fs::create_dir_all(&dir).map_err(|source| PipelineError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    config.echo_into(&dir).map_err(|source| PipelineError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    Ok(dir)
}

fn target_tag(target: Target) -> &'static str {
    match target {
        Target::Site => "site",
        Target::Request => "request",
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let config = effective_config(&cli.common)?;
    match cli.command {
        Command::Label => {
            let out = out_dir(&config)?;
            let resources = Resources::load(&config)?;
            let (labeled, report) = pipeline::run_label(&config, &resources)?;
            pipeline::write_labeled(&out.join("labeled.jsonl"), &labeled)?;
            pipeline::write_json(&out.join("label_summary.json"), &report)?;
            println!(
                "labeled {} sites ({} positive), {} requests ({} positive)",
                report.summary.total_sites,
                report.stats.positive_sites,
                report.summary.total_requests,
                report.stats.positive_requests
            );
            println!(
                "requests by party: first-domain {}, first-subdomain {}, third {}",
                report.summary.first_party_domain,
                report.summary.first_party_subdomain,
                report.summary.third_party
            );
        }
        Command::Features { labeled, target } => {
            let out = out_dir(&config)?;
            let resources = Resources::load(&config)?;
            let sites = pipeline::load_labeled(&labeled)?;
            let path = out.join(format!("features_{}.csv", target_tag(target)));
            let file = std::fs::File::create(&path).map_err(|source| PipelineError::Io {
                path: path.display().to_string(),
                source,
            })?;
            pipeline::export_features::<DefaultScalar, _>(
                &sites,
                target,
                &resources,
                std::io::BufWriter::new(file),
            )?;
            println!("wrote {}", path.display());
        }
        Command::Train {
            labeled,
            target,
            no_compare,
        } => {
            let out = out_dir(&config)?;
            let resources = Resources::load(&config)?;
            let sites = pipeline::load_labeled(&labeled)?;
            let (document, report) = pipeline::train_target::<DefaultScalar>(
                &sites,
                target,
                &config,
                &resources,
                !no_compare,
            )?;
            let tag = target_tag(target);
            document.save(&out.join(format!("model_{tag}.json")))?;
            pipeline::write_json(&out.join(format!("train_report_{tag}.json")), &report)?;
            println!(
                "{tag} model: {} members, test F1 {:.4} (precision {:.4}, recall {:.4})",
                document.members.len(),
                report.ensemble_test.f1,
                report.ensemble_test.precision,
                report.ensemble_test.recall
            );
        }
        Command::Evaluate { labeled, model } => {
            let out = out_dir(&config)?;
            let resources = Resources::load(&config)?;
            let sites = pipeline::load_labeled(&labeled)?;
            let document = ModelDocument::<DefaultScalar>::load(&model)?;
            let report = pipeline::evaluate_model(&document, &sites, &config, &resources)?;
            let tag = target_tag(document.target);
            pipeline::write_json(&out.join(format!("evaluate_{tag}.json")), &report)?;
            println!(
                "{tag} model: F1 {:.4} (precision {:.4}, recall {:.4}) on {} instances",
                report.model.f1, report.model.precision, report.model.recall, report.test_rows
            );
            for baseline in &report.baselines {
                println!(
                    "baseline {}: F1 {:.4} (precision {:.4}, recall {:.4})",
                    baseline.list,
                    baseline.metrics.f1,
                    baseline.metrics.precision,
                    baseline.metrics.recall
                );
            }
        }
        Command::Importance { labeled, model } => {
            let out = out_dir(&config)?;
            let resources = Resources::load(&config)?;
            let sites = pipeline::load_labeled(&labeled)?;
            let document = ModelDocument::<DefaultScalar>::load(&model)?;
            let report = pipeline::importance_model(&document, &sites, &config, &resources)?;
            let tag = target_tag(document.target);
            pipeline::write_json(&out.join(format!("importance_{tag}.json")), &report)?;
            let csv_path = out.join(format!("importance_{tag}.csv"));
            let file = std::fs::File::create(&csv_path).map_err(|source| PipelineError::Io {
                path: csv_path.display().to_string(),
                source,
            })?;
            pipeline::write_importance_csv(&report, std::io::BufWriter::new(file))
                .map_err(|e| PipelineError::Data(format!("writing importance csv: {e}")))?;
            let mut ranked: Vec<_> = report.importances.iter().collect();
            ranked.sort_by(|a, b| b.median_drop.partial_cmp(&a.median_drop).unwrap());
            for imp in ranked.iter().take(10) {
                println!("{:<40} median drop {:.4}", imp.feature, imp.median_drop);
            }
        }
        Command::Drift {
            labeled_a,
            labeled_b,
            target,
        } => {
            let out = out_dir(&config)?;
            let resources = Resources::load(&config)?;
            let sites_a = pipeline::load_labeled(&labeled_a)?;
            let sites_b = pipeline::load_labeled(&labeled_b)?;
            let (document, report) = pipeline::drift_compare::<DefaultScalar>(
                &sites_a, &sites_b, target, &config, &resources,
            )?;
            let tag = target_tag(target);
            document.save(&out.join(format!("drift_model_{tag}.json")))?;
            pipeline::write_json(&out.join(format!("drift_{tag}.json")), &report)?;
            println!(
                "{tag}: same-year F1 {:.4}, cross-year F1 {:.4}, delta {:.4}",
                report.same_year.f1, report.cross_year.f1, report.delta_f1
            );
        }
        Command::Summary => {
            let crawl = config.crawl.as_ref().ok_or(ConfigError::Missing("crawl"))?;
            let psl = match &config.psl {
                Some(path) => PublicSuffixList::load(path)?,
                None => PublicSuffixList::bundled(),
            };
            let load = load_crawl(crawl)?;
            let summary = dataset_summary(&load.sites, &psl);
            let pct = |n: usize| 100.0 * n as f64 / summary.total_requests.max(1) as f64;
            println!("sites:    {}", summary.total_sites);
            println!("requests: {}", summary.total_requests);
            println!(
                "  first-party domain:    {:>8} ({:.1}%)",
                summary.first_party_domain,
                pct(summary.first_party_domain)
            );
            println!(
                "  first-party subdomain: {:>8} ({:.1}%)",
                summary.first_party_subdomain,
                pct(summary.first_party_subdomain)
            );
            println!(
                "  third-party:           {:>8} ({:.1}%)",
                summary.third_party,
                pct(summary.third_party)
            );
            if !load.skipped.is_empty() {
                println!("skipped lines: {}", load.skipped.len());
            }
            if let Some(dir) = &config.out {
                std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
                    path: dir.display().to_string(),
                    source,
                })?;
                pipeline::write_json(&dir.join("summary.json"), &summary)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(inner) = source {
                eprintln!("  caused by: {inner}");
                source = inner.source();
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
