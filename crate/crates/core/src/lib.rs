//! Detection of CNAME-cloaking-based web tracking from crawl logs.
//!
//! The pipeline labels crawled HTTP requests and sites by resolving
//! first-party subdomains to CNAME chains and matching them against
//! tracker filter lists, extracts site- and request-level features, and
//! trains tree-ensemble classifiers that flag cloaked tracking without
//! on-demand DNS lookup.

pub mod config;
pub mod features;
pub mod filterlist;
pub mod ingest;
pub mod labeler;
pub mod learn;
pub mod pipeline;
pub mod psl;
pub mod scalar;

pub use scalar::Scalar;

/// Default scalar used by the CLI and pipeline.
pub type DefaultScalar = f64;

/// Concrete aliases for the common scalar choices.
pub type EncodedMatrix64 = features::EncodedMatrix<f64>;
pub type EncodedMatrix32 = features::EncodedMatrix<f32>;
