//! Crawl-log and offline-DNS ingestion into the canonical data model.
//!
//! Canonical crawl input is JSON lines: one HTTP request per line, with the
//! site metadata block embedded on the site's first line. FDNS input is the
//! Rapid7 forward-DNS `name`/`type`/`value` JSONL subset, optionally gzipped.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{classify_party, Party};
use crate::labeler::CnameChain;
use crate::psl::{normalize_host, PublicSuffixList};

/// CNAME chains longer than this are truncated at load time.
pub const MAX_CNAME_HOPS: usize = 8;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },
}

/// One crawled HTTP request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub site_id: String,
    pub url: String,
    pub method: String,
    pub content_type: String,
    pub is_xhr: bool,
    pub is_third_party_window: bool,
    pub timestamp: f64,
}

impl RequestRecord {
    /// Host component of the request URL, normalized. `None` for IP hosts.
    pub fn host(&self) -> Option<String> {
        let parsed = url::Url::parse(&self.url).ok()?;
        match parsed.host() {
            Some(url::Host::Domain(d)) => Some(normalize_host(d)),
            _ => None,
        }
    }
}

/// One crawled site with its metadata and request list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub site_id: String,
    pub domain: String,
    /// Alexa rank; 0 = unknown.
    pub ranking: u64,
    /// ISO country code or "UNK".
    pub country: String,
    /// Category label or "UNK".
    pub category: String,
    /// Fingerprinting-related method calls observed on the site.
    pub script_call_count: u64,
    pub requests: Vec<RequestRecord>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
struct SiteMetaLine {
    #[serde(default)]
    ranking: u64,
    #[serde(default = "unk")]
    country: String,
    #[serde(default = "unk")]
    category: String,
    #[serde(default)]
    script_call_count: u64,
}

fn unk() -> String {
    "UNK".to_string()
}

/// Wire format of one crawl JSONL line.
#[derive(Debug, Deserialize, Serialize)]
struct CrawlLine {
    site_id: String,
    site_domain: String,
    url: String,
    method: String,
    content_type: String,
    is_xhr: bool,
    is_third_party_window: bool,
    timestamp: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    site_meta: Option<SiteMetaLine>,
}

/// Result of [`load_crawl`]: sites plus the malformed-line report.
#[derive(Debug)]
pub struct CrawlLoad {
    pub sites: Vec<SiteRecord>,
    /// (line number, reason) for lines that parsed but violated record
    /// invariants and were skipped.
    pub skipped: Vec<(usize, String)>,
}

fn open_reader(path: &Path) -> Result<Box<dyn BufRead>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut magic = [0u8; 2];
    let mut file = BufReader::new(file);
    let gz = match file.fill_buf() {
        Ok(buf) if buf.len() >= 2 => {
            magic.copy_from_slice(&buf[..2]);
            magic == [0x1f, 0x8b]
        }
        _ => false,
    };
    if gz {
        Ok(Box::new(BufReader::new(flate2::bufread::GzDecoder::new(file))))
    } else {
        Ok(Box::new(file))
    }
}

/// Parse a crawl JSONL file into sites with their requests grouped.
///
/// Lines missing a mandatory field are a hard [`IngestError::Schema`] naming
/// the line. Lines that parse but carry an invalid URL or an empty method
/// are skipped and reported in [`CrawlLoad::skipped`].
pub fn load_crawl(path: &Path) -> Result<CrawlLoad, IngestError> {
    let reader = open_reader(path)?;
    let mut order: Vec<String> = Vec::new();
    let mut sites: HashMap<String, SiteRecord> = HashMap::new();
    let mut skipped = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CrawlLine =
            serde_json::from_str(&line).map_err(|e| IngestError::Schema {
                line: line_no,
                reason: e.to_string(),
            })?;

        let method = parsed.method.trim().to_ascii_uppercase();
        if method.is_empty() {
            skipped.push((line_no, "empty method".to_string()));
            continue;
        }
        match url::Url::parse(&parsed.url) {
            Ok(u) if u.host().is_some() => {}
            _ => {
                skipped.push((line_no, format!("invalid url {:?}", parsed.url)));
                continue;
            }
        }

        let site = sites.entry(parsed.site_id.clone()).or_insert_with(|| {
            order.push(parsed.site_id.clone());
            SiteRecord {
                site_id: parsed.site_id.clone(),
                domain: normalize_host(&parsed.site_domain),
                ranking: 0,
                country: unk(),
                category: unk(),
                script_call_count: 0,
                requests: Vec::new(),
            }
        });
        if let Some(meta) = parsed.site_meta {
            site.ranking = meta.ranking;
            site.country = meta.country;
            site.category = meta.category;
            site.script_call_count = meta.script_call_count;
        }
        site.requests.push(RequestRecord {
            site_id: parsed.site_id,
            url: parsed.url,
            method,
            content_type: parsed.content_type,
            is_xhr: parsed.is_xhr,
            is_third_party_window: parsed.is_third_party_window,
            timestamp: parsed.timestamp,
        });
    }

    let sites = order.into_iter().map(|id| sites.remove(&id).unwrap()).collect();
    Ok(CrawlLoad { sites, skipped })
}

/// Serialize sites back to the crawl JSONL wire format.
pub fn write_crawl<W: Write>(sites: &[SiteRecord], mut out: W) -> std::io::Result<()> {
    for site in sites {
        for (i, req) in site.requests.iter().enumerate() {
            let line = CrawlLine {
                site_id: req.site_id.clone(),
                site_domain: site.domain.clone(),
                url: req.url.clone(),
                method: req.method.clone(),
                content_type: req.content_type.clone(),
                is_xhr: req.is_xhr,
                is_third_party_window: req.is_third_party_window,
                timestamp: req.timestamp,
                site_meta: (i == 0).then(|| SiteMetaLine {
                    ranking: site.ranking,
                    country: site.country.clone(),
                    category: site.category.clone(),
                    script_call_count: site.script_call_count,
                }),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Offline forward-DNS index: normalized fqdn -> CNAME chain.
#[derive(Debug, Default, Clone)]
pub struct FdnsIndex {
    chains: HashMap<String, Vec<String>>,
    /// Names whose chain hit the hop cap and was truncated.
    pub truncated: Vec<String>,
}

impl FdnsIndex {
    /// Chain for `name`, case- and trailing-dot-insensitive. Empty slice
    /// when no CNAME exists.
    pub fn chain(&self, name: &str) -> Option<CnameChain> {
        let owner = normalize_host(name);
        self.chains.get(&owner).map(|targets| CnameChain {
            owner,
            targets: targets.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    /// Build the index from (owner, target) CNAME edges, following chains
    /// up to [`MAX_CNAME_HOPS`] hops and breaking loops at detection.
    pub fn from_edges(edges: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut next: HashMap<String, String> = HashMap::new();
        for (name, value) in edges {
            next.entry(normalize_host(&name)).or_insert_with(|| normalize_host(&value));
        }
        let mut chains = HashMap::new();
        let mut truncated = Vec::new();
        for owner in next.keys() {
            let mut targets = Vec::new();
            let mut cursor = owner.clone();
            while let Some(target) = next.get(&cursor) {
                if target == owner || targets.contains(target) {
                    break; // loop
                }
                targets.push(target.clone());
                if targets.len() >= MAX_CNAME_HOPS {
                    if next.contains_key(target) {
                        truncated.push(owner.clone());
                    }
                    break;
                }
                cursor = target.clone();
            }
            chains.insert(owner.clone(), targets);
        }
        truncated.sort();
        FdnsIndex { chains, truncated }
    }
}

#[derive(Debug, Deserialize)]
struct FdnsLine {
    name: String,
    #[serde(rename = "type")]
    record_type: String,
    value: String,
}

/// Load a Rapid7-style FDNS JSONL file (plain or gzip) into an index.
/// Non-CNAME records are ignored.
pub fn load_fdns(path: &Path) -> Result<FdnsIndex, IngestError> {
    let reader = open_reader(path)?;
    let mut edges = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: FdnsLine = serde_json::from_str(&line).map_err(|e| IngestError::Schema {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if parsed.record_type.eq_ignore_ascii_case("cname") {
            edges.push((parsed.name, parsed.value));
        }
    }
    Ok(FdnsIndex::from_edges(edges))
}

/// Dataset-level request counts, in the shape of the published summary table.
#[derive(Debug, Default, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub total_sites: usize,
    pub total_requests: usize,
    pub first_party_domain: usize,
    pub first_party_subdomain: usize,
    pub third_party: usize,
}

/// Count requests by party class. Unclassifiable hosts (IP literals,
/// bare public suffixes) count as third party so the classes always
/// partition the total.
pub fn dataset_summary(sites: &[SiteRecord], psl: &PublicSuffixList) -> DatasetSummary {
    let mut summary = DatasetSummary {
        total_sites: sites.len(),
        ..Default::default()
    };
    for site in sites {
        for req in &site.requests {
            summary.total_requests += 1;
            let party = req
                .host()
                .and_then(|h| classify_party(&h, &site.domain, psl).ok())
                .unwrap_or(Party::Third);
            match party {
                Party::FirstDomain => summary.first_party_domain += 1,
                Party::FirstSubdomain => summary.first_party_subdomain += 1,
                Party::Third => summary.third_party += 1,
            }
        }
    }
    summary
}
