//! Synthetic corpus generator shared by the integration tests.
//!
//! Emits a crawl JSONL file, a forward-DNS JSONL file, and filter lists
//! into a directory. A configurable fraction of sites carry planted
//! cloaking signatures: first-party subdomains whose CNAME chains end in
//! a listed tracker domain, serving long high-entropy beacon URLs. The
//! "year B" variant applies a prefix-randomization shift (shorter random
//! subdomain prefixes, shorter beacon queries) to model concept drift.

// Shared by several test binaries; not every binary uses every item.
#![allow(dead_code)]

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distributions::{Alphanumeric, Distribution};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const TRACKERS: [&str; 4] = ["tracker0.net", "tracker1.net", "tracker2.net", "tracker3.net"];

const BENIGN_PREFIXES: [&str; 6] = ["www", "static", "cdn", "img", "shop", "news"];
const CONTENT_TYPES: [&str; 4] = ["script", "image", "stylesheet", "document"];
const COUNTRIES: [&str; 5] = ["US", "JP", "FR", "DE", "BR"];
const CATEGORIES: [&str; 4] = ["news", "shopping", "tech", "sports"];

#[derive(Debug, Clone)]
pub struct CorpusOptions {
    pub n_sites: usize,
    pub seed: u64,
    pub cloaked_fraction: f64,
    /// Length of the random subdomain prefix on tracking requests.
    pub prefix_len: usize,
    /// Length of the random query payload on tracking requests.
    pub query_len: usize,
    /// Fraction of cloaked sites still using the legacy (year-A)
    /// signature lengths; models partial drift.
    pub legacy_fraction: f64,
}

impl CorpusOptions {
    pub fn year_a(n_sites: usize) -> Self {
        CorpusOptions {
            n_sites,
            seed: 41,
            cloaked_fraction: 0.3,
            prefix_len: 12,
            query_len: 48,
            legacy_fraction: 1.0,
        }
    }

    /// Prefix-randomization shift: most cloaked sites move to much
    /// shorter random prefixes and payloads that year-A length
    /// thresholds misfire on; a minority keeps the legacy signature.
    pub fn year_b(n_sites: usize) -> Self {
        CorpusOptions {
            n_sites,
            seed: 97,
            cloaked_fraction: 0.3,
            prefix_len: 5,
            query_len: 16,
            legacy_fraction: 0.4,
        }
    }
}

pub struct Corpus {
    pub crawl: PathBuf,
    pub fdns: PathBuf,
    pub filters: Vec<PathBuf>,
    pub cloaked_sites: usize,
    pub tracking_requests: usize,
    pub total_requests: usize,
}

fn rand_string(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len)
        .map(|_| Alphanumeric.sample(rng) as char)
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

pub fn generate(dir: &Path, opts: &CorpusOptions) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let crawl_path = dir.join(format!("crawl_{}.jsonl", opts.seed));
    let fdns_path = dir.join(format!("fdns_{}.jsonl", opts.seed));
    let mut crawl = BufWriter::new(File::create(&crawl_path).unwrap());
    let mut fdns = BufWriter::new(File::create(&fdns_path).unwrap());

    let mut cloaked_sites = 0usize;
    let mut tracking_requests = 0usize;
    let mut total_requests = 0usize;

    for i in 0..opts.n_sites {
        let site_id = format!("site-{i:04}");
        let domain = format!("site{i:04}.com");
        let cloaked = rng.gen_bool(opts.cloaked_fraction);
        if cloaked {
            cloaked_sites += 1;
        }
        let mut lines: Vec<serde_json::Value> = Vec::new();
        let mut ts = 0.0f64;
        let push = |lines: &mut Vec<serde_json::Value>,
                        ts: &mut f64,
                        url: String,
                        method: &str,
                        content_type: &str,
                        is_xhr: bool,
                        third_window: bool| {
            *ts += 0.05;
            lines.push(json!({
                "site_id": site_id,
                "site_domain": domain,
                "url": url,
                "method": method,
                "content_type": content_type,
                "is_xhr": is_xhr,
                "is_third_party_window": third_window,
                "timestamp": *ts,
            }));
        };

        // Homepage plus benign first-party traffic.
        push(&mut lines, &mut ts, format!("https://www.{domain}/"), "GET", "document", false, false);
        let n_first = rng.gen_range(1..=3);
        for _ in 0..n_first {
            let prefix = BENIGN_PREFIXES[rng.gen_range(1..BENIGN_PREFIXES.len())];
            let asset = ["app.js", "site.css", "logo.png", "main.js"]
                .choose(&mut rng)
                .unwrap();
            let is_xhr = rng.gen_bool(0.15);
            push(
                &mut lines,
                &mut ts,
                format!("https://{prefix}.{domain}/{asset}"),
                "GET",
                CONTENT_TYPES[rng.gen_range(0..3)],
                is_xhr,
                false,
            );
            // Some benign subdomains are CNAME-delegated to a CDN that is
            // not on any tracker list.
            if rng.gen_bool(0.4) {
                writeln!(
                    fdns,
                    "{}",
                    json!({
                        "name": format!("{prefix}.{domain}"),
                        "type": "cname",
                        "value": format!("edge{}.cdnfast.net", rng.gen_range(0..8)),
                    })
                )
                .unwrap();
            }
        }

        // Third-party traffic (the bulk of requests).
        let n_third = rng.gen_range(4..=8);
        for _ in 0..n_third {
            let h = rng.gen_range(0..16);
            let file = rng.gen_range(0..100);
            let is_xhr = rng.gen_bool(0.2);
            push(
                &mut lines,
                &mut ts,
                format!("https://cdn{h}.assets{}.net/lib{file}.js", h % 7),
                if is_xhr { "POST" } else { "GET" },
                CONTENT_TYPES[rng.gen_range(0..CONTENT_TYPES.len())],
                is_xhr,
                rng.gen_bool(0.3),
            );
        }

        if cloaked {
            // Planted signature: random-prefix first-party subdomain,
            // CNAME chain into a listed tracker, long beacon URL.
            let n_track = rng.gen_range(1..=2);
            let legacy = rng.gen_bool(opts.legacy_fraction);
            let (prefix_len, query_len) = if legacy {
                (12, 48)
            } else {
                (opts.prefix_len, opts.query_len)
            };
            let prefix = rand_string(&mut rng, prefix_len);
            let tracker = TRACKERS[rng.gen_range(0..TRACKERS.len())];
            let cname_host = format!("{prefix}.{domain}");
            if rng.gen_bool(0.3) {
                // Two-hop chain through the tracker's collector tier.
                let mid = format!("lb{}.collect-{tracker}", rng.gen_range(0..4));
                writeln!(
                    fdns,
                    "{}",
                    json!({"name": cname_host, "type": "cname", "value": mid})
                )
                .unwrap();
                writeln!(
                    fdns,
                    "{}",
                    json!({"name": mid, "type": "cname", "value": format!("c.{tracker}")})
                )
                .unwrap();
            } else {
                writeln!(
                    fdns,
                    "{}",
                    json!({"name": cname_host, "type": "cname", "value": format!("c.{tracker}")})
                )
                .unwrap();
            }
            for _ in 0..n_track {
                let uid = rand_string(&mut rng, query_len);
                let sid = rand_string(&mut rng, query_len / 2);
                let is_xhr = rng.gen_bool(0.5);
                push(
                    &mut lines,
                    &mut ts,
                    format!("https://{cname_host}/pixel?uid={uid}&s={sid}"),
                    if is_xhr { "POST" } else { "GET" },
                    CONTENT_TYPES[rng.gen_range(0..2)],
                    is_xhr,
                    false,
                );
                tracking_requests += 1;
            }
        }

        // Site metadata rides on the first line.
        lines[0]["site_meta"] = json!({
            "ranking": i as u64 + 1,
            "country": COUNTRIES[rng.gen_range(0..COUNTRIES.len())],
            "category": CATEGORIES[rng.gen_range(0..CATEGORIES.len())],
            "script_call_count": if cloaked { rng.gen_range(4..12) } else { rng.gen_range(0..3) },
        });
        total_requests += lines.len();
        for line in lines {
            writeln!(crawl, "{line}").unwrap();
        }
    }
    crawl.flush().unwrap();
    fdns.flush().unwrap();

    let trackers_path = dir.join("trackers.txt");
    let mut trackers = String::from("! synthetic tracker domains\n");
    for t in TRACKERS {
        trackers.push_str(&format!("||{t}^\n"));
    }
    trackers.push_str("@@||allowlisted.tracker9.net^\n");
    trackers.push_str("/banner[0-9]+/\n"); // unsupported, parse-only
    std::fs::write(&trackers_path, trackers).unwrap();

    let partial_path = dir.join("partial.txt");
    std::fs::write(&partial_path, "||tracker0.net^\n||tracker1.net^\n").unwrap();

    Corpus {
        crawl: crawl_path,
        fdns: fdns_path,
        filters: vec![trackers_path, partial_path],
        cloaked_sites,
        tracking_requests,
        total_requests,
    }
}
