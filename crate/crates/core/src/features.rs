//! Site-level and request-level feature extraction and numeric encoding.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::filterlist::FilterList;
use crate::ingest::{RequestRecord, SiteRecord};
use crate::psl::{normalize_host, PublicSuffixList, UrlError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("empty input string")]
    EmptyInput,
    #[error("site {0} has no requests")]
    EmptySite(String),
    #[error(transparent)]
    Url(#[from] UrlError),
    #[error("schema mismatch: expected fingerprint {expected}, got {found}")]
    SchemaMismatch { expected: String, found: String },
}

/// Party classification of a request host relative to the visited site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    FirstDomain,
    FirstSubdomain,
    Third,
}

/// Classify `request_host` against `site_domain` by registrable domain.
pub fn classify_party(
    request_host: &str,
    site_domain: &str,
    psl: &PublicSuffixList,
) -> Result<Party, UrlError> {
    let host = normalize_host(request_host);
    let site_registrable = psl.registrable_domain(site_domain)?;
    if host == site_registrable {
        return Ok(Party::FirstDomain);
    }
    match psl.registrable_domain(&host) {
        Ok(host_registrable) if host_registrable == site_registrable => {
            Ok(Party::FirstSubdomain)
        }
        Ok(_) | Err(UrlError::PublicSuffix(_)) => Ok(Party::Third),
        Err(e) => Err(e),
    }
}

/// Shannon entropy (base 2) of the character distribution of `s`, divided
/// by its length: bits per character.
pub fn metric_entropy<S: Scalar>(s: &str) -> Result<S, FeatureError> {
    if s.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    // BTreeMap: summation order must be stable for bit-reproducible runs.
    let mut counts: BTreeMap<char, usize> = BTreeMap::new();
    let mut len = 0usize;
    for c in s.chars() {
        *counts.entry(c).or_insert(0) += 1;
        len += 1;
    }
    let n = S::from_usize_lossy(len);
    let mut entropy = S::zero();
    for &count in counts.values() {
        let p = S::from_usize_lossy(count) / n;
        entropy = entropy - p * p.log2();
    }
    Ok(entropy / n)
}

/// Labels of `host` left of its registrable domain, and the same labels
/// joined without dots. Empty when the host is the registrable domain.
pub fn subdomain_prefix(
    host: &str,
    psl: &PublicSuffixList,
) -> Result<(String, Vec<String>), UrlError> {
    let host = normalize_host(host);
    let registrable = psl.registrable_domain(&host)?;
    if host == registrable {
        return Ok((String::new(), Vec::new()));
    }
    let prefix_part = &host[..host.len() - registrable.len() - 1];
    let labels: Vec<String> = prefix_part.split('.').map(str::to_string).collect();
    Ok((labels.concat(), labels))
}

/// The nine site-level features plus the script-request count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SiteFeatures<S: Scalar> {
    pub num_url: usize,
    pub num_1st: usize,
    pub num_3rd: usize,
    pub num_script: usize,
    pub pct_script_call: S,
    pub pct_xhr: S,
    pub pct_3rd_window: S,
    pub ranking: u64,
    pub country: String,
    pub category: String,
}

/// The twelve request-level features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RequestFeatures<S: Scalar> {
    pub method: String,
    pub is_xhr: bool,
    pub content_type: String,
    pub len_url: usize,
    pub len_sub: usize,
    pub len_prefix_sub: usize,
    pub num_prefix_sub: usize,
    pub prefix_sub_blacklist: bool,
    pub is_sub_dic: bool,
    pub entropy_url: S,
    pub entropy_sub: S,
    pub entropy_prefix_sub: S,
}

/// Compute the site feature vector over a site's requests.
pub fn site_features<S: Scalar>(
    site: &SiteRecord,
    psl: &PublicSuffixList,
) -> Result<SiteFeatures<S>, FeatureError> {
    if site.requests.is_empty() {
        return Err(FeatureError::EmptySite(site.site_id.clone()));
    }
    let num_url = site.requests.len();
    let mut num_1st = 0usize;
    let mut num_script = 0usize;
    let mut num_xhr = 0usize;
    let mut num_3rd_window = 0usize;
    for req in &site.requests {
        let party = req
            .host()
            .and_then(|h| classify_party(&h, &site.domain, psl).ok())
            .unwrap_or(Party::Third);
        if party != Party::Third {
            num_1st += 1;
        }
        if req.content_type.eq_ignore_ascii_case("script") {
            num_script += 1;
        }
        if req.is_xhr {
            num_xhr += 1;
        }
        if req.is_third_party_window {
            num_3rd_window += 1;
        }
    }
    let n = S::from_usize_lossy(num_url);
    let pct_script_call =
        (S::from_f64_lossy(site.script_call_count as f64) / n).min(S::one());
    Ok(SiteFeatures {
        num_url,
        num_1st,
        num_3rd: num_url - num_1st,
        num_script,
        pct_script_call,
        pct_xhr: S::from_usize_lossy(num_xhr) / n,
        pct_3rd_window: S::from_usize_lossy(num_3rd_window) / n,
        ranking: site.ranking,
        country: site.country.clone(),
        category: site.category.clone(),
    })
}

/// Dictionary for the `is_sub_dic` feature: pinned lowercase word list,
/// exact match on the leftmost prefix label.
#[derive(Debug, Clone)]
pub struct Dictionary {
    words: HashSet<String>,
}

impl Dictionary {
    pub fn bundled() -> Self {
        Self::parse(include_str!("../data/english_words.txt"))
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn parse(text: &str) -> Self {
        Dictionary {
            words: text
                .lines()
                .map(|w| w.trim().to_ascii_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_ascii_lowercase())
    }
}

/// Compute the request feature vector.
pub fn request_features<S: Scalar>(
    req: &RequestRecord,
    dictionary: &Dictionary,
    lists: &[FilterList],
    psl: &PublicSuffixList,
) -> Result<RequestFeatures<S>, FeatureError> {
    let host = req
        .host()
        .ok_or_else(|| UrlError::NoHost(req.url.clone()))?;
    let (prefix_string, prefix_labels) = subdomain_prefix(&host, psl)?;
    let leftmost = prefix_labels.first().map(String::as_str).unwrap_or("");
    let entropy_prefix_sub = if prefix_string.is_empty() {
        S::zero() // empty-prefix convention
    } else {
        metric_entropy(&prefix_string)?
    };
    Ok(RequestFeatures {
        method: req.method.clone(),
        is_xhr: req.is_xhr,
        content_type: req.content_type.clone(),
        len_url: req.url.chars().count(),
        len_sub: host.chars().count(),
        len_prefix_sub: prefix_string.chars().count(),
        num_prefix_sub: prefix_labels.len(),
        prefix_sub_blacklist: !leftmost.is_empty()
            && lists.iter().any(|l| l.prefix_in_blacklist(leftmost)),
        is_sub_dic: !leftmost.is_empty() && dictionary.contains(leftmost),
        entropy_url: metric_entropy(&req.url)?,
        entropy_sub: metric_entropy(&host)?,
        entropy_prefix_sub,
    })
}

/// Instance kind an encoding schema applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Site,
    Request,
}

/// Most categorical values kept per vocabulary; the rest map to "other".
pub const VOCAB_LIMIT: usize = 20;

const OTHER: &str = "__other";

/// Fixed categorical vocabularies, built from the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingSchema {
    pub target: Target,
    /// Field name -> ordered vocabulary (descending frequency, ties
    /// lexicographic), without the implicit "other" entry.
    pub vocabularies: BTreeMap<String, Vec<String>>,
}

fn build_vocab<'a>(values: impl Iterator<Item = &'a str>, limit: usize) -> Vec<String> {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for v in values {
        *freq.entry(v).or_insert(0) += 1;
    }
    let mut entries: Vec<(&str, usize)> = freq.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    entries.truncate(limit);
    entries.into_iter().map(|(v, _)| v.to_string()).collect()
}

impl EncodingSchema {
    pub fn for_sites<S: Scalar>(training: &[SiteFeatures<S>]) -> Self {
        let mut vocabularies = BTreeMap::new();
        vocabularies.insert(
            "country".to_string(),
            build_vocab(training.iter().map(|f| f.country.as_str()), VOCAB_LIMIT),
        );
        vocabularies.insert(
            "category".to_string(),
            build_vocab(training.iter().map(|f| f.category.as_str()), VOCAB_LIMIT),
        );
        EncodingSchema {
            target: Target::Site,
            vocabularies,
        }
    }

    pub fn for_requests<S: Scalar>(training: &[RequestFeatures<S>]) -> Self {
        let mut vocabularies = BTreeMap::new();
        vocabularies.insert(
            "method".to_string(),
            build_vocab(training.iter().map(|f| f.method.as_str()), VOCAB_LIMIT),
        );
        vocabularies.insert(
            "content_type".to_string(),
            build_vocab(training.iter().map(|f| f.content_type.as_str()), VOCAB_LIMIT),
        );
        EncodingSchema {
            target: Target::Request,
            vocabularies,
        }
    }

    fn one_hot<S: Scalar>(&self, field: &str, value: &str, row: &mut Vec<S>) {
        let vocab = &self.vocabularies[field];
        let hit = vocab.iter().position(|v| v == value);
        for i in 0..vocab.len() {
            row.push(if hit == Some(i) { S::one() } else { S::zero() });
        }
        row.push(if hit.is_none() { S::one() } else { S::zero() });
    }

    fn one_hot_columns(&self, field: &str, out: &mut Vec<String>) {
        for v in &self.vocabularies[field] {
            out.push(format!("{field}={v}"));
        }
        out.push(format!("{field}={OTHER}"));
    }

    /// Column names, in the fixed deterministic order.
    pub fn columns(&self) -> Vec<String> {
        let mut cols = Vec::new();
        match self.target {
            Target::Site => {
                cols.extend(
                    ["num_url", "num_1st", "num_3rd", "num_script", "pct_script_call",
                     "pct_xhr", "pct_3rd_window", "ranking"]
                        .map(String::from),
                );
                self.one_hot_columns("country", &mut cols);
                self.one_hot_columns("category", &mut cols);
            }
            Target::Request => {
                self.one_hot_columns("method", &mut cols);
                cols.push("is_xhr".to_string());
                self.one_hot_columns("content_type", &mut cols);
                cols.extend(
                    ["len_url", "len_sub", "len_prefix_sub", "num_prefix_sub",
                     "prefix_sub_blacklist", "is_sub_dic", "entropy_url", "entropy_sub",
                     "entropy_prefix_sub"]
                        .map(String::from),
                );
            }
        }
        cols
    }

    /// Stable fingerprint over the ordered column names.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for col in self.columns() {
            hasher.update(col.as_bytes());
            hasher.update([0u8]);
        }
        let digest = hasher.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn encode_site_row<S: Scalar>(&self, f: &SiteFeatures<S>) -> Vec<S> {
        debug_assert_eq!(self.target, Target::Site);
        let mut row = vec![
            S::from_usize_lossy(f.num_url),
            S::from_usize_lossy(f.num_1st),
            S::from_usize_lossy(f.num_3rd),
            S::from_usize_lossy(f.num_script),
            f.pct_script_call,
            f.pct_xhr,
            f.pct_3rd_window,
            S::from_f64_lossy(f.ranking as f64),
        ];
        self.one_hot("country", &f.country, &mut row);
        self.one_hot("category", &f.category, &mut row);
        row
    }

    pub fn encode_request_row<S: Scalar>(&self, f: &RequestFeatures<S>) -> Vec<S> {
        debug_assert_eq!(self.target, Target::Request);
        let mut row = Vec::new();
        self.one_hot("method", &f.method, &mut row);
        row.push(if f.is_xhr { S::one() } else { S::zero() });
        self.one_hot("content_type", &f.content_type, &mut row);
        row.extend([
            S::from_usize_lossy(f.len_url),
            S::from_usize_lossy(f.len_sub),
            S::from_usize_lossy(f.len_prefix_sub),
            S::from_usize_lossy(f.num_prefix_sub),
            if f.prefix_sub_blacklist { S::one() } else { S::zero() },
            if f.is_sub_dic { S::one() } else { S::zero() },
            f.entropy_url,
            f.entropy_sub,
            f.entropy_prefix_sub,
        ]);
        row
    }
}

/// Encoded instances: named numeric columns plus the label vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct EncodedMatrix<S: Scalar> {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<S>>,
    pub labels: Vec<bool>,
    pub schema_fingerprint: String,
}

impl<S: Scalar> EncodedMatrix<S> {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Row subset by index, preserving order.
    pub fn subset(&self, indices: &[usize]) -> EncodedMatrix<S> {
        EncodedMatrix {
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            schema_fingerprint: self.schema_fingerprint.clone(),
        }
    }

    /// Write as CSV with a header row and trailing label column.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.columns.clone();
        header.push("label".to_string());
        w.write_record(&header)?;
        for (row, &label) in self.rows.iter().zip(&self.labels) {
            let mut record: Vec<String> =
                row.iter().map(|v| format!("{v}")).collect();
            record.push(if label { "1" } else { "0" }.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Encode site instances against a fixed schema.
pub fn encode_sites<S: Scalar>(
    schema: &EncodingSchema,
    instances: &[SiteFeatures<S>],
    labels: &[bool],
) -> EncodedMatrix<S> {
    EncodedMatrix {
        columns: schema.columns(),
        rows: instances.iter().map(|f| schema.encode_site_row(f)).collect(),
        labels: labels.to_vec(),
        schema_fingerprint: schema.fingerprint(),
    }
}

/// Encode request instances against a fixed schema.
pub fn encode_requests<S: Scalar>(
    schema: &EncodingSchema,
    instances: &[RequestFeatures<S>],
    labels: &[bool],
) -> EncodedMatrix<S> {
    EncodedMatrix {
        columns: schema.columns(),
        rows: instances.iter().map(|f| schema.encode_request_row(f)).collect(),
        labels: labels.to_vec(),
        schema_fingerprint: schema.fingerprint(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterlist::parse_list;

    fn psl() -> PublicSuffixList {
        PublicSuffixList::bundled()
    }

    fn request(url: &str) -> RequestRecord {
        RequestRecord {
            site_id: "s".into(),
            url: url.into(),
            method: "GET".into(),
            content_type: "script".into(),
            is_xhr: false,
            is_third_party_window: false,
            timestamp: 0.0,
        }
    }

    #[test]
    fn party_classification() {
        let psl = psl();
        assert_eq!(
            classify_party("a.example.com", "example.com", &psl).unwrap(),
            Party::FirstSubdomain
        );
        assert_eq!(
            classify_party("example.com", "example.com", &psl).unwrap(),
            Party::FirstDomain
        );
        assert_eq!(
            classify_party("cdn.other.com", "example.com", &psl).unwrap(),
            Party::Third
        );
        // PSL oracle: registrable(a.b.example.co.uk) = example.co.uk.
        assert_eq!(
            classify_party("a.b.example.co.uk", "example.co.uk", &psl).unwrap(),
            Party::FirstSubdomain
        );
    }

    #[test]
    fn entropy_known_values() {
        assert_eq!(metric_entropy::<f64>("aaaa").unwrap(), 0.0);
        assert_eq!(metric_entropy::<f64>("ab").unwrap(), 0.5);
        // H("aab") = 0.918295834... bits; divided by 3.
        let e = metric_entropy::<f64>("aab").unwrap();
        assert!((e - 0.9182958340544896 / 3.0).abs() < 1e-12);
        assert!(matches!(
            metric_entropy::<f64>(""),
            Err(FeatureError::EmptyInput)
        ));
    }

    #[test]
    fn entropy_generic_f32() {
        let e = metric_entropy::<f32>("ab").unwrap();
        assert!((e - 0.5).abs() < 1e-6);
    }

    #[test]
    fn prefix_extraction() {
        let psl = psl();
        let (s, labels) = subdomain_prefix("gjr5.yoigo.com", &psl).unwrap();
        assert_eq!((s.as_str(), labels.len()), ("gjr5", 1));
        assert_eq!(s.chars().count(), 4);

        let (s, labels) = subdomain_prefix("example.com", &psl).unwrap();
        assert_eq!((s.as_str(), labels.len()), ("", 0));

        let (s, labels) = subdomain_prefix("a.b.example.com", &psl).unwrap();
        assert_eq!(s, "ab");
        assert_eq!(labels, vec!["a", "b"]);
    }

    fn site_with(requests: Vec<RequestRecord>, script_calls: u64) -> SiteRecord {
        SiteRecord {
            site_id: "s".into(),
            domain: "example.com".into(),
            ranking: 10,
            country: "JP".into(),
            category: "News".into(),
            script_call_count: script_calls,
            requests,
        }
    }

    #[test]
    fn site_feature_proportions() {
        let mut reqs: Vec<RequestRecord> =
            (0..10).map(|i| request(&format!("https://example.com/{i}"))).collect();
        for r in reqs.iter_mut().take(3) {
            r.is_xhr = true;
        }
        let f: SiteFeatures<f64> = site_features(&site_with(reqs, 0), &psl()).unwrap();
        assert_eq!(f.pct_xhr, 0.3);
        assert_eq!(f.num_url, 10);
        assert_eq!(f.num_1st, 10);
        assert_eq!(f.num_3rd, 0);
        assert_eq!(f.num_1st + f.num_3rd, f.num_url);
    }

    #[test]
    fn empty_site_is_an_error() {
        assert!(matches!(
            site_features::<f64>(&site_with(vec![], 0), &psl()),
            Err(FeatureError::EmptySite(_))
        ));
    }

    #[test]
    fn script_call_fraction_clamped() {
        let reqs = vec![request("https://example.com/")];
        let f: SiteFeatures<f64> = site_features(&site_with(reqs, 5), &psl()).unwrap();
        assert_eq!(f.pct_script_call, 1.0);
    }

    #[test]
    fn request_feature_vector() {
        let lists = vec![parse_list("||tracker.com^", "t")];
        let dict = Dictionary::bundled();
        let f: RequestFeatures<f64> =
            request_features(&request("https://gjr5.yoigo.com/ea.js"), &dict, &lists, &psl())
                .unwrap();
        assert_eq!(f.len_url, 28);
        assert_eq!(f.num_prefix_sub, 1);
        assert_eq!(f.len_prefix_sub, 4);
        assert!(!f.prefix_sub_blacklist);
        assert!(!f.is_sub_dic);
        assert_eq!(f.len_sub, "gjr5.yoigo.com".len());
    }

    #[test]
    fn dictionary_prefix_membership() {
        let dict = Dictionary::bundled();
        let f: RequestFeatures<f64> = request_features(
            &request("https://metrics.example.com/x"),
            &dict,
            &[],
            &psl(),
        )
        .unwrap();
        assert!(f.is_sub_dic);
    }

    #[test]
    fn apex_host_empty_prefix_convention() {
        let dict = Dictionary::bundled();
        let f: RequestFeatures<f64> =
            request_features(&request("https://example.com/x"), &dict, &[], &psl()).unwrap();
        assert_eq!(f.len_prefix_sub, 0);
        assert_eq!(f.entropy_prefix_sub, 0.0);
        assert!(!f.is_sub_dic);
    }

    #[test]
    fn one_hot_encoding_with_other() {
        let make = |method: &str| RequestFeatures::<f64> {
            method: method.into(),
            is_xhr: false,
            content_type: "script".into(),
            len_url: 1,
            len_sub: 1,
            len_prefix_sub: 0,
            num_prefix_sub: 0,
            prefix_sub_blacklist: false,
            is_sub_dic: false,
            entropy_url: 0.0,
            entropy_sub: 0.0,
            entropy_prefix_sub: 0.0,
        };
        let training = vec![make("GET"), make("GET"), make("POST")];
        let schema = EncodingSchema::for_requests(&training);
        assert_eq!(schema.vocabularies["method"], vec!["GET", "POST"]);

        let row = schema.encode_request_row(&make("GET"));
        assert_eq!(&row[..3], &[1.0, 0.0, 0.0]);
        let row = schema.encode_request_row(&make("PATCH"));
        assert_eq!(&row[..3], &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn encoding_deterministic() {
        let training: Vec<SiteFeatures<f64>> = vec![SiteFeatures {
            num_url: 3,
            num_1st: 2,
            num_3rd: 1,
            num_script: 1,
            pct_script_call: 0.1,
            pct_xhr: 0.2,
            pct_3rd_window: 0.3,
            ranking: 7,
            country: "JP".into(),
            category: "News".into(),
        }];
        let schema = EncodingSchema::for_sites(&training);
        let a = encode_sites(&schema, &training, &[true]);
        let b = encode_sites(&schema, &training, &[true]);
        assert_eq!(a, b);
        assert_eq!(a.columns.len(), a.rows[0].len());
        // Distinct categorical values occupy distinct columns.
        let unique: std::collections::HashSet<&String> = a.columns.iter().collect();
        assert_eq!(unique.len(), a.columns.len());
    }
}
