//! Public-suffix-list lookup for registrable-domain (eTLD+1) computation.
//!
//! A snapshot of the list is bundled with the crate so party classification
//! is reproducible; a different snapshot can be loaded from a file path.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PslError {
    #[error("failed to read public suffix list: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum UrlError {
    #[error("host is empty")]
    EmptyHost,
    #[error("host {0:?} is a public suffix, no registrable domain")]
    PublicSuffix(String),
    #[error("invalid url: {0}")]
    InvalidUrl(String),
    #[error("url {0:?} has no host component")]
    NoHost(String),
}

const BUNDLED_SNAPSHOT: &str = include_str!("../data/public_suffix_list.dat");

#[derive(Debug, Clone, Copy, PartialEq)]
enum RuleKind {
    Normal,
    Wildcard,
    Exception,
}

/// Parsed public suffix list, keyed by rule domain for O(labels) lookup.
#[derive(Debug, Clone)]
pub struct PublicSuffixList {
    rules: HashMap<String, RuleKind>,
}

impl PublicSuffixList {
    /// The snapshot pinned into the repository.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_SNAPSHOT)
    }

    pub fn load(path: &Path) -> Result<Self, PslError> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn parse(text: &str) -> Self {
        let mut rules = HashMap::new();
        for line in text.lines() {
            let line = line.split_whitespace().next().unwrap_or("");
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let line = line.to_ascii_lowercase();
            if let Some(rest) = line.strip_prefix('!') {
                rules.insert(rest.to_string(), RuleKind::Exception);
            } else if let Some(rest) = line.strip_prefix("*.") {
                rules.insert(rest.to_string(), RuleKind::Wildcard);
            } else {
                rules.entry(line).or_insert(RuleKind::Normal);
            }
        }
        PublicSuffixList { rules }
    }

    /// Number of labels in the public suffix of `host`.
    ///
    /// Follows the upstream matching algorithm: exception rules beat
    /// wildcards, the longest match wins, and with no match the suffix is
    /// the final label.
    fn suffix_len(&self, labels: &[&str]) -> usize {
        let mut best = 1usize;
        for start in 0..labels.len() {
            let candidate = labels[start..].join(".");
            match self.rules.get(&candidate) {
                Some(RuleKind::Exception) => {
                    // Exception rule: suffix is the rule with the leftmost
                    // label removed.
                    return labels.len() - start - 1;
                }
                Some(RuleKind::Normal) => {
                    best = best.max(labels.len() - start);
                }
                Some(RuleKind::Wildcard) => {}
                None => {}
            }
            // A wildcard rule `*.x` matches candidates of the form `y.x`.
            if start + 1 < labels.len() {
                let parent = labels[start + 1..].join(".");
                if matches!(self.rules.get(&parent), Some(RuleKind::Wildcard)) {
                    best = best.max(labels.len() - start);
                }
            }
        }
        best.min(labels.len())
    }

    /// Registrable domain (public suffix plus one label) of a normalized host.
    pub fn registrable_domain(&self, host: &str) -> Result<String, UrlError> {
        let host = normalize_host(host);
        if host.is_empty() {
            return Err(UrlError::EmptyHost);
        }
        let labels: Vec<&str> = host.split('.').collect();
        let suffix_len = self.suffix_len(&labels);
        if labels.len() <= suffix_len {
            return Err(UrlError::PublicSuffix(host));
        }
        Ok(labels[labels.len() - suffix_len - 1..].join("."))
    }
}

/// Lowercase, strip one trailing dot.
pub fn normalize_host(host: &str) -> String {
    host.trim_end_matches('.').to_ascii_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psl() -> PublicSuffixList {
        PublicSuffixList::bundled()
    }

    #[test]
    fn plain_tld() {
        assert_eq!(psl().registrable_domain("www.example.com").unwrap(), "example.com");
        assert_eq!(psl().registrable_domain("example.com").unwrap(), "example.com");
    }

    #[test]
    fn multi_label_suffix() {
        assert_eq!(
            psl().registrable_domain("a.b.example.co.uk").unwrap(),
            "example.co.uk"
        );
    }

    #[test]
    fn suffix_itself_is_an_error() {
        assert_eq!(
            psl().registrable_domain("co.uk"),
            Err(UrlError::PublicSuffix("co.uk".into()))
        );
        assert_eq!(psl().registrable_domain("com"), Err(UrlError::PublicSuffix("com".into())));
    }

    #[test]
    fn wildcard_and_exception_rules() {
        // *.ck makes foo.ck a public suffix, so bar.foo.ck registers at 3 labels.
        assert_eq!(psl().registrable_domain("bar.foo.ck").unwrap(), "bar.foo.ck");
        // !www.ck carves out www.ck as registrable.
        assert_eq!(psl().registrable_domain("www.ck").unwrap(), "www.ck");
        assert_eq!(psl().registrable_domain("sub.www.ck").unwrap(), "www.ck");
    }

    #[test]
    fn unknown_tld_falls_back_to_last_label() {
        assert_eq!(psl().registrable_domain("x.y.internal").unwrap(), "y.internal");
    }

    #[test]
    fn normalization() {
        assert_eq!(psl().registrable_domain("WWW.Example.COM.").unwrap(), "example.com");
    }
}
