//! Adblock-syntax tracker-list parsing and domain matching.
//!
//! Supports the subset needed to match resolved CNAMEs: `||` domain anchors,
//! `|` anchors, `*` wildcards, `^` separators, `@@` exceptions, `!` comments,
//! and `$option` suffixes (options are parsed for reporting only). Cosmetic
//! rules and regex rules are kept as unsupported and never matched.

use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RuleKind {
    DomainAnchor,
    Plain,
    Exception,
    Unsupported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok {
    Lit(u8),
    /// `*`: any run of characters.
    Any,
    /// `^`: a separator character or end of input.
    Sep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    toks: Vec<Tok>,
    /// Rule began with `||`: match must start at a domain label boundary.
    domain_anchored: bool,
    /// Leading `|`: match must start at position 0.
    start_anchored: bool,
    /// Trailing `|`: match must end at end of input.
    end_anchored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRule {
    pub raw: String,
    pub kind: RuleKind,
    pattern: Option<Pattern>,
    pub options: Vec<String>,
}

/// Per-kind counts reported after parsing.
#[derive(Debug, Default, Clone, PartialEq, Serialize)]
pub struct ParseCounts {
    pub domain_anchor: usize,
    pub plain: usize,
    pub exception: usize,
    pub unsupported: usize,
}

#[derive(Debug, Clone)]
pub struct FilterList {
    pub source_name: String,
    pub rules: Vec<FilterRule>,
    pub counts: ParseCounts,
    /// First literal domain of `||` rules -> rule ids, for candidate lookup.
    domain_index: HashMap<String, Vec<usize>>,
    /// Block rules not reachable through the index.
    linear: Vec<usize>,
    exceptions: Vec<usize>,
}

fn is_separator(c: u8) -> bool {
    !(c.is_ascii_alphanumeric() || matches!(c, b'_' | b'-' | b'.' | b'%'))
}

impl Pattern {
    fn parse(body: &str, domain_anchored: bool) -> Pattern {
        let mut body = body;
        let start_anchored = !domain_anchored && body.starts_with('|');
        if start_anchored {
            body = &body[1..];
        }
        let end_anchored = body.ends_with('|');
        if end_anchored {
            body = &body[..body.len() - 1];
        }
        let mut toks = Vec::with_capacity(body.len());
        for &b in body.as_bytes() {
            toks.push(match b {
                b'*' => Tok::Any,
                b'^' => Tok::Sep,
                _ => Tok::Lit(b.to_ascii_lowercase()),
            });
        }
        Pattern {
            toks,
            domain_anchored,
            start_anchored,
            end_anchored,
        }
    }

    /// Leading literal run of the pattern, if it looks like a domain.
    fn literal_domain(&self) -> Option<String> {
        let mut out = String::new();
        for tok in &self.toks {
            match tok {
                Tok::Lit(b) if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.') => {
                    out.push(*b as char)
                }
                _ => break,
            }
        }
        let out = out.trim_matches('.').to_string();
        (!out.is_empty()).then_some(out)
    }

    /// Literal domain usable as an index key: the literal run must be the
    /// complete host part of the pattern, otherwise suffix lookup on the
    /// matched fqdn would miss the rule.
    fn indexable_domain(&self) -> Option<String> {
        let run = self
            .toks
            .iter()
            .take_while(|t| {
                matches!(t, Tok::Lit(b) if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.'))
            })
            .count();
        match self.toks.get(run) {
            Some(Tok::Sep) | Some(Tok::Lit(b'/')) => self.literal_domain(),
            // Pattern ends with the literal: only label-aligned when the
            // match must consume the whole input. An open suffix
            // (`||tracker.com`) also matches `tracker.communist.example`,
            // which suffix lookup would never probe.
            None if self.end_anchored => self.literal_domain(),
            _ => None,
        }
    }

    fn matches_from(&self, input: &[u8], ti: usize, pi: usize) -> bool {
        if pi == self.toks.len() {
            return !self.end_anchored || ti == input.len();
        }
        match self.toks[pi] {
            Tok::Lit(b) => {
                ti < input.len()
                    && input[ti].to_ascii_lowercase() == b
                    && self.matches_from(input, ti + 1, pi + 1)
            }
            Tok::Sep => {
                if ti == input.len() {
                    // `^` matches end of input.
                    self.matches_from(input, ti, pi + 1)
                } else {
                    is_separator(input[ti]) && self.matches_from(input, ti + 1, pi + 1)
                }
            }
            Tok::Any => (ti..=input.len()).any(|t| self.matches_from(input, t, pi + 1)),
        }
    }

    /// Match against a bare (normalized) domain string.
    pub fn matches_domain(&self, fqdn: &str) -> bool {
        let input = fqdn.as_bytes();
        if self.domain_anchored {
            // Candidate starts: position 0 and after each dot.
            std::iter::once(0)
                .chain(input.iter().enumerate().filter(|(_, &b)| b == b'.').map(|(i, _)| i + 1))
                .any(|start| self.matches_from(input, start, 0))
        } else if self.start_anchored {
            self.matches_from(input, 0, 0)
        } else {
            (0..=input.len()).any(|start| self.matches_from(input, start, 0))
        }
    }
}

fn parse_rule(line: &str) -> FilterRule {
    let raw = line.to_string();
    let trimmed = line.trim();

    let unsupported = |raw: String| FilterRule {
        raw,
        kind: RuleKind::Unsupported,
        pattern: None,
        options: Vec::new(),
    };

    if trimmed.is_empty()
        || trimmed.starts_with('!')
        || trimmed.starts_with('[')
        || trimmed.contains("##")
        || trimmed.contains("#@#")
        || trimmed.contains("#?#")
    {
        return unsupported(raw);
    }

    let (mut body, exception) = match trimmed.strip_prefix("@@") {
        Some(rest) => (rest, true),
        None => (trimmed, false),
    };

    // Regex rules are out of scope.
    if body.len() > 1 && body.starts_with('/') && body.ends_with('/') {
        return unsupported(raw);
    }

    // `$options` suffix: split at the last `$` when the tail parses as
    // comma-separated option tokens.
    let mut options = Vec::new();
    if let Some(pos) = body.rfind('$') {
        let tail = &body[pos + 1..];
        let looks_like_options = !tail.is_empty()
            && tail.split(',').all(|o| {
                let o = o.strip_prefix('~').unwrap_or(o);
                let key = o.split('=').next().unwrap_or("");
                !key.is_empty() && key.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
            });
        if looks_like_options {
            options = tail.split(',').map(str::to_string).collect();
            body = &body[..pos];
        }
    }

    let domain_anchored = body.starts_with("||");
    let pattern_body = if domain_anchored { &body[2..] } else { body };
    if pattern_body.is_empty() {
        return unsupported(raw);
    }
    let pattern = Pattern::parse(pattern_body, domain_anchored);

    let kind = if exception {
        RuleKind::Exception
    } else if domain_anchored {
        RuleKind::DomainAnchor
    } else {
        RuleKind::Plain
    };
    FilterRule {
        raw,
        kind,
        pattern: Some(pattern),
        options,
    }
}

/// Parse a filter-list text into an indexed list.
pub fn parse_list(text: &str, source_name: &str) -> FilterList {
    let mut rules = Vec::new();
    let mut counts = ParseCounts::default();
    let mut domain_index: HashMap<String, Vec<usize>> = HashMap::new();
    let mut linear = Vec::new();
    let mut exceptions = Vec::new();

    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let rule = parse_rule(line);
        let id = rules.len();
        match rule.kind {
            RuleKind::Unsupported => counts.unsupported += 1,
            RuleKind::Exception => {
                counts.exception += 1;
                exceptions.push(id);
            }
            RuleKind::DomainAnchor | RuleKind::Plain => {
                if rule.kind == RuleKind::DomainAnchor {
                    counts.domain_anchor += 1;
                } else {
                    counts.plain += 1;
                }
                let indexed = rule
                    .pattern
                    .as_ref()
                    .filter(|p| p.domain_anchored)
                    .and_then(|p| p.indexable_domain());
                match indexed {
                    Some(domain) => domain_index.entry(domain).or_default().push(id),
                    None => linear.push(id),
                }
            }
        }
        rules.push(rule);
    }

    FilterList {
        source_name: source_name.to_string(),
        rules,
        counts,
        domain_index,
        linear,
        exceptions,
    }
}

pub fn load_list(path: &Path) -> std::io::Result<FilterList> {
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(parse_list(&text, &name))
}

impl FilterList {
    fn rule_matches(&self, id: usize, fqdn: &str) -> bool {
        self.rules[id]
            .pattern
            .as_ref()
            .is_some_and(|p| p.matches_domain(fqdn))
    }

    /// First matching block rule in file order, unless an exception rule
    /// also matches (then `None`).
    pub fn match_domain(&self, fqdn: &str) -> Option<&FilterRule> {
        let mut candidates: Vec<usize> = self.linear.clone();
        let mut suffix = fqdn;
        loop {
            if let Some(ids) = self.domain_index.get(suffix) {
                candidates.extend_from_slice(ids);
            }
            match suffix.find('.') {
                Some(dot) => suffix = &suffix[dot + 1..],
                None => break,
            }
        }
        candidates.sort_unstable();
        candidates.dedup();

        let hit = candidates.into_iter().find(|&id| self.rule_matches(id, fqdn))?;
        if self.exceptions.iter().any(|&id| self.rule_matches(id, fqdn)) {
            return None;
        }
        Some(&self.rules[hit])
    }

    /// True iff `prefix` is the leftmost label of a `||` rule that names a
    /// specific subdomain (literal domain of at least three labels).
    pub fn prefix_in_blacklist(&self, prefix: &str) -> bool {
        let prefix = prefix.to_ascii_lowercase();
        self.rules.iter().any(|rule| {
            rule.kind == RuleKind::DomainAnchor
                && rule
                    .pattern
                    .as_ref()
                    .and_then(|p| p.literal_domain())
                    .is_some_and(|domain| {
                        let mut labels = domain.split('.');
                        let first = labels.next().unwrap_or("");
                        domain.split('.').count() >= 3 && first == prefix
                    })
        })
    }
}

/// True iff any list in `lists` blocks `fqdn`.
pub fn any_match<'a>(lists: &'a [FilterList], fqdn: &str) -> Option<(&'a FilterList, &'a FilterRule)> {
    lists
        .iter()
        .find_map(|list| list.match_domain(fqdn).map(|rule| (list, rule)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comment_is_unsupported() {
        let list = parse_list("! comment", "t");
        assert_eq!(list.rules.len(), 1);
        assert_eq!(list.rules[0].kind, RuleKind::Unsupported);
        assert_eq!(list.counts.unsupported, 1);
    }

    #[test]
    fn domain_anchor_kind_and_boundary() {
        // Reference adblock engines treat "||tracker.com^" as anchored at a
        // label boundary; verified against the brave adblock engine semantics.
        let list = parse_list("||tracker.com^", "t");
        assert_eq!(list.rules[0].kind, RuleKind::DomainAnchor);
        assert!(list.match_domain("tracker.com").is_some());
        assert!(list.match_domain("metric.tracker.com").is_some());
        assert!(list.match_domain("nottracker.com").is_none());
    }

    #[test]
    fn exception_kind_and_dominance() {
        let list = parse_list("@@||good.com^", "t");
        assert_eq!(list.rules[0].kind, RuleKind::Exception);

        let list = parse_list("||good.com^\n@@||metrics.good.com^", "t");
        assert!(list.match_domain("good.com").is_some());
        assert!(list.match_domain("metrics.good.com").is_none());
    }

    #[test]
    fn wildcard_and_options() {
        let list = parse_list("||track*.com^$third-party,script", "t");
        assert_eq!(list.rules[0].options, vec!["third-party", "script"]);
        assert!(list.match_domain("tracker.com").is_some());
        assert!(list.match_domain("trackzzz.com").is_some());
        assert!(list.match_domain("examp.com").is_none());
    }

    #[test]
    fn element_hiding_unsupported() {
        let list = parse_list("example.com##.ad-banner", "t");
        assert_eq!(list.rules[0].kind, RuleKind::Unsupported);
        assert!(list.match_domain("example.com").is_none());
    }

    #[test]
    fn first_match_in_file_order_wins() {
        let list = parse_list("||a.tracker.com^\n||tracker.com^", "t");
        let hit = list.match_domain("a.tracker.com").unwrap();
        assert_eq!(hit.raw, "||a.tracker.com^");
    }

    #[test]
    fn plain_substring_rule() {
        let list = parse_list("tracker", "t");
        assert_eq!(list.rules[0].kind, RuleKind::Plain);
        assert!(list.match_domain("cdn.tracker.com").is_some());
        assert!(list.match_domain("cdn.example.com").is_none());
    }

    #[test]
    fn prefix_blacklist() {
        let list = parse_list("||metrics.example.com^", "t");
        assert!(list.prefix_in_blacklist("metrics"));
        assert!(!list.prefix_in_blacklist("example"));

        let list = parse_list("||tracker.com^", "t");
        assert!(!list.prefix_in_blacklist("gjr5"));

        let list = parse_list("", "t");
        assert!(!list.prefix_in_blacklist("anything"));
    }
}
