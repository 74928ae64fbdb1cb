//! Ground-truth labeling: resolve first-party subdomains to CNAME chains
//! and match the chain targets against tracker filter lists.

pub mod dns;

use std::net::SocketAddr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filterlist::FilterList;
use crate::ingest::{FdnsIndex, RequestRecord, SiteRecord, MAX_CNAME_HOPS};
use crate::psl::{normalize_host, PublicSuffixList, UrlError};

/// Ordered CNAME targets for one fully-qualified name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnameChain {
    pub owner: String,
    pub targets: Vec<String>,
}

impl CnameChain {
    pub fn empty(owner: &str) -> Self {
        CnameChain {
            owner: normalize_host(owner),
            targets: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum ResolveError {
    #[error("resolving {name}: {source}")]
    Dns {
        name: String,
        #[source]
        source: dns::DnsError,
    },
}

/// CNAME resolution source: the offline FDNS index or live DNS queries.
pub enum Resolver<'a> {
    Offline(&'a FdnsIndex),
    Live(LiveResolver),
}

pub struct LiveResolver {
    pub upstream: SocketAddr,
    pub timeout: Duration,
}

impl LiveResolver {
    pub fn new(upstream: SocketAddr) -> Self {
        LiveResolver {
            upstream,
            timeout: Duration::from_secs(3),
        }
    }

    /// Issue CNAME queries, following the chain up to the hop cap.
    fn resolve(&self, fqdn: &str) -> Result<CnameChain, ResolveError> {
        let owner = normalize_host(fqdn);
        let mut targets: Vec<String> = Vec::new();
        let mut cursor = owner.clone();
        // Query id derived from the name so runs are reproducible.
        let mut id = owner.bytes().fold(7u16, |acc, b| acc.wrapping_mul(31).wrapping_add(b as u16));
        while targets.len() < MAX_CNAME_HOPS {
            let answers = dns::query_cname(self.upstream, &cursor, id, self.timeout)
                .map_err(|source| ResolveError::Dns {
                    name: cursor.clone(),
                    source,
                })?;
            let Some(answer) = answers.iter().find(|a| a.owner == cursor) else {
                break;
            };
            let target = normalize_host(&answer.target);
            if target == owner || targets.contains(&target) {
                break;
            }
            targets.push(target.clone());
            cursor = target;
            id = id.wrapping_add(1);
        }
        Ok(CnameChain { owner, targets })
    }
}

impl Resolver<'_> {
    /// Chain for `fqdn`; empty chain when no CNAME exists. Only the live
    /// mode can fail (timeout / server failure), which is distinct from an
    /// empty chain.
    pub fn resolve(&self, fqdn: &str) -> Result<CnameChain, ResolveError> {
        match self {
            Resolver::Offline(index) => {
                Ok(index.chain(fqdn).unwrap_or_else(|| CnameChain::empty(fqdn)))
            }
            Resolver::Live(live) => live.resolve(fqdn),
        }
    }
}

/// One request with its ground-truth cloaking label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRequest {
    pub request: RequestRecord,
    pub label: bool,
    pub matched_rule: Option<String>,
    pub cname_chain: Option<CnameChain>,
}

/// A site with all its requests labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSite {
    pub site: SiteRecord,
    pub requests: Vec<LabeledRequest>,
    pub label: bool,
}

/// Label one request: positive iff its host is a first-party subdomain of
/// the site and some resolved CNAME target matches a tracker rule.
pub fn label_request(
    req: &RequestRecord,
    site_domain: &str,
    chain: &CnameChain,
    lists: &[FilterList],
    psl: &PublicSuffixList,
) -> Result<LabeledRequest, UrlError> {
    let host = req
        .host()
        .ok_or_else(|| UrlError::NoHost(req.url.clone()))?;
    let party = crate::features::classify_party(&host, site_domain, psl)?;

    let mut label = false;
    let mut matched_rule = None;
    if party == crate::features::Party::FirstSubdomain {
        'outer: for target in &chain.targets {
            for list in lists {
                if let Some(rule) = list.match_domain(target) {
                    label = true;
                    matched_rule = Some(rule.raw.clone());
                    break 'outer;
                }
            }
        }
    }
    Ok(LabeledRequest {
        request: req.clone(),
        label,
        matched_rule,
        cname_chain: (!chain.is_empty()).then(|| chain.clone()),
    })
}

/// Site label is the OR over its requests' labels.
pub fn label_site(labeled: &[LabeledRequest]) -> bool {
    labeled.iter().any(|r| r.label)
}

/// Counters reported alongside a labeling run.
#[derive(Debug, Default, Clone, Serialize)]
pub struct LabelStats {
    pub resolve_errors: usize,
    pub url_errors: usize,
    pub positive_requests: usize,
    pub positive_sites: usize,
}

/// Label every request of every site. Unresolvable names and hosts without
/// a registrable domain are labeled negative and counted in the stats.
pub fn label_sites(
    sites: &[SiteRecord],
    resolver: &Resolver,
    lists: &[FilterList],
    psl: &PublicSuffixList,
) -> (Vec<LabeledSite>, LabelStats) {
    let mut stats = LabelStats::default();
    let mut out = Vec::with_capacity(sites.len());
    for site in sites {
        let mut requests = Vec::with_capacity(site.requests.len());
        for req in &site.requests {
            let chain = match req.host() {
                Some(host) => match resolver.resolve(&host) {
                    Ok(chain) => chain,
                    Err(_) => {
                        stats.resolve_errors += 1;
                        CnameChain::empty(&host)
                    }
                },
                None => CnameChain::empty(""),
            };
            let labeled = match label_request(req, &site.domain, &chain, lists, psl) {
                Ok(l) => l,
                Err(_) => {
                    stats.url_errors += 1;
                    LabeledRequest {
                        request: req.clone(),
                        label: false,
                        matched_rule: None,
                        cname_chain: None,
                    }
                }
            };
            if labeled.label {
                stats.positive_requests += 1;
            }
            requests.push(labeled);
        }
        let label = label_site(&requests);
        if label {
            stats.positive_sites += 1;
        }
        out.push(LabeledSite {
            site: site.clone(),
            requests,
            label,
        });
    }
    (out, stats)
}
