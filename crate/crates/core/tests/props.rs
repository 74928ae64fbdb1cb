//! Property-based invariants for the matcher, feature primitives,
//! dataset accounting, cross-validation folds, and crawl serialization.

use proptest::prelude::*;

use cloakscan::features::metric_entropy;
use cloakscan::filterlist::parse_list;
use cloakscan::ingest::{dataset_summary, load_crawl, write_crawl, RequestRecord, SiteRecord};
use cloakscan::learn::stratified_kfold;
use cloakscan::psl::PublicSuffixList;

fn label() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9]{0,7}".prop_map(|s| s)
}

/// A registrable domain under a real public suffix.
fn domain() -> impl Strategy<Value = String> {
    (label(), prop_oneof!["com", "net", "org"]).prop_map(|(l, tld)| format!("{l}.{tld}"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A `||domain^` rule matches the domain and its subdomains but never
    /// a host where the rule domain is only a non-label-aligned suffix.
    #[test]
    fn domain_anchor_is_label_aligned(d in domain(), p in label()) {
        let list = parse_list(&format!("||{d}^"), "t");
        let subdomain = format!("{p}.{d}");
        // "xfoo.com" is not a subdomain of "foo.com".
        let glued = format!("{p}{d}");
        prop_assert!(list.match_domain(&d).is_some());
        prop_assert!(list.match_domain(&subdomain).is_some());
        prop_assert!(list.match_domain(&glued).is_none());
    }

    /// An `@@` exception suppresses a matching block rule regardless of
    /// which one appears first in the list.
    #[test]
    fn exception_dominates_either_order(d in domain(), p in label()) {
        let host = format!("{p}.{d}");
        let a = parse_list(&format!("||{d}^\n@@||{d}^"), "t");
        let b = parse_list(&format!("@@||{d}^\n||{d}^"), "t");
        prop_assert!(a.match_domain(&host).is_none());
        prop_assert!(b.match_domain(&host).is_none());
        // Sanity: without the exception the rule does fire.
        let plain = parse_list(&format!("||{d}^"), "t");
        prop_assert!(plain.match_domain(&host).is_some());
    }

    /// Metric entropy depends only on the character multiset and lands in
    /// [0, 1] bits per character.
    #[test]
    fn entropy_is_permutation_invariant(s in "[ -~]{1,64}") {
        let base: f64 = metric_entropy(&s).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));

        let reversed: String = s.chars().rev().collect();
        let mut sorted: Vec<char> = s.chars().collect();
        sorted.sort_unstable();
        let sorted: String = sorted.into_iter().collect();
        prop_assert!((base - metric_entropy::<f64>(&reversed).unwrap()).abs() < 1e-12);
        prop_assert!((base - metric_entropy::<f64>(&sorted).unwrap()).abs() < 1e-12);
    }

    /// The three party classes partition the request total, including
    /// hosts that cannot be classified (IP literals, bare suffixes).
    #[test]
    fn summary_party_counts_partition(
        d in domain(),
        hosts in prop::collection::vec(
            prop_oneof![
                label().prop_map(|l| format!("https://{l}.example-other.com/x")),
                Just("https://203.0.113.9/x".to_string()),
                Just("https://com/x".to_string()),
                label().prop_map(|l| format!("https://{l}.PLACEHOLDER/x")),
                Just("https://PLACEHOLDER/".to_string()),
            ],
            1..12,
        ),
    ) {
        let psl = PublicSuffixList::bundled();
        let requests: Vec<RequestRecord> = hosts
            .iter()
            .enumerate()
            .map(|(i, url)| RequestRecord {
                site_id: "s0".into(),
                url: url.replace("PLACEHOLDER", &d),
                method: "GET".into(),
                content_type: "script".into(),
                is_xhr: false,
                is_third_party_window: false,
                timestamp: i as f64,
            })
            .collect();
        let site = SiteRecord {
            site_id: "s0".into(),
            domain: d,
            ranking: 1,
            country: "US".into(),
            category: "news".into(),
            script_call_count: 0,
            requests,
        };
        let summary = dataset_summary(&[site], &psl);
        prop_assert_eq!(
            summary.first_party_domain + summary.first_party_subdomain + summary.third_party,
            summary.total_requests
        );
        prop_assert_eq!(summary.total_requests, hosts.len());
    }

    /// Stratified folds partition the index set and balance each class
    /// across folds to within one instance.
    #[test]
    fn kfold_partitions_and_stratifies(
        labels in prop::collection::vec(any::<bool>(), 20..80),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let pos = labels.iter().filter(|&&l| l).count();
        prop_assume!(pos >= k && labels.len() - pos >= k);

        let folds = stratified_kfold(&labels, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);

        let mut seen = vec![0usize; labels.len()];
        for fold in &folds {
            for &i in fold {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1), "folds must partition the rows");

        for class in [false, true] {
            let counts: Vec<usize> = folds
                .iter()
                .map(|f| f.iter().filter(|&&i| labels[i] == class).count())
                .collect();
            let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
            prop_assert!(spread <= 1, "class {class} spread {spread} in {counts:?}");
        }
    }

    /// Writing sites to the crawl wire format and loading them back is the
    /// identity on normalized records.
    #[test]
    fn crawl_write_load_roundtrip(
        sites in prop::collection::vec(
            (
                domain(),
                (0u64..100_000),
                prop::collection::vec(
                    (
                        label(),
                        prop_oneof![Just("GET"), Just("POST"), Just("HEAD")],
                        prop_oneof![Just("script"), Just("image"), Just("document")],
                        any::<bool>(),
                        any::<bool>(),
                        (0u32..86_400).prop_map(|t| t as f64 / 8.0),
                    ),
                    1..6,
                ),
            ),
            1..8,
        ),
    ) {
        let sites: Vec<SiteRecord> = sites
            .into_iter()
            .enumerate()
            .map(|(i, (dom, ranking, reqs))| {
                let site_id = format!("s{i}");
                SiteRecord {
                    site_id: site_id.clone(),
                    domain: dom.clone(),
                    ranking,
                    country: "US".into(),
                    category: "news".into(),
                    script_call_count: ranking % 7,
                    requests: reqs
                        .into_iter()
                        .map(|(sub, method, content_type, is_xhr, third, timestamp)| RequestRecord {
                            site_id: site_id.clone(),
                            url: format!("https://{sub}.{dom}/asset"),
                            method: method.to_string(),
                            content_type: content_type.to_string(),
                            is_xhr,
                            is_third_party_window: third,
                            timestamp,
                        })
                        .collect(),
                }
            })
            .collect();

        let mut buf = Vec::new();
        write_crawl(&sites, &mut buf).unwrap();
        let file = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(file.path(), &buf).unwrap();
        let load = load_crawl(file.path()).unwrap();
        prop_assert!(load.skipped.is_empty());
        prop_assert_eq!(load.sites, sites);
    }
}
