//! Precision / recall / F1 of the positive (tracking) class.

use serde::{Deserialize, Serialize};

use crate::filterlist::FilterList;
use crate::labeler::LabeledRequest;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Metrics<S: Scalar> {
    pub precision: S,
    pub recall: S,
    pub f1: S,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl<S: Scalar> Metrics<S> {
    /// Precision and recall default to 0 when their denominator is empty.
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                S::zero()
            } else {
                S::from_usize_lossy(num) / S::from_usize_lossy(den)
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let denom = precision + recall;
        let f1 = if denom > S::zero() {
            S::from_f64_lossy(2.0) * precision * recall / denom
        } else {
            S::zero()
        };
        Metrics {
            precision,
            recall,
            f1,
            tp,
            fp,
            tn,
            fn_,
        }
    }

    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Self {
        let mut tp = 0;
        let mut fp = 0;
        let mut tn = 0;
        let mut fn_ = 0;
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        Self::from_counts(tp, fp, tn, fn_)
    }
}

/// Filter-list baseline: predict positive iff the request *host* (not its
/// CNAME) matches the list. Models blocking by subdomain-enumerating
/// blacklists.
pub fn baseline_filterlist<S: Scalar>(
    requests: &[LabeledRequest],
    list: &FilterList,
) -> Metrics<S> {
    let predicted: Vec<bool> = requests
        .iter()
        .map(|r| {
            r.request
                .host()
                .is_some_and(|h| list.match_domain(&h).is_some())
        })
        .collect();
    let actual: Vec<bool> = requests.iter().map(|r| r.label).collect();
    Metrics::from_predictions(&predicted, &actual)
}
