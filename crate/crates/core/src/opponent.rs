//! Frequency-based estimation of the counterpart's preference profile.
//!
//! Issues whose value rarely changes between consecutive bids are assumed to
//! matter more; values offered more often are assumed to be preferred.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{enumerate_bids, utility, AdditiveUtilityProfile, Bid, Domain, DomainError, ProfileData};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpponentModelError {
    #[error("no bids observed yet")]
    NoObservations,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueStatistics {
    pub counts: BTreeMap<String, u64>,
    /// Consecutive observed pairs in which this issue was present in both bids.
    pub pairs: u64,
    /// Of those pairs, how many kept the same value.
    pub unchanged: u64,
}

impl IssueStatistics {
    /// Fraction of consecutive pairs without a value change; `None` before
    /// the first pair.
    pub fn stability(&self) -> Option<f64> {
        (self.pairs > 0).then(|| self.unchanged as f64 / self.pairs as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyModel {
    domain: Domain,
    issues: BTreeMap<String, IssueStatistics>,
    observations: u64,
    last: Option<Bid>,
}

impl FrequencyModel {
    pub fn new(domain: &Domain) -> Self {
        let issues = domain
            .issues()
            .iter()
            .map(|i| {
                (
                    i.name.clone(),
                    IssueStatistics {
                        counts: i.values.iter().map(|v| (v.clone(), 0)).collect(),
                        pairs: 0,
                        unchanged: 0,
                    },
                )
            })
            .collect();
        Self {
            domain: domain.clone(),
            issues,
            observations: 0,
            last: None,
        }
    }

    pub fn observations(&self) -> u64 {
        self.observations
    }

    pub fn issue(&self, name: &str) -> Option<&IssueStatistics> {
        self.issues.get(name)
    }

    pub fn observe_bid(&mut self, bid: &Bid) -> Result<(), OpponentModelError> {
        self.domain.bid_index(bid)?;
        for (issue, value) in bid.assignments() {
            let stats = self.issues.get_mut(issue).expect("bid checked against domain");
            *stats.counts.get_mut(value).expect("bid checked against domain") += 1;
            if let Some(prev) = self.last.as_ref().and_then(|b| b.value(issue)) {
                stats.pairs += 1;
                if prev == value {
                    stats.unchanged += 1;
                }
            }
        }
        self.observations += 1;
        self.last = Some(bid.clone());
        Ok(())
    }

    /// Follows a mid-session domain extension. Counts for the new issue start
    /// at zero; earlier observations remain.
    pub fn rebase(&mut self, domain: &Domain) {
        for issue in domain.issues() {
            let stats = self
                .issues
                .entry(issue.name.clone())
                .or_insert_with(|| IssueStatistics {
                    counts: BTreeMap::new(),
                    pairs: 0,
                    unchanged: 0,
                });
            for v in &issue.values {
                stats.counts.entry(v.clone()).or_insert(0);
            }
        }
        self.domain = domain.clone();
    }

    /// Weights proportional to stability (uniform when every stability is zero
    /// or undefined), evaluations proportional to frequency and scaled so the
    /// most frequent value of each issue scores 1.
    pub fn estimated_profile(&self) -> Result<AdditiveUtilityProfile, OpponentModelError> {
        if self.observations == 0 {
            return Err(OpponentModelError::NoObservations);
        }
        let issues = self.domain.issues();
        let stabilities: Vec<f64> = issues
            .iter()
            .map(|i| self.issues[&i.name].stability().unwrap_or(0.0))
            .collect();
        let total: f64 = stabilities.iter().sum();
        let n = issues.len() as f64;

        let mut data = ProfileData {
            domain: self.domain.name().to_string(),
            weights: BTreeMap::new(),
            evaluations: BTreeMap::new(),
        };
        for (issue, s) in issues.iter().zip(&stabilities) {
            let w = if total > 0.0 { s / total } else { 1.0 / n };
            data.weights.insert(issue.name.clone(), w);
            let stats = &self.issues[&issue.name];
            let max = issue.values.iter().map(|v| stats.counts[v]).max().unwrap_or(0);
            let evals = issue
                .values
                .iter()
                .map(|v| {
                    let e = if max == 0 {
                        1.0
                    } else {
                        stats.counts[v] as f64 / max as f64
                    };
                    (v.clone(), e)
                })
                .collect();
            data.evaluations.insert(issue.name.clone(), evals);
        }
        // stability ratios may leave the sum a few ulps from 1
        let sum: f64 = data.weights.values().sum();
        for w in data.weights.values_mut() {
            *w /= sum;
        }
        Ok(AdditiveUtilityProfile::try_from(data)?)
    }
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (average ranks for ties). Zero when either
/// ranking is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let mean_a = ra.iter().sum::<f64>() / n;
    let mean_b = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean_a) * (y - mean_b);
        var_a += (x - mean_a).powi(2);
        var_b += (y - mean_b).powi(2);
    }
    if var_a == 0.0 || var_b == 0.0 {
        return 0.0;
    }
    cov / (var_a.sqrt() * var_b.sqrt())
}

/// Rank agreement between two profiles over the full bid space of `domain`.
pub fn estimation_quality(
    domain: &Domain,
    estimated: &AdditiveUtilityProfile,
    truth: &AdditiveUtilityProfile,
) -> Result<f64, DomainError> {
    estimated.check_domain(domain)?;
    truth.check_domain(domain)?;
    let bids = enumerate_bids(domain);
    let est = bids
        .iter()
        .map(|b| utility(estimated, b))
        .collect::<Result<Vec<_>, _>>()?;
    let tru = bids.iter().map(|b| utility(truth, b)).collect::<Result<Vec<_>, _>>()?;
    Ok(spearman(&est, &tru))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::*;
    use crate::domain::Issue;

    #[test]
    fn single_observation_counts() {
        let d = w1_domain();
        let mut m = FrequencyModel::new(&d);
        m.observe_bid(&d.bid(&["mid", "fast"]).unwrap()).unwrap();
        assert_eq!(m.observations(), 1);
        assert_eq!(m.issue("price").unwrap().counts["mid"], 1);
        assert_eq!(m.issue("price").unwrap().counts["low"], 0);
        assert_eq!(m.issue("delivery").unwrap().counts["fast"], 1);
        // no pairs yet: uniform weights
        let est = m.estimated_profile().unwrap();
        assert_eq!(est.weight("price"), Some(0.5));
        assert_eq!(est.weight("delivery"), Some(0.5));
    }

    #[test]
    fn stability_scores() {
        let d = w1_domain();
        let mut m = FrequencyModel::new(&d);
        for _ in 0..5 {
            m.observe_bid(&d.bid(&["high", "slow"]).unwrap()).unwrap();
        }
        assert_eq!(m.issue("price").unwrap().stability(), Some(1.0));
        assert_eq!(m.issue("delivery").unwrap().stability(), Some(1.0));

        let mut m = FrequencyModel::new(&d);
        for i in 0..6 {
            let delivery = if i % 2 == 0 { "slow" } else { "fast" };
            m.observe_bid(&d.bid(&["high", delivery]).unwrap()).unwrap();
        }
        assert_eq!(m.issue("delivery").unwrap().stability(), Some(0.0));
        assert_eq!(m.issue("price").unwrap().stability(), Some(1.0));
        let est = m.estimated_profile().unwrap();
        assert_eq!(est.weight("delivery"), Some(0.0));
    }

    #[test]
    fn always_same_bid_estimate() {
        let d = w1_domain();
        let mut m = FrequencyModel::new(&d);
        for _ in 0..4 {
            m.observe_bid(&d.bid(&["high", "slow"]).unwrap()).unwrap();
        }
        let est = m.estimated_profile().unwrap();
        assert_eq!(est.evaluation("price", "high"), Some(1.0));
        assert_eq!(est.evaluation("delivery", "slow"), Some(1.0));
        assert_eq!(est.evaluation("price", "low"), Some(0.0));
    }

    #[test]
    fn errors() {
        let d = w1_domain();
        let m = FrequencyModel::new(&d);
        assert_eq!(m.estimated_profile(), Err(OpponentModelError::NoObservations));
        let other = Domain::new("o", vec![Issue::new("x", ["a"])]).unwrap();
        let mut m = FrequencyModel::new(&d);
        assert!(m.observe_bid(&other.bid(&["a"]).unwrap()).is_err());
        assert_eq!(m.observations(), 0);
    }

    #[test]
    fn quality_examples() {
        let d = w1_domain();
        assert!((estimation_quality(&d, &w1_p(), &w1_p()).unwrap() - 1.0).abs() < 1e-12);
        // frozen from an independent rank computation over the six W1 bids
        let q = estimation_quality(&d, &w1_h(), &w1_p()).unwrap();
        assert!((q - (-0.885_714_285_714_285_8)).abs() < 1e-12, "{q}");

        let two = Domain::new("two", vec![Issue::new("x", ["a", "b"])]).unwrap();
        let up = AdditiveUtilityProfile::new("two", [("x", 1.0)], [("x", vec![("a", 0.0), ("b", 1.0)])]).unwrap();
        let down = AdditiveUtilityProfile::new("two", [("x", 1.0)], [("x", vec![("a", 1.0), ("b", 0.0)])]).unwrap();
        assert!((estimation_quality(&two, &up, &down).unwrap() + 1.0).abs() < 1e-12);
        assert!(estimation_quality(&d, &up, &down).is_err());
    }

    #[test]
    fn rebase_adds_issue() {
        let d = w1_domain();
        let mut m = FrequencyModel::new(&d);
        m.observe_bid(&d.bid(&["high", "slow"]).unwrap()).unwrap();
        let mut issues = d.issues().to_vec();
        issues.push(Issue::new("sidejob", ["none", "done"]));
        let ext = Domain::new("w1", issues).unwrap();
        m.rebase(&ext);
        let est = m.estimated_profile().unwrap();
        est.check_domain(&ext).unwrap();
        assert_eq!(est.evaluation("sidejob", "done"), Some(1.0));
        m.observe_bid(&ext.bid(&["high", "slow", "done"]).unwrap()).unwrap();
        assert_eq!(m.issue("sidejob").unwrap().pairs, 0);
        assert_eq!(m.issue("price").unwrap().pairs, 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn estimate_is_always_valid(picks in prop::collection::vec(0usize..6, 1..40)) {
                let d = w1_domain();
                let mut m = FrequencyModel::new(&d);
                for i in picks {
                    m.observe_bid(&d.bid_at(i).unwrap()).unwrap();
                }
                let est = m.estimated_profile().unwrap();
                prop_assert!(crate::domain::validate_profile(est.data()).is_empty());
                est.check_domain(&d).unwrap();
            }
        }
    }
}
