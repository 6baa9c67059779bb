//! Reduction-quality metrics: rank-based AUC and P/R/F1 at the keep-set
//! threshold.

use std::collections::{BTreeMap, BTreeSet};

use super::KeepSet;
use crate::data::TripletKey;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReductionMetrics {
    pub auc: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Mann-Whitney AUC with average-rank tie handling. Exactly equals the
/// pairwise win/tie count divided by `n_pos * n_neg`.
pub fn roc_auc(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(Error::validation("AUC needs non-empty positive and negative score sets"));
    }
    let mut all: Vec<(f64, bool)> = pos_scores
        .iter()
        .map(|&s| (s, true))
        .chain(neg_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

    // Average ranks across tie groups (ranks start at 1).
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let n_pos = pos_scores.len() as f64;
    let n_neg = neg_scores.len() as f64;
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Scores the reduction against labeled composition pools. Positives and
/// negatives must be disjoint; the keep set plays the role of the detection
/// threshold for precision/recall.
pub fn eval_reduction(
    keep: &KeepSet,
    scores: &BTreeMap<TripletKey, f64>,
    positives: &BTreeSet<TripletKey>,
    negatives: &BTreeSet<TripletKey>,
) -> Result<ReductionMetrics> {
    if positives.is_empty() {
        return Err(Error::validation("reduction evaluation needs a non-empty positive set"));
    }
    if positives.intersection(negatives).next().is_some() {
        return Err(Error::validation("positive and negative pools overlap"));
    }
    let score_of = |k: &TripletKey| -> Result<f64> {
        scores.get(k).copied().ok_or_else(|| Error::validation(format!("missing score for {:?}", k)))
    };
    let pos_scores: Vec<f64> = positives.iter().map(score_of).collect::<Result<_>>()?;
    let neg_scores: Vec<f64> = negatives.iter().map(score_of).collect::<Result<_>>()?;
    let auc = roc_auc(&pos_scores, &neg_scores)?;

    let tp = positives.iter().filter(|k| keep.contains(k)).count() as f64;
    let fp = negatives.iter().filter(|k| keep.contains(k)).count() as f64;
    let fn_ = positives.len() as f64 - tp;
    let recall = tp / (tp + fn_);
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(ReductionMetrics { auc, recall, precision, f1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_scorer() {
        let keys: Vec<TripletKey> = (0..6).map(|i| TripletKey::new(i, 0, 0)).collect();
        let mut scores = BTreeMap::new();
        let mut pos = BTreeSet::new();
        let mut neg = BTreeSet::new();
        for (i, k) in keys.iter().enumerate() {
            // Scores equal labels: positives 1.0, negatives 0.0.
            if i < 3 {
                scores.insert(*k, 1.0);
                pos.insert(*k);
            } else {
                scores.insert(*k, 0.0);
                neg.insert(*k);
            }
        }
        let keep = KeepSet::from_keys(pos.clone(), 0.5, 1.0);
        let m = eval_reduction(&keep, &scores, &pos, &neg).unwrap();
        assert_eq!(m.auc, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.f1, 1.0);
    }

    #[test]
    fn hand_case_matches_pairwise_oracle() {
        let pos = [0.9, 0.4, 0.6];
        let neg = [0.5, 0.4, 0.1];
        let fast = roc_auc(&pos, &neg).unwrap();
        // O(n^2) pairwise count: wins 1, ties 0.5.
        let mut num = 0.0;
        for p in pos {
            for n in neg {
                if p > n {
                    num += 1.0;
                } else if p == n {
                    num += 0.5;
                }
            }
        }
        let oracle = num / (pos.len() * neg.len()) as f64;
        assert_eq!(fast, oracle);
    }

    proptest::proptest! {
        #[test]
        fn auc_equals_pairwise_oracle(
            pos in proptest::collection::vec(0u8..20, 1..60),
            neg in proptest::collection::vec(0u8..20, 1..60),
        ) {
            // Coarse integer scores force plenty of ties.
            let pos: Vec<f64> = pos.into_iter().map(|v| v as f64 / 4.0).collect();
            let neg: Vec<f64> = neg.into_iter().map(|v| v as f64 / 4.0).collect();
            let fast = roc_auc(&pos, &neg).unwrap();
            let mut num = 0.0;
            for &p in &pos {
                for &n in &neg {
                    if p > n { num += 1.0; } else if p == n { num += 0.5; }
                }
            }
            let oracle = num / (pos.len() * neg.len()) as f64;
            proptest::prop_assert_eq!(fast, oracle);
        }
    }

    #[test]
    fn overlapping_pools_rejected() {
        let k = TripletKey::new(0, 0, 0);
        let scores: BTreeMap<_, _> = [(k, 0.5)].into();
        let pos: BTreeSet<_> = [k].into();
        let keep = KeepSet::from_keys(pos.clone(), 0.0, 0.0);
        assert!(eval_reduction(&keep, &scores, &pos, &pos).is_err());
    }

    #[test]
    fn empty_positives_rejected() {
        let scores = BTreeMap::new();
        let keep = KeepSet::from_keys(BTreeSet::new(), 0.0, 0.0);
        assert!(eval_reduction(&keep, &scores, &BTreeSet::new(), &BTreeSet::new()).is_err());
    }
}
