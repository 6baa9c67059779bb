//! Triplet statistics, seen/unseen splits, and the frequency-bias table.

use std::collections::{BTreeMap, BTreeSet};

use super::{logit_index, num_logits, Dataset, TripletKey};
use crate::error::{Error, Result};

/// Occurrence counts of class-level triplets in a training split.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletStats {
    counts: BTreeMap<TripletKey, u64>,
    n_max: u64,
    total: u64,
}

impl TripletStats {
    pub fn from_counts(counts: BTreeMap<TripletKey, u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::validation("triplet stats over an empty relation set"));
        }
        if counts.values().any(|c| *c == 0) {
            return Err(Error::validation("triplet stats contain a zero count"));
        }
        let n_max = counts.values().copied().max().unwrap_or(0);
        let total = counts.values().sum();
        Ok(TripletStats { counts, n_max, total })
    }

    pub fn counts(&self) -> &BTreeMap<TripletKey, u64> {
        &self.counts
    }

    pub fn count(&self, key: &TripletKey) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn n_max(&self) -> u64 {
        self.n_max
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Counts every annotated relation of the training split.
pub fn compute_triplet_stats(train: &Dataset) -> Result<TripletStats> {
    let mut counts: BTreeMap<TripletKey, u64> = BTreeMap::new();
    for g in &train.graphs {
        for r in &g.relations {
            let key = TripletKey::new(g.entities[r.subj].label, r.pred, g.entities[r.obj].label);
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    TripletStats::from_counts(counts)
}

/// Class-level triplets present in the training relations.
pub fn seen_triplets(train: &Dataset) -> BTreeSet<TripletKey> {
    let mut seen = BTreeSet::new();
    for g in &train.graphs {
        for r in &g.relations {
            seen.insert(TripletKey::new(g.entities[r.subj].label, r.pred, g.entities[r.obj].label));
        }
    }
    seen
}

/// Triplets occurring in test relations and never in train relations.
pub fn unseen_split(train: &Dataset, test: &Dataset) -> Result<BTreeSet<TripletKey>> {
    train.check_same_classes(test)?;
    let seen = seen_triplets(train);
    let mut unseen = BTreeSet::new();
    for g in &test.graphs {
        for r in &g.relations {
            let key = TripletKey::new(g.entities[r.subj].label, r.pred, g.entities[r.obj].label);
            if !seen.contains(&key) {
                unseen.insert(key);
            }
        }
    }
    Ok(unseen)
}

/// Empirical p(predicate | subject class, object class) with add-one
/// smoothing over the predicate space including background.
#[derive(Clone, Debug)]
pub struct FrequencyBias {
    rows: BTreeMap<(usize, usize), Vec<f64>>,
    n_logits: usize,
}

impl FrequencyBias {
    /// Probability row over background + predicates; uniform for pairs the
    /// training split never annotated (pure smoothing).
    pub fn row(&self, s_class: usize, o_class: usize) -> Vec<f64> {
        match self.rows.get(&(s_class, o_class)) {
            Some(r) => r.clone(),
            None => vec![1.0 / self.n_logits as f64; self.n_logits],
        }
    }

    pub fn known_pairs(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.rows.keys()
    }

    pub fn n_logits(&self) -> usize {
        self.n_logits
    }
}

pub fn frequency_bias_table(train: &Dataset) -> FrequencyBias {
    let n = num_logits(train.predicate_classes.len());
    let mut counts: BTreeMap<(usize, usize), Vec<u64>> = BTreeMap::new();
    for g in &train.graphs {
        for r in &g.relations {
            let pair = (g.entities[r.subj].label, g.entities[r.obj].label);
            let row = counts.entry(pair).or_insert_with(|| vec![0; n]);
            row[logit_index(r.pred)] += 1;
        }
    }
    let rows = counts
        .into_iter()
        .map(|(pair, row)| {
            let total: u64 = row.iter().sum();
            let denom = total as f64 + n as f64;
            (pair, row.into_iter().map(|c| (c as f64 + 1.0) / denom).collect())
        })
        .collect();
    FrequencyBias { rows, n_logits: n }
}

/// Drops train relations whose subject and object boxes do not intersect.
/// Mirrors the stricter historical protocol; the unified protocol leaves it
/// off.
pub fn apply_overlap_filter(dataset: &Dataset) -> Dataset {
    let mut out = dataset.clone();
    for g in &mut out.graphs {
        g.relations.retain(|r| {
            g.entities[r.subj].bbox.intersection_area(&g.entities[r.obj].bbox) > 0.0
        });
    }
    out
}
