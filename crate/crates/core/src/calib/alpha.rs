//! Count-dependent seen-triplet margins.
//!
//! `alpha(s,c,o) = ln(n_max / n_{s,c,o}) * total / sum_j n_j ln(n_max / n_j)`.
//! The margin vanishes for the most frequent triplet and grows as counts
//! shrink; the normalizer makes the count-weighted margin sum equal the
//! total relation count.

use std::collections::BTreeMap;
use std::io::Write;

use crate::data::{TripletKey, TripletStats};
use crate::error::Result;

/// Margins for every seen triplet.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlphaTable {
    alphas: BTreeMap<TripletKey, f64>,
}

impl AlphaTable {
    /// Zero margin for every key (used by margin-free ablations).
    pub fn zeros() -> Self {
        AlphaTable::default()
    }

    /// Margin for a seen triplet; unseen keys have no entry and read 0.
    pub fn get(&self, key: &TripletKey) -> f64 {
        self.alphas.get(key).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TripletKey, &f64)> {
        self.alphas.iter()
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

/// Computes the margin table from training triplet counts.
///
/// When every count equals `n_max` the normalizer vanishes along with every
/// numerator; all margins are then 0, the unique continuous extension.
pub fn compute_alpha(stats: &TripletStats) -> AlphaTable {
    let n_max = stats.n_max() as f64;
    let total = stats.total() as f64;
    let denom: f64 = stats.counts().values().map(|&n| n as f64 * (n_max / n as f64).ln()).sum();
    let alphas = stats
        .counts()
        .iter()
        .map(|(key, &n)| {
            let alpha = if denom == 0.0 { 0.0 } else { (n_max / n as f64).ln() * total / denom };
            (*key, alpha)
        })
        .collect();
    AlphaTable { alphas }
}

/// Audit export: one row per seen triplet with its count and margin.
pub fn export_alpha_csv<W: Write>(
    table: &AlphaTable,
    stats: &TripletStats,
    entity_classes: &[String],
    predicate_classes: &[String],
    w: &mut W,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["s_class", "predicate", "o_class", "count", "alpha"])?;
    for (key, alpha) in table.iter() {
        csv.write_record([
            entity_classes[key.subj].as_str(),
            predicate_classes[key.pred].as_str(),
            entity_classes[key.obj].as_str(),
            &stats.count(key).to_string(),
            &format!("{}", alpha),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
