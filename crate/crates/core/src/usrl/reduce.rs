//! Quantile reduction of the unseen composition space.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use crate::data::TripletKey;
use crate::error::{Error, Result};

/// Compositions retained as plausible. Seen triplets are always members.
#[derive(Clone, Debug, PartialEq)]
pub struct KeepSet {
    keys: BTreeSet<TripletKey>,
    reduction_rate: f64,
    /// Lowest score among kept unseen candidates (+inf when none survive).
    threshold: f64,
}

impl KeepSet {
    pub fn from_keys(keys: BTreeSet<TripletKey>, reduction_rate: f64, threshold: f64) -> Self {
        KeepSet { keys, reduction_rate, threshold }
    }

    pub fn contains(&self, key: &TripletKey) -> bool {
        self.keys.contains(key)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TripletKey> {
        self.keys.iter()
    }

    pub fn reduction_rate(&self) -> f64 {
        self.reduction_rate
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Removes the `rate`-quantile lowest-scoring unseen candidates.
///
/// Seen triplets are exempt and always kept; `round((1-rate) * n_unseen)`
/// unseen candidates survive. Removal order is (score ascending, key
/// ascending), so keep sets nest as the rate grows.
pub fn reduce_space(
    scores: &BTreeMap<TripletKey, f64>,
    rate: f64,
    seen: &BTreeSet<TripletKey>,
) -> Result<KeepSet> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::validation(format!("reduction rate {} outside [0, 1]", rate)));
    }
    let mut unseen: Vec<(&TripletKey, f64)> =
        scores.iter().filter(|(k, _)| !seen.contains(k)).map(|(k, &s)| (k, s)).collect();
    unseen.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(b.0)));

    let n_unseen = unseen.len();
    let n_keep = ((1.0 - rate) * n_unseen as f64).round() as usize;
    let kept = &unseen[n_unseen - n_keep..];

    let mut keys: BTreeSet<TripletKey> = seen.clone();
    keys.extend(kept.iter().map(|(k, _)| **k));
    let threshold = kept.first().map(|(_, s)| *s).unwrap_or(f64::INFINITY);
    Ok(KeepSet { keys, reduction_rate: rate, threshold })
}

/// Writes the scored candidate space with keep flags:
/// `(s_class, predicate, o_class, score, kept)`.
pub fn export_keepset_csv<W: Write>(
    keep: &KeepSet,
    scores: &BTreeMap<TripletKey, f64>,
    entity_classes: &[String],
    predicate_classes: &[String],
    w: &mut W,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["s_class", "predicate", "o_class", "score", "kept"])?;
    for (key, score) in scores {
        csv.write_record([
            entity_classes[key.subj].as_str(),
            predicate_classes[key.pred].as_str(),
            entity_classes[key.obj].as_str(),
            &format!("{}", score),
            if keep.contains(key) { "1" } else { "0" },
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads a keep set back from its CSV export. The reduction-rate field is
/// reconstructed as the removed share of the exported rows; membership is
/// exact.
pub fn import_keepset_csv<R: Read>(
    r: R,
    entity_classes: &[String],
    predicate_classes: &[String],
) -> Result<(KeepSet, BTreeMap<TripletKey, f64>)> {
    let entity_index: BTreeMap<&str, usize> =
        entity_classes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let predicate_index: BTreeMap<&str, usize> =
        predicate_classes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let mut csv = csv::Reader::from_reader(r);
    let mut keys = BTreeSet::new();
    let mut scores = BTreeMap::new();
    let mut total = 0usize;
    let mut threshold = f64::INFINITY;
    for record in csv.records() {
        let record = record?;
        if record.len() != 5 {
            return Err(Error::validation(format!("keep-set row has {} fields, want 5", record.len())));
        }
        let subj = *entity_index
            .get(&record[0])
            .ok_or_else(|| Error::validation(format!("unknown entity class {:?}", &record[0])))?;
        let pred = *predicate_index
            .get(&record[1])
            .ok_or_else(|| Error::validation(format!("unknown predicate {:?}", &record[1])))?;
        let obj = *entity_index
            .get(&record[2])
            .ok_or_else(|| Error::validation(format!("unknown entity class {:?}", &record[2])))?;
        let score: f64 = record[3]
            .parse()
            .map_err(|_| Error::validation(format!("bad score {:?}", &record[3])))?;
        let kept = &record[4] == "1";
        let key = TripletKey::new(subj, pred, obj);
        scores.insert(key, score);
        total += 1;
        if kept {
            keys.insert(key);
            if score < threshold {
                threshold = score;
            }
        }
    }
    if total == 0 {
        return Err(Error::validation("keep-set csv has no rows"));
    }
    let rate = 1.0 - keys.len() as f64 / total as f64;
    Ok((KeepSet { keys, reduction_rate: rate, threshold }, scores))
}
