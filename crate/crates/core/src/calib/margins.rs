//! Margin vectors over predicate logit space.
//!
//! For a class pair `(s, o)` every predicate falls into exactly one bucket:
//! seen (annotated with this pair in train), kept-unseen (retained by space
//! reduction), removed (reduced away), or background. Calibration margins
//! are +1 on kept-unseen entries, -1 on removed and background entries, and
//! -1 (fixed mode) or -alpha (dynamic mode) on seen entries.

use std::collections::BTreeSet;

use super::{AlphaTable, MarginMode};
use crate::data::{logit_index, num_logits, TripletKey, BACKGROUND_LOGIT};
use crate::error::{Error, Result};
use crate::usrl::KeepSet;

/// Calibration margins for one subject/object class pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginVector {
    values: Vec<f64>,
    kept_unseen: Vec<usize>,
}

impl MarginVector {
    /// Margin per logit slot (background first).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Logit indices of kept-unseen predicates: the calibration targets.
    pub fn kept_unseen_logits(&self) -> &[usize] {
        &self.kept_unseen
    }

    /// Calibration is undefined for pairs with nothing kept-unseen.
    pub fn has_kept_unseen(&self) -> bool {
        !self.kept_unseen.is_empty()
    }

    #[cfg(test)]
    pub(crate) fn for_tests(values: Vec<f64>, kept_unseen: Vec<usize>) -> Self {
        MarginVector { values, kept_unseen }
    }
}

/// Builds the calibration margin vector for pair `(s_class, o_class)`.
///
/// Errors if a seen predicate is missing from the keep set: seen triplets
/// are kept unconditionally, so that state indicates corrupted inputs.
pub fn margin_vector(
    s_class: usize,
    o_class: usize,
    seen: &BTreeSet<TripletKey>,
    keep: &KeepSet,
    alpha: &AlphaTable,
    mode: MarginMode,
    n_predicates: usize,
) -> Result<MarginVector> {
    let mut values = vec![-1.0; num_logits(n_predicates)];
    values[BACKGROUND_LOGIT] = -1.0;
    let mut kept_unseen = Vec::new();
    for pred in 0..n_predicates {
        let key = TripletKey::new(s_class, pred, o_class);
        let slot = logit_index(pred);
        if seen.contains(&key) {
            if !keep.contains(&key) {
                return Err(Error::validation(format!(
                    "triplet {:?} is seen but missing from the keep set: corrupted reduction data",
                    key
                )));
            }
            values[slot] = match mode {
                MarginMode::Fixed => -1.0,
                MarginMode::Dynamic => -alpha.get(&key),
            };
        } else if keep.contains(&key) {
            values[slot] = 1.0;
            kept_unseen.push(slot);
        }
        // Removed compositions stay at -1, like background.
    }
    Ok(MarginVector { values, kept_unseen })
}

/// Inference margins (+1 kept-unseen, -1 otherwise) over logit space.
pub fn inference_margins(
    s_class: usize,
    o_class: usize,
    seen: &BTreeSet<TripletKey>,
    keep: &KeepSet,
    n_predicates: usize,
) -> Vec<f64> {
    let mut values = vec![-1.0; num_logits(n_predicates)];
    for pred in 0..n_predicates {
        let key = TripletKey::new(s_class, pred, o_class);
        if keep.contains(&key) && !seen.contains(&key) {
            values[logit_index(pred)] = 1.0;
        }
    }
    values
}

/// Margins subtracted inside the cross-entropy: alpha on seen entries,
/// zero on background and everything unseen.
pub fn alpha_ce_margins(
    s_class: usize,
    o_class: usize,
    seen: &BTreeSet<TripletKey>,
    alpha: &AlphaTable,
    n_predicates: usize,
) -> Vec<f64> {
    let mut values = vec![0.0; num_logits(n_predicates)];
    for pred in 0..n_predicates {
        let key = TripletKey::new(s_class, pred, o_class);
        if seen.contains(&key) {
            values[logit_index(pred)] = alpha.get(&key);
        }
    }
    values
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TripletStats;

    fn keep_of(keys: &[TripletKey]) -> KeepSet {
        KeepSet::from_keys(keys.iter().copied().collect(), 0.0, f64::NEG_INFINITY)
    }

    #[test]
    fn worked_margin_vector() {
        // Pair (0, 1) with 3 predicates: seen c0 (alpha 0.5), kept unseen c1,
        // removed c2. Expected (background, -0.5, +1, -1).
        let seen: BTreeSet<_> = [TripletKey::new(0, 0, 1)].into();
        let keep = keep_of(&[TripletKey::new(0, 0, 1), TripletKey::new(0, 1, 1)]);
        let stats = TripletStats::from_counts(
            [(TripletKey::new(0, 0, 1), 2), (TripletKey::new(5, 2, 5), 4)].into(),
        )
        .unwrap();
        let alpha = super::super::compute_alpha(&stats);
        assert!(alpha.get(&TripletKey::new(0, 0, 1)) > 0.0);

        let mv =
            margin_vector(0, 1, &seen, &keep, &alpha, MarginMode::Dynamic, 3).unwrap();
        assert_eq!(mv.values().len(), 4);
        assert_eq!(mv.values()[BACKGROUND_LOGIT], -1.0);
        assert!((mv.values()[logit_index(0)] + alpha.get(&TripletKey::new(0, 0, 1))).abs() < 1e-15);
        assert_eq!(mv.values()[logit_index(1)], 1.0);
        assert_eq!(mv.values()[logit_index(2)], -1.0);
        assert_eq!(mv.kept_unseen_logits(), &[logit_index(1)]);
    }

    #[test]
    fn fixed_mode_pins_seen_to_minus_one() {
        let seen: BTreeSet<_> = [TripletKey::new(0, 0, 1), TripletKey::new(0, 2, 1)].into();
        let keep = keep_of(&[
            TripletKey::new(0, 0, 1),
            TripletKey::new(0, 1, 1),
            TripletKey::new(0, 2, 1),
        ]);
        let mv = margin_vector(0, 1, &seen, &keep, &AlphaTable::zeros(), MarginMode::Fixed, 3).unwrap();
        assert_eq!(mv.values()[logit_index(0)], -1.0);
        assert_eq!(mv.values()[logit_index(2)], -1.0);
        assert_eq!(mv.values()[logit_index(1)], 1.0);
    }

    #[test]
    fn empty_keep_set_for_pair_has_no_targets() {
        let seen = BTreeSet::new();
        let keep = keep_of(&[]);
        let mv = margin_vector(0, 1, &seen, &keep, &AlphaTable::zeros(), MarginMode::Fixed, 3).unwrap();
        assert!(!mv.has_kept_unseen());
        assert!(mv.values().iter().all(|&v| v == -1.0));
    }

    #[test]
    fn seen_outside_keep_set_is_corruption() {
        let seen: BTreeSet<_> = [TripletKey::new(0, 0, 1)].into();
        let keep = keep_of(&[TripletKey::new(0, 1, 1)]);
        let err = margin_vector(0, 1, &seen, &keep, &AlphaTable::zeros(), MarginMode::Fixed, 3)
            .unwrap_err();
        assert!(err.to_string().contains("corrupted"));
    }

    #[test]
    fn inference_margins_shape() {
        let seen: BTreeSet<_> = [TripletKey::new(0, 0, 1)].into();
        let keep = keep_of(&[TripletKey::new(0, 0, 1), TripletKey::new(0, 2, 1)]);
        let m = inference_margins(0, 1, &seen, &keep, 3);
        assert_eq!(m, vec![-1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn alpha_ce_margins_zero_on_background_and_unseen() {
        let seen: BTreeSet<_> = [TripletKey::new(0, 1, 1)].into();
        let stats =
            TripletStats::from_counts([(TripletKey::new(0, 1, 1), 1), (TripletKey::new(2, 0, 2), 3)].into())
                .unwrap();
        let alpha = super::super::compute_alpha(&stats);
        let m = alpha_ce_margins(0, 1, &seen, &alpha, 3);
        assert_eq!(m[BACKGROUND_LOGIT], 0.0);
        assert_eq!(m[logit_index(0)], 0.0);
        assert!(m[logit_index(1)] > 0.0);
        assert_eq!(m[logit_index(2)], 0.0);
    }
}
