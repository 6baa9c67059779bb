//! Relative spatial features between subject and object boxes.
//!
//! The 20-dim pair feature concatenates the normalized union-box location
//! (8), the log size ratios (4), and the partner-normalized corner offsets
//! (8). All functions are pure and total over valid boxes; degenerate boxes
//! are rejected at dataset load, not here.

use crate::data::BBox;
use crate::error::{Error, Result};

/// Which corner-offset formula to use for the fourth component.
///
/// The published form mixes axes in the fourth offset, `(y_s2 - x_o2)/h_o`;
/// `Corrected` replaces `x_o2` with `y_o2`, which restores the symmetry of
/// the other seven components and makes the feature vanish for identical
/// boxes. `Literal` keeps the published form for compatibility.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RlFormula {
    #[default]
    Corrected,
    Literal,
}

/// The three spatial blocks plus their concatenation.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialFeature {
    pub b_ul: [f64; 8],
    pub b_sl: [f64; 4],
    pub b_rl: [f64; 8],
}

impl SpatialFeature {
    /// `[b_ul, b_sl, b_rl]` in that order.
    pub fn concatenated(&self) -> [f64; 20] {
        let mut out = [0.0; 20];
        out[..8].copy_from_slice(&self.b_ul);
        out[8..12].copy_from_slice(&self.b_sl);
        out[12..].copy_from_slice(&self.b_rl);
        out
    }
}

/// Componentwise min of the first corners and max of the second corners.
pub fn union_box(b_s: &BBox, b_o: &BBox) -> BBox {
    BBox {
        x1: b_s.x1.min(b_o.x1),
        y1: b_s.y1.min(b_o.y1),
        x2: b_s.x2.max(b_o.x2),
        y2: b_s.y2.max(b_o.y2),
    }
}

/// Normalized union box location: corners, center, and size over image size.
pub fn compute_b_ul(b_u: &BBox, w: f64, h: f64) -> Result<[f64; 8]> {
    if w <= 0.0 || h <= 0.0 {
        return Err(Error::validation(format!("image dimensions must be positive, got {}x{}", w, h)));
    }
    Ok([
        b_u.x1 / w,
        b_u.y1 / h,
        b_u.x2 / w,
        b_u.y2 / h,
        (b_u.x1 + b_u.x2) / (2.0 * w),
        (b_u.y1 + b_u.y2) / (2.0 * h),
        b_u.width() / w,
        b_u.height() / h,
    ])
}

/// Log width/height ratios in both directions (natural log).
pub fn compute_b_sl(b_s: &BBox, b_o: &BBox) -> Result<[f64; 4]> {
    check_positive_dims("b_sl", b_s, b_o)?;
    Ok([
        (b_s.width() / b_o.width()).ln(),
        (b_s.height() / b_o.height()).ln(),
        (b_o.width() / b_s.width()).ln(),
        (b_o.height() / b_s.height()).ln(),
    ])
}

/// Corner offsets normalized by the partner box size.
pub fn compute_b_rl(b_s: &BBox, b_o: &BBox, formula: RlFormula) -> Result<[f64; 8]> {
    check_positive_dims("b_rl", b_s, b_o)?;
    let (ws, hs) = (b_s.width(), b_s.height());
    let (wo, ho) = (b_o.width(), b_o.height());
    let fourth = match formula {
        RlFormula::Corrected => (b_s.y2 - b_o.y2) / ho,
        RlFormula::Literal => (b_s.y2 - b_o.x2) / ho,
    };
    Ok([
        (b_s.x1 - b_o.x1) / wo,
        (b_s.y1 - b_o.y1) / ho,
        (b_s.x2 - b_o.x2) / wo,
        fourth,
        (b_o.x1 - b_s.x1) / ws,
        (b_o.y1 - b_s.y1) / hs,
        (b_o.x2 - b_s.x2) / ws,
        (b_o.y2 - b_s.y2) / hs,
    ])
}

/// Full relative spatial feature for a subject/object pair.
pub fn relative_spatial(b_s: &BBox, b_o: &BBox, w: f64, h: f64, formula: RlFormula) -> Result<SpatialFeature> {
    let b_u = union_box(b_s, b_o);
    Ok(SpatialFeature {
        b_ul: compute_b_ul(&b_u, w, h)?,
        b_sl: compute_b_sl(b_s, b_o)?,
        b_rl: compute_b_rl(b_s, b_o, formula)?,
    })
}

fn check_positive_dims(op: &str, b_s: &BBox, b_o: &BBox) -> Result<()> {
    for (name, b) in [("subject", b_s), ("object", b_o)] {
        if b.width() <= 0.0 || b.height() <= 0.0 {
            return Err(Error::validation(format!(
                "{}: {} box has non-positive dimension: {:?}",
                op, name, b
            )));
        }
    }
    Ok(())
}
