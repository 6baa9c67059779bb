//! Triplet-frequency calibration: count-dependent margins over predicate
//! logit space, the calibration losses that excavate unseen compositions,
//! and calibrated inference.

mod alpha;
mod losses;
mod margins;

pub use alpha::{compute_alpha, export_alpha_csv, AlphaTable};
pub use losses::{
    calibrated_argmax, loss_cal, loss_cal_margined, loss_ce_margined, total_loss, CeTarget,
    PairLossInput, TotalLoss,
};
pub use margins::{alpha_ce_margins, inference_margins, margin_vector, MarginVector};

use serde::{Deserialize, Serialize};

/// How seen-triplet entries of the calibration margin vector are set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginMode {
    /// Hard margin: every seen entry is exactly -1.
    Fixed,
    /// Count-dependent margin: seen entry for class c is -alpha(s, c, o).
    #[default]
    Dynamic,
}

/// Which pairs contribute the calibration term of the total loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalScope {
    /// Background-labeled pairs only (the default: excavation targets).
    #[default]
    BackgroundOnly,
    /// Annotated pairs as well.
    AllPairs,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TclConfig {
    /// Weight of the calibration term in the total loss.
    pub lambda: f64,
    pub margin_mode: MarginMode,
    pub cal_scope: CalScope,
}

impl Default for TclConfig {
    fn default() -> Self {
        TclConfig { lambda: 0.01, margin_mode: MarginMode::Dynamic, cal_scope: CalScope::BackgroundOnly }
    }
}

impl TclConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.lambda < 0.0 {
            return Err(crate::Error::validation("lambda must be non-negative"));
        }
        Ok(())
    }
}
