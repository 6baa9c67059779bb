//! Unseen-space reduction: an interchangeability scorer over linguistic
//! embeddings, trained as a positive-unlabeled problem with a non-negative
//! risk estimator, plus quantile reduction of the composition space.

mod metrics;
mod pu;
mod reduce;
mod scorer;
mod train;

pub use metrics::{eval_reduction, roc_auc, ReductionMetrics};
pub use pu::{nnpu_loss, nnpu_loss_values, NnpuLoss};
pub use reduce::{export_keepset_csv, import_keepset_csv, reduce_space, KeepSet};
pub use scorer::{bind_scorer_params, score_triplet, score_triplet_values, UsrlParams};
pub use train::{score_space, train_usrl, UsrlEpoch};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positive-unlabeled training settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PuConfig {
    /// Assumed fraction of positives among unlabeled samples.
    pub pi: f64,
    /// Uniform draws from the full composition space per step.
    pub unlabeled_per_step: usize,
    pub lr: f64,
    pub epochs: usize,
}

impl Default for PuConfig {
    fn default() -> Self {
        PuConfig { pi: 0.03, unlabeled_per_step: 256, lr: 1e-2, epochs: 200 }
    }
}

impl PuConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::validation("pi must lie in (0, 1)"));
        }
        if self.unlabeled_per_step == 0 {
            return Err(Error::validation("unlabeled_per_step must be positive"));
        }
        if self.lr <= 0.0 {
            return Err(Error::validation("learning rate must be positive"));
        }
        Ok(())
    }
}
