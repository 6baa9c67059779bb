//! Desk-scale toolkit for zero-shot scene-graph generation.
//!
//! The crate covers the full pipeline on file-ingested visual features:
//!
//! - [`tensor`]: dense f64 tensors with reverse-mode differentiation,
//!   gradient checking, and the `SGCK` checkpoint format;
//! - [`data`]: scene-graph datasets, triplet statistics, seen/unseen splits,
//!   frequency-bias tables, and a seeded synthetic blocks-world generator;
//! - [`spatial`]: relative spatial features between subject and object boxes;
//! - [`cen`]: the contextual encoding network (entity encoder, pair fusion,
//!   relation encoder, decoders);
//! - [`calib`]: triplet-frequency calibration margins and the calibrated
//!   training losses;
//! - [`usrl`]: the unseen-space reduction scorer trained with a non-negative
//!   positive-unlabeled risk, plus quantile space reduction;
//! - [`eval`]: triplet ranking, relational NMS, greedy matching, and the
//!   R@K / zR@K recall protocol;
//! - [`train`]: the seeded end-to-end training loop with checkpoint resume.

pub mod calib;
pub mod cen;
pub mod data;
pub mod error;
pub mod eval;
pub mod spatial;
pub mod tensor;
pub mod train;
pub mod usrl;

pub use error::{Error, Result};
