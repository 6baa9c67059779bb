//! Dense f64 tensors with reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its nodes; [`Graph::backward`]
//! replays the record in reverse and accumulates gradients additively. All
//! arithmetic is double precision and every op rejects non-finite outputs.

mod checkpoint;
mod gradcheck;
mod graph;

pub use checkpoint::{load_params, save_params, ParamStore, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};
pub use graph::{Gradients, Graph, NodeId};

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Inserts every store tensor as a differentiable parameter node.
pub fn bind_params(g: &mut Graph, store: &ParamStore) -> BTreeMap<String, NodeId> {
    store.iter().map(|(name, t)| (name.clone(), g.param(t.clone()))).collect()
}

/// Inserts every store tensor as a frozen input node.
pub fn bind_inputs(g: &mut Graph, store: &ParamStore) -> BTreeMap<String, NodeId> {
    store.iter().map(|(name, t)| (name.clone(), g.input(t.clone()))).collect()
}

/// Dense row-major tensor of rank 0..=2 (scalars are shape `[1]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking element count and finiteness.
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != values.len() {
            return Err(Error::Shape {
                op: "tensor",
                detail: format!("shape {:?} wants {} values, got {}", shape, expect, values.len()),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: "tensor" });
        }
        Ok(Tensor { shape, values })
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Tensor::new(vec![1], vec![v])
    }

    pub fn vector(values: &[f64]) -> Result<Self> {
        Tensor::new(vec![values.len()], values.to_vec())
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], values)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, values: vec![0.0; n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The single element of a scalar tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.values.len(), 1, "item() on non-scalar tensor");
        self.values[0]
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Rows/cols view treating rank-1 as a single row.
    pub(crate) fn as_2d(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => (1, self.values.len()),
        }
    }
}
