//! Non-negative positive-unlabeled risk.
//!
//! `L = (pi/n_pos) Σ L⁺(pos) + max(0, (1/n_u) Σ L⁻(unl) − (pi/n_pos) Σ L⁻(pos))`
//! with `L⁺(d) = −ln σ(d)` and `L⁻(d) = −ln(1−σ(d))`, both evaluated as
//! stable softplus forms.

use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, Tensor};

pub struct NnpuLoss {
    pub node: NodeId,
    /// Value of the estimated negative risk before clamping.
    pub inner_estimate: f64,
    /// True when max(0, ·) clamped a negative estimate to zero.
    pub clamp_active: bool,
}

/// Builds the non-negative PU risk over positive and unlabeled score nodes.
pub fn nnpu_loss(g: &mut Graph, pos: &[NodeId], unlabeled: &[NodeId], pi: f64) -> Result<NnpuLoss> {
    if pos.is_empty() || unlabeled.is_empty() {
        return Err(Error::validation("nnPU needs at least one positive and one unlabeled sample"));
    }
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::validation("pi must lie in (0, 1)"));
    }
    let n_pos = pos.len() as f64;
    let n_u = unlabeled.len() as f64;

    let pos_vec = g.concat(0, pos)?;
    let unl_vec = g.concat(0, unlabeled)?;

    // L⁺(d) = softplus(−d), L⁻(d) = softplus(d).
    let neg_pos = g.scale(pos_vec, -1.0)?;
    let lplus_pos = g.softplus(neg_pos)?;
    let lminus_pos = g.softplus(pos_vec)?;
    let lminus_unl = g.softplus(unl_vec)?;

    let pos_risk_sum = g.sum(lplus_pos)?;
    let pos_risk = g.scale(pos_risk_sum, pi / n_pos)?;

    let unl_term_sum = g.sum(lminus_unl)?;
    let unl_term = g.scale(unl_term_sum, 1.0 / n_u)?;
    let pos_neg_sum = g.sum(lminus_pos)?;
    let pos_neg_term = g.scale(pos_neg_sum, pi / n_pos)?;
    let inner = g.sub(unl_term, pos_neg_term)?;
    let inner_estimate = g.value(inner).item();
    let clamped = g.relu(inner)?;

    let node = g.add(pos_risk, clamped)?;
    Ok(NnpuLoss { node, inner_estimate, clamp_active: inner_estimate < 0.0 })
}

/// Evaluates the risk on raw score values (no gradients).
pub fn nnpu_loss_values(pos: &[f64], unlabeled: &[f64], pi: f64) -> Result<(f64, bool)> {
    let mut g = Graph::new();
    let pos_nodes: Vec<NodeId> = pos.iter().map(|&v| g.input(Tensor::scalar(v).unwrap())).collect();
    let unl_nodes: Vec<NodeId> =
        unlabeled.iter().map(|&v| g.input(Tensor::scalar(v).unwrap())).collect();
    let loss = nnpu_loss(&mut g, &pos_nodes, &unl_nodes, pi)?;
    Ok((g.value(loss.node).item(), loss.clamp_active))
}
