//! Central finite-difference verification of analytic gradients.

use super::graph::{Graph, NodeId};
use super::Tensor;
use crate::error::{Error, Result};

/// Per-parameter outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
    /// Components skipped because an evaluation sat on a ReLU-family kink.
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn skipped(&self) -> usize {
        self.params.iter().map(|p| p.skipped).sum()
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tol
    }
}

/// Checks the analytic gradient of a scalar-valued builder against central
/// differences, component by component.
///
/// `build` receives a fresh graph and one node per entry of `params` and must
/// return a scalar loss node. Components whose ±h evaluations come within
/// `8h` of a ReLU-family kink are flagged as non-comparable and skipped.
pub fn grad_check<F>(build: F, params: &[(String, Tensor)], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let kink_band = 8.0 * h;

    let mut graph = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|(_, t)| graph.param(t.clone())).collect();
    let loss = build(&mut graph, &ids)?;
    if graph.value(loss).len() != 1 {
        return Err(Error::Shape {
            op: "grad_check",
            detail: format!("loss must be scalar, got {:?}", graph.value(loss).shape()),
        });
    }
    let base_kink = graph.min_kink_distance() < kink_band;
    let grads = graph.backward(loss)?;

    let mut report = GradCheckReport { params: Vec::new(), tol };
    for (pi, (name, tensor)) in params.iter().enumerate() {
        let analytic: Vec<f64> = match grads.get(ids[pi]) {
            Some(g) => g.values().to_vec(),
            None => vec![0.0; tensor.len()],
        };
        let mut check = ParamCheck { name: name.clone(), max_rel_err: 0.0, checked: 0, skipped: 0 };
        for ci in 0..tensor.len() {
            let (f_plus, kink_plus) = eval_perturbed(&build, params, pi, ci, h)?;
            let (f_minus, kink_minus) = eval_perturbed(&build, params, pi, ci, -h)?;
            if base_kink || kink_plus < kink_band || kink_minus < kink_band {
                check.skipped += 1;
                continue;
            }
            let numeric = (f_plus - f_minus) / (2.0 * h);
            let a = analytic[ci];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            let rel = (a - numeric).abs() / denom;
            if rel > check.max_rel_err {
                check.max_rel_err = rel;
            }
            check.checked += 1;
        }
        report.params.push(check);
    }
    Ok(report)
}

fn eval_perturbed<F>(
    build: &F,
    params: &[(String, Tensor)],
    pi: usize,
    ci: usize,
    delta: f64,
) -> Result<(f64, f64)>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut graph = Graph::new();
    let ids: Vec<NodeId> = params
        .iter()
        .enumerate()
        .map(|(i, (_, t))| {
            let mut t = t.clone();
            if i == pi {
                t.values_mut()[ci] += delta;
            }
            graph.input(t)
        })
        .collect();
    let loss = build(&mut graph, &ids)?;
    Ok((graph.value(loss).item(), graph.min_kink_distance()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form_passes() {
        // f(x) = xᵀ A x with fixed A.
        let a = Tensor::matrix(3, 3, vec![2.0, 0.5, 0.0, 0.5, 1.0, -0.3, 0.0, -0.3, 4.0]).unwrap();
        let x = Tensor::vector(&[0.7, -1.1, 0.4]).unwrap();
        let report = grad_check(
            |g, ids| {
                let am = g.input(a.clone());
                let ax = g.matmul(am, ids[0])?;
                g.matmul(ids[0], ax)
            },
            &[("x".into(), x)],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err());
        assert_eq!(report.skipped(), 0);
    }

    #[test]
    fn relu_kink_is_skipped() {
        let x = Tensor::vector(&[0.0, 1.0]).unwrap();
        let report = grad_check(
            |g, ids| {
                let r = g.relu(ids[0])?;
                g.sum(r)
            },
            &[("x".into(), x)],
            1e-5,
            1e-4,
        )
        .unwrap();
        // The 0.0 component sits exactly on the kink: flagged, not compared.
        assert!(report.skipped() >= 1);
    }

    #[test]
    fn softmax_cross_entropy_passes() {
        let logits = Tensor::vector(&[0.2, -0.4, 1.3, 0.0]).unwrap();
        let report = grad_check(
            |g, ids| {
                let lse = g.log_sum_exp(ids[0])?;
                let picked = g.index(ids[0], 2)?;
                g.sub(lse, picked)
            },
            &[("logits".into(), logits)],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err());
    }

    #[test]
    fn composite_chain_passes() {
        // matmul → leaky_relu → layer_norm → attention → lse: exercises the
        // whole op set against finite differences.
        let w = Tensor::matrix(4, 4, vec![0.3, -0.1, 0.2, 0.05, 0.0, 0.4, -0.3, 0.1, 0.2, 0.2, 0.1, -0.2, 0.1, 0.0, 0.3, 0.2]).unwrap();
        let x = Tensor::matrix(3, 4, vec![0.5, -0.2, 0.8, 0.1, -0.6, 0.3, 0.2, 0.9, 0.4, 0.4, -0.5, 0.3]).unwrap();
        let gain = Tensor::vector(&[1.0, 0.9, 1.1, 1.0]).unwrap();
        let bias = Tensor::vector(&[0.0, 0.1, -0.1, 0.05]).unwrap();
        let report = grad_check(
            |g, ids| {
                let h = g.matmul(ids[1], ids[0])?;
                let act = g.leaky_relu(h, 0.2)?;
                let normed = g.layer_norm(act, ids[2], ids[3], 1e-5)?;
                let attn = g.scaled_dot_attention(normed, normed, normed)?;
                g.log_sum_exp(attn)
            },
            &[("w".into(), w), ("x".into(), x), ("gain".into(), gain), ("bias".into(), bias)],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err());
    }
}
