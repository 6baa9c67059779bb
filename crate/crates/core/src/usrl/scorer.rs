//! Triplet plausibility scorer.
//!
//! Each branch fuses two elements of the triplet and gates them against the
//! projected third: `d_s = sigmoid(t_p ⋆ t_o) ⊙ sigmoid(w_s t_s)` and
//! symmetrically for `d_p`, `d_o`; the concatenation is projected to a
//! scalar logit. Every ⋆ carries its own projection pair.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cen::star;
use crate::error::{Error, Result};
use crate::tensor::{bind_inputs, bind_params, Graph, NodeId, ParamStore, Tensor};

/// Scorer parameters over embedding dimension `dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct UsrlParams {
    store: ParamStore,
    dim: usize,
}

const MATS: [&str; 9] = [
    "proj.s", "proj.p", "proj.o", "star.s.wx", "star.s.wy", "star.p.wx", "star.p.wy", "star.o.wx",
    "star.o.wy",
];

impl UsrlParams {
    pub fn init(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (dim as f64).sqrt();
        let mut store = ParamStore::new();
        for name in MATS {
            let values: Vec<f64> = (0..dim * dim).map(|_| rng.gen_range(-bound..bound)).collect();
            store.insert(name.into(), Tensor::matrix(dim, dim, values).unwrap());
        }
        let head: Vec<f64> = (0..3 * dim).map(|_| rng.gen_range(-bound..bound)).collect();
        store.insert("head".into(), Tensor::vector(&head).unwrap());
        UsrlParams { store, dim }
    }

    pub fn zeros(dim: usize) -> Self {
        let mut store = ParamStore::new();
        for name in MATS {
            store.insert(name.into(), Tensor::zeros(vec![dim, dim]));
        }
        store.insert("head".into(), Tensor::zeros(vec![3 * dim]));
        UsrlParams { store, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn from_store(store: ParamStore) -> Result<Self> {
        let head = store.get("head").ok_or_else(|| Error::validation("missing head parameter"))?;
        if head.rank() != 1 || head.len() % 3 != 0 {
            return Err(Error::validation("head parameter must be a 3*dim vector"));
        }
        let dim = head.len() / 3;
        for name in MATS {
            let t = store
                .get(name)
                .ok_or_else(|| Error::validation(format!("missing parameter {:?}", name)))?;
            if t.shape() != [dim, dim] {
                return Err(Error::validation(format!("parameter {:?} must be {}x{}", name, dim, dim)));
            }
        }
        Ok(UsrlParams { store, dim })
    }
}

/// Builds the scorer on `g`, returning the scalar logit node. `bound` maps
/// parameter names to graph nodes (see [`bind_scorer_params`]).
pub fn score_triplet(
    g: &mut Graph,
    t_s: NodeId,
    t_p: NodeId,
    t_o: NodeId,
    bound: &std::collections::BTreeMap<String, NodeId>,
) -> Result<NodeId> {
    let b = |name: &str| -> Result<NodeId> {
        bound.get(name).copied().ok_or_else(|| Error::validation(format!("unbound parameter {:?}", name)))
    };
    let branch = |g: &mut Graph, left: NodeId, right: NodeId, third: NodeId, tag: &str, proj: &str| -> Result<NodeId> {
        let fused = star(g, left, right, b(&format!("star.{}.wx", tag))?, b(&format!("star.{}.wy", tag))?)?;
        let gate = g.sigmoid(fused)?;
        let projected = g.matmul(third, b(proj)?)?;
        let gated = g.sigmoid(projected)?;
        g.hadamard(gate, gated)
    };
    let d_s = branch(g, t_p, t_o, t_s, "s", "proj.s")?;
    let d_p = branch(g, t_s, t_o, t_p, "p", "proj.p")?;
    let d_o = branch(g, t_s, t_p, t_o, "o", "proj.o")?;
    let cat = g.concat(0, &[d_s, d_p, d_o])?;
    g.matmul(cat, b("head")?)
}

/// Convenience scoring of raw embedding values with frozen parameters.
pub fn score_triplet_values(params: &UsrlParams, t_s: &[f64], t_p: &[f64], t_o: &[f64]) -> Result<f64> {
    let mut g = Graph::new();
    let bound = bind_inputs(&mut g, params.store());
    let s = g.input(Tensor::vector(t_s)?);
    let p = g.input(Tensor::vector(t_p)?);
    let o = g.input(Tensor::vector(t_o)?);
    let score = score_triplet(&mut g, s, p, o, &bound)?;
    Ok(g.value(score).item())
}

/// Binds scorer parameters as differentiable graph nodes.
pub fn bind_scorer_params(g: &mut Graph, params: &UsrlParams) -> std::collections::BTreeMap<String, NodeId> {
    bind_params(g, params.store())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_score_zero() {
        // Every sigmoid path yields 0.5, each branch component 0.25, and the
        // zero head projects to exactly 0.
        let params = UsrlParams::zeros(4);
        let e = vec![0.3, -0.2, 0.9, 0.1];
        let score = score_triplet_values(&params, &e, &e, &e).unwrap();
        assert_eq!(score, 0.0);

        // The branch components really are 0.25 under zero parameters.
        let mut g = Graph::new();
        let bound = bind_scorer_params(&mut g, &params);
        let s = g.input(Tensor::vector(&e).unwrap());
        let fused = star(
            &mut g,
            s,
            s,
            bound["star.s.wx"],
            bound["star.s.wy"],
        )
        .unwrap();
        let gate = g.sigmoid(fused).unwrap();
        let proj = g.matmul(s, bound["proj.s"]).unwrap();
        let gated = g.sigmoid(proj).unwrap();
        let d = g.hadamard(gate, gated).unwrap();
        assert!(g.value(d).values().iter().all(|v| (*v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn deterministic_given_params() {
        let params = UsrlParams::init(6, 9);
        let s = vec![0.1, 0.2, -0.3, 0.4, 0.0, -0.1];
        let p = vec![-0.2, 0.1, 0.3, 0.0, 0.5, 0.2];
        let o = vec![0.3, -0.4, 0.1, 0.2, -0.2, 0.0];
        let a = score_triplet_values(&params, &s, &p, &o).unwrap();
        let b = score_triplet_values(&params, &s, &p, &o).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn ordering_is_not_forced_symmetric() {
        // score(s,p,o) and score(o,p,s) go through different branches; with
        // random parameters they are not forced equal.
        let params = UsrlParams::init(6, 3);
        let s = vec![0.9, 0.1, -0.3, 0.2, 0.4, -0.5];
        let p = vec![0.0, 0.2, 0.1, -0.1, 0.3, 0.6];
        let o = vec![-0.7, 0.5, 0.2, 0.0, -0.2, 0.1];
        let fwd = score_triplet_values(&params, &s, &p, &o).unwrap();
        let rev = score_triplet_values(&params, &o, &p, &s).unwrap();
        assert_ne!(fwd.to_bits(), rev.to_bits());
    }

    #[test]
    fn gradients_flow_through_both_sigmoid_branches() {
        let params = UsrlParams::init(4, 5);
        let report = crate::tensor::grad_check(
            |g, ids| {
                let names: Vec<String> = params.store().keys().cloned().collect();
                let bound: std::collections::BTreeMap<String, NodeId> =
                    names.into_iter().zip(ids.iter().copied()).collect();
                let s = g.input(Tensor::vector(&[0.4, -0.2, 0.1, 0.3]).unwrap());
                let p = g.input(Tensor::vector(&[0.1, 0.5, -0.3, 0.2]).unwrap());
                let o = g.input(Tensor::vector(&[-0.1, 0.2, 0.6, -0.4]).unwrap());
                score_triplet(g, s, p, o, &bound)
            },
            &params.store().iter().map(|(k, v)| (k.clone(), v.clone())).collect::<Vec<_>>(),
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err());
    }

    #[test]
    fn checkpoint_store_roundtrip() {
        let params = UsrlParams::init(5, 2);
        let back = UsrlParams::from_store(params.store().clone()).unwrap();
        assert_eq!(params, back);
    }
}
