//! Seeded gradient-descent training of the plausibility scorer.
//!
//! Seen triplets are the positives; unlabeled samples are drawn uniformly
//! from the full composition space each step.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::pu::nnpu_loss;
use super::scorer::{bind_scorer_params, score_triplet};
use super::{PuConfig, UsrlParams};
use crate::data::{EmbeddingTable, TripletKey};
use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct UsrlEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub clamp_active: bool,
}

/// Resolved embedding vectors per class, precomputed once.
pub(crate) struct ResolvedEmbeddings {
    pub entity: Vec<Vec<f64>>,
    pub predicate: Vec<Vec<f64>>,
}

pub(crate) fn resolve_embeddings(
    entity_classes: &[String],
    predicate_classes: &[String],
    table: &EmbeddingTable,
) -> Result<ResolvedEmbeddings> {
    let resolve = |name: &str| -> Result<Vec<f64>> {
        let v = table.class_vector(name);
        if v.iter().all(|x| *x == 0.0) {
            return Err(Error::validation(format!("unresolvable embedding for class {:?}", name)));
        }
        Ok(v)
    };
    Ok(ResolvedEmbeddings {
        entity: entity_classes.iter().map(|n| resolve(n)).collect::<Result<_>>()?,
        predicate: predicate_classes.iter().map(|n| resolve(n)).collect::<Result<_>>()?,
    })
}

/// Trains scorer parameters on seen triplets with the non-negative PU risk.
pub fn train_usrl(
    seen: &BTreeSet<TripletKey>,
    candidate_space: &[TripletKey],
    entity_classes: &[String],
    predicate_classes: &[String],
    embeddings: &EmbeddingTable,
    config: &PuConfig,
    seed: u64,
) -> Result<(UsrlParams, Vec<UsrlEpoch>)> {
    config.validate()?;
    if seen.is_empty() {
        return Err(Error::validation("scorer training needs a non-empty seen set"));
    }
    if candidate_space.is_empty() {
        return Err(Error::validation("scorer training needs a non-empty candidate space"));
    }
    let resolved = resolve_embeddings(entity_classes, predicate_classes, embeddings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = UsrlParams::init(embeddings.dim(), rng.gen());

    let positives: Vec<TripletKey> = seen.iter().copied().collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let unlabeled: Vec<TripletKey> = (0..config.unlabeled_per_step)
            .map(|_| candidate_space[rng.gen_range(0..candidate_space.len())])
            .collect();

        let mut g = Graph::new();
        let bound = bind_scorer_params(&mut g, &params);
        let score_of = |g: &mut Graph, key: &TripletKey| -> Result<NodeId> {
            let s = g.input(Tensor::vector(&resolved.entity[key.subj])?);
            let p = g.input(Tensor::vector(&resolved.predicate[key.pred])?);
            let o = g.input(Tensor::vector(&resolved.entity[key.obj])?);
            score_triplet(g, s, p, o, &bound)
        };
        let pos_nodes: Vec<NodeId> =
            positives.iter().map(|k| score_of(&mut g, k)).collect::<Result<_>>()?;
        let unl_nodes: Vec<NodeId> =
            unlabeled.iter().map(|k| score_of(&mut g, k)).collect::<Result<_>>()?;
        let loss = nnpu_loss(&mut g, &pos_nodes, &unl_nodes, config.pi)?;
        let grads = g.backward(loss.node)?;

        for (name, node) in &bound {
            if let Some(grad) = grads.get(*node) {
                let tensor = params.store_mut().get_mut(name).expect("bound name exists");
                let mut values = tensor.values().to_vec();
                for (v, gr) in values.iter_mut().zip(grad.values()) {
                    *v -= config.lr * gr;
                }
                *tensor = Tensor::new(tensor.shape().to_vec(), values)?;
            }
        }
        history.push(UsrlEpoch {
            epoch,
            loss: g.value(loss.node).item(),
            clamp_active: loss.clamp_active,
        });
    }
    Ok((params, history))
}

/// Scores the whole candidate space with frozen parameters.
pub fn score_space(
    params: &UsrlParams,
    candidate_space: &[TripletKey],
    entity_classes: &[String],
    predicate_classes: &[String],
    embeddings: &EmbeddingTable,
) -> Result<BTreeMap<TripletKey, f64>> {
    let resolved = resolve_embeddings(entity_classes, predicate_classes, embeddings)?;
    let mut out = BTreeMap::new();
    for key in candidate_space {
        let score = super::scorer::score_triplet_values(
            params,
            &resolved.entity[key.subj],
            &resolved.predicate[key.pred],
            &resolved.entity[key.obj],
        )?;
        out.insert(*key, score);
    }
    Ok(out)
}
