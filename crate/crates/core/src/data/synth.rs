//! Seeded synthetic blocks-world scene-graph generator.
//!
//! Images hold 3-8 boxed entities whose classes are Zipf-skewed so a few
//! triplets dominate. Predicates follow deterministic geometric rules
//! (left-of, above, inside, overlapping, larger-than) gated by class-group
//! compatibility, so plausibility is learnable from the group-structured
//! linguistic embeddings. A chosen set of class-level compositions is
//! removed from train relations but kept in test, producing an exact
//! zero-shot split; test relations with compositions outside
//! `train ∪ holdout` are dropped so the held-out list *is* the unseen split.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    BBox, Dataset, EmbeddingTable, Entity, FeatureStore, Relation, SceneGraph, Split, TripletKey,
};
use crate::error::{Error, Result};

const NUM_RULES: usize = 5;
const RULE_NAMES: [&str; NUM_RULES] = ["leftof", "above", "inside", "overlap", "larger"];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub entity_classes: usize,
    pub predicates: usize,
    pub train_images: usize,
    pub test_images: usize,
    /// Fraction of compositions seen in both splits that are removed from
    /// train relations (the zero-shot holdout).
    pub holdout_frac: f64,
    pub min_entities: usize,
    pub max_entities: usize,
    pub zipf_exponent: f64,
    pub feature_dim: usize,
    pub embed_dim: usize,
    /// Standard deviation of the Gaussian feature noise.
    pub noise: f64,
    pub image_size: u32,
    /// Entity classes per semantic group (groups share an embedding
    /// component, making interchangeability learnable).
    pub group_size: usize,
    /// Probability that a predicate is compatible with a class-group pair.
    pub gate_prob: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            entity_classes: 12,
            predicates: 6,
            train_images: 80,
            test_images: 40,
            holdout_frac: 0.25,
            min_entities: 3,
            max_entities: 8,
            zipf_exponent: 1.2,
            feature_dim: 24,
            embed_dim: 16,
            noise: 0.1,
            image_size: 256,
            group_size: 3,
            gate_prob: 0.5,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.entity_classes < 6 {
            return Err(Error::validation("generator needs at least 6 entity classes"));
        }
        if self.predicates < NUM_RULES {
            return Err(Error::validation("generator needs at least 5 predicates"));
        }
        if self.train_images < 50 {
            return Err(Error::validation("generator needs at least 50 train images"));
        }
        if !(0.0..0.5).contains(&self.holdout_frac) {
            return Err(Error::validation("holdout fraction must lie in [0, 0.5)"));
        }
        if self.min_entities < 2 || self.max_entities < self.min_entities {
            return Err(Error::validation("entity count bounds invalid"));
        }
        if self.feature_dim < 12 || self.embed_dim < 4 {
            return Err(Error::validation("feature_dim must be >= 12 and embed_dim >= 4"));
        }
        if self.group_size == 0 {
            return Err(Error::validation("group_size must be positive"));
        }
        Ok(())
    }

    pub fn entity_class_names(&self) -> Vec<String> {
        (0..self.entity_classes).map(|c| format!("obj{}", c)).collect()
    }

    pub fn predicate_names(&self) -> Vec<String> {
        (0..self.predicates)
            .map(|p| {
                let base = RULE_NAMES[p % NUM_RULES];
                if p < NUM_RULES {
                    base.to_string()
                } else {
                    format!("{}{}", base, p / NUM_RULES + 1)
                }
            })
            .collect()
    }
}

/// Generator output plus its ground-truth bookkeeping.
pub struct SynthOutput {
    pub train: Dataset,
    pub test: Dataset,
    pub features: FeatureStore,
    pub embeddings: EmbeddingTable,
    /// Exactly the zero-shot compositions: in test relations, not in train.
    pub holdout: BTreeSet<TripletKey>,
    /// Gate-compatible compositions (could occur under some geometry).
    pub plausible: BTreeSet<TripletKey>,
    /// Entity class index -> semantic group index.
    pub groups: Vec<usize>,
}

impl SynthOutput {
    /// Gate-incompatible compositions: can never occur.
    pub fn impossible(&self) -> BTreeSet<TripletKey> {
        let n_e = self.train.entity_classes.len();
        let n_p = self.train.predicate_classes.len();
        all_triplet_keys(n_e, n_p).filter(|k| !self.plausible.contains(k)).collect()
    }
}

/// Every class-level composition of the label space.
pub fn all_triplet_keys(n_entity_classes: usize, n_predicates: usize) -> impl Iterator<Item = TripletKey> {
    (0..n_entity_classes).flat_map(move |s| {
        (0..n_predicates).flat_map(move |p| (0..n_entity_classes).map(move |o| TripletKey::new(s, p, o)))
    })
}

pub fn generate_synthetic(config: &GenConfig, seed: u64) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_classes = config.entity_classes;
    let n_preds = config.predicates;
    let n_groups = (n_classes + config.group_size - 1) / config.group_size;
    let groups: Vec<usize> = (0..n_classes).map(|c| c / config.group_size).collect();

    // Class-group compatibility gates, sampled in a fixed order.
    let mut gate = vec![vec![vec![false; n_groups]; n_groups]; n_preds];
    for p in 0..n_preds {
        for gs in 0..n_groups {
            for go in 0..n_groups {
                gate[p][gs][go] = rng.gen::<f64>() < config.gate_prob;
            }
        }
        if !gate[p].iter().any(|row| row.iter().any(|&g| g)) {
            let gs = rng.gen_range(0..n_groups);
            let go = rng.gen_range(0..n_groups);
            gate[p][gs][go] = true;
        }
    }

    // Group-structured unit embeddings.
    let mut embeddings = EmbeddingTable::new(config.embed_dim);
    let group_axes: Vec<Vec<f64>> = (0..n_groups).map(|_| random_unit(&mut rng, config.embed_dim)).collect();
    let entity_names = config.entity_class_names();
    for (c, name) in entity_names.iter().enumerate() {
        let v = blend_unit(&group_axes[groups[c]], &random_unit(&mut rng, config.embed_dim), 0.4);
        embeddings.insert(name, v)?;
    }
    let rule_axes: Vec<Vec<f64>> = (0..NUM_RULES).map(|_| random_unit(&mut rng, config.embed_dim)).collect();
    let predicate_names = config.predicate_names();
    for (p, name) in predicate_names.iter().enumerate() {
        let v = blend_unit(&rule_axes[p % NUM_RULES], &random_unit(&mut rng, config.embed_dim), 0.4);
        embeddings.insert(name, v)?;
    }

    // Zipf-skewed class sampling.
    let weights: Vec<f64> = (0..n_classes).map(|k| 1.0 / ((k + 1) as f64).powf(config.zipf_exponent)).collect();
    let class_dist = WeightedIndex::new(&weights).expect("positive weights");

    let size = config.image_size as f64;
    let total_images = config.train_images + config.test_images;
    let mut graphs = Vec::with_capacity(total_images);
    for image_id in 0..total_images {
        let n = rng.gen_range(config.min_entities..=config.max_entities);
        let mut entities: Vec<Entity> = Vec::with_capacity(n);
        for _ in 0..n {
            let label = class_dist.sample(&mut rng);
            let bbox = sample_box(&mut rng, &entities, size);
            entities.push(Entity { bbox, label });
        }
        let mut relations = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let applicable: Vec<usize> = (0..n_preds)
                    .filter(|&p| {
                        gate[p][groups[entities[i].label]][groups[entities[j].label]]
                            && rule_holds(p % NUM_RULES, &entities[i].bbox, &entities[j].bbox)
                    })
                    .collect();
                if !applicable.is_empty() {
                    let pred = applicable[rng.gen_range(0..applicable.len())];
                    relations.push(Relation { subj: i, obj: j, pred });
                }
            }
        }
        graphs.push(SceneGraph {
            image_id: image_id as u64,
            width: config.image_size,
            height: config.image_size,
            entities,
            relations,
        });
    }

    let test_graphs = graphs.split_off(config.train_images);
    let mut train = Dataset {
        entity_classes: entity_names.clone(),
        predicate_classes: predicate_names.clone(),
        graphs,
        split: Split::Train,
    };
    let mut test = Dataset {
        entity_classes: entity_names,
        predicate_classes: predicate_names,
        graphs: test_graphs,
        split: Split::Test,
    };

    // Choose the holdout among compositions present in both splits, then
    // remove those relations from train.
    let train_keys = key_set(&train);
    let test_keys = key_set(&test);
    let candidates: Vec<TripletKey> = train_keys.intersection(&test_keys).copied().collect();
    let target = (config.holdout_frac * candidates.len() as f64).round() as usize;
    let per_pred_counts = per_predicate_key_counts(&train);
    let chosen = choose_holdout(&candidates, target, &per_pred_counts, &mut rng)?;

    for g in &mut train.graphs {
        g.relations.retain(|r| {
            let key = TripletKey::new(g.entities[r.subj].label, r.pred, g.entities[r.obj].label);
            !chosen.contains(&key)
        });
    }
    // Keep test evaluable against exactly train ∪ holdout compositions.
    let keep_in_test: BTreeSet<TripletKey> = key_set(&train).union(&chosen).copied().collect();
    for g in &mut test.graphs {
        g.relations.retain(|r| {
            let key = TripletKey::new(g.entities[r.subj].label, r.pred, g.entities[r.obj].label);
            keep_in_test.contains(&key)
        });
    }

    let final_train_keys = key_set(&train);
    let holdout: BTreeSet<TripletKey> =
        key_set(&test).difference(&final_train_keys).copied().collect();

    // Plausible space from the gates.
    let plausible: BTreeSet<TripletKey> = all_triplet_keys(n_classes, n_preds)
        .filter(|k| gate[k.pred][groups[k.subj]][groups[k.obj]])
        .collect();

    // Features last, in image order, so holdout choices do not perturb them.
    let geom_dim = 4;
    let code_dim = config.feature_dim - geom_dim;
    let codes: Vec<Vec<f64>> = (0..n_classes).map(|_| random_unit(&mut rng, code_dim)).collect();
    let mut features = FeatureStore::new(config.feature_dim);
    for ds in [&train, &test] {
        for g in &ds.graphs {
            for (i, e) in g.entities.iter().enumerate() {
                let mut v = Vec::with_capacity(config.feature_dim);
                v.extend_from_slice(&codes[e.label]);
                let (cx, cy) = e.bbox.center();
                v.extend([cx / size, cy / size, e.bbox.width() / size, e.bbox.height() / size]);
                add_noise(&mut v, config.noise, &mut rng);
                features.insert_entity(g.image_id, i as u32, v)?;
            }
            for (i, j) in g.ordered_pairs() {
                let (bi, bj) = (&g.entities[i].bbox, &g.entities[j].bbox);
                let mut v = pair_geometry(bi, bj, size);
                let mix_dim = config.feature_dim - v.len();
                let (ci, cj) = (&codes[g.entities[i].label], &codes[g.entities[j].label]);
                for k in 0..mix_dim {
                    v.push(0.5 * (ci[k % code_dim] + cj[k % code_dim]));
                }
                add_noise(&mut v, config.noise, &mut rng);
                features.insert_union(g.image_id, i as u32, j as u32, v)?;
            }
        }
    }

    Ok(SynthOutput { train, test, features, embeddings, holdout, plausible, groups })
}

fn key_set(ds: &Dataset) -> BTreeSet<TripletKey> {
    super::seen_triplets(ds)
}

fn per_predicate_key_counts(train: &Dataset) -> BTreeMap<TripletKey, u64> {
    let mut counts = BTreeMap::new();
    for g in &train.graphs {
        for r in &g.relations {
            let key = TripletKey::new(g.entities[r.subj].label, r.pred, g.entities[r.obj].label);
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Greedy holdout selection that never empties a predicate class in train.
fn choose_holdout(
    candidates: &[TripletKey],
    target: usize,
    key_counts: &BTreeMap<TripletKey, u64>,
    rng: &mut ChaCha8Rng,
) -> Result<BTreeSet<TripletKey>> {
    let mut pred_remaining: BTreeMap<usize, u64> = BTreeMap::new();
    for (key, count) in key_counts {
        *pred_remaining.entry(key.pred).or_insert(0) += count;
    }
    let mut shuffled = candidates.to_vec();
    shuffled.shuffle(rng);
    let mut chosen = BTreeSet::new();
    for key in shuffled {
        if chosen.len() == target {
            break;
        }
        let count = key_counts.get(&key).copied().unwrap_or(0);
        let remaining = pred_remaining.get(&key.pred).copied().unwrap_or(0);
        if remaining > count {
            *pred_remaining.get_mut(&key.pred).unwrap() -= count;
            chosen.insert(key);
        }
    }
    if chosen.len() < target {
        return Err(Error::validation(format!(
            "holdout of {} compositions is infeasible: it would empty a predicate class (picked {})",
            target,
            chosen.len()
        )));
    }
    Ok(chosen)
}

fn rule_holds(rule: usize, s: &BBox, o: &BBox) -> bool {
    match rule {
        0 => s.x2 < o.x1,                                            // left-of
        1 => s.y2 < o.y1,                                            // above
        2 => o.contains(s),                                          // inside
        3 => {
            s.intersection_area(o) > 0.0 && !o.contains(s) && !s.contains(o) // overlapping
        }
        4 => s.area() > 2.0 * o.area(),                              // larger-than
        _ => unreachable!("rule index {}", rule),
    }
}

fn sample_box(rng: &mut ChaCha8Rng, existing: &[Entity], size: f64) -> BBox {
    let min_side = size / 16.0;
    // Sometimes nest inside an existing box so the `inside` rule fires.
    if !existing.is_empty() && rng.gen::<f64>() < 0.3 {
        let parent = &existing[rng.gen_range(0..existing.len())].bbox;
        if parent.width() > 2.5 * min_side && parent.height() > 2.5 * min_side {
            let w = rng.gen_range(min_side..parent.width() * 0.6);
            let h = rng.gen_range(min_side..parent.height() * 0.6);
            let x1 = rng.gen_range(parent.x1..parent.x2 - w);
            let y1 = rng.gen_range(parent.y1..parent.y2 - h);
            return BBox { x1, y1, x2: x1 + w, y2: y1 + h };
        }
    }
    let max_side = size * 0.45;
    let w = rng.gen_range(min_side..max_side);
    let h = rng.gen_range(min_side..max_side);
    let x1 = rng.gen_range(0.0..size - w);
    let y1 = rng.gen_range(0.0..size - h);
    BBox { x1, y1, x2: x1 + w, y2: y1 + h }
}

fn pair_geometry(s: &BBox, o: &BBox, size: f64) -> Vec<f64> {
    let (sx, sy) = s.center();
    let (ox, oy) = o.center();
    let u = crate::spatial::union_box(s, o);
    vec![
        (sx - ox) / size,
        (sy - oy) / size,
        (s.width() / o.width()).ln(),
        (s.height() / o.height()).ln(),
        u.width() / size,
        u.height() / size,
        s.iou(o),
        if s.intersection_area(o) > 0.0 { 1.0 } else { 0.0 },
    ]
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    for x in v.iter_mut() {
        *x /= norm;
    }
    v
}

fn blend_unit(axis: &[f64], noise: &[f64], noise_weight: f64) -> Vec<f64> {
    let mut v: Vec<f64> = axis.iter().zip(noise).map(|(a, n)| a + noise_weight * n).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    for x in v.iter_mut() {
        *x /= norm;
    }
    v
}

fn add_noise(v: &mut [f64], sigma: f64, rng: &mut ChaCha8Rng) {
    for x in v.iter_mut() {
        *x += sigma * rng.sample::<f64, _>(StandardNormal);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{seen_triplets, unseen_split};

    #[test]
    fn fixed_seed_is_bit_identical() {
        let cfg = GenConfig::default();
        let a = generate_synthetic(&cfg, 7).unwrap();
        let b = generate_synthetic(&cfg, 7).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.features, b.features);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.holdout, b.holdout);
    }

    #[test]
    fn zero_holdout_has_no_unseen() {
        let cfg = GenConfig { holdout_frac: 0.0, ..GenConfig::default() };
        let out = generate_synthetic(&cfg, 3).unwrap();
        assert!(out.holdout.is_empty());
        assert!(unseen_split(&out.train, &out.test).unwrap().is_empty());
    }

    #[test]
    fn holdout_matches_unseen_split_exactly() {
        let out = generate_synthetic(&GenConfig::default(), 11).unwrap();
        assert!(!out.holdout.is_empty());
        let unseen = unseen_split(&out.train, &out.test).unwrap();
        assert_eq!(out.holdout, unseen);
        // Every held-out composition occurs in test and never in train.
        let train_keys = seen_triplets(&out.train);
        let test_keys = seen_triplets(&out.test);
        for key in &out.holdout {
            assert!(test_keys.contains(key));
            assert!(!train_keys.contains(key));
        }
    }

    #[test]
    fn stats_match_independent_recount() {
        let out = generate_synthetic(&GenConfig::default(), 5).unwrap();
        let stats = crate::data::compute_triplet_stats(&out.train).unwrap();
        // Naive recount.
        let mut counts: BTreeMap<TripletKey, u64> = BTreeMap::new();
        for g in &out.train.graphs {
            for r in &g.relations {
                let k = TripletKey::new(g.entities[r.subj].label, r.pred, g.entities[r.obj].label);
                *counts.entry(k).or_insert(0) += 1;
            }
        }
        assert_eq!(stats.counts(), &counts);
        assert_eq!(stats.total(), counts.values().sum::<u64>());
        assert_eq!(stats.n_max(), counts.values().copied().max().unwrap());
    }

    #[test]
    fn features_cover_all_entities_and_pairs() {
        let out = generate_synthetic(&GenConfig::default(), 2).unwrap();
        for ds in [&out.train, &out.test] {
            for g in &ds.graphs {
                for i in 0..g.entities.len() {
                    out.features.entity_feature(g.image_id, i).unwrap();
                }
                for (i, j) in g.ordered_pairs() {
                    out.features.union_feature(g.image_id, i, j).unwrap();
                }
            }
        }
    }

    #[test]
    fn embeddings_resolve_all_class_names() {
        let cfg = GenConfig::default();
        let out = generate_synthetic(&cfg, 2).unwrap();
        for name in out.train.entity_classes.iter().chain(&out.train.predicate_classes) {
            assert!(out.embeddings.get(name).is_some(), "missing {:?}", name);
        }
    }

    #[test]
    fn holdout_never_empties_a_predicate() {
        let out = generate_synthetic(&GenConfig::default(), 13).unwrap();
        let stats = crate::data::compute_triplet_stats(&out.train).unwrap();
        let mut per_pred = vec![0u64; out.train.predicate_classes.len()];
        for (k, c) in stats.counts() {
            per_pred[k.pred] += c;
        }
        // Predicates that had any relations originally still have some.
        for p in 0..per_pred.len() {
            let in_test_or_train = per_pred[p] > 0
                || out.holdout.iter().all(|k| k.pred != p);
            assert!(in_test_or_train);
        }
    }

    #[test]
    fn infeasible_holdout_is_an_error() {
        // One candidate composition carrying all of its predicate's mass.
        let mut counts = BTreeMap::new();
        counts.insert(TripletKey::new(0, 0, 1), 4u64);
        let candidates = vec![TripletKey::new(0, 0, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = choose_holdout(&candidates, 1, &counts, &mut rng).unwrap_err();
        assert!(err.to_string().contains("empty a predicate class"));
    }

    #[test]
    fn plausible_and_impossible_partition_the_space() {
        let out = generate_synthetic(&GenConfig::default(), 4).unwrap();
        let n_e = out.train.entity_classes.len();
        let n_p = out.train.predicate_classes.len();
        let imp = out.impossible();
        assert_eq!(out.plausible.len() + imp.len(), n_e * n_e * n_p);
        // Everything observed is gate-compatible.
        for key in seen_triplets(&out.train).union(&seen_triplets(&out.test)) {
            assert!(out.plausible.contains(key));
        }
    }
}
