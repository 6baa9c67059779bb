//! Scene-graph data model, ingestion, statistics, and synthesis.

mod embeddings;
mod features;
mod load;
mod stats;
mod synth;

pub use embeddings::{load_embeddings, save_embeddings, EmbeddingTable};
pub use features::{load_features, save_features, FeatureStore, FEATURE_MAGIC, FEATURE_VERSION, UNION_SENTINEL};
pub use load::{load_dataset, save_dataset, LoadOutcome};
pub use stats::{
    apply_overlap_filter, compute_triplet_stats, frequency_bias_table, seen_triplets, unseen_split,
    FrequencyBias, TripletStats,
};
pub use synth::{generate_synthetic, GenConfig, SynthOutput};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box with corner coordinates in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter <= 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }

    pub fn contains(&self, other: &BBox) -> bool {
        other.x1 >= self.x1 && other.y1 >= self.y1 && other.x2 <= self.x2 && other.y2 <= self.y2
    }

    fn clamp_to(&self, w: f64, h: f64) -> BBox {
        BBox {
            x1: self.x1.clamp(0.0, w),
            y1: self.y1.clamp(0.0, h),
            x2: self.x2.clamp(0.0, w),
            y2: self.y2.clamp(0.0, h),
        }
    }
}

/// One detected or annotated object instance. Features are resolved from the
/// [`FeatureStore`] by `(image_id, entity index)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub label: usize,
}

/// Directed predicate-labeled edge between two entities of one image.
/// `pred` indexes the dataset predicate list (background is not annotated).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub subj: usize,
    pub obj: usize,
    pub pred: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub image_id: u64,
    pub width: u32,
    pub height: u32,
    pub entities: Vec<Entity>,
    pub relations: Vec<Relation>,
}

impl SceneGraph {
    /// All ordered entity pairs excluding self-pairs, row-major order.
    pub fn ordered_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.entities.len();
        let mut out = Vec::with_capacity(n.saturating_sub(1) * n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// A split of scene graphs with shared class vocabularies.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub entity_classes: Vec<String>,
    pub predicate_classes: Vec<String>,
    pub graphs: Vec<SceneGraph>,
    pub split: Split,
}

impl Dataset {
    pub fn num_relations(&self) -> usize {
        self.graphs.iter().map(|g| g.relations.len()).sum()
    }

    pub fn check_same_classes(&self, other: &Dataset) -> Result<()> {
        if self.entity_classes != other.entity_classes || self.predicate_classes != other.predicate_classes {
            return Err(Error::validation("datasets do not share class lists"));
        }
        Ok(())
    }
}

/// Class-level subject/predicate/object combination; the unit of all
/// seen/unseen bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripletKey {
    pub subj: usize,
    pub pred: usize,
    pub obj: usize,
}

impl TripletKey {
    pub fn new(subj: usize, pred: usize, obj: usize) -> Self {
        TripletKey { subj, pred, obj }
    }
}

/// Index of the background class in predicate logit space.
pub const BACKGROUND_LOGIT: usize = 0;

/// Logit-space index of a dataset predicate (background occupies slot 0).
pub fn logit_index(pred: usize) -> usize {
    pred + 1
}

/// Size of the predicate logit space including background.
pub fn num_logits(num_predicates: usize) -> usize {
    num_predicates + 1
}
