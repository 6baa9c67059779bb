//! Dataset JSON ingestion and validation.
//!
//! File schema: `{"entity_classes": [...], "predicate_classes": [...],
//! "images": [{"id", "width", "height", "entities": [{"box", "label"}],
//! "relations": [{"subj", "obj", "pred"}]}]}`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BBox, Dataset, Entity, Relation, SceneGraph, Split};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct FileDataset {
    entity_classes: Vec<String>,
    predicate_classes: Vec<String>,
    images: Vec<FileImage>,
}

#[derive(Serialize, Deserialize)]
struct FileImage {
    id: u64,
    width: u32,
    height: u32,
    entities: Vec<FileEntity>,
    relations: Vec<Relation>,
}

#[derive(Serialize, Deserialize)]
struct FileEntity {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    label: u32,
}

/// A validated dataset plus ingestion diagnostics.
#[derive(Debug)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    /// Duplicate `(subj, obj, pred)` relations dropped during load.
    pub duplicates_dropped: usize,
}

pub fn load_dataset(path: &Path, split: Split) -> Result<LoadOutcome> {
    let reader = BufReader::new(File::open(path)?);
    let file: FileDataset = serde_json::from_reader(reader)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    validate(file, split, &path.display().to_string())
}

fn validate(file: FileDataset, split: Split, path: &str) -> Result<LoadOutcome> {
    let n_entity_classes = file.entity_classes.len();
    let n_predicates = file.predicate_classes.len();
    let mut duplicates = 0usize;
    let mut graphs = Vec::with_capacity(file.images.len());

    for img in file.images {
        let (w, h) = (img.width as f64, img.height as f64);
        let mut entities = Vec::with_capacity(img.entities.len());
        for (ei, e) in img.entities.into_iter().enumerate() {
            let raw = BBox { x1: e.bbox[0], y1: e.bbox[1], x2: e.bbox[2], y2: e.bbox[3] };
            let clamped = raw.clamp_to(w, h);
            if clamped.width() <= 0.0 || clamped.height() <= 0.0 {
                return Err(Error::format(
                    path,
                    format!("image {}: entity {} has a degenerate box {:?}", img.id, ei, raw),
                ));
            }
            let label = e.label as usize;
            if label >= n_entity_classes {
                return Err(Error::format(
                    path,
                    format!("image {}: entity {} label {} out of range {}", img.id, ei, label, n_entity_classes),
                ));
            }
            entities.push(Entity { bbox: clamped, label });
        }

        let mut seen = std::collections::BTreeSet::new();
        let mut relations = Vec::with_capacity(img.relations.len());
        for r in img.relations {
            if r.subj == r.obj {
                return Err(Error::format(
                    path,
                    format!("image {}: relation with subj == obj ({})", img.id, r.subj),
                ));
            }
            if r.subj >= entities.len() || r.obj >= entities.len() {
                return Err(Error::format(
                    path,
                    format!("image {}: relation ({},{}) out of entity range {}", img.id, r.subj, r.obj, entities.len()),
                ));
            }
            if r.pred >= n_predicates {
                return Err(Error::format(
                    path,
                    format!("image {}: predicate {} out of range {}", img.id, r.pred, n_predicates),
                ));
            }
            if seen.insert((r.subj, r.obj, r.pred)) {
                relations.push(r);
            } else {
                duplicates += 1;
            }
        }

        graphs.push(SceneGraph {
            image_id: img.id,
            width: img.width,
            height: img.height,
            entities,
            relations,
        });
    }

    if duplicates > 0 {
        log::warn!("{}: dropped {} duplicate relations", path, duplicates);
    }

    Ok(LoadOutcome {
        dataset: Dataset {
            entity_classes: file.entity_classes,
            predicate_classes: file.predicate_classes,
            graphs,
            split,
        },
        duplicates_dropped: duplicates,
    })
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = FileDataset {
        entity_classes: dataset.entity_classes.clone(),
        predicate_classes: dataset.predicate_classes.clone(),
        images: dataset
            .graphs
            .iter()
            .map(|g| FileImage {
                id: g.image_id,
                width: g.width,
                height: g.height,
                entities: g
                    .entities
                    .iter()
                    .map(|e| FileEntity {
                        bbox: [e.bbox.x1, e.bbox.y1, e.bbox.x2, e.bbox.y2],
                        label: e.label as u32,
                    })
                    .collect(),
                relations: g.relations.clone(),
            })
            .collect(),
    };
    let writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(writer, &file)?;
    Ok(())
}
