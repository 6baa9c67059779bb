//! `SGFT` binary feature files: per-entity visual features plus union-box
//! features for ordered entity pairs.
//!
//! Layout: magic `SGFT`, version u32, dim u32, record count u64, then one
//! record per feature: image_id u64, two u32 index fields, dim f32 values
//! little-endian. An entity record stores its entity index first and the
//! sentinel `0xFFFF_FFFF` second; a union record stores the subject index
//! first and the object index second.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"SGFT";
pub const FEATURE_VERSION: u32 = 1;
pub const UNION_SENTINEL: u32 = 0xFFFF_FFFF;

/// Visual features keyed by `(image_id, entity index)` and union-box
/// features keyed by `(image_id, subject index, object index)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    entity: BTreeMap<(u64, u32), Vec<f64>>,
    union: BTreeMap<(u64, u32, u32), Vec<f64>>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Self {
        FeatureStore { dim, entity: BTreeMap::new(), union: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert_entity(&mut self, image_id: u64, index: u32, values: Vec<f64>) -> Result<()> {
        self.check_dim(&values)?;
        self.entity.insert((image_id, index), values);
        Ok(())
    }

    pub fn insert_union(&mut self, image_id: u64, subj: u32, obj: u32, values: Vec<f64>) -> Result<()> {
        self.check_dim(&values)?;
        self.union.insert((image_id, subj, obj), values);
        Ok(())
    }

    fn check_dim(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::validation(format!(
                "feature vector has length {}, store dim is {}",
                values.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn entity_feature(&self, image_id: u64, index: usize) -> Result<&[f64]> {
        self.entity
            .get(&(image_id, index as u32))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::validation(format!("missing entity feature ({}, {})", image_id, index)))
    }

    pub fn union_feature(&self, image_id: u64, subj: usize, obj: usize) -> Result<&[f64]> {
        self.union
            .get(&(image_id, subj as u32, obj as u32))
            .map(Vec::as_slice)
            .ok_or_else(|| {
                Error::validation(format!("missing union feature ({}, {}, {})", image_id, subj, obj))
            })
    }

    pub fn num_records(&self) -> usize {
        self.entity.len() + self.union.len()
    }
}

pub fn save_features(store: &FeatureStore, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&FEATURE_MAGIC)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes())?;
    w.write_all(&(store.dim as u32).to_le_bytes())?;
    w.write_all(&(store.num_records() as u64).to_le_bytes())?;
    for ((image_id, index), values) in &store.entity {
        write_record(&mut w, *image_id, *index, UNION_SENTINEL, values)?;
    }
    for ((image_id, subj, obj), values) in &store.union {
        write_record(&mut w, *image_id, *subj, *obj, values)?;
    }
    w.flush()?;
    Ok(())
}

fn write_record<W: Write>(w: &mut W, image_id: u64, a: u32, b: u32, values: &[f64]) -> Result<()> {
    w.write_all(&image_id.to_le_bytes())?;
    w.write_all(&a.to_le_bytes())?;
    w.write_all(&b.to_le_bytes())?;
    for v in values {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn load_features(path: &Path) -> Result<FeatureStore> {
    let path_str = path.display().to_string();
    let mut r = BufReader::new(File::open(path)?);
    let mut offset = 0usize;

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, &mut offset, &path_str)?;
    if magic != FEATURE_MAGIC {
        return Err(Error::format(&path_str, format!("bad magic bytes {:?}", magic)));
    }
    let version = read_u32(&mut r, &mut offset, &path_str)?;
    if version != FEATURE_VERSION {
        return Err(Error::format(
            &path_str,
            format!("unsupported version {} (expected {})", version, FEATURE_VERSION),
        ));
    }
    let dim = read_u32(&mut r, &mut offset, &path_str)? as usize;
    let mut count_buf = [0u8; 8];
    read_exact(&mut r, &mut count_buf, &mut offset, &path_str)?;
    let count = u64::from_le_bytes(count_buf);

    let mut store = FeatureStore::new(dim);
    let mut value_buf = [0u8; 4];
    for _ in 0..count {
        let mut id_buf = [0u8; 8];
        read_exact(&mut r, &mut id_buf, &mut offset, &path_str)?;
        let image_id = u64::from_le_bytes(id_buf);
        let a = read_u32(&mut r, &mut offset, &path_str)?;
        let b = read_u32(&mut r, &mut offset, &path_str)?;
        let mut values = Vec::with_capacity(dim);
        for _ in 0..dim {
            read_exact(&mut r, &mut value_buf, &mut offset, &path_str)?;
            values.push(f32::from_le_bytes(value_buf) as f64);
        }
        if b == UNION_SENTINEL {
            store.insert_entity(image_id, a, values)?;
        } else {
            store.insert_union(image_id, a, b, values)?;
        }
    }
    Ok(store)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], offset: &mut usize, path: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::format(path, format!("truncated at byte offset {}", *offset)))?;
    *offset += buf.len();
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, offset: &mut usize, path: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, offset, path)?;
    Ok(u32::from_le_bytes(buf))
}
