//! `SGCK` binary checkpoint format for named parameter tensors.
//!
//! Layout: magic bytes `SGCK`, format version u32, then one record per
//! parameter: name length u32, name bytes, rank u32, one u32 per dim,
//! values as f64 little-endian. Records are written in name order so a
//! store round-trips bit-identically.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named parameter tensors with deterministic iteration order.
pub type ParamStore = BTreeMap<String, Tensor>;

pub fn save_params(store: &ParamStore, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_params(store, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_params<W: Write>(store: &ParamStore, w: &mut W) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for (name, tensor) in store {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for d in tensor.shape() {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for v in tensor.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ParamStore> {
    let mut r = BufReader::new(File::open(path)?);
    read_params(&mut r, &path.display().to_string())
}

pub fn read_params<R: Read>(r: &mut R, path: &str) -> Result<ParamStore> {
    let mut offset = 0usize;
    let mut magic = [0u8; 4];
    read_exact_at(r, &mut magic, &mut offset, path)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format(path, format!("bad magic bytes {:?}", magic)));
    }
    let version = read_u32(r, &mut offset, path)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported version {} (expected {})", version, CHECKPOINT_VERSION),
        ));
    }
    let mut store = ParamStore::new();
    loop {
        let mut len_buf = [0u8; 4];
        match r.read(&mut len_buf)? {
            0 => break,
            4 => {}
            n => {
                // Partial length prefix: pull the rest or report truncation.
                let mut rest = vec![0u8; 4 - n];
                if r.read_exact(&mut rest).is_err() {
                    return Err(Error::format(path, format!("truncated at byte offset {}", offset + n)));
                }
                len_buf[n..].copy_from_slice(&rest);
            }
        }
        offset += 4;
        let name_len = u32::from_le_bytes(len_buf) as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact_at(r, &mut name_bytes, &mut offset, path)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::format(path, format!("non-utf8 name ending at byte offset {}", offset)))?;
        let rank = read_u32(r, &mut offset, path)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(r, &mut offset, path)? as usize);
        }
        let count: usize = shape.iter().product();
        let mut values = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            read_exact_at(r, &mut buf, &mut offset, path)?;
            values.push(f64::from_le_bytes(buf));
        }
        let tensor = Tensor::new(shape, values)
            .map_err(|e| Error::format(path, format!("record {:?}: {}", name, e)))?;
        if store.insert(name.clone(), tensor).is_some() {
            return Err(Error::format(path, format!("duplicate record {:?}", name)));
        }
    }
    Ok(store)
}

fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: &mut usize, path: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::format(path, format!("truncated at byte offset {}", *offset)))?;
    *offset += buf.len();
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, offset: &mut usize, path: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact_at(r, &mut buf, offset, path)?;
    Ok(u32::from_le_bytes(buf))
}
