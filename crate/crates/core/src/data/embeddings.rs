//! Linguistic embedding tables in GloVe-style text format: one line per
//! token, then `dim` whitespace-separated decimal reals.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable { dim, vectors: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::validation(format!(
                "embedding for {:?} has length {}, table dim is {}",
                token,
                vector.len(),
                self.dim
            )));
        }
        self.vectors.insert(token.to_string(), vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Vector for a class name. Multi-word names average their per-word
    /// vectors; words missing from the table contribute a zero vector and
    /// are logged. Names with no known word at all map to the zero vector.
    pub fn class_vector(&self, name: &str) -> Vec<f64> {
        let words: Vec<&str> = name.split(' ').filter(|w| !w.is_empty()).collect();
        if words.is_empty() {
            return vec![0.0; self.dim];
        }
        let mut acc = vec![0.0; self.dim];
        let mut misses = 0usize;
        for w in &words {
            match self.get(w) {
                Some(v) => {
                    for (a, x) in acc.iter_mut().zip(v) {
                        *a += x;
                    }
                }
                None => {
                    misses += 1;
                    log::warn!("embedding table has no vector for word {:?} of {:?}; using zeros", w, name);
                }
            }
        }
        if misses == words.len() {
            return vec![0.0; self.dim];
        }
        let n = words.len() as f64;
        for a in acc.iter_mut() {
            *a /= n;
        }
        acc
    }

    pub fn tokens(&self) -> impl Iterator<Item = &String> {
        self.vectors.keys()
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let path_str = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut table: Option<EmbeddingTable> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts
            .next()
            .ok_or_else(|| Error::format(&path_str, format!("line {}: empty", lineno + 1)))?;
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| Error::format(&path_str, format!("line {}: bad number {:?}", lineno + 1, p)))
            })
            .collect::<Result<_>>()?;
        let table = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
        if values.len() != table.dim() {
            return Err(Error::format(
                &path_str,
                format!("line {}: dimension {} differs from {}", lineno + 1, values.len(), table.dim()),
            ));
        }
        table.insert(token, values)?;
    }
    table.ok_or_else(|| Error::format(&path_str, "no embedding lines"))
}

pub fn save_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (token, vector) in &table.vectors {
        write!(w, "{}", token)?;
        for v in vector {
            write!(w, " {}", v)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_token_lines() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "dog 0.1 0.2 0.3").unwrap();
        writeln!(f, "cat -1 2e-2 0.5").unwrap();
        let t = load_embeddings(f.path()).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("dog").unwrap(), &[0.1, 0.2, 0.3]);
        assert_eq!(t.get("cat").unwrap(), &[-1.0, 0.02, 0.5]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "dog 0.1 0.2").unwrap();
        writeln!(f, "cat 1.0").unwrap();
        assert!(load_embeddings(f.path()).is_err());
    }

    #[test]
    fn multi_word_names_average() {
        let mut t = EmbeddingTable::new(2);
        t.insert("traffic", vec![1.0, 0.0]).unwrap();
        t.insert("light", vec![0.0, 1.0]).unwrap();
        assert_eq!(t.class_vector("traffic light"), vec![0.5, 0.5]);
        // Unknown word contributes zeros to the average.
        assert_eq!(t.class_vector("traffic cone"), vec![0.5, 0.0]);
        // Fully unknown name: zero vector.
        assert_eq!(t.class_vector("zebra"), vec![0.0, 0.0]);
    }

    #[test]
    fn save_load_roundtrip() {
        let mut t = EmbeddingTable::new(2);
        t.insert("a", vec![0.125, -3.5]).unwrap();
        t.insert("b", vec![1e-12, 7.0]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_embeddings(&t, f.path()).unwrap();
        let back = load_embeddings(f.path()).unwrap();
        assert_eq!(t, back);
    }
}
