//! Pretrained word-embedding files: one `term v1 v2 ... vL` line per term.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::numkit::Tensor;

/// Outcome of aligning an embedding file with a vocabulary.
#[derive(Clone, Debug)]
pub struct LoadedEmbeddings {
    /// `V × L`
    pub rho: Tensor,
    /// Vocabulary terms not found in the file (randomly initialized).
    pub missing: Vec<String>,
}

pub fn parse_embeddings(text: &str, dim: usize) -> Result<HashMap<String, Vec<f64>>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(term) = parts.next() else { continue };
        let values = parts
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::MalformedRow {
                row: i + 1,
                message: format!("embedding value: {e}"),
            })?;
        if values.len() != dim {
            return Err(Error::MalformedRow {
                row: i + 1,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding for {term:?}")));
        }
        out.insert(term.to_string(), values);
    }
    Ok(out)
}

/// Builds `ρ` for `vocab` from an embedding file; terms absent from the
/// file are drawn from N(0, 1/L) with a generator seeded by `seed`.
pub fn load_embeddings(path: &Path, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<LoadedEmbeddings> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    align_embeddings(&parse_embeddings(&text, dim)?, vocab, dim, seed)
}

pub fn align_embeddings(table: &HashMap<String, Vec<f64>>, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<LoadedEmbeddings> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (1.0 / dim as f64).sqrt()).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut data = Vec::with_capacity(vocab.len() * dim);
    let mut missing = Vec::new();
    for term in vocab.terms() {
        match table.get(term) {
            Some(v) => data.extend_from_slice(v),
            None => {
                missing.push(term.clone());
                data.extend((0..dim).map(|_| normal.sample(&mut rng)));
            }
        }
    }
    Ok(LoadedEmbeddings {
        rho: Tensor::from_vec(&[vocab.len(), dim], data)?,
        missing,
    })
}
