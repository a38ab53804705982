use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::ops::{matvec_acc, softmax_in_place};
use crate::numkit::Tensor;

/// Topic-word distributions, `T × K × V`; each `(t, k)` row is a
/// probability vector over the vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaTensor {
    num_slices: usize,
    num_topics: usize,
    vocab_size: usize,
    values: Vec<f64>,
}

impl BetaTensor {
    /// Wraps raw values, checking that every row is a strictly positive
    /// probability vector (sum within 1e-9 of one).
    pub fn new(num_slices: usize, num_topics: usize, vocab_size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_slices * num_topics * vocab_size {
            return Err(Error::Shape(format!(
                "beta {num_slices}×{num_topics}×{vocab_size} needs {} values, got {}",
                num_slices * num_topics * vocab_size,
                values.len()
            )));
        }
        let b = Self {
            num_slices,
            num_topics,
            vocab_size,
            values,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn uniform(num_slices: usize, num_topics: usize, vocab_size: usize) -> Self {
        Self {
            num_slices,
            num_topics,
            vocab_size,
            values: vec![1.0 / vocab_size as f64; num_slices * num_topics * vocab_size],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in 0..self.num_slices {
            for k in 0..self.num_topics {
                let row = self.row(t, k);
                if row.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
                    return Err(Error::NonFinite(format!("beta row ({t}, {k}) has a non-positive entry")));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::Invalid(format!("beta row ({t}, {k}) sums to {s}")));
                }
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.num_slices, self.num_topics, self.vocab_size]
    }

    pub fn num_slices(&self) -> usize {
        self.num_slices
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, slice: usize, topic: usize) -> &[f64] {
        let start = (slice * self.num_topics + topic) * self.vocab_size;
        &self.values[start..start + self.vocab_size]
    }

    /// The `K × V` block for one slice.
    pub fn slice(&self, slice: usize) -> &[f64] {
        let n = self.num_topics * self.vocab_size;
        &self.values[slice * n..(slice + 1) * n]
    }

    pub fn get(&self, slice: usize, topic: usize, term: usize) -> f64 {
        self.values[(slice * self.num_topics + topic) * self.vocab_size + term]
    }
}

/// `β[t][k] = softmax(ρ · α[t][k])` for a `T × K × L` topic-embedding
/// tensor and `V × L` word embeddings. Entries are floored at
/// `f64::MIN_POSITIVE`.
pub fn compute_beta(alpha: &Tensor, rho: &Tensor) -> Result<BetaTensor> {
    let (&[t, k, l], &[v, l2]) = (alpha.shape(), rho.shape()) else {
        return Err(Error::Shape(format!(
            "compute_beta expects alpha T×K×L and rho V×L, got {:?} and {:?}",
            alpha.shape(),
            rho.shape()
        )));
    };
    if l != l2 {
        return Err(Error::Shape(format!("embedding sizes differ: {l} vs {l2}")));
    }
    alpha.check_finite("alpha")?;
    rho.check_finite("rho")?;
    let mut values = beta_values(alpha.data(), rho.data(), t * k, v, l);
    // entries that underflow at extreme logits are lifted to the smallest
    // normal number so every row stays strictly positive
    values.iter_mut().for_each(|b| *b = b.max(f64::MIN_POSITIVE));
    Ok(BetaTensor {
        num_slices: t,
        num_topics: k,
        vocab_size: v,
        values,
    })
}

pub(crate) fn beta_values(alpha: &[f64], rho: &[f64], rows: usize, v: usize, l: usize) -> Vec<f64> {
    let mut values = vec![0.0; rows * v];
    for (r, out) in values.chunks_mut(v).enumerate() {
        matvec_acc(rho, v, l, &alpha[r * l..(r + 1) * l], out);
        softmax_in_place(out);
    }
    values
}
