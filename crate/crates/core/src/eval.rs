//! Held-out document-completion perplexity, topic diversity and NPMI
//! coherence.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::analyze::top_word_ids;
use crate::corpus::{BowDocument, TimeSlicedCorpus};
use crate::error::{Error, Result};
use crate::model::{compute_beta, infer_eta, BetaTensor, ModelHyper, ModelParams};
use crate::model::{infer_theta, Noise};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub perplexity: f64,
    pub diversity: f64,
    pub coherence: f64,
    /// Completion perplexity per slice; `None` for slices without scorable
    /// test documents.
    pub per_slice_perplexity: Vec<Option<f64>>,
    pub scored_docs: usize,
    pub skipped_docs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Perplexity {
    pub value: f64,
    pub per_slice: Vec<Option<f64>>,
    pub scored: usize,
    /// Documents with fewer than two tokens.
    pub skipped: usize,
}

/// Splits a document's token occurrences (ordered by term id) into the
/// even-position half and the odd-position half.
pub fn completion_split(doc: &BowDocument) -> (BowDocument, BowDocument) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut pos = 0u64;
    for &(id, c) in &doc.counts {
        // occurrences pos..pos+c alternate between the halves
        let even = (c as u64 + 1 - pos % 2) / 2;
        let odd = c as u64 - even;
        if even > 0 {
            a.push((id, even as u32));
        }
        if odd > 0 {
            b.push((id, odd as u32));
        }
        pos += c as u64;
    }
    (BowDocument { slice: doc.slice, counts: a }, BowDocument { slice: doc.slice, counts: b })
}

/// Scores the second half of each document under topic proportions
/// inferred (by `infer`) from its first half.
pub fn score_completion<F>(docs: &[BowDocument], beta: &BetaTensor, mut infer: F) -> Result<Perplexity>
where
    F: FnMut(&BowDocument) -> Result<Vec<f64>>,
{
    let t_n = beta.num_slices();
    let (k, v) = (beta.num_topics(), beta.vocab_size());
    let mut nll = 0.0;
    let mut tokens = 0u64;
    let mut slice_nll = vec![0.0; t_n];
    let mut slice_tokens = vec![0u64; t_n];
    let mut skipped = 0;
    let mut scored = 0;
    for doc in docs {
        if doc.total() < 2 {
            skipped += 1;
            continue;
        }
        if doc.slice >= t_n {
            return Err(Error::OutOfRange(format!("document slice {} with {t_n} slices", doc.slice)));
        }
        let (first, second) = completion_split(doc);
        let theta = infer(&first)?;
        let block = beta.slice(doc.slice);
        let mut lp = 0.0;
        for &(id, c) in &second.counts {
            let id = id as usize;
            if id >= v {
                return Err(Error::OutOfRange(format!("term id {id} with vocabulary {v}")));
            }
            let p: f64 = (0..k).map(|j| theta[j] * block[j * v + id]).sum();
            lp += c as f64 * p.max(f64::MIN_POSITIVE).ln();
        }
        let n = second.total() as u64;
        nll -= lp;
        tokens += n;
        slice_nll[doc.slice] -= lp;
        slice_tokens[doc.slice] += n;
        scored += 1;
    }
    if tokens == 0 {
        return Err(Error::Invalid("no document has at least two tokens".into()));
    }
    let per_slice = slice_nll
        .iter()
        .zip(&slice_tokens)
        .map(|(&l, &n)| (n > 0).then(|| (l / n as f64).exp()))
        .collect();
    Ok(Perplexity {
        value: (nll / tokens as f64).exp(),
        per_slice,
        scored,
        skipped,
    })
}

/// Document-completion perplexity with mean (zero-noise) inference of η
/// and θ, and β taken at the variational means of α.
pub fn perplexity_completion(
    params: &ModelParams,
    hyper: &ModelHyper,
    slice_means: &[f64],
    docs: &[BowDocument],
) -> Result<Perplexity> {
    let beta = compute_beta(&params.alpha_mean, &params.rho)?;
    let zero = Noise::zeros(hyper, 0);
    let eta = infer_eta(slice_means, params, hyper, &zero.eta)?;
    let k = hyper.num_topics;
    let no_noise = vec![0.0; k];
    score_completion(docs, &beta, |half| {
        Ok(infer_theta(half, eta.sample_at(half.slice), params, hyper, &no_noise)?.theta)
    })
}

/// Fraction of distinct terms among the top `top_n` terms of every topic
/// at the final slice.
pub fn topic_diversity(beta: &BetaTensor, top_n: usize) -> Result<f64> {
    if top_n == 0 || top_n > beta.vocab_size() {
        return Err(Error::OutOfRange(format!("top_n {top_n} with vocabulary {}", beta.vocab_size())));
    }
    let last = beta.num_slices() - 1;
    let mut seen = HashSet::new();
    for k in 0..beta.num_topics() {
        seen.extend(top_word_ids(beta.row(last, k), top_n));
    }
    Ok(seen.len() as f64 / (beta.num_topics() * top_n) as f64)
}

/// `log(p_ij / (p_i p_j)) / −log p_ij`. Returns 1 when `p_ij = 1`.
pub fn npmi(p_ij: f64, p_i: f64, p_j: f64) -> f64 {
    let denom = -p_ij.ln();
    if denom <= 0.0 {
        return 1.0;
    }
    (p_ij / (p_i * p_j)).ln() / denom
}

/// Document co-occurrence statistics with additive smoothing `s`:
/// `p(w) = (n_w + s) / (D + s)`, `p(w, w') = (n_ww' + s) / (D + s)`.
pub struct CoOccurrence {
    docs: Vec<Vec<u32>>,
    smoothing: f64,
}

impl CoOccurrence {
    pub fn new(docs: &[BowDocument], smoothing: f64) -> Self {
        Self {
            docs: docs.iter().map(|d| d.counts.iter().map(|&(id, _)| id).collect()).collect(),
            smoothing,
        }
    }

    fn contains(doc: &[u32], id: u32) -> bool {
        doc.binary_search(&id).is_ok()
    }

    fn p(&self, n: usize) -> f64 {
        (n as f64 + self.smoothing) / (self.docs.len() as f64 + self.smoothing)
    }

    pub fn pair_npmi(&self, i: u32, j: u32) -> f64 {
        let (mut ni, mut nj, mut nij) = (0, 0, 0);
        for d in &self.docs {
            let (a, b) = (Self::contains(d, i), Self::contains(d, j));
            ni += a as usize;
            nj += b as usize;
            nij += (a && b) as usize;
        }
        npmi(self.p(nij), self.p(ni), self.p(nj))
    }
}

/// Mean pairwise NPMI of each topic's `top_n` terms, over all topics and
/// slices, with add-one smoothed co-occurrence counts from `docs`.
pub fn topic_coherence_npmi(beta: &BetaTensor, docs: &[BowDocument], top_n: usize) -> Result<f64> {
    if top_n < 2 || top_n > beta.vocab_size() {
        return Err(Error::OutOfRange(format!("top_n {top_n} with vocabulary {}", beta.vocab_size())));
    }
    let co = CoOccurrence::new(docs, 1.0);
    let mut total = 0.0;
    let mut n = 0usize;
    let mut cache = std::collections::HashMap::new();
    for t in 0..beta.num_slices() {
        for k in 0..beta.num_topics() {
            let top = top_word_ids(beta.row(t, k), top_n);
            for a in 0..top.len() {
                for b in a + 1..top.len() {
                    let key = (top[a].min(top[b]), top[a].max(top[b]));
                    total += *cache.entry(key).or_insert_with(|| co.pair_npmi(key.0, key.1));
                    n += 1;
                }
            }
        }
    }
    Ok(total / n as f64)
}

/// Full evaluation on the test split.
pub fn evaluate(params: &ModelParams, hyper: &ModelHyper, corpus: &TimeSlicedCorpus) -> Result<EvalReport> {
    let ppl = perplexity_completion(params, hyper, &corpus.slice_means(), &corpus.test)?;
    let beta = compute_beta(&params.alpha_mean, &params.rho)?;
    let v = corpus.vocab_size();
    Ok(EvalReport {
        perplexity: ppl.value,
        diversity: topic_diversity(&beta, 25.min(v))?,
        coherence: topic_coherence_npmi(&beta, &corpus.train, 10.min(v).max(2))?,
        per_slice_perplexity: ppl.per_slice,
        scored_docs: ppl.scored,
        skipped_docs: ppl.skipped,
    })
}
