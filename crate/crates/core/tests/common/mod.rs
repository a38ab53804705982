#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempora::corpus::BowDocument;
use tempora::model::{elbo, CorpusStats, ModelHyper, ModelParams, Noise, GROUP_NAMES};

/// Toy configuration shared by gradient checks: K=2, V=5, T=3, L=2, H=4.
pub fn toy_hyper() -> ModelHyper {
    ModelHyper {
        num_topics: 2,
        embed_size: 2,
        theta_hidden: 4,
        eta_hidden: 3,
        vocab_size: 5,
        num_slices: 3,
        sigma2_alpha: 0.3,
        sigma2_eta: 0.4,
        sigma2_theta: 1.0,
    }
}

pub struct ToyInstance {
    pub hyper: ModelHyper,
    pub params: ModelParams,
    pub docs: Vec<BowDocument>,
    pub stats: CorpusStats,
    pub noise: Noise,
}

/// Random parameters, documents and noise for one gradient-check instance.
pub fn toy_instance(seed: u64) -> ToyInstance {
    let hyper = toy_hyper();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(&hyper);
    for (_, t) in params.groups_mut() {
        for x in t.data_mut() {
            *x = rng.random_range(-0.6..0.6);
        }
    }
    let (v, t_n) = (hyper.vocab_size, hyper.num_slices);
    let mut docs = Vec::new();
    for d in 0..6 {
        let slice = d % t_n;
        let n_terms = rng.random_range(1..=4);
        let pairs: Vec<(u32, u32)> = (0..n_terms)
            .map(|_| (rng.random_range(0..v as u32), rng.random_range(1..4)))
            .collect();
        docs.push(BowDocument::new(slice, pairs));
    }
    let mut means = vec![0.0; t_n * v];
    let mut counts = vec![0.0; t_n];
    for d in &docs {
        counts[d.slice] += 1.0;
        for (id, f) in d.normalized() {
            means[d.slice * v + id as usize] += f;
        }
    }
    for t in 0..t_n {
        for x in &mut means[t * v..(t + 1) * v] {
            *x /= counts[t];
        }
    }
    let stats = CorpusStats { num_docs: 30, slice_means: means };
    let noise = Noise::sample(&hyper, docs.len(), &mut rng);
    ToyInstance { hyper, params, docs, stats, noise }
}

/// Central finite differences of the ELBO for every coordinate of every
/// parameter group, in [`GROUP_NAMES`] order.
pub fn finite_difference_grad(inst: &ToyInstance, h: f64) -> Vec<Vec<f64>> {
    let batch: Vec<&BowDocument> = inst.docs.iter().collect();
    let f = |p: &ModelParams| elbo(&batch, &inst.stats, p, &inst.hyper, &inst.noise).unwrap().elbo;
    let mut out = Vec::new();
    for gi in 0..GROUP_NAMES.len() {
        let len = inst.params.groups()[gi].1.len();
        let mut g = vec![0.0; len];
        for (i, gv) in g.iter_mut().enumerate() {
            let mut plus = inst.params.clone();
            plus.groups_mut()[gi].1.data_mut()[i] += h;
            let mut minus = inst.params.clone();
            minus.groups_mut()[gi].1.data_mut()[i] -= h;
            *gv = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// |a − b| / max(|a|, |b|, floor).
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
