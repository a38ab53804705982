use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::beta::beta_values;
use super::inference::{infer_eta, theta_forward, EtaPosterior, ThetaPosterior};
use super::{ModelHyper, ModelParams};
use crate::corpus::{BowDocument, TimeSlicedCorpus};
use crate::error::{Error, Result};
use crate::numkit::ops::{add_outer, kl_term, kl_term_grad, matvec_t_acc, sigmoid, softmax_backward};
use crate::numkit::rnn_cell_backward;

/// Added inside the log of the per-token mixture probability.
pub const LIKELIHOOD_FLOOR: f64 = 1e-12;

/// Number of fixed document partitions a batch is split into. Gradients
/// are reduced lane by lane in index order, so results do not depend on
/// the thread count.
const LANES: usize = 8;

/// Corpus-level quantities the ELBO needs besides the batch itself.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusStats {
    /// Training-set size N.
    pub num_docs: usize,
    /// `T × V` mean normalized bag-of-words of the training split per slice.
    pub slice_means: Vec<f64>,
}

impl CorpusStats {
    pub fn from_corpus(corpus: &TimeSlicedCorpus) -> Self {
        Self {
            num_docs: corpus.train.len(),
            slice_means: corpus.slice_means(),
        }
    }
}

/// Standard-normal draws for one ELBO evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Noise {
    /// `T × K × L`
    pub alpha: Vec<f64>,
    /// `T × K`
    pub eta: Vec<f64>,
    /// `batch × K`
    pub theta: Vec<f64>,
}

impl Noise {
    pub fn zeros(h: &ModelHyper, batch_len: usize) -> Self {
        let (t, k, l) = (h.num_slices, h.num_topics, h.embed_size);
        Self {
            alpha: vec![0.0; t * k * l],
            eta: vec![0.0; t * k],
            theta: vec![0.0; batch_len * k],
        }
    }

    /// Draws α noise, then η noise, then θ noise, in that order.
    pub fn sample<R: Rng + ?Sized>(h: &ModelHyper, batch_len: usize, rng: &mut R) -> Self {
        let mut n = Self::zeros(h, batch_len);
        for buf in [&mut n.alpha, &mut n.eta, &mut n.theta] {
            for x in buf.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
        }
        n
    }
}

/// ELBO value and its components; `elbo = log_likelihood − kl_theta −
/// kl_eta − kl_alpha`, with the document terms already scaled by `N / |batch|`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub elbo: f64,
    pub log_likelihood: f64,
    pub kl_theta: f64,
    pub kl_eta: f64,
    pub kl_alpha: f64,
}

/// `Σ_v count(v) · log(Σ_k θ_k β_t[k][v] + 1e-12)` where `beta_t` is the
/// `K × V` block of one slice.
pub fn doc_log_likelihood(doc: &BowDocument, theta: &[f64], beta_t: &[f64]) -> f64 {
    let v = beta_t.len() / theta.len();
    doc.counts
        .iter()
        .map(|&(id, c)| {
            let p: f64 = theta.iter().enumerate().map(|(k, th)| th * beta_t[k * v + id as usize]).sum();
            c as f64 * (p + LIKELIHOOD_FLOOR).ln()
        })
        .sum()
}

/// One-sample Monte-Carlo estimate of the ELBO on `batch`.
pub fn elbo(batch: &[&BowDocument], stats: &CorpusStats, params: &ModelParams, hyper: &ModelHyper, noise: &Noise) -> Result<ElboTerms> {
    run(batch, stats, params, hyper, noise, false).map(|(terms, _)| terms)
}

/// [`elbo`] together with its exact gradient with respect to every
/// parameter (gradient of the ELBO itself, i.e. the ascent direction).
pub fn elbo_with_grad(
    batch: &[&BowDocument],
    stats: &CorpusStats,
    params: &ModelParams,
    hyper: &ModelHyper,
    noise: &Noise,
) -> Result<(ElboTerms, ModelParams)> {
    run(batch, stats, params, hyper, noise, true).map(|(terms, g)| (terms, g.expect("gradient requested")))
}

struct Lane {
    log_lik: f64,
    kl_theta: f64,
    grads: Option<LaneGrads>,
}

struct LaneGrads {
    theta_w: Vec<f64>,
    theta_b: Vec<f64>,
    theta_mean_w: Vec<f64>,
    theta_mean_b: Vec<f64>,
    theta_logvar_w: Vec<f64>,
    theta_logvar_b: Vec<f64>,
    /// `T × K × V`
    beta: Vec<f64>,
    /// `T × K`
    eta: Vec<f64>,
}

impl LaneGrads {
    fn new(p: &ModelParams, h: &ModelHyper) -> Self {
        let (t, k, v) = (h.num_slices, h.num_topics, h.vocab_size);
        Self {
            theta_w: vec![0.0; p.theta_w.len()],
            theta_b: vec![0.0; p.theta_b.len()],
            theta_mean_w: vec![0.0; p.theta_mean_w.len()],
            theta_mean_b: vec![0.0; p.theta_mean_b.len()],
            theta_logvar_w: vec![0.0; p.theta_logvar_w.len()],
            theta_logvar_b: vec![0.0; p.theta_logvar_b.len()],
            beta: vec![0.0; t * k * v],
            eta: vec![0.0; t * k],
        }
    }
}

struct Shared<'a> {
    batch: &'a [&'a BowDocument],
    params: &'a ModelParams,
    hyper: &'a ModelHyper,
    noise: &'a Noise,
    beta: &'a [f64],
    eta: &'a EtaPosterior,
    scale: f64,
    want_grad: bool,
}

fn validate_inputs(batch: &[&BowDocument], stats: &CorpusStats, hyper: &ModelHyper, noise: &Noise) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Invalid("ELBO needs a non-empty batch".into()));
    }
    if stats.num_docs == 0 {
        return Err(Error::Invalid("corpus size must be positive".into()));
    }
    let (t, k, l, v) = (hyper.num_slices, hyper.num_topics, hyper.embed_size, hyper.vocab_size);
    if stats.slice_means.len() != t * v {
        return Err(Error::Shape(format!("slice means have {} values, want {}", stats.slice_means.len(), t * v)));
    }
    if noise.alpha.len() != t * k * l || noise.eta.len() != t * k || noise.theta.len() != batch.len() * k {
        return Err(Error::Shape("noise buffers do not match model and batch".into()));
    }
    for d in batch {
        if d.slice >= t {
            return Err(Error::OutOfRange(format!("document slice {} with {t} slices", d.slice)));
        }
        if d.counts.is_empty() || d.counts.iter().any(|&(id, _)| id as usize >= v) {
            return Err(Error::Invalid("batch document is empty or has out-of-vocabulary ids".into()));
        }
    }
    Ok(())
}

fn run(
    batch: &[&BowDocument],
    stats: &CorpusStats,
    params: &ModelParams,
    hyper: &ModelHyper,
    noise: &Noise,
    want_grad: bool,
) -> Result<(ElboTerms, Option<ModelParams>)> {
    validate_inputs(batch, stats, hyper, noise)?;
    let (t_n, k, l, v) = (hyper.num_slices, hyper.num_topics, hyper.embed_size, hyper.vocab_size);
    let hs = hyper.eta_hidden;

    // α sample and β
    let alpha_sd: Vec<f64> = params.alpha_logvar.data().iter().map(|lv| (0.5 * lv).exp()).collect();
    let alpha: Vec<f64> = params
        .alpha_mean
        .data()
        .iter()
        .zip(&alpha_sd)
        .zip(&noise.alpha)
        .map(|((m, s), e)| m + s * e)
        .collect();
    let beta = beta_values(&alpha, params.rho.data(), t_n * k, v, l);

    let eta = infer_eta(&stats.slice_means, params, hyper, &noise.eta)?;

    let scale = stats.num_docs as f64 / batch.len() as f64;
    let shared = Shared {
        batch,
        params,
        hyper,
        noise,
        beta: &beta,
        eta: &eta,
        scale,
        want_grad,
    };
    let lanes = run_lanes(&shared);

    let mut log_lik = 0.0;
    let mut kl_theta = 0.0;
    for lane in &lanes {
        log_lik += lane.log_lik;
        kl_theta += lane.kl_theta;
    }
    log_lik *= scale;
    kl_theta *= scale;

    // KL(q(η) ‖ p(η))
    let prior_lv_eta = hyper.sigma2_eta.ln();
    let mut kl_eta = 0.0;
    for t in 0..t_n {
        for j in 0..k {
            let i = t * k + j;
            let (pm, plv) = if t == 0 { (0.0, 0.0) } else { (eta.sample[i - k], prior_lv_eta) };
            kl_eta += kl_term(eta.mean[i], eta.logvar[i], pm, plv);
        }
    }

    // KL(q(α) ‖ p(α))
    let prior_lv_alpha = hyper.sigma2_alpha.ln();
    let am = params.alpha_mean.data();
    let alv = params.alpha_logvar.data();
    let row = k * l;
    let mut kl_alpha = 0.0;
    for i in 0..t_n * row {
        let (pm, plv) = if i < row { (0.0, 0.0) } else { (alpha[i - row], prior_lv_alpha) };
        kl_alpha += kl_term(am[i], alv[i], pm, plv);
    }

    let terms = ElboTerms {
        elbo: log_lik - kl_theta - kl_eta - kl_alpha,
        log_likelihood: log_lik,
        kl_theta,
        kl_eta,
        kl_alpha,
    };
    for (name, x) in [
        ("log-likelihood", log_lik),
        ("KL(theta)", kl_theta),
        ("KL(eta)", kl_eta),
        ("KL(alpha)", kl_alpha),
    ] {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("ELBO term {name} = {x}")));
        }
    }
    if !want_grad {
        return Ok((terms, None));
    }

    // ---- backward --------------------------------------------------------
    let mut g = params.zeros_like();
    let mut d_beta = vec![0.0; t_n * k * v];
    let mut d_eta = vec![0.0; t_n * k];
    for lane in lanes {
        let lg = lane.grads.expect("lane gradients");
        for (dst, src) in [
            (g.theta_w.data_mut(), &lg.theta_w),
            (g.theta_b.data_mut(), &lg.theta_b),
            (g.theta_mean_w.data_mut(), &lg.theta_mean_w),
            (g.theta_mean_b.data_mut(), &lg.theta_mean_b),
            (g.theta_logvar_w.data_mut(), &lg.theta_logvar_w),
            (g.theta_logvar_b.data_mut(), &lg.theta_logvar_b),
            (d_beta.as_mut_slice(), &lg.beta),
            (d_eta.as_mut_slice(), &lg.eta),
        ] {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
    }

    // η head and KL(η), walking backwards so d_eta[t] is complete when used
    let mut dh_head = vec![vec![0.0; hs]; t_n];
    for t in (0..t_n).rev() {
        let mut dmean = vec![0.0; k];
        let mut dlv = vec![0.0; k];
        for j in 0..k {
            let i = t * k + j;
            let (pm, plv) = if t == 0 { (0.0, 0.0) } else { (eta.sample[i - k], prior_lv_eta) };
            let kg = kl_term_grad(eta.mean[i], eta.logvar[i], pm, plv);
            let sd = (0.5 * eta.logvar[i]).exp();
            dmean[j] = d_eta[i] - kg.mu1;
            dlv[j] = d_eta[i] * noise.eta[i] * 0.5 * sd - kg.logvar1;
            if t > 0 {
                d_eta[i - k] -= kg.mu2;
            }
        }
        let u = &eta.head_inputs[t];
        add_outer(g.eta_mean_w.data_mut(), &dmean, u);
        add_outer(g.eta_logvar_w.data_mut(), &dlv, u);
        for j in 0..k {
            g.eta_mean_b.data_mut()[j] += dmean[j];
            g.eta_logvar_b.data_mut()[j] += dlv[j];
        }
        let mut du = vec![0.0; hs + k];
        matvec_t_acc(params.eta_mean_w.data(), k, hs + k, &dmean, &mut du);
        matvec_t_acc(params.eta_logvar_w.data(), k, hs + k, &dlv, &mut du);
        dh_head[t].copy_from_slice(&du[..hs]);
        if t > 0 {
            for j in 0..k {
                d_eta[(t - 1) * k + j] += du[hs + j];
            }
        }
    }
    // LSTM through time
    let mut dh_next = vec![0.0; hs];
    let mut dc_next = vec![0.0; hs];
    for t in (0..t_n).rev() {
        let dh: Vec<f64> = dh_head[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let sg = rnn_cell_backward(&eta.steps[t], &params.eta_lstm, &dh, &dc_next, &mut g.eta_lstm);
        dh_next = sg.dh_prev;
        dc_next = sg.dc_prev;
    }

    // β → ρ and the α sample
    let mut d_alpha = vec![0.0; t_n * k * l];
    let mut d_logits = vec![0.0; v];
    let rho = params.rho.data();
    for r in 0..t_n * k {
        let db = &d_beta[r * v..(r + 1) * v];
        if db.iter().all(|&x| x == 0.0) {
            continue;
        }
        softmax_backward(&beta[r * v..(r + 1) * v], db, &mut d_logits);
        add_outer(g.rho.data_mut(), &d_logits, &alpha[r * l..(r + 1) * l]);
        matvec_t_acc(rho, v, l, &d_logits, &mut d_alpha[r * l..(r + 1) * l]);
    }
    // KL(α), then the reparameterization
    {
        let gm = g.alpha_mean.data_mut();
        for i in 0..t_n * row {
            let (pm, plv) = if i < row { (0.0, 0.0) } else { (alpha[i - row], prior_lv_alpha) };
            let kg = kl_term_grad(am[i], alv[i], pm, plv);
            gm[i] -= kg.mu1;
            if i >= row {
                d_alpha[i - row] -= kg.mu2;
            }
        }
        for i in 0..t_n * row {
            gm[i] += d_alpha[i];
        }
    }
    {
        let glv = g.alpha_logvar.data_mut();
        for i in 0..t_n * row {
            let (pm, plv) = if i < row { (0.0, 0.0) } else { (alpha[i - row], prior_lv_alpha) };
            let kg = kl_term_grad(am[i], alv[i], pm, plv);
            glv[i] += d_alpha[i] * noise.alpha[i] * 0.5 * alpha_sd[i] - kg.logvar1;
        }
    }

    g.check_finite()?;
    Ok((terms, Some(g)))
}

#[cfg(feature = "parallel")]
fn run_lanes(s: &Shared<'_>) -> Vec<Lane> {
    use rayon::prelude::*;
    (0..LANES).into_par_iter().map(|i| run_lane(s, i)).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_lanes(s: &Shared<'_>) -> Vec<Lane> {
    (0..LANES).map(|i| run_lane(s, i)).collect()
}

fn run_lane(s: &Shared<'_>, lane: usize) -> Lane {
    let n = s.batch.len();
    let (start, end) = (lane * n / LANES, (lane + 1) * n / LANES);
    let h = s.hyper;
    let k = h.num_topics;
    let mut out = Lane {
        log_lik: 0.0,
        kl_theta: 0.0,
        grads: s.want_grad.then(|| LaneGrads::new(s.params, h)),
    };
    let prior_lv = h.sigma2_theta.ln();
    for d in start..end {
        let doc = s.batch[d];
        let t = doc.slice;
        let eta_t = s.eta.sample_at(t);
        let eps = &s.noise.theta[d * k..(d + 1) * k];
        let q = theta_forward(doc.normalized(), eta_t, s.params, h, eps);
        let beta_t = &s.beta[t * k * h.vocab_size..(t + 1) * k * h.vocab_size];
        out.log_lik += doc_log_likelihood(doc, &q.theta, beta_t);
        out.kl_theta += (0..k).map(|j| kl_term(q.mean[j], q.logvar[j], eta_t[j], prior_lv)).sum::<f64>();
        if let Some(g) = out.grads.as_mut() {
            doc_backward(s, doc, &q, eta_t, eps, g);
        }
    }
    out
}

/// Gradient of `scale · (log-lik − KL_θ)` for one document.
fn doc_backward(s: &Shared<'_>, doc: &BowDocument, q: &ThetaPosterior, eta_t: &[f64], eps: &[f64], g: &mut LaneGrads) {
    let h = s.hyper;
    let (k, v, hd) = (h.num_topics, h.vocab_size, h.theta_hidden);
    let t = doc.slice;
    let beta_t = &s.beta[t * k * v..(t + 1) * k * v];
    let d_beta_t = &mut g.beta[t * k * v..(t + 1) * k * v];
    let scale = s.scale;

    let mut d_theta = vec![0.0; k];
    for &(id, c) in &doc.counts {
        let id = id as usize;
        let p: f64 = (0..k).map(|j| q.theta[j] * beta_t[j * v + id]).sum::<f64>() + LIKELIHOOD_FLOOR;
        let w = scale * c as f64 / p;
        for j in 0..k {
            d_theta[j] += w * beta_t[j * v + id];
            d_beta_t[j * v + id] += w * q.theta[j];
        }
    }
    let mut dz = vec![0.0; k];
    softmax_backward(&q.theta, &d_theta, &mut dz);

    let prior_lv = h.sigma2_theta.ln();
    let mut dmean = vec![0.0; k];
    let mut dlv = vec![0.0; k];
    for j in 0..k {
        let kg = kl_term_grad(q.mean[j], q.logvar[j], eta_t[j], prior_lv);
        let sd = (0.5 * q.logvar[j]).exp();
        dmean[j] = dz[j] - scale * kg.mu1;
        dlv[j] = dz[j] * eps[j] * 0.5 * sd - scale * kg.logvar1;
        g.eta[t * k + j] -= scale * kg.mu2;
    }
    add_outer(&mut g.theta_mean_w, &dmean, &q.hidden);
    add_outer(&mut g.theta_logvar_w, &dlv, &q.hidden);
    for j in 0..k {
        g.theta_mean_b[j] += dmean[j];
        g.theta_logvar_b[j] += dlv[j];
    }
    let mut d_hidden = vec![0.0; hd];
    matvec_t_acc(s.params.theta_mean_w.data(), k, hd, &dmean, &mut d_hidden);
    matvec_t_acc(s.params.theta_logvar_w.data(), k, hd, &dlv, &mut d_hidden);

    let cols = v + k;
    let w1 = s.params.theta_w.data();
    for r in 0..hd {
        let da = d_hidden[r] * sigmoid(q.pre_hidden[r]);
        if da == 0.0 {
            continue;
        }
        g.theta_b[r] += da;
        let grow = &mut g.theta_w[r * cols..(r + 1) * cols];
        for &(id, f) in &q.input {
            grow[id as usize] += da * f;
        }
        let wrow = &w1[r * cols..(r + 1) * cols];
        for j in 0..k {
            grow[v + j] += da * eta_t[j];
            g.eta[t * k + j] += da * wrow[v + j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper() -> ModelHyper {
        ModelHyper {
            num_topics: 2,
            embed_size: 2,
            theta_hidden: 3,
            eta_hidden: 2,
            vocab_size: 4,
            num_slices: 2,
            ..ModelHyper::default()
        }
    }

    fn docs() -> Vec<BowDocument> {
        vec![
            BowDocument::new(0, [(0, 2), (1, 1)]),
            BowDocument::new(0, [(2, 3)]),
            BowDocument::new(1, [(1, 1), (3, 4)]),
            BowDocument::new(1, [(0, 1), (2, 1), (3, 1)]),
            BowDocument::new(1, [(3, 2)]),
        ]
    }

    fn stats(docs: &[BowDocument]) -> CorpusStats {
        let mut means = vec![0.0; 8];
        let mut n = [0.0; 2];
        for d in docs {
            n[d.slice] += 1.0;
            for (id, f) in d.normalized() {
                means[d.slice * 4 + id as usize] += f;
            }
        }
        for t in 0..2 {
            for v in 0..4 {
                means[t * 4 + v] /= n[t];
            }
        }
        CorpusStats {
            num_docs: 20,
            slice_means: means,
        }
    }

    #[test]
    fn uniform_likelihood_closed_form() {
        let d = BowDocument::new(0, [(0, 2), (3, 5)]);
        let beta = vec![0.25; 8];
        let ll = doc_log_likelihood(&d, &[0.5, 0.5], &beta);
        assert!((ll - 7.0 * (0.25f64 + LIKELIHOOD_FLOOR).ln()).abs() < 1e-12);
        assert!((ll - 7.0 * 0.25f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn onehot_theta_selects_topic() {
        let d = BowDocument::new(0, [(0, 1), (2, 3)]);
        let beta = vec![0.1, 0.2, 0.3, 0.4, 0.4, 0.3, 0.2, 0.1];
        let ll = doc_log_likelihood(&d, &[0.0, 1.0], &beta);
        let expect = (0.4f64 + LIKELIHOOD_FLOOR).ln() + 3.0 * (0.2f64 + LIKELIHOOD_FLOOR).ln();
        assert!((ll - expect).abs() < 1e-14);
    }

    #[test]
    fn breakdown_sums_and_order_invariance() {
        let h = hyper();
        let p = ModelParams::init(&h, 11);
        let ds = docs();
        let st = stats(&ds);
        let batch: Vec<&BowDocument> = ds.iter().collect();
        let noise = Noise::zeros(&h, ds.len());
        let e = elbo(&batch, &st, &p, &h, &noise).unwrap();
        let sum = e.log_likelihood - e.kl_theta - e.kl_eta - e.kl_alpha;
        assert!((sum - e.elbo).abs() < 1e-9);

        // zero θ noise ⇒ reversing the batch only permutes per-document work
        let rev: Vec<&BowDocument> = ds.iter().rev().collect();
        let e2 = elbo(&rev, &st, &p, &h, &noise).unwrap();
        assert!((e.elbo - e2.elbo).abs() < 1e-9 * e.elbo.abs());
    }

    #[test]
    fn kl_theta_zero_at_prior() {
        // θ encoder outputs mean = η_t = 0 and logvar = log σ²_θ = 0
        let h = hyper();
        let mut p = ModelParams::init(&h, 2);
        p.theta_mean_w.data_mut().fill(0.0);
        p.theta_logvar_w.data_mut().fill(0.0);
        p.eta_mean_w.data_mut().fill(0.0);
        p.eta_logvar_w.data_mut().fill(0.0);
        let ds = docs();
        let batch: Vec<&BowDocument> = ds.iter().collect();
        let e = elbo(&batch, &stats(&ds), &p, &h, &Noise::zeros(&h, ds.len())).unwrap();
        assert_eq!(e.kl_theta, 0.0);
    }

    #[test]
    fn kl_eta_zero_when_q_matches_prior() {
        for sigma2 in [0.005, 1.0, 1e6] {
            let mut h = hyper();
            h.sigma2_eta = sigma2;
            let mut p = ModelParams::zeros(&h);
            // mean_t = η_{t−1} through an identity block on the head input
            let cols = h.eta_hidden + h.num_topics;
            for j in 0..h.num_topics {
                p.eta_mean_w.data_mut()[j * cols + h.eta_hidden + j] = 1.0;
            }
            let ds = docs();
            let st = stats(&ds);
            let batch: Vec<&BowDocument> = ds.iter().collect();
            let noise = Noise::zeros(&h, ds.len());
            // logvar 0: slice 1 matches N(0, 1), slice 2 pays only the variance gap
            let e = elbo(&batch, &st, &p, &h, &noise).unwrap();
            let expected_step2 = h.num_topics as f64 * kl_term(0.0, 0.0, 0.0, sigma2.ln());
            assert!((e.kl_eta - expected_step2).abs() < 1e-9 * (1.0 + expected_step2));
            p.eta_logvar_b.data_mut().fill(sigma2.ln());
            // logvar log σ²_η: slice 2 matches N(η_1, σ²_η) exactly
            let e = elbo(&batch, &st, &p, &h, &noise).unwrap();
            let expected_step1 = h.num_topics as f64 * kl_term(0.0, sigma2.ln(), 0.0, 0.0);
            assert!((e.kl_eta - expected_step1).abs() < 1e-9 * (1.0 + expected_step1));
        }
    }

    #[test]
    fn rejects_bad_batches() {
        let h = hyper();
        let p = ModelParams::zeros(&h);
        let ds = docs();
        let st = stats(&ds);
        assert!(elbo(&[], &st, &p, &h, &Noise::zeros(&h, 0)).is_err());
        let bad = BowDocument::new(5, [(0, 1)]);
        assert!(elbo(&[&bad], &st, &p, &h, &Noise::zeros(&h, 1)).is_err());
    }

    #[test]
    fn non_finite_is_reported_by_term() {
        let h = hyper();
        let mut p = ModelParams::zeros(&h);
        p.theta_logvar_b.data_mut().fill(1000.0);
        let ds = docs();
        let batch: Vec<&BowDocument> = ds.iter().collect();
        let err = elbo(&batch, &stats(&ds), &p, &h, &Noise::zeros(&h, ds.len())).unwrap_err();
        assert!(err.to_string().contains("KL(theta)"), "{err}");
    }
}
