use super::{ModelHyper, ModelParams};
use crate::corpus::BowDocument;
use crate::error::{Error, Result};
use crate::numkit::ops::{matvec_acc, softmax_in_place, softplus};
use crate::numkit::{rnn_cell, LstmStep};

/// Output of the recurrent η encoder. All buffers are `T × K` row-major.
#[derive(Clone, Debug)]
pub struct EtaPosterior {
    pub mean: Vec<f64>,
    pub logvar: Vec<f64>,
    pub sample: Vec<f64>,
    pub(crate) steps: Vec<LstmStep>,
    /// Head inputs `[h_t; η_{t−1}]`.
    pub(crate) head_inputs: Vec<Vec<f64>>,
}

impl EtaPosterior {
    pub fn sample_at(&self, t: usize) -> &[f64] {
        let k = self.mean.len() / self.steps.len();
        &self.sample[t * k..(t + 1) * k]
    }
}

/// Runs the η LSTM over the per-slice mean bag-of-words (`T × V`) and
/// samples `η_t` from its head, conditioning each step on `η_{t−1}`
/// (`η_0 = 0`). `noise` is `T × K` standard normal.
pub fn infer_eta(slice_means: &[f64], params: &ModelParams, hyper: &ModelHyper, noise: &[f64]) -> Result<EtaPosterior> {
    let (k, v, t_n, hs) = (hyper.num_topics, hyper.vocab_size, hyper.num_slices, hyper.eta_hidden);
    if t_n == 0 {
        return Err(Error::Invalid("η inference needs at least one slice".into()));
    }
    if slice_means.len() != t_n * v || noise.len() != t_n * k {
        return Err(Error::Shape(format!(
            "infer_eta: slice means {} (want {}), noise {} (want {})",
            slice_means.len(),
            t_n * v,
            noise.len(),
            t_n * k
        )));
    }
    let mut h = vec![0.0; hs];
    let mut c = vec![0.0; hs];
    let mut prev = vec![0.0; k];
    let mut post = EtaPosterior {
        mean: vec![0.0; t_n * k],
        logvar: vec![0.0; t_n * k],
        sample: vec![0.0; t_n * k],
        steps: Vec::with_capacity(t_n),
        head_inputs: Vec::with_capacity(t_n),
    };
    for t in 0..t_n {
        let step = rnn_cell(&slice_means[t * v..(t + 1) * v], &h, &c, &params.eta_lstm)?;
        h.clone_from(&step.h);
        c.clone_from(&step.c);

        let mut u = step.h.clone();
        u.extend_from_slice(&prev);
        let mean = &mut post.mean[t * k..(t + 1) * k];
        mean.copy_from_slice(params.eta_mean_b.data());
        matvec_acc(params.eta_mean_w.data(), k, hs + k, &u, mean);
        let logvar = &mut post.logvar[t * k..(t + 1) * k];
        logvar.copy_from_slice(params.eta_logvar_b.data());
        matvec_acc(params.eta_logvar_w.data(), k, hs + k, &u, logvar);
        for j in 0..k {
            let i = t * k + j;
            post.sample[i] = post.mean[i] + (0.5 * post.logvar[i]).exp() * noise[i];
        }
        prev.copy_from_slice(&post.sample[t * k..(t + 1) * k]);
        post.steps.push(step);
        post.head_inputs.push(u);
    }
    Ok(post)
}

/// Output of the amortized θ encoder for one document.
#[derive(Clone, Debug)]
pub struct ThetaPosterior {
    pub theta: Vec<f64>,
    pub mean: Vec<f64>,
    pub logvar: Vec<f64>,
    pub(crate) input: Vec<(u32, f64)>,
    pub(crate) pre_hidden: Vec<f64>,
    pub(crate) hidden: Vec<f64>,
}

/// Encodes `[normalized counts; η_t]` through a softplus hidden layer into
/// a Gaussian over logits, samples with `noise` (length K) and maps the
/// sample to the simplex.
pub fn infer_theta(doc: &BowDocument, eta_t: &[f64], params: &ModelParams, hyper: &ModelHyper, noise: &[f64]) -> Result<ThetaPosterior> {
    if doc.total() == 0 {
        return Err(Error::Invalid("cannot infer topic proportions of an empty document".into()));
    }
    let (k, v) = (hyper.num_topics, hyper.vocab_size);
    if eta_t.len() != k || noise.len() != k {
        return Err(Error::Shape(format!("infer_theta: η {} / noise {} for K = {k}", eta_t.len(), noise.len())));
    }
    if let Some(&(id, _)) = doc.counts.iter().find(|&&(id, _)| id as usize >= v) {
        return Err(Error::OutOfRange(format!("term id {id} with vocabulary {v}")));
    }
    Ok(theta_forward(doc.normalized(), eta_t, params, hyper, noise))
}

pub(crate) fn theta_forward(input: Vec<(u32, f64)>, eta_t: &[f64], params: &ModelParams, hyper: &ModelHyper, noise: &[f64]) -> ThetaPosterior {
    let (k, v, hd) = (hyper.num_topics, hyper.vocab_size, hyper.theta_hidden);
    let cols = v + k;
    let w = params.theta_w.data();
    let mut pre = params.theta_b.data().to_vec();
    for (r, a) in pre.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        for &(id, f) in &input {
            *a += row[id as usize] * f;
        }
        for j in 0..k {
            *a += row[v + j] * eta_t[j];
        }
    }
    let hidden: Vec<f64> = pre.iter().map(|&a| softplus(a)).collect();
    let mut mean = params.theta_mean_b.data().to_vec();
    matvec_acc(params.theta_mean_w.data(), k, hd, &hidden, &mut mean);
    let mut logvar = params.theta_logvar_b.data().to_vec();
    matvec_acc(params.theta_logvar_w.data(), k, hd, &hidden, &mut logvar);
    let mut theta: Vec<f64> = (0..k).map(|j| mean[j] + (0.5 * logvar[j]).exp() * noise[j]).collect();
    softmax_in_place(&mut theta);
    ThetaPosterior {
        theta,
        mean,
        logvar,
        input,
        pre_hidden: pre,
        hidden,
    }
}
