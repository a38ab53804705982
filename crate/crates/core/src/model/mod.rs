//! Dynamic embedded topic model.
//!
//! Generative side: word embeddings `ρ` (V × L) are shared across time;
//! each topic has an embedding per slice that follows a Gaussian random
//! walk, and the topic's word distribution at slice `t` is
//! `softmax(ρ · α[t][k])`. Per-slice topic-proportion means `η[t]` also
//! follow a random walk, and a document's proportions are
//! `θ = softmax(N(η[t], σ²_θ I))`.
//!
//! Variational side: `q(α)` is a mean-field Gaussian per (slice, topic);
//! `q(η)` runs an LSTM over the per-slice mean bag-of-words and conditions
//! each step on the previous `η` sample; `q(θ)` is an amortized
//! feed-forward encoder of the document's normalized counts and its slice's
//! `η` sample.

mod beta;
mod elbo;
pub mod embeddings;
mod inference;
mod params;

pub use beta::{compute_beta, BetaTensor};
pub use elbo::{doc_log_likelihood, elbo, elbo_with_grad, CorpusStats, ElboTerms, Noise, LIKELIHOOD_FLOOR};
pub use inference::{infer_eta, infer_theta, EtaPosterior, ThetaPosterior};
pub use params::{ModelParams, GROUP_NAMES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelHyper {
    /// K
    pub num_topics: usize,
    /// L, the word/topic embedding size (`rho_size`).
    pub embed_size: usize,
    /// H, hidden width of the θ encoder (`t_hidden_size`).
    pub theta_hidden: usize,
    /// Hidden width of the η LSTM.
    pub eta_hidden: usize,
    /// V
    pub vocab_size: usize,
    /// T
    pub num_slices: usize,
    pub sigma2_alpha: f64,
    pub sigma2_eta: f64,
    pub sigma2_theta: f64,
}

impl Default for ModelHyper {
    fn default() -> Self {
        Self {
            num_topics: 5,
            embed_size: 300,
            theta_hidden: 800,
            eta_hidden: 200,
            vocab_size: 0,
            num_slices: 0,
            sigma2_alpha: 0.005,
            sigma2_eta: 0.005,
            sigma2_theta: 1.0,
        }
    }
}

impl ModelHyper {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("num_topics", self.num_topics),
            ("embed_size", self.embed_size),
            ("theta_hidden", self.theta_hidden),
            ("eta_hidden", self.eta_hidden),
            ("vocab_size", self.vocab_size),
            ("num_slices", self.num_slices),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(Error::Invalid(format!("{name} must be positive")));
            }
        }
        for (name, s) in [
            ("sigma2_alpha", self.sigma2_alpha),
            ("sigma2_eta", self.sigma2_eta),
            ("sigma2_theta", self.sigma2_theta),
        ] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Invalid(format!("{name} must be a positive number")));
            }
        }
        Ok(())
    }
}
