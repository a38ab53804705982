use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelHyper;
use crate::error::{Error, Result};
use crate::numkit::{LstmWeights, Tensor};

/// Parameter group names, in the canonical order used for serialization,
/// initialization and optimizer state.
pub const GROUP_NAMES: [&str; 15] = [
    "rho",
    "alpha_mean",
    "alpha_logvar",
    "eta_lstm_w",
    "eta_lstm_b",
    "eta_mean_w",
    "eta_mean_b",
    "eta_logvar_w",
    "eta_logvar_b",
    "theta_w",
    "theta_b",
    "theta_mean_w",
    "theta_mean_b",
    "theta_logvar_w",
    "theta_logvar_b",
];

const INIT_STD: f64 = 0.02;

/// All learnable state. The same type doubles as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// V × L word embeddings.
    pub rho: Tensor,
    /// T × K × L variational means of the topic embeddings.
    pub alpha_mean: Tensor,
    pub alpha_logvar: Tensor,
    /// Input V, hidden `eta_hidden`.
    pub eta_lstm: LstmWeights,
    /// K × (eta_hidden + K), acting on `[h_t; η_{t−1}]`.
    pub eta_mean_w: Tensor,
    pub eta_mean_b: Tensor,
    pub eta_logvar_w: Tensor,
    pub eta_logvar_b: Tensor,
    /// H × (V + K), acting on `[normalized bow; η_t]`.
    pub theta_w: Tensor,
    pub theta_b: Tensor,
    /// K × H heads.
    pub theta_mean_w: Tensor,
    pub theta_mean_b: Tensor,
    pub theta_logvar_w: Tensor,
    pub theta_logvar_b: Tensor,
}

impl ModelParams {
    pub fn zeros(h: &ModelHyper) -> Self {
        let (k, l, v, t) = (h.num_topics, h.embed_size, h.vocab_size, h.num_slices);
        Self {
            rho: Tensor::zeros(&[v, l]),
            alpha_mean: Tensor::zeros(&[t, k, l]),
            alpha_logvar: Tensor::zeros(&[t, k, l]),
            eta_lstm: LstmWeights::zeros(v, h.eta_hidden),
            eta_mean_w: Tensor::zeros(&[k, h.eta_hidden + k]),
            eta_mean_b: Tensor::zeros(&[k]),
            eta_logvar_w: Tensor::zeros(&[k, h.eta_hidden + k]),
            eta_logvar_b: Tensor::zeros(&[k]),
            theta_w: Tensor::zeros(&[h.theta_hidden, v + k]),
            theta_b: Tensor::zeros(&[h.theta_hidden]),
            theta_mean_w: Tensor::zeros(&[k, h.theta_hidden]),
            theta_mean_b: Tensor::zeros(&[k]),
            theta_logvar_w: Tensor::zeros(&[k, h.theta_hidden]),
            theta_logvar_b: Tensor::zeros(&[k]),
        }
    }

    /// Weights drawn from N(0, 0.02²) in [`GROUP_NAMES`] order; biases zero.
    pub fn init(h: &ModelHyper, seed: u64) -> Self {
        let mut p = Self::zeros(h);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).unwrap();
        for (name, t) in p.groups_mut() {
            if is_bias(name) {
                continue;
            }
            for x in t.data_mut() {
                *x = normal.sample(&mut rng);
            }
        }
        p
    }

    pub fn groups(&self) -> [(&'static str, &Tensor); 15] {
        [
            (GROUP_NAMES[0], &self.rho),
            (GROUP_NAMES[1], &self.alpha_mean),
            (GROUP_NAMES[2], &self.alpha_logvar),
            (GROUP_NAMES[3], &self.eta_lstm.w),
            (GROUP_NAMES[4], &self.eta_lstm.b),
            (GROUP_NAMES[5], &self.eta_mean_w),
            (GROUP_NAMES[6], &self.eta_mean_b),
            (GROUP_NAMES[7], &self.eta_logvar_w),
            (GROUP_NAMES[8], &self.eta_logvar_b),
            (GROUP_NAMES[9], &self.theta_w),
            (GROUP_NAMES[10], &self.theta_b),
            (GROUP_NAMES[11], &self.theta_mean_w),
            (GROUP_NAMES[12], &self.theta_mean_b),
            (GROUP_NAMES[13], &self.theta_logvar_w),
            (GROUP_NAMES[14], &self.theta_logvar_b),
        ]
    }

    pub fn groups_mut(&mut self) -> [(&'static str, &mut Tensor); 15] {
        [
            (GROUP_NAMES[0], &mut self.rho),
            (GROUP_NAMES[1], &mut self.alpha_mean),
            (GROUP_NAMES[2], &mut self.alpha_logvar),
            (GROUP_NAMES[3], &mut self.eta_lstm.w),
            (GROUP_NAMES[4], &mut self.eta_lstm.b),
            (GROUP_NAMES[5], &mut self.eta_mean_w),
            (GROUP_NAMES[6], &mut self.eta_mean_b),
            (GROUP_NAMES[7], &mut self.eta_logvar_w),
            (GROUP_NAMES[8], &mut self.eta_logvar_b),
            (GROUP_NAMES[9], &mut self.theta_w),
            (GROUP_NAMES[10], &mut self.theta_b),
            (GROUP_NAMES[11], &mut self.theta_mean_w),
            (GROUP_NAMES[12], &mut self.theta_mean_b),
            (GROUP_NAMES[13], &mut self.theta_logvar_w),
            (GROUP_NAMES[14], &mut self.theta_logvar_b),
        ]
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.groups_mut() {
            t.data_mut().fill(0.0);
        }
        z
    }

    /// Builds parameters from named tensors, checking every shape against
    /// `h`.
    pub fn from_groups(h: &ModelHyper, mut tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let mut p = Self::zeros(h);
        for (name, slot) in p.groups_mut() {
            let i = tensors
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::Invalid(format!("missing parameter group {name}")))?;
            let (_, t) = tensors.swap_remove(i);
            if t.shape() != slot.shape() {
                return Err(Error::Shape(format!(
                    "{name}: expected {:?}, found {:?}",
                    slot.shape(),
                    t.shape()
                )));
            }
            *slot = t;
        }
        if let Some((n, _)) = tensors.first() {
            return Err(Error::Invalid(format!("unknown parameter group {n}")));
        }
        Ok(p)
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in self.groups() {
            t.check_finite(name)?;
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.groups().iter().map(|(_, t)| t.norm_sq()).sum::<f64>().sqrt()
    }

    pub fn num_values(&self) -> usize {
        self.groups().iter().map(|(_, t)| t.len()).sum()
    }
}

fn is_bias(name: &str) -> bool {
    name.ends_with("_b")
}
