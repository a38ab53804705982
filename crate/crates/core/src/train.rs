//! ELBO maximization with Adam and global gradient-norm clipping.

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{permutation, BowDocument, TimeSlicedCorpus};
use crate::error::{Error, Result};
use crate::eval::perplexity_completion;
use crate::model::{compute_beta, elbo_with_grad, BetaTensor, CorpusStats, ElboTerms, ModelHyper, ModelParams, Noise};
use crate::numkit::adam::adam_update;
use crate::numkit::{clip_global_norm, AdamConfig, AdamState};

/// Offset mixed into the seed for the reparameterization noise stream so it
/// is independent of the initialization stream.
const NOISE_STREAM: u64 = 0x6e6f_6973_655f_7374;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hyper: ModelHyper,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Log validation perplexity every this many batches (0 = only at
    /// epoch end).
    pub eval_every: usize,
    /// Update ρ; false keeps the (pretrained) embeddings fixed.
    pub train_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hyper: ModelHyper::default(),
            epochs: 5,
            batch_size: 1000,
            lr: 0.001,
            clip_norm: 2.0,
            seed: 0,
            eval_every: 0,
            train_embeddings: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Invalid("lr must be a positive number".into()));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(Error::Invalid("clip_norm must be a positive number".into()));
        }
        Ok(())
    }

    /// Fills V and T from the corpus (when zero) and checks they agree.
    pub fn resolve(mut self, corpus: &TimeSlicedCorpus) -> Result<Self> {
        let h = &mut self.hyper;
        for (name, slot, actual) in [
            ("vocab_size", &mut h.vocab_size, corpus.vocab_size()),
            ("num_slices", &mut h.num_slices, corpus.num_slices()),
        ] {
            if *slot == 0 {
                *slot = actual;
            } else if *slot != actual {
                return Err(Error::Invalid(format!("{name} {} does not match the dataset ({actual})", slot)));
            }
        }
        self.validate()?;
        Ok(self)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean per-document ELBO estimate over the epoch's batches.
    pub train_elbo: Vec<f64>,
    /// Completion perplexity on the validation split after each epoch;
    /// `None` when the split has no scorable document.
    pub val_perplexity: Vec<Option<f64>>,
    pub seconds: Vec<f64>,
}

/// Per-step diagnostics passed to a training observer.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub epoch: usize,
    pub batch: usize,
    pub batch_len: usize,
    pub terms: ElboTerms,
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

pub fn train(corpus: &TimeSlicedCorpus, config: &TrainConfig) -> Result<(ModelParams, TrainHistory)> {
    let config = config.resolve(corpus)?;
    let init = ModelParams::init(&config.hyper, config.seed);
    train_from(corpus, &config, init, |_| {})
}

/// Trains starting from `params` (e.g. with pretrained ρ), calling
/// `observe` after every optimizer step.
pub fn train_from(
    corpus: &TimeSlicedCorpus,
    config: &TrainConfig,
    mut params: ModelParams,
    mut observe: impl FnMut(&StepInfo),
) -> Result<(ModelParams, TrainHistory)> {
    let config = config.resolve(corpus)?;
    corpus.validate()?;
    params.check_finite()?;
    if params.zeros_like() != ModelParams::zeros(&config.hyper) {
        return Err(Error::Shape("initial parameters do not match the model shape".into()));
    }
    let hyper = config.hyper;
    let n = corpus.train.len();
    let batch_size = config.batch_size.min(n);
    let stats = CorpusStats::from_corpus(corpus);
    let adam_cfg = AdamConfig::with_lr(config.lr);
    let mut states: Vec<AdamState> = params.groups().iter().map(|(_, t)| AdamState::new(t.len(), adam_cfg)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ NOISE_STREAM);
    let mut history = TrainHistory::default();

    for epoch in 1..=config.epochs {
        let started = Stopwatch::start();
        let order = permutation(n, config.seed ^ epoch as u64);
        let mut elbo_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(batch_size).enumerate() {
            let batch: Vec<&BowDocument> = chunk.iter().map(|&i| &corpus.train[i]).collect();
            let noise = Noise::sample(&hyper, batch.len(), &mut rng);
            let (terms, mut grad) = elbo_with_grad(&batch, &stats, &params, &hyper, &noise).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}, batch {b}: {m}")),
                other => other,
            })?;
            // minimize −ELBO/N: the per-document objective
            let scale = -1.0 / n as f64;
            let mut groups = grad.groups_mut();
            if !config.train_embeddings {
                groups[0].1.data_mut().fill(0.0);
            }
            for (_, g) in groups.iter_mut() {
                g.data_mut().iter_mut().for_each(|x| *x *= scale);
            }
            let grad_norm = clip_global_norm(groups.iter_mut().map(|(_, g)| g.data_mut()), config.clip_norm);
            let clipped_norm = grad.norm();
            for (i, ((_, p), (_, g))) in params.groups_mut().into_iter().zip(grad.groups()).enumerate() {
                if i == 0 && !config.train_embeddings {
                    continue;
                }
                adam_update(p.data_mut(), g.data(), &mut states[i]);
            }
            elbo_sum += terms.elbo / n as f64;
            batches += 1;
            debug!("epoch {epoch} batch {b}: elbo/doc {:.4} grad norm {grad_norm:.4}", terms.elbo / n as f64);
            observe(&StepInfo {
                epoch,
                batch: b,
                batch_len: batch.len(),
                terms,
                grad_norm,
                clipped_norm,
            });
            if config.eval_every > 0 && (b + 1) % config.eval_every == 0 {
                if let Some(p) = val_perplexity(&params, &hyper, corpus, &stats)? {
                    info!("epoch {epoch} batch {}: validation perplexity {p:.3}", b + 1);
                }
            }
        }
        params.check_finite().map_err(|e| Error::NonFinite(format!("after epoch {epoch}: {e}")))?;
        let val = val_perplexity(&params, &hyper, corpus, &stats)?;
        let train_elbo = elbo_sum / batches as f64;
        info!("epoch {epoch}: train elbo/doc {train_elbo:.4}, validation perplexity {val:?}");
        history.train_elbo.push(train_elbo);
        history.val_perplexity.push(val);
        history.seconds.push(started.seconds());
    }
    Ok((params, history))
}

/// Wall-clock timer; reads zero where no clock is available (wasm32).
struct Stopwatch(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Stopwatch {
    fn start() -> Self {
        Self(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.0.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}

fn val_perplexity(params: &ModelParams, hyper: &ModelHyper, corpus: &TimeSlicedCorpus, stats: &CorpusStats) -> Result<Option<f64>> {
    if !corpus.val.iter().any(|d| d.total() >= 2) {
        return Ok(None);
    }
    Ok(Some(perplexity_completion(params, hyper, &stats.slice_means, &corpus.val)?.value))
}

/// β at the variational means of α (no sampling).
pub fn export_beta(params: &ModelParams) -> Result<BetaTensor> {
    compute_beta(&params.alpha_mean, &params.rho)
}
