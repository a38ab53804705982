//! Numeric kernels used by the topic model. Everything is `f64` and
//! single-threaded; gradients are hand-derived and checked against central
//! finite differences in the test suite.

pub mod adam;
pub mod grad;
pub mod lstm;
pub mod ops;
pub mod tensor;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use grad::{grad_of, Differentiable, SoftmaxCrossEntropy, SumLoss};
pub use lstm::{rnn_cell, rnn_cell_backward, LstmStep, LstmWeights};
pub use ops::{kl_diag_gauss, log_sum_exp, reparam_sample, softmax};
pub use tensor::Tensor;
