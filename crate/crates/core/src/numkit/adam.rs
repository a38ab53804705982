use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            config,
        }
    }
}

/// One bias-corrected Adam update of `param` along `-grad`.
pub fn adam_step(param: &mut Tensor, grad: &Tensor, state: &mut AdamState) -> Result<()> {
    if param.shape() != grad.shape() || state.m.len() != param.len() {
        return Err(Error::Shape(format!(
            "adam: param {:?}, grad {:?}, state {}",
            param.shape(),
            grad.shape(),
            state.m.len()
        )));
    }
    adam_update(param.data_mut(), grad.data(), state);
    Ok(())
}

pub(crate) fn adam_update(param: &mut [f64], grad: &[f64], state: &mut AdamState) {
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for (((p, &g), m), v) in param
        .iter_mut()
        .zip(grad)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Rescales all gradients jointly so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<'a>(grads: impl IntoIterator<Item = &'a mut [f64]>, max_norm: f64) -> f64 {
    let mut grads: Vec<&mut [f64]> = grads.into_iter().collect();
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02, 250.0] {
            let mut p = Tensor::from_vec(&[1], vec![0.0]).unwrap();
            let grad = Tensor::from_vec(&[1], vec![g]).unwrap();
            let mut st = AdamState::new(1, AdamConfig::with_lr(0.1));
            adam_step(&mut p, &grad, &mut st).unwrap();
            let delta = p.data()[0];
            assert_eq!(delta.signum(), -g.signum());
            assert!((0.0999..=0.1).contains(&delta.abs()), "{delta}");
            assert_eq!(st.step, 1);
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = Tensor::from_vec(&[2], vec![1.5, -2.0]).unwrap();
        let g = Tensor::zeros(&[2]);
        let mut st = AdamState::new(2, AdamConfig::with_lr(0.1));
        for _ in 0..100 {
            adam_step(&mut p, &g, &mut st).unwrap();
        }
        assert_eq!(p.data(), &[1.5, -2.0]);
    }

    #[test]
    fn quadratic_descends() {
        // f(x) = x², f'(x) = 2x, simulated with lr = 0.1 from x = 1
        let mut p = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        let mut st = AdamState::new(1, AdamConfig::with_lr(0.1));
        let mut prev = 1.0f64;
        for _ in 0..10 {
            let g = Tensor::from_vec(&[1], vec![2.0 * p.data()[0]]).unwrap();
            adam_step(&mut p, &g, &mut st).unwrap();
            let x = p.data()[0].abs();
            assert!(x < prev);
            prev = x;
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Tensor::zeros(&[2]);
        let g = Tensor::zeros(&[3]);
        let mut st = AdamState::new(2, AdamConfig::default());
        assert!(adam_step(&mut p, &g, &mut st).is_err());
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut a = vec![3.0, 4.0];
        let mut b = vec![12.0];
        let n = clip_global_norm([a.as_mut_slice(), b.as_mut_slice()], 2.0);
        assert!((n - 13.0).abs() < 1e-12);
        let after = (a[0] * a[0] + a[1] * a[1] + b[0] * b[0]).sqrt();
        assert!(after <= 2.0 + 1e-9);
        let mut c = vec![0.1];
        clip_global_norm([c.as_mut_slice()], 2.0);
        assert_eq!(c, vec![0.1]);
    }
}
