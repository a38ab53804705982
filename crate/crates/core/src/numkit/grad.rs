use super::ops::softmax;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A scalar objective with an exact gradient.
pub trait Differentiable {
    type Params;

    fn value_and_grad(&self, params: &Self::Params) -> Result<(f64, Self::Params)>;
}

/// Exact gradient of `loss` at `params`; fails on a non-finite value.
pub fn grad_of<F: Differentiable>(loss: &F, params: &F::Params) -> Result<F::Params> {
    let (value, grad) = loss.value_and_grad(params)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("loss value".into()));
    }
    Ok(grad)
}

/// `Σ params`.
pub struct SumLoss;

impl Differentiable for SumLoss {
    type Params = Tensor;

    fn value_and_grad(&self, params: &Tensor) -> Result<(f64, Tensor)> {
        params.check_finite("params")?;
        Ok((params.data().iter().sum(), Tensor::filled(params.shape(), 1.0)))
    }
}

/// `−log softmax(v)[target]`.
pub struct SoftmaxCrossEntropy {
    pub target: usize,
}

impl Differentiable for SoftmaxCrossEntropy {
    type Params = Tensor;

    fn value_and_grad(&self, logits: &Tensor) -> Result<(f64, Tensor)> {
        if self.target >= logits.len() {
            return Err(Error::OutOfRange(format!(
                "target {} for {} classes",
                self.target,
                logits.len()
            )));
        }
        let p = softmax(logits.data())?;
        let value = -p[self.target].ln();
        let mut g = p;
        g[self.target] -= 1.0;
        Ok((value, Tensor::from_vec(logits.shape(), g)?))
    }
}
