//! Scalar and vector kernels shared by the model: stable softmax, Gaussian
//! reparameterization, closed-form KL terms and the dense mat-vec helpers
//! used by the hand-written backward passes.

use crate::error::{Error, Result};

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn check_same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what}: lengths {a} and {b} differ")))
    }
}

/// Softmax with max-subtraction.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    check_finite(v, "softmax input")?;
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Unchecked in-place softmax for hot loops; callers guarantee finiteness.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = 1.0 / sum;
    v.iter_mut().for_each(|x| *x *= inv);
}

/// Vector-Jacobian product of softmax: given `y = softmax(x)` and `dy`,
/// writes `dx = y ⊙ (dy − ⟨y, dy⟩)`.
pub fn softmax_backward(y: &[f64], dy: &[f64], dx: &mut [f64]) {
    let inner: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    for ((d, &yi), &dyi) in dx.iter_mut().zip(y).zip(dy) {
        *d = yi * (dyi - inner);
    }
}

pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    check_finite(v, "log_sum_exp input")?;
    if v.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = v.iter().map(|x| (x - max).exp()).sum();
    Ok(max + sum.ln())
}

/// `mu + exp(logvar / 2) ⊙ noise`.
pub fn reparam_sample(mu: &[f64], logvar: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    check_same_len(mu.len(), logvar.len(), "reparam_sample")?;
    check_same_len(mu.len(), noise.len(), "reparam_sample")?;
    Ok(mu
        .iter()
        .zip(logvar)
        .zip(noise)
        .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
        .collect())
}

/// KL(N(mu1, e^logvar1) ‖ N(mu2, e^logvar2)) for diagonal Gaussians.
pub fn kl_diag_gauss(mu1: &[f64], logvar1: &[f64], mu2: &[f64], logvar2: &[f64]) -> Result<f64> {
    let n = mu1.len();
    check_same_len(n, logvar1.len(), "kl_diag_gauss")?;
    check_same_len(n, mu2.len(), "kl_diag_gauss")?;
    check_same_len(n, logvar2.len(), "kl_diag_gauss")?;
    Ok((0..n)
        .map(|i| kl_term(mu1[i], logvar1[i], mu2[i], logvar2[i]))
        .sum())
}

#[inline]
pub(crate) fn kl_term(mu1: f64, lv1: f64, mu2: f64, lv2: f64) -> f64 {
    let d = mu1 - mu2;
    0.5 * (lv2 - lv1) + (lv1.exp() + d * d) / (2.0 * lv2.exp()) - 0.5
}

/// Partial derivatives of one coordinate of [`kl_diag_gauss`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlGrad {
    pub mu1: f64,
    pub logvar1: f64,
    pub mu2: f64,
    pub logvar2: f64,
}

#[inline]
pub fn kl_term_grad(mu1: f64, lv1: f64, mu2: f64, lv2: f64) -> KlGrad {
    let inv_var2 = (-lv2).exp();
    let d = mu1 - mu2;
    KlGrad {
        mu1: d * inv_var2,
        logvar1: 0.5 * (lv1.exp() * inv_var2 - 1.0),
        mu2: -d * inv_var2,
        logvar2: 0.5 - 0.5 * (lv1.exp() + d * d) * inv_var2,
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)`, stable for large |x|.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `out += W x` for a row-major `rows × cols` matrix.
pub fn matvec_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        *o += dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `out += Wᵀ y` for a row-major `rows × cols` matrix.
pub fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    for (r, &yr) in y.iter().enumerate().take(rows) {
        if yr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += wv * yr;
        }
    }
}

/// `G += a bᵀ` for a row-major `|a| × |b|` matrix.
pub fn add_outer(g: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    debug_assert_eq!(g.len(), a.len() * cols);
    for (r, &ar) in a.iter().enumerate() {
        if ar == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gv, &bv) in row.iter_mut().zip(b) {
            *gv += ar * bv;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
