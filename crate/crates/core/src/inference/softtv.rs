//! SoftTV generator `f(x) = 0.5 log cosh(x - 1)`, a smooth lower bound on
//! the TV generator `0.5 |x - 1|` with `f(1) = 0`.

use crate::error::{Error, Result};

/// `0.5 log cosh(x - 1)`, evaluated without overflow for large `|x - 1|`.
pub fn soft_tv_f(x: f64) -> f64 {
    let u = (x - 1.0).abs();
    // log cosh u = u + log(1 + e^{-2u}) - log 2
    0.5 * (u + (-2.0 * u).exp().ln_1p() - std::f64::consts::LN_2)
}

/// `f'(x) = 0.5 tanh(x - 1)`, with range `(-0.5, 0.5)`.
pub fn soft_tv_fprime(x: f64) -> f64 {
    0.5 * (x - 1.0).tanh()
}

/// `(f')^{-1}(y) = artanh(2y) + 1` on the open interval `|y| < 0.5`.
pub fn soft_tv_fprime_inv(y: f64) -> Result<f64> {
    if !(y.abs() < 0.5) {
        return Err(Error::DomainError(y));
    }
    Ok((2.0 * y).atanh() + 1.0)
}

/// `(f')^{-1}` after clipping `y` to `[-0.5 + y_clip, 0.5 - y_clip]`.
pub fn soft_tv_fprime_inv_clipped(y: f64, y_clip: f64) -> f64 {
    let bound = 0.5 - y_clip;
    (2.0 * y.clamp(-bound, bound)).atanh() + 1.0
}
