//! Finite-difference oracle shared by the integration tests.
//!
//! Independent of the crate's backward passes: it only ever calls forward
//! functions and compares against central differences in f64.

#![allow(dead_code)]

use avse_core::numerics::Tensor;
use avse_core::rng::Xorshift64Star;

pub const FD_STEP: f64 = 1e-5;

/// Relative error with a small floor so that gradients which are zero up to
/// round-off compare by absolute difference instead.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

pub fn normal_tensor(rng: &mut Xorshift64Star, dims: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(dims.to_vec(), |_| rng.normal() * scale)
}

/// Normal entries pushed at least `gap` away from zero (keeps ReLU kinks out
/// of finite-difference stencils).
pub fn normal_tensor_off_zero(rng: &mut Xorshift64Star, dims: &[usize], gap: f64) -> Tensor<f64> {
    Tensor::from_fn(dims.to_vec(), |_| {
        let v = rng.normal();
        v + gap.copysign(v)
    })
}

/// Worst relative error between `analytic` and central differences of `loss`
/// around `x`, over at most `max_entries` sampled coordinates (all when the
/// tensor is small enough).
pub fn fd_check(
    loss: impl Fn(&Tensor<f64>) -> f64,
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    max_entries: usize,
    rng: &mut Xorshift64Star,
) -> f64 {
    assert_eq!(x.dims(), analytic.dims(), "gradient shape must match input shape");
    let n = x.len();
    let indices: Vec<usize> = if n <= max_entries {
        (0..n).collect()
    } else {
        (0..max_entries).map(|_| (rng.next_f64() * n as f64) as usize).collect()
    };
    let mut worst = 0.0f64;
    for i in indices {
        let mut plus = x.clone();
        plus.data_mut()[i] += FD_STEP;
        let mut minus = x.clone();
        minus.data_mut()[i] -= FD_STEP;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic.data()[i], numeric));
    }
    worst
}

/// `<u, y>` for a fixed cotangent `u`.
pub fn project(u: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    assert_eq!(u.dims(), y.dims());
    u.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}
