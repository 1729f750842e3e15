//! Negative SI-SDR training objective.

use crate::error::{Error, Result};
use crate::numerics::Scalar;

/// Added to both energies so the loss stays finite for perfect and for
/// orthogonal estimates.
pub const LOSS_EPS: f64 = 1e-8;

struct Parts {
    reference: Vec<f64>,
    estimate: Vec<f64>,
    alpha: f64,
    target_energy: f64,
    residual_energy: f64,
}

fn parts<T: Scalar>(clean: &[T], enhanced: &[T]) -> Result<Parts> {
    if clean.len() != enhanced.len() {
        return Err(Error::shape(format!(
            "clean has {} samples but enhanced has {}",
            clean.len(),
            enhanced.len()
        )));
    }
    let centre = |x: &[T]| {
        let mean = x.iter().map(|v| v.as_f64()).sum::<f64>() / x.len().max(1) as f64;
        x.iter().map(|v| v.as_f64() - mean).collect::<Vec<f64>>()
    };
    let reference = centre(clean);
    let estimate = centre(enhanced);
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if !(ref_energy > 0.0) {
        return Err(Error::DegenerateSignal("clean reference"));
    }
    let alpha = reference.iter().zip(&estimate).map(|(r, e)| r * e).sum::<f64>() / ref_energy;
    let residual_energy = reference
        .iter()
        .zip(&estimate)
        .map(|(r, e)| (e - alpha * r).powi(2))
        .sum();
    Ok(Parts {
        target_energy: alpha * alpha * ref_energy,
        reference,
        estimate,
        alpha,
        residual_energy,
    })
}

/// `-10 log10((|a r|^2 + eps) / (|e - a r|^2 + eps))` on mean-removed
/// signals, with `a` the projection coefficient of `e` on `r`. Uncapped.
pub fn si_sdr_loss<T: Scalar>(clean: &[T], enhanced: &[T]) -> Result<f64> {
    let p = parts(clean, enhanced)?;
    Ok(-10.0 * ((p.target_energy + LOSS_EPS) / (p.residual_energy + LOSS_EPS)).log10())
}

/// [`si_sdr_loss`] and its gradient with respect to `enhanced`.
pub fn si_sdr_loss_grad<T: Scalar>(clean: &[T], enhanced: &[T]) -> Result<(f64, Vec<T>)> {
    let p = parts(clean, enhanced)?;
    let loss = -10.0 * ((p.target_energy + LOSS_EPS) / (p.residual_energy + LOSS_EPS)).log10();
    // d|a r|^2 = 2 a r and d|e - a r|^2 = 2 (e - a r); both are zero-mean, so
    // the mean removal of `enhanced` passes them through unchanged.
    let c = -20.0 / std::f64::consts::LN_10;
    let (ts, rs) = (p.target_energy + LOSS_EPS, p.residual_energy + LOSS_EPS);
    let grad = p
        .reference
        .iter()
        .zip(&p.estimate)
        .map(|(&r, &e)| {
            let target = p.alpha * r;
            T::of(c * (target / ts - (e - target) / rs))
        })
        .collect();
    Ok((loss, grad))
}
