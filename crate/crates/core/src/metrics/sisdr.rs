use crate::error::{Error, Result};
use crate::numerics::Scalar;

/// Largest magnitude reported by [`si_sdr`], in dB.
pub const SI_SDR_CAP_DB: f64 = 60.0;

/// Scale-invariant signal-to-distortion ratio of `estimate` against
/// `reference`, in dB.
///
/// Both signals are mean-removed, the estimate is projected onto the
/// reference, and the ratio of projected to residual energy is returned.
/// The result is clamped to `[-60, 60]`; a residual below `1e-12` of the
/// projected energy reports exactly the cap.
pub fn si_sdr<T: Scalar>(reference: &[T], estimate: &[T]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::shape(format!(
            "reference has {} samples, estimate has {}",
            reference.len(),
            estimate.len()
        )));
    }
    let r = centered(reference);
    let e = centered(estimate);
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if !(rr > 0.0) {
        return Err(Error::DegenerateReference);
    }
    let alpha = r.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / rr;
    let target = alpha * alpha * rr;
    let residual: f64 = r.iter().zip(&e).map(|(a, b)| (b - alpha * a).powi(2)).sum();
    if residual < 1e-12 * target {
        return Ok(SI_SDR_CAP_DB);
    }
    if target == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / residual).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

fn centered<T: Scalar>(x: &[T]) -> Vec<f64> {
    let mean = x.iter().map(|v| v.as_f64()).sum::<f64>() / x.len().max(1) as f64;
    x.iter().map(|v| v.as_f64() - mean).collect()
}
