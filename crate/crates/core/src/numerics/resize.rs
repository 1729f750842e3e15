use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Source row pair and blend weight for each target row (align-corners).
///
/// Positions are computed as exact rationals `t * (T_v - 1) / (T_a - 1)` so the
/// first and last rows land exactly on the first and last source rows.
fn taps(source: usize, target: usize) -> Vec<(usize, usize, f64)> {
    (0..target)
        .map(|t| {
            if target == 1 || source == 1 {
                return (0, 0, 0.0);
            }
            let num = t * (source - 1);
            let den = target - 1;
            let lo = num / den;
            let frac = (num % den) as f64 / den as f64;
            (lo, (lo + 1).min(source - 1), frac)
        })
        .collect()
}

/// Linear interpolation along the time axis of `x: [T_v, D]` to `T_a` rows.
pub fn resize_linear_time<T: Scalar>(x: &Tensor<T>, target: usize) -> Result<Tensor<T>> {
    let (source, d) = x.dims2()?;
    if source == 0 {
        return Err(Error::EmptySequence);
    }
    if target == 0 {
        return Err(Error::config("resize target length must be positive"));
    }
    if source == target {
        return Ok(x.clone());
    }
    let mut out = Vec::with_capacity(target * d);
    for (lo, hi, frac) in taps(source, target) {
        let (w_lo, w_hi) = (T::of(1.0 - frac), T::of(frac));
        let (a, b) = (&x.data()[lo * d..(lo + 1) * d], &x.data()[hi * d..(hi + 1) * d]);
        if frac == 0.0 {
            out.extend_from_slice(a);
        } else {
            out.extend(a.iter().zip(b).map(|(&p, &q)| p * w_lo + q * w_hi));
        }
    }
    Tensor::new([target, d], out)
}

/// Cotangent of the source rows given the cotangent `dy: [T_a, D]`.
pub fn resize_linear_time_vjp<T: Scalar>(source: usize, dy: &Tensor<T>) -> Result<Tensor<T>> {
    let (target, d) = dy.dims2()?;
    if source == 0 {
        return Err(Error::EmptySequence);
    }
    if source == target {
        return Ok(dy.clone());
    }
    let mut dx = vec![T::zero(); source * d];
    for (t, (lo, hi, frac)) in taps(source, target).into_iter().enumerate() {
        let (w_lo, w_hi) = (T::of(1.0 - frac), T::of(frac));
        let g = &dy.data()[t * d..(t + 1) * d];
        for (j, &gj) in g.iter().enumerate() {
            dx[lo * d + j] = dx[lo * d + j] + gj * w_lo;
            if frac != 0.0 {
                dx[hi * d + j] = dx[hi * d + j] + gj * w_hi;
            }
        }
    }
    Tensor::new([source, d], dx)
}
