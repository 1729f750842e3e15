//! Group normalization.
//!
//! Statistics are taken per (group, batch) over every channel of the group and
//! every position of the trailing axis. The public [`group_norm`] treats a
//! `[C, T]` input as a single batch; the visual trunk normalizes each video
//! frame separately through the batched form over a `[C, B, S]` layout.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GroupNormParams<T: Scalar> {
    pub groups: usize,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub eps: f64,
}

impl<T: Scalar> GroupNormParams<T> {
    /// Unit gamma, zero beta.
    pub fn identity(channels: usize, groups: usize, eps: f64) -> Self {
        Self {
            groups,
            gamma: Tensor::full([channels], T::one()),
            beta: Tensor::zeros([channels]),
            eps,
        }
    }

    fn check(&self, channels: usize) -> Result<()> {
        if self.groups == 0 || !channels.is_multiple_of(self.groups) {
            return Err(Error::config(format!(
                "group count {} does not divide {channels} channels",
                self.groups
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("group norm eps must be positive"));
        }
        self.gamma.expect_dims(&[channels])?;
        self.beta.expect_dims(&[channels])
    }
}

#[derive(Debug, Clone)]
pub struct GroupNormGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

#[derive(Clone, Copy)]
struct Layout {
    channels: usize,
    batch: usize,
    span: usize,
    per_group: usize,
}

impl Layout {
    fn index(&self, c: usize, b: usize, s: usize) -> usize {
        (c * self.batch + b) * self.span + s
    }
}

/// Mean and inverse standard deviation for every (group, batch) pair,
/// accumulated in f64 in a fixed order.
fn statistics<T: Scalar>(x: &[T], l: Layout, groups: usize, eps: f64) -> Vec<(f64, f64)> {
    let count = (l.per_group * l.span) as f64;
    let mut stats = Vec::with_capacity(groups * l.batch);
    for g in 0..groups {
        for b in 0..l.batch {
            let channels = g * l.per_group..(g + 1) * l.per_group;
            let mut sum = 0.0;
            for c in channels.clone() {
                let start = l.index(c, b, 0);
                sum += x[start..start + l.span].iter().map(|v| v.as_f64()).sum::<f64>();
            }
            let mean = sum / count;
            let mut var = 0.0;
            for c in channels {
                let start = l.index(c, b, 0);
                var += x[start..start + l.span]
                    .iter()
                    .map(|v| {
                        let d = v.as_f64() - mean;
                        d * d
                    })
                    .sum::<f64>();
            }
            stats.push((mean, 1.0 / (var / count + eps).sqrt()));
        }
    }
    stats
}

/// Group norm over `x: [C, B, S..]` with separate statistics per batch entry.
pub fn group_norm_batched<T: Scalar>(
    x: &Tensor<T>,
    batch: usize,
    p: &GroupNormParams<T>,
) -> Result<Tensor<T>> {
    let l = layout(x, batch, p)?;
    let stats = statistics(x.data(), l, p.groups, p.eps);
    let mut out = vec![T::zero(); x.len()];
    for c in 0..l.channels {
        let g = c / l.per_group;
        let (gamma, beta) = (p.gamma.data()[c], p.beta.data()[c]);
        for b in 0..l.batch {
            let (mean, inv) = stats[g * l.batch + b];
            let (mean, inv) = (T::of(mean), T::of(inv));
            let start = l.index(c, b, 0);
            for i in start..start + l.span {
                out[i] = (x.data()[i] - mean) * inv * gamma + beta;
            }
        }
    }
    Tensor::new(x.dims(), out)
}

pub fn group_norm_batched_vjp<T: Scalar>(
    x: &Tensor<T>,
    batch: usize,
    p: &GroupNormParams<T>,
    dy: &Tensor<T>,
) -> Result<GroupNormGrads<T>> {
    let l = layout(x, batch, p)?;
    dy.expect_dims(x.dims())?;
    let stats = statistics(x.data(), l, p.groups, p.eps);
    let (xs, gs) = (x.data(), dy.data());
    let mut dgamma = vec![T::zero(); l.channels];
    let mut dbeta = vec![T::zero(); l.channels];
    let mut dx = vec![T::zero(); x.len()];
    let count = (l.per_group * l.span) as f64;

    for g in 0..p.groups {
        for b in 0..l.batch {
            let (mean, inv) = stats[g * l.batch + b];
            let channels = g * l.per_group..(g + 1) * l.per_group;
            // Group means of dxhat and dxhat * xhat.
            let (mut m1, mut m2) = (0.0, 0.0);
            for c in channels.clone() {
                let gamma = p.gamma.data()[c].as_f64();
                let start = l.index(c, b, 0);
                let (mut sg, mut sgx) = (0.0, 0.0);
                for i in start..start + l.span {
                    let xhat = (xs[i].as_f64() - mean) * inv;
                    let d = gs[i].as_f64();
                    sg += d;
                    sgx += d * xhat;
                }
                dbeta[c] = dbeta[c] + T::of(sg);
                dgamma[c] = dgamma[c] + T::of(sgx);
                m1 += sg * gamma;
                m2 += sgx * gamma;
            }
            m1 /= count;
            m2 /= count;
            for c in channels {
                let gamma = p.gamma.data()[c].as_f64();
                let start = l.index(c, b, 0);
                for i in start..start + l.span {
                    let xhat = (xs[i].as_f64() - mean) * inv;
                    let dxhat = gs[i].as_f64() * gamma;
                    dx[i] = T::of(inv * (dxhat - m1 - xhat * m2));
                }
            }
        }
    }
    Ok(GroupNormGrads {
        input: Tensor::new(x.dims(), dx)?,
        gamma: Tensor::vector(dgamma),
        beta: Tensor::vector(dbeta),
    })
}

fn layout<T: Scalar>(x: &Tensor<T>, batch: usize, p: &GroupNormParams<T>) -> Result<Layout> {
    let channels = *x.dims().first().ok_or_else(|| Error::shape("group norm needs a channel axis"))?;
    p.check(channels)?;
    let rest = x.len() / channels.max(1);
    if batch == 0 || !rest.is_multiple_of(batch) {
        return Err(Error::shape(format!("cannot split {rest} positions into {batch} batches")));
    }
    Ok(Layout {
        channels,
        batch,
        span: rest / batch,
        per_group: channels / p.groups,
    })
}

/// Normalizes `x: [C, T]` per channel group, then applies the per-channel affine.
pub fn group_norm<T: Scalar>(x: &Tensor<T>, p: &GroupNormParams<T>) -> Result<Tensor<T>> {
    x.dims2()?;
    group_norm_batched(x, 1, p)
}

pub fn group_norm_vjp<T: Scalar>(x: &Tensor<T>, p: &GroupNormParams<T>, dy: &Tensor<T>) -> Result<GroupNormGrads<T>> {
    x.dims2()?;
    group_norm_batched_vjp(x, 1, p, dy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_yields_beta() {
        let x = Tensor::<f64>::full([4, 6], 3.5);
        let mut p = GroupNormParams::identity(4, 2, 1e-5);
        p.gamma = Tensor::vector(vec![2.0, -1.0, 0.5, 3.0]);
        p.beta = Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]);
        let y = group_norm(&x, &p).unwrap();
        for c in 0..4 {
            for t in 0..6 {
                assert_eq!(y.data()[c * 6 + t], p.beta.data()[c]);
            }
        }
    }

    #[test]
    fn two_point_hand_value() {
        let x = Tensor::<f64>::new([1, 2], vec![1.0, 3.0]).unwrap();
        let y = group_norm(&x, &GroupNormParams::identity(1, 1, 1e-5)).unwrap();
        let expected = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.data()[0] + expected).abs() < 1e-12);
        assert!((y.data()[1] - expected).abs() < 1e-12);
        assert!((expected - 0.99999).abs() < 1e-5);
    }

    #[test]
    fn groups_must_divide_channels() {
        let x = Tensor::<f32>::zeros([6, 3]);
        let p = GroupNormParams::identity(6, 4, 1e-5);
        assert!(matches!(group_norm(&x, &p), Err(Error::Config(_))));
    }

    #[test]
    fn batched_form_normalizes_each_batch_separately() {
        // Two batches with different offsets: each is centered on its own.
        let x = Tensor::<f64>::from_fn([2, 2, 3], |i| {
            let b = (i / 3) % 2;
            i as f64 + 100.0 * b as f64
        });
        let y = group_norm_batched(&x, 2, &GroupNormParams::identity(2, 1, 1e-5)).unwrap();
        for b in 0..2 {
            let s: f64 = (0..2).flat_map(|c| (0..3).map(move |s| (c * 2 + b) * 3 + s)).map(|i| y.data()[i]).sum();
            assert!(s.abs() < 1e-9);
        }
    }
}
