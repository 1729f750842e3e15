//! Mixing a target with an interferer at a prescribed SNR.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::Xorshift64Star;

/// Length of the crossfade used when looping a short interferer.
pub const LOOP_CROSSFADE_S: f64 = 0.010;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixOptions {
    pub sample_rate_hz: u32,
    /// Picks the trim offset of an interferer longer than the target.
    pub seed: u64,
}

impl Default for MixOptions {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mixture {
    pub mixture: Tensor<f32>,
    /// The fitted interferer after gain, so that `mixture = target + interferer`.
    pub interferer: Tensor<f32>,
    pub gain: f64,
}

fn power(x: &[f32]) -> f64 {
    x.iter().map(|&v| v as f64 * v as f64).sum::<f64>() / x.len().max(1) as f64
}

/// Repeats `x` until it covers `len` samples, crossfading linearly over
/// `fade` samples at each seam.
fn loop_to(x: &[f32], len: usize, fade: usize) -> Vec<f32> {
    let fade = fade.min(x.len() / 2);
    let mut out = x.to_vec();
    while out.len() < len {
        let seam = out.len() - fade;
        for (j, &v) in x[..fade].iter().enumerate() {
            let w = (j + 1) as f32 / (fade + 1) as f32;
            out[seam + j] = out[seam + j] * (1.0 - w) + v * w;
        }
        out.extend_from_slice(&x[fade..]);
    }
    out.truncate(len);
    out
}

/// Brings `interferer` to `len` samples: looped with a crossfade when
/// shorter, cut at a seeded random offset when longer.
pub fn fit_length(interferer: &[f32], len: usize, opts: &MixOptions) -> Vec<f32> {
    use std::cmp::Ordering;
    match interferer.len().cmp(&len) {
        Ordering::Equal => interferer.to_vec(),
        Ordering::Less => {
            let fade = (LOOP_CROSSFADE_S * opts.sample_rate_hz as f64).round() as usize;
            loop_to(interferer, len, fade)
        }
        Ordering::Greater => {
            let offset = Xorshift64Star::new(opts.seed).random_range(0..=interferer.len() - len);
            interferer[offset..offset + len].to_vec()
        }
    }
}

/// Like [`mix_scene`], also returning the scaled interferer and its gain.
pub fn mix_components(target: &Tensor<f32>, interferer: &Tensor<f32>, snr_db: f64, opts: &MixOptions) -> Result<Mixture> {
    for (name, t) in [("target", target), ("interferer", interferer)] {
        if t.rank() != 1 {
            return Err(Error::shape(format!("{name} must be one-dimensional, got {:?}", t.dims())));
        }
    }
    if !snr_db.is_finite() {
        return Err(Error::config("snr_db must be finite"));
    }
    let p_target = power(target.data());
    if !(p_target > 0.0) {
        return Err(Error::DegenerateSignal("target"));
    }
    if !(power(interferer.data()) > 0.0) {
        return Err(Error::DegenerateSignal("interferer"));
    }
    let fitted = fit_length(interferer.data(), target.len(), opts);
    let p_fitted = power(&fitted);
    if !(p_fitted > 0.0) {
        return Err(Error::DegenerateSignal("interferer over the target span"));
    }
    let gain = (p_target / (p_fitted * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled: Vec<f32> = fitted.iter().map(|&v| (v as f64 * gain) as f32).collect();
    let mixture = target.data().iter().zip(&scaled).map(|(&t, &i)| t + i).collect();
    Ok(Mixture {
        mixture: Tensor::vector(mixture),
        interferer: Tensor::vector(scaled),
        gain,
    })
}

/// `target + g * interferer` with `g` chosen so that the target-to-scaled-
/// interferer power ratio equals `snr_db`. The interferer is first fitted to
/// the target length with [`fit_length`].
pub fn mix_scene(target: &Tensor<f32>, interferer: &Tensor<f32>, snr_db: f64, opts: &MixOptions) -> Result<Tensor<f32>> {
    Ok(mix_components(target, interferer, snr_db, opts)?.mixture)
}
