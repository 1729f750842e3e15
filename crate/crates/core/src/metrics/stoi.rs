//! Short-time objective intelligibility.
//!
//! Signals are resampled to 10 kHz, frames where the reference is more than
//! 40 dB below its loudest frame are dropped from both signals, and
//! one-third-octave envelopes of 30-frame segments are compared by clipped,
//! energy-normalized correlation.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::resample::resample;
use crate::error::{Error, Result};
use crate::numerics::Scalar;

pub const STOI_RATE_HZ: u32 = 10_000;
pub const FRAME_LEN: usize = 256;
pub const FRAME_HOP: usize = 128;
pub const FFT_LEN: usize = 512;
pub const BAND_COUNT: usize = 15;
pub const LOWEST_CENTRE_HZ: f64 = 150.0;
pub const SEGMENT_FRAMES: usize = 30;
pub const SILENCE_RANGE_DB: f64 = 40.0;
/// Lower bound of the signal-to-distortion ratio used for clipping, in dB.
pub const CLIP_SDR_DB: f64 = -15.0;

const EPS: f64 = f64::EPSILON;

/// One-third-octave band as a half-open range of FFT bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub centre_hz: f64,
    pub lo_bin: usize,
    pub hi_bin: usize,
}

/// The 15 analysis bands at 10 kHz with a 512-point FFT. Edges sit a sixth
/// of an octave either side of each centre and snap to the nearest bin.
pub fn bands() -> Vec<Band> {
    let bin_hz = STOI_RATE_HZ as f64 / FFT_LEN as f64;
    let nearest = |hz: f64| {
        // Ties go to the lower bin.
        let b = hz / bin_hz;
        let lo = b.floor();
        (if b - lo <= 0.5 { lo } else { lo + 1.0 }) as usize
    };
    (0..BAND_COUNT)
        .map(|k| {
            let k = k as f64;
            Band {
                centre_hz: LOWEST_CENTRE_HZ * 2f64.powf(k / 3.0),
                lo_bin: nearest(LOWEST_CENTRE_HZ * 2f64.powf((2.0 * k - 1.0) / 6.0)),
                hi_bin: nearest(LOWEST_CENTRE_HZ * 2f64.powf((2.0 * k + 1.0) / 6.0)),
            }
        })
        .collect()
}

/// Hann window of `n` points with the zero end points left out.
fn window(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / (n + 1) as f64).cos())
        .collect()
}

/// Frame offsets `0, 128, ...` strictly below `len - 256`. The last full
/// frame is left out when it ends exactly at the end of the signal, as in
/// the common reference implementation.
fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..).map(|i| i * FRAME_HOP).take_while(move |s| s + FRAME_LEN < len)
}

/// Drops frames whose reference energy is more than 40 dB below the loudest
/// reference frame, then overlap-adds the kept windowed frames of both
/// signals.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = window(FRAME_LEN);
    let frame = |s: &[f64], start: usize| -> Vec<f64> { w.iter().zip(&s[start..start + FRAME_LEN]).map(|(a, b)| a * b).collect() };
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energy_db: Vec<f64> = starts
        .iter()
        .map(|&s| 20.0 * (frame(x, s).iter().map(|v| v * v).sum::<f64>().sqrt() + EPS).log10())
        .collect();
    let loudest = energy_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energy_db)
        .filter(|(_, &e)| e > loudest - SILENCE_RANGE_DB)
        .map(|(&s, _)| s)
        .collect();
    let out_len = if kept.is_empty() { 0 } else { (kept.len() - 1) * FRAME_HOP + FRAME_LEN };
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (i, &s) in kept.iter().enumerate() {
        let at = i * FRAME_HOP;
        for (j, (a, b)) in frame(x, s).into_iter().zip(frame(y, s)).enumerate() {
            xs[at + j] += a;
            ys[at + j] += b;
        }
    }
    (xs, ys)
}

/// Band envelopes `[band][frame]` of a signal.
fn band_envelopes(x: &[f64], fft: &Arc<dyn Fft<f64>>, bands: &[Band]) -> Vec<Vec<f64>> {
    let w = window(FRAME_LEN);
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let mut env = vec![Vec::with_capacity(starts.len()); bands.len()];
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_LEN];
    for s in starts {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (j, (a, b)) in w.iter().zip(&x[s..s + FRAME_LEN]).enumerate() {
            buf[j].re = a * b;
        }
        fft.process(&mut buf);
        for (band, e) in bands.iter().zip(env.iter_mut()) {
            let power: f64 = buf[band.lo_bin..band.hi_bin].iter().map(|c| c.norm_sqr()).sum();
            e.push(power.sqrt());
        }
    }
    env
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Clipped, normalized correlation of one band over one segment.
fn segment_score(x: &[f64], y: &[f64]) -> f64 {
    let scale = norm(x) / (norm(y) + EPS);
    let clip = 1.0 + 10f64.powf(-CLIP_SDR_DB / 20.0);
    let y: Vec<f64> = x.iter().zip(y).map(|(a, b)| (b * scale).min(a * clip)).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(x), mean(&y));
    let xc: Vec<f64> = x.iter().map(|a| a - mx).collect();
    let yc: Vec<f64> = y.iter().map(|b| b - my).collect();
    let (nx, ny) = (norm(&xc) + EPS, norm(&yc) + EPS);
    xc.iter().zip(&yc).map(|(a, b)| (a / nx) * (b / ny)).sum()
}

/// Intelligibility score of `estimate` against `reference` sampled at
/// `rate_hz`; 1.0 for identical signals.
pub fn stoi<T: Scalar>(reference: &[T], estimate: &[T], rate_hz: u32) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::shape(format!(
            "reference has {} samples, estimate has {}",
            reference.len(),
            estimate.len()
        )));
    }
    let x: Vec<f64> = resample(reference, rate_hz, STOI_RATE_HZ)?.iter().map(|v| v.as_f64()).collect();
    let y: Vec<f64> = resample(estimate, rate_hz, STOI_RATE_HZ)?.iter().map(|v| v.as_f64()).collect();
    let (x, y) = remove_silent_frames(&x, &y);
    let frames = frame_starts(x.len()).count();
    if frames < SEGMENT_FRAMES {
        return Err(Error::InsufficientSignal {
            frames,
            needed: SEGMENT_FRAMES,
        });
    }

    let fft = FftPlanner::new().plan_fft_forward(FFT_LEN);
    let bands = bands();
    let ex = band_envelopes(&x, &fft, &bands);
    let ey = band_envelopes(&y, &fft, &bands);
    let mut total = 0.0;
    let mut count = 0usize;
    for end in SEGMENT_FRAMES..=frames {
        for (bx, by) in ex.iter().zip(&ey) {
            total += segment_score(&bx[end - SEGMENT_FRAMES..end], &by[end - SEGMENT_FRAMES..end]);
            count += 1;
        }
    }
    Ok(total / count as f64)
}
