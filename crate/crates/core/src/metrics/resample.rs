//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc.

use crate::error::{Error, Result};
use crate::numerics::Scalar;

/// Largest interpolation or decimation factor accepted after reducing the
/// rate ratio.
pub const MAX_FACTOR: usize = 1024;

/// Stopband attenuation of the anti-aliasing filter, in dB.
const ATTENUATION_DB: f64 = 80.0;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Low-pass prototype at the upsampled rate, split into `up` phases whose
/// taps each sum to one.
#[derive(Debug, Clone)]
struct Design {
    up: usize,
    down: usize,
    taps: Vec<f64>,
    delay: usize,
}

impl Design {
    fn new(from_hz: usize, to_hz: usize) -> Result<Self> {
        let g = gcd(from_hz, to_hz);
        let (up, down) = (to_hz / g, from_hz / g);
        if up > MAX_FACTOR || down > MAX_FACTOR {
            return Err(Error::config(format!(
                "resampling {from_hz} Hz -> {to_hz} Hz needs factors {up}/{down}, above {MAX_FACTOR}"
            )));
        }
        // Normalized to the upsampled Nyquist frequency.
        let nyquist = 1.0 / up.max(down) as f64;
        let cutoff = 0.9 * nyquist;
        let transition = 0.2 * nyquist;
        let beta = 0.1102 * (ATTENUATION_DB - 8.7);
        let order = ((ATTENUATION_DB - 7.95) / (2.285 * std::f64::consts::PI * transition)).ceil() as usize;
        let len = order | 1;
        let delay = len / 2;
        let norm = bessel_i0(beta);
        let mut taps: Vec<f64> = (0..len)
            .map(|n| {
                let m = n as f64 - delay as f64;
                let r = m / delay as f64;
                let window = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm;
                let arg = cutoff * m;
                let sinc = if m == 0.0 {
                    1.0
                } else {
                    (std::f64::consts::PI * arg).sin() / (std::f64::consts::PI * arg)
                };
                cutoff * sinc * window
            })
            .collect();
        for phase in 0..up {
            let sum: f64 = taps.iter().skip(phase).step_by(up).sum();
            for t in taps.iter_mut().skip(phase).step_by(up) {
                *t /= sum;
            }
        }
        Ok(Self { up, down, taps, delay })
    }

    fn output_len(&self, n: usize) -> usize {
        (n * self.up).div_ceil(self.down)
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (up, n) = (self.up as isize, x.len() as isize);
        (0..self.output_len(x.len()))
            .map(|m| {
                // Position on the upsampled grid, shifted by the filter delay.
                let centre = (m * self.down + self.delay) as isize;
                let first = centre.rem_euclid(up) as usize;
                let mut acc = 0.0;
                for k in (first..self.taps.len()).step_by(self.up) {
                    let i = (centre - k as isize) / up;
                    if i < 0 {
                        break;
                    }
                    if i < n {
                        acc += self.taps[k] * x[i as usize];
                    }
                }
                acc
            })
            .collect()
    }
}

/// Resamples `x` from `from_hz` to `to_hz`. The output has
/// `ceil(len * to / from)` samples and is aligned with the input (the
/// filter delay is compensated).
pub fn resample<T: Scalar>(x: &[T], from_hz: u32, to_hz: u32) -> Result<Vec<T>> {
    if from_hz == 0 || to_hz == 0 {
        return Err(Error::config("sample rates must be positive"));
    }
    if from_hz == to_hz {
        return Ok(x.to_vec());
    }
    let design = Design::new(from_hz as usize, to_hz as usize)?;
    let input: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    Ok(design.apply(&input).into_iter().map(T::of).collect())
}
