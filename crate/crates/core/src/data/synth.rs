//! Seeded synthetic scenes with a speech-like target and matching video.
//!
//! The target is a three-harmonic voiced tone under a slow amplitude
//! envelope (two sinusoids between 2 and 6 Hz). The interferer is low-passed
//! white noise. Each video frame is a fixed zero-mean texture modulated by
//! the envelope, so the mean pixel intensity of frame `f` is exactly the
//! envelope at `f / fps`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::Xorshift64Star;

/// RMS level of both the target and the interferer before mixing.
pub const SIGNAL_RMS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub sample_rate_hz: u32,
    pub fps: f64,
    pub frame_hw: [usize; 2],
    pub snr_range_db: [f64; 2],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16_000,
            fps: 25.0,
            frame_hw: [32, 32],
            snr_range_db: [-5.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub target: Tensor<f32>,
    pub interferer: Tensor<f32>,
    /// `[F, 1, H, W]`.
    pub frames: Tensor<f32>,
    pub snr_db: f64,
}

/// Slow amplitude envelope in `[0.1, 1]`.
#[derive(Debug, Clone, Copy)]
struct Envelope {
    freqs: [f64; 2],
    phases: [f64; 2],
}

impl Envelope {
    fn at(&self, t: f64) -> f64 {
        let a = (TAU * self.freqs[0] * t + self.phases[0]).sin();
        let b = (TAU * self.freqs[1] * t + self.phases[1]).sin();
        0.55 + 0.45 * (0.6 * a + 0.4 * b)
    }
}

fn normalize_rms(x: &mut [f64]) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v *= SIGNAL_RMS / rms);
    }
}

/// Number of video frames for `duration_s` seconds.
pub fn frame_count(duration_s: f64, fps: f64) -> usize {
    (duration_s * fps + 1e-9).floor() as usize
}

/// Generates one scene; identical arguments give bit-identical scenes.
pub fn synth_scene(seed: u64, duration_s: f64, config: &SynthConfig) -> Result<Scene> {
    if !(duration_s >= 0.5) || !duration_s.is_finite() {
        return Err(Error::config("scene duration must be at least 0.5 s"));
    }
    if config.sample_rate_hz == 0 || !(config.fps > 0.0) || config.frame_hw.contains(&0) {
        return Err(Error::config("sample rate, fps and frame size must be positive"));
    }
    let [lo, hi] = config.snr_range_db;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::config("snr range must be finite and ordered"));
    }
    let mut rng = Xorshift64Star::new(seed);
    let rate = config.sample_rate_hz as f64;
    let samples = (duration_s * rate).round() as usize;

    let envelope = Envelope {
        freqs: [rng.uniform(2.0, 6.0), rng.uniform(2.0, 6.0)],
        phases: [rng.uniform(0.0, TAU), rng.uniform(0.0, TAU)],
    };
    let f0 = rng.uniform(100.0, 220.0);
    let amps = [1.0, rng.uniform(0.3, 0.7), rng.uniform(0.1, 0.4)];
    let harmonic_phases = [rng.uniform(0.0, TAU), rng.uniform(0.0, TAU), rng.uniform(0.0, TAU)];
    let mut target: Vec<f64> = (0..samples)
        .map(|n| {
            let t = n as f64 / rate;
            let voiced: f64 = (0..3)
                .map(|h| amps[h] * (TAU * (h + 1) as f64 * f0 * t + harmonic_phases[h]).sin())
                .sum();
            envelope.at(t) * voiced
        })
        .collect();
    normalize_rms(&mut target);

    // One-pole low-pass of white noise.
    let pole = rng.uniform(0.5, 0.9);
    let mut state = 0.0;
    let mut interferer: Vec<f64> = (0..samples)
        .map(|_| {
            state = pole * state + (1.0 - pole) * rng.normal();
            state
        })
        .collect();
    normalize_rms(&mut interferer);

    let [h, w] = config.frame_hw;
    let mut texture: Vec<f64> = (0..h * w).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let mean = texture.iter().sum::<f64>() / texture.len() as f64;
    texture.iter_mut().for_each(|v| *v -= mean);
    let frames = frame_count(duration_s, config.fps);
    let frames = Tensor::from_fn([frames, 1, h, w], |i| {
        let e = envelope.at((i / (h * w)) as f64 / config.fps);
        (e * (1.0 + 0.5 * texture[i % (h * w)])) as f32
    });

    let snr_db = rng.uniform(lo, hi);
    let to_f32 = |v: Vec<f64>| Tensor::vector(v.into_iter().map(|x| x as f32).collect());
    Ok(Scene {
        id: format!("seed{seed}"),
        target: to_f32(target),
        interferer: to_f32(interferer),
        frames,
        snr_db,
    })
}

/// `count` scenes with ids `S00001`, `S00002`, ...; scene `i` is generated
/// from a seed derived from `(seed, i)`.
pub fn synth_batch(count: usize, duration_s: f64, seed: u64, config: &SynthConfig) -> Result<Vec<Scene>> {
    (0..count)
        .map(|i| {
            let scene_seed = rand_core::RngCore::next_u64(&mut Xorshift64Star::derive(seed, i as u64));
            let mut scene = synth_scene(scene_seed, duration_s, config)?;
            scene.id = format!("S{:05}", i + 1);
            Ok(scene)
        })
        .collect()
}
