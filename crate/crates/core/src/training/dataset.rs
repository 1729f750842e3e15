//! Training scenes: a clean target, its noisy mixture, and the video.

use std::path::Path;

use crate::data::{load_manifest, load_wav, mix_scene, read_tensor, synth_batch, MixOptions, Scene, SynthConfig};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainScene {
    pub id: String,
    pub target: Tensor<f32>,
    pub mixture: Tensor<f32>,
    /// `[F, 1, H, W]`.
    pub frames: Tensor<f32>,
}

impl TrainScene {
    /// Mixes a synthetic scene at its own SNR.
    pub fn from_scene(scene: &Scene, opts: &MixOptions) -> Result<Self> {
        Ok(Self {
            id: scene.id.clone(),
            mixture: mix_scene(&scene.target, &scene.interferer, scene.snr_db, opts)?,
            target: scene.target.clone(),
            frames: scene.frames.clone(),
        })
    }
}

/// The scenes `synth_batch(count, duration_s, seed, config)` would write,
/// mixed in memory.
pub fn synthetic_scenes(count: usize, duration_s: f64, seed: u64, config: &SynthConfig) -> Result<Vec<TrainScene>> {
    synth_batch(count, duration_s, seed, config)?
        .iter()
        .enumerate()
        .map(|(i, scene)| {
            let opts = MixOptions {
                sample_rate_hz: config.sample_rate_hz,
                seed: i as u64,
            };
            TrainScene::from_scene(scene, &opts)
        })
        .collect()
}

/// Loads and mixes every scene of a manifest. Relative paths are resolved
/// against the manifest's directory; scene `i` is mixed with seed `i`.
pub fn load_scenes(manifest: impl AsRef<Path>) -> Result<Vec<TrainScene>> {
    let manifest = manifest.as_ref();
    let base = manifest.parent().unwrap_or(Path::new(""));
    let entries = load_manifest(manifest)?;
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    entries
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let entry = entry.resolved(base);
            let (target, rate) = load_wav(&entry.target_path)?;
            let (interferer, interferer_rate) = load_wav(&entry.interferer_path)?;
            if rate != interferer_rate {
                return Err(Error::UnsupportedFormat {
                    field: "sample rate",
                    value: format!("scene {}: target {rate} Hz, interferer {interferer_rate} Hz", entry.id),
                });
            }
            let opts = MixOptions {
                sample_rate_hz: rate,
                seed: i as u64,
            };
            Ok(TrainScene {
                mixture: mix_scene(&target, &interferer, entry.snr_db, &opts)?,
                target,
                frames: read_tensor(&entry.frames_path)?,
                id: entry.id,
            })
        })
        .collect()
}
