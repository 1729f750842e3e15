//! The training loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::si_sdr;
use crate::model::{backward, forward, init_parameters, ModelConfig};
use crate::numerics::Tensor;
use crate::rng::Xorshift64Star;

use super::adam::{adam_step, clip_grad_norm, AdamConfig, OptimizerState};
use super::checkpoint::Checkpoint;
use super::dataset::TrainScene;
use super::loss::si_sdr_loss_grad;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub epochs: usize,
    /// Seeds both the parameter initialization and the scene order, which is
    /// shuffled once and kept for every epoch.
    pub seed: u64,
    pub adam: AdamConfig,
    /// Global gradient norm limit.
    pub clip_norm: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 48,
            seed: 0,
            adam: AdamConfig::default(),
            clip_norm: 5.0,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mean SI-SDR of the enhanced scenes, measured before each update.
    pub mean_sisdr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Trains from a fresh initialization, one scene per step, calling
/// `on_epoch` after every epoch.
pub fn train(
    config: &ModelConfig,
    scenes: &[TrainScene],
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if scenes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut params = init_parameters(config, opts.seed)?;
    let mut state = OptimizerState::new(config, opts.adam);
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    order.shuffle(&mut Xorshift64Star::derive(opts.seed, 1));
    let mut log = Vec::with_capacity(opts.epochs);
    let mut step = 0;

    for epoch in 1..=opts.epochs {
        let (mut loss_sum, mut sisdr_sum) = (0.0, 0.0);
        for &i in &order {
            step += 1;
            let scene = &scenes[i];
            let non_finite = |what: String| Error::NonFinite {
                step,
                message: format!("{what} on scene `{}` in epoch {epoch}", scene.id),
            };
            let (enhanced, trace) = forward(&scene.mixture, &scene.frames, &params, config)?;
            let (loss, d_enhanced) = si_sdr_loss_grad(scene.target.data(), enhanced.data())?;
            if !loss.is_finite() {
                return Err(non_finite(format!("loss is {loss}")));
            }
            let mut grads = backward(&trace, &params, config, &Tensor::vector(d_enhanced))?;
            let norm = clip_grad_norm(&mut grads, opts.clip_norm);
            if !norm.is_finite() {
                return Err(non_finite(format!("gradient norm is {norm}")));
            }
            adam_step(&mut params, &grads, &mut state)?;
            if !params.is_finite() {
                return Err(non_finite("parameters became non-finite".into()));
            }
            loss_sum += loss;
            sisdr_sum += si_sdr(scene.target.data(), enhanced.data())?;
        }
        let n = scenes.len() as f64;
        let entry = EpochLog {
            epoch,
            mean_loss: loss_sum / n,
            mean_sisdr: sisdr_sum / n,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: config.clone(),
            params,
            optimizer: Some(state),
        },
        log,
    })
}
