use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Conv1dSpec, Conv3dSpec};

/// Every architectural hyperparameter of the network.
///
/// The defaults give the full-size model (about 4.6M parameters); the
/// [`tiny`](Self::tiny) preset is the gradient-check configuration and
/// [`small`](Self::small) is a desk-scale configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub sample_rate_hz: u32,
    /// Encoder output channels `N`.
    pub enc_channels: usize,
    pub enc_kernel: usize,
    pub enc_stride: usize,
    /// Visual embedding width `D_v`.
    pub visual_embed: usize,
    pub frontend_channels: usize,
    pub frontend_kernel: [usize; 3],
    pub frontend_stride: [usize; 3],
    pub frontend_padding: [usize; 3],
    /// Output channels of each residual stage; every stage halves the
    /// spatial resolution.
    pub trunk_channels: Vec<usize>,
    pub trunk_blocks: usize,
    pub trunk_norm_groups: usize,
    pub fusion_channels: usize,
    pub sep_units: usize,
    /// LSTM hidden size per direction.
    pub sep_hidden: usize,
    pub sep_norm_groups: usize,
    pub chunk_len: usize,
    pub chunk_hop: usize,
    pub norm_eps: f64,
    /// Video frame height and width.
    pub frame_hw: [usize; 2],
    pub video_fps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16_000,
            enc_channels: 256,
            enc_kernel: 16,
            enc_stride: 8,
            visual_embed: 256,
            frontend_channels: 16,
            frontend_kernel: [5, 7, 7],
            frontend_stride: [1, 2, 2],
            frontend_padding: [2, 3, 3],
            trunk_channels: vec![16, 32, 64, 128],
            trunk_blocks: 2,
            trunk_norm_groups: 4,
            fusion_channels: 256,
            sep_units: 4,
            sep_hidden: 128,
            sep_norm_groups: 1,
            chunk_len: 100,
            chunk_hop: 50,
            norm_eps: 1e-5,
            frame_hw: [32, 32],
            video_fps: 25.0,
        }
    }
}

impl ModelConfig {
    /// Gradient-check configuration: `N = 8`, `H = 4`, one unit, chunk 4.
    pub fn tiny() -> Self {
        Self {
            enc_channels: 8,
            visual_embed: 4,
            frontend_channels: 2,
            trunk_channels: vec![4],
            trunk_blocks: 1,
            trunk_norm_groups: 2,
            fusion_channels: 8,
            sep_units: 1,
            sep_hidden: 4,
            chunk_len: 4,
            chunk_hop: 2,
            frame_hw: [8, 8],
            ..Self::default()
        }
    }

    /// Desk-scale configuration for quick experiments.
    pub fn small() -> Self {
        Self {
            enc_channels: 32,
            visual_embed: 8,
            frontend_channels: 4,
            trunk_channels: vec![8],
            trunk_blocks: 1,
            trunk_norm_groups: 2,
            fusion_channels: 32,
            sep_units: 1,
            sep_hidden: 16,
            chunk_len: 20,
            chunk_hop: 10,
            frame_hw: [16, 16],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sample_rate_hz", self.sample_rate_hz as usize),
            ("enc_channels", self.enc_channels),
            ("enc_kernel", self.enc_kernel),
            ("enc_stride", self.enc_stride),
            ("visual_embed", self.visual_embed),
            ("frontend_channels", self.frontend_channels),
            ("trunk_norm_groups", self.trunk_norm_groups),
            ("fusion_channels", self.fusion_channels),
            ("sep_hidden", self.sep_hidden),
            ("sep_norm_groups", self.sep_norm_groups),
            ("chunk_len", self.chunk_len),
            ("chunk_hop", self.chunk_hop),
            ("frame height", self.frame_hw[0]),
            ("frame width", self.frame_hw[1]),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.enc_stride > self.enc_kernel {
            return Err(Error::config("enc_stride must not exceed enc_kernel"));
        }
        if self.chunk_hop * 2 != self.chunk_len {
            return Err(Error::config("chunk_hop must be half of chunk_len"));
        }
        if self.fusion_channels != self.enc_channels {
            return Err(Error::config("fusion_channels must equal enc_channels"));
        }
        if !self.fusion_channels.is_multiple_of(self.sep_norm_groups) {
            return Err(Error::config("sep_norm_groups must divide fusion_channels"));
        }
        if !self.frontend_channels.is_multiple_of(self.trunk_norm_groups)
            || self.trunk_channels.iter().any(|&c| c == 0 || c % self.trunk_norm_groups != 0)
        {
            return Err(Error::config("trunk_norm_groups must divide every trunk width"));
        }
        if self.trunk_channels.is_empty() || self.trunk_blocks == 0 {
            return Err(Error::config("the visual trunk needs at least one stage and block"));
        }
        if self.frontend_kernel.iter().chain(&self.frontend_stride).any(|&e| e == 0) {
            return Err(Error::config("frontend kernel and stride extents must be positive"));
        }
        if self.frontend_kernel[0] != 2 * self.frontend_padding[0] + 1 || self.frontend_stride[0] != 1 {
            return Err(Error::config(
                "the frontend must preserve the frame count (odd temporal kernel, stride 1, half padding)",
            ));
        }
        if self.frame_hw[0] < self.frontend_kernel[1] || self.frame_hw[1] < self.frontend_kernel[2] {
            return Err(Error::config("frames are smaller than the frontend kernel"));
        }
        if !(self.norm_eps > 0.0) || !(self.video_fps > 0.0) {
            return Err(Error::config("norm_eps and video_fps must be positive"));
        }
        Ok(())
    }

    pub fn encoder_spec(&self) -> Conv1dSpec {
        Conv1dSpec::new(1, self.enc_channels, [self.enc_kernel], [self.enc_stride])
    }

    /// Transposed-convolution spec of the decoder (`N -> 1`).
    pub fn decoder_spec(&self) -> Conv1dSpec {
        Conv1dSpec::new(self.enc_channels, 1, [self.enc_kernel], [self.enc_stride])
    }

    pub fn frontend_spec(&self) -> Conv3dSpec {
        Conv3dSpec::new(1, self.frontend_channels, self.frontend_kernel, self.frontend_stride)
            .with_padding(self.frontend_padding)
    }

    pub fn fusion_spec(&self) -> Conv1dSpec {
        Conv1dSpec::new(self.enc_channels + self.visual_embed, self.fusion_channels, [1], [1])
    }

    pub fn mask_spec(&self) -> Conv1dSpec {
        Conv1dSpec::new(self.fusion_channels, self.enc_channels, [1], [1])
    }

    /// Number of encoder frames for a waveform of `samples` samples.
    pub fn encoded_frames(&self, samples: usize) -> Option<usize> {
        (samples >= self.enc_kernel).then(|| (samples - self.enc_kernel) / self.enc_stride + 1)
    }

    /// Decoder output length for `frames` encoder frames.
    pub fn decoded_samples(&self, frames: usize) -> usize {
        (frames.max(1) - 1) * self.enc_stride + self.enc_kernel
    }

    pub fn trunk_output_channels(&self) -> usize {
        *self.trunk_channels.last().unwrap_or(&self.frontend_channels)
    }
}
