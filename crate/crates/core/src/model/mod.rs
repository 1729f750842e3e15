//! The audio-visual enhancement network: configuration, parameters, and the
//! forward and backward passes.

mod config;
mod network;
mod params;

pub use config::ModelConfig;
pub use network::{
    apply_mask, backward, chunk_count, decode_audio, encode_audio, enhance, forward, fuse, overlap_add, segment,
    separator_forward, visual_forward, Trace,
};
pub use params::{count_parameters, init_parameters, parameter_shapes, ModelParams};
