//! Scene construction and file formats: WAV audio, AVST tensors, manifests,
//! SNR mixing, and synthetic scenes.

mod avst;
mod manifest;
mod mix;
mod synth;
mod wav;

pub use avst::{
    decode_tensor, encode_tensor, header_len, read_tensor, read_tensor_from, write_tensor, write_tensor_to,
};
pub use manifest::{format_manifest, load_manifest, parse_manifest, ManifestEntry};
pub use mix::{fit_length, mix_components, mix_scene, MixOptions, Mixture, LOOP_CROSSFADE_S};
pub use synth::{frame_count, synth_batch, synth_scene, Scene, SynthConfig, SIGNAL_RMS};
pub use wav::{decode_wav, encode_wav, load_wav, save_wav};
