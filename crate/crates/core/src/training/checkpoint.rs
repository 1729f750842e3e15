//! AVCK checkpoint files.
//!
//! Layout (integers little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 4 | magic `AVCK` |
//! | 4 | `u32` version, `1` |
//! | 4 + n | `u32` length, then the model configuration as UTF-8 JSON |
//! | 4 | `u32` tensor count |
//! | per tensor | `u32` name length, name bytes, one AVST tensor block |
//! | 1 | `1` if optimizer state follows, else `0` |
//! | optional | `u64` step, four `f64` (lr, beta1, beta2, eps), then the first and second moment of each tensor as AVST blocks, in name order |
//!
//! Tensors are written in sorted name order, so loading and saving again
//! reproduces the file byte for byte.

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::data::{read_tensor_from, write_tensor_to};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::Tensor;

use super::adam::{AdamConfig, OptimizerState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AVCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub optimizer: Option<OptimizerState>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::config("checkpoint field exceeds u32"))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor<f32>) {
    write_tensor_to(out, t).expect("writing to a Vec cannot fail for model tensors");
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let config = serde_json::to_string(&self.config).expect("model configs always serialize");
        put_u32(&mut out, config.len())?;
        out.extend_from_slice(config.as_bytes());
        put_u32(&mut out, self.params.len())?;
        for (name, t) in self.params.iter() {
            put_u32(&mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            put_tensor(&mut out, t);
        }
        match &self.optimizer {
            None => out.push(0),
            Some(state) => {
                out.push(1);
                out.extend_from_slice(&state.step.to_le_bytes());
                let c = state.config;
                for v in [c.lr, c.beta1, c.beta2, c.eps] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                for name in self.params.names() {
                    put_tensor(&mut out, state.first_moment.get(name)?);
                    put_tensor(&mut out, state.second_moment.get(name)?);
                }
            }
        }
        Ok(out)
    }

    /// Parses a checkpoint and validates every tensor shape against the
    /// embedded configuration.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let magic: [u8; 4] = take(&mut r)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(corrupt(format!("bad magic {magic:?}")));
        }
        let version = u32::from_le_bytes(take(&mut r)?);
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let config_len = u32::from_le_bytes(take(&mut r)?) as usize;
        let config_text = take_slice(&mut r, config_len)?;
        let config: ModelConfig = std::str::from_utf8(config_text)
            .map_err(|e| corrupt(format!("config is not UTF-8: {e}")))
            .and_then(|s| serde_json::from_str(s).map_err(|e| corrupt(format!("config: {e}"))))?;
        config.validate().map_err(|e| corrupt(format!("config: {e}")))?;

        let count = u32::from_le_bytes(take(&mut r)?) as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let len = u32::from_le_bytes(take(&mut r)?) as usize;
            let name = std::str::from_utf8(take_slice(&mut r, len)?)
                .map_err(|e| corrupt(format!("tensor name is not UTF-8: {e}")))?
                .to_owned();
            let t = read_tensor_from(&mut r).map_err(|e| corrupt(format!("tensor `{name}`: {e}")))?;
            tensors.push((name, t));
        }
        let params = ModelParams::from_tensors(tensors).map_err(|e| corrupt(e.to_string()))?;
        params.check_shapes(&config).map_err(|e| corrupt(e.to_string()))?;

        let optimizer = match take::<1>(&mut r)?[0] {
            0 => None,
            1 => {
                let step = u64::from_le_bytes(take(&mut r)?);
                let mut f = || take::<8>(&mut r).map(f64::from_le_bytes);
                let adam = AdamConfig {
                    lr: f()?,
                    beta1: f()?,
                    beta2: f()?,
                    eps: f()?,
                };
                let mut state = OptimizerState::new(&config, adam);
                state.step = step;
                let names: Vec<String> = params.names().map(str::to_owned).collect();
                for name in &names {
                    for moments in [&mut state.first_moment, &mut state.second_moment] {
                        let t = read_tensor_from(&mut r).map_err(|e| corrupt(format!("moment of `{name}`: {e}")))?;
                        moments.set(name, t).map_err(|e| corrupt(format!("moment of `{name}`: {e}")))?;
                    }
                }
                Some(state)
            }
            flag => return Err(corrupt(format!("bad optimizer flag {flag}"))),
        };
        if !r.is_empty() {
            return Err(corrupt(format!("{} trailing bytes", r.len())));
        }
        Ok(Self {
            config,
            params,
            optimizer,
        })
    }
}

fn corrupt(message: String) -> Error {
    Error::CorruptCheckpoint(message)
}

fn take<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|_| corrupt("file truncated".into()))?;
    Ok(buf)
}

fn take_slice<'a>(r: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if r.len() < n {
        return Err(corrupt("file truncated".into()));
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| match e {
        Error::CorruptCheckpoint(m) => Error::CorruptCheckpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}
