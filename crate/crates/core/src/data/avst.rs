//! AVST raw tensor files.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 4 | magic `AVST` |
//! | 1 | version, `1` |
//! | 1 | dtype, `0` = f32 |
//! | 1 | number of dimensions `n` |
//! | 1 | reserved, `0` |
//! | 4·n | `u32` extents |
//! | 4·∏extents | row-major `f32` payload |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"AVST";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;

/// Header size in bytes for a tensor of rank `ndim`.
pub fn header_len(ndim: usize) -> usize {
    8 + 4 * ndim
}

pub fn write_tensor_to(w: &mut impl Write, t: &Tensor<f32>) -> std::io::Result<()> {
    let ndim = u8::try_from(t.rank()).map_err(|_| std::io::Error::other("tensor rank above 255"))?;
    let mut buf = Vec::with_capacity(header_len(t.rank()) + 4 * t.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&[VERSION, DTYPE_F32, ndim, 0]);
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| std::io::Error::other("extent above u32::MAX"))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::CorruptFile(format!("tensor file truncated in {what}")),
        _ => Error::CorruptFile(format!("reading {what}: {e}")),
    })
}

/// Reads one tensor block, leaving the reader just past its payload.
pub fn read_tensor_from(r: &mut impl Read) -> Result<Tensor<f32>> {
    let mut head = [0u8; 8];
    read_exact(r, &mut head, "header")?;
    if &head[0..4] != MAGIC {
        return Err(Error::CorruptFile(format!("bad tensor magic {:?}", &head[0..4])));
    }
    if head[4] != VERSION {
        return Err(Error::CorruptFile(format!("unsupported tensor version {}", head[4])));
    }
    if head[5] != DTYPE_F32 {
        return Err(Error::CorruptFile(format!("unsupported tensor dtype {}", head[5])));
    }
    let ndim = head[6] as usize;
    let mut ext = vec![0u8; 4 * ndim];
    read_exact(r, &mut ext, "extents")?;
    let dims: Vec<usize> = ext
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::CorruptFile(format!("tensor extents {dims:?} overflow")))?;
    let mut payload = Vec::new();
    r.take(len as u64)
        .read_to_end(&mut payload)
        .map_err(|e| Error::CorruptFile(format!("reading payload: {e}")))?;
    if payload.len() != len {
        return Err(Error::CorruptFile(format!(
            "tensor {dims:?} needs {len} payload bytes, found {}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(dims, data)
}

/// Decodes a buffer holding exactly one tensor.
pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut cursor = bytes;
    let t = read_tensor_from(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(Error::CorruptFile(format!("{} trailing bytes after tensor payload", cursor.len())));
    }
    Ok(t)
}

pub fn encode_tensor(t: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    write_tensor_to(&mut out, t).expect("writing to a Vec cannot fail for ranks up to 255");
    out
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes).map_err(|e| super::wav::with_path(e, path))
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    if t.rank() > u8::MAX as usize || t.dims().iter().any(|&d| d > u32::MAX as usize) {
        return Err(Error::shape(format!("dims {:?} do not fit the tensor file header", t.dims())));
    }
    fs::write(path, encode_tensor(t)).map_err(|e| Error::io(path, e))
}
