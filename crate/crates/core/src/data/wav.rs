//! 16-bit PCM mono WAV files.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const HEADER_LEN: usize = 44;

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes a RIFF/WAVE byte buffer into samples in `[-1, 1)` and the
/// sample rate.
pub fn decode_wav(bytes: &[u8]) -> Result<(Tensor<f32>, u32)> {
    if bytes.len() < 12 {
        return Err(Error::CorruptFile("WAV header truncated".into()));
    }
    match &bytes[0..4] {
        b"RIFF" => {}
        b"RIFX" => {
            return Err(Error::UnsupportedFormat {
                field: "byte order",
                value: "RIFX (big-endian)".into(),
            })
        }
        other => return Err(Error::CorruptFile(format!("not a RIFF file (magic {other:?})"))),
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::UnsupportedFormat {
            field: "form type",
            value: String::from_utf8_lossy(&bytes[8..12]).into_owned(),
        });
    }

    let mut rate = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = u32_at(bytes, at + 4) as usize;
        let body = at + 8;
        let end = body
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::CorruptFile(format!("chunk {:?} runs past end of file", String::from_utf8_lossy(id))))?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::CorruptFile("fmt chunk shorter than 16 bytes".into()));
                }
                let format = u16_at(bytes, body);
                let channels = u16_at(bytes, body + 2);
                let bits = u16_at(bytes, body + 14);
                if format != 1 {
                    return Err(Error::UnsupportedFormat {
                        field: "audio format",
                        value: format!("{format} (only 1 = PCM is supported)"),
                    });
                }
                if channels != 1 {
                    return Err(Error::UnsupportedFormat {
                        field: "channels",
                        value: channels.to_string(),
                    });
                }
                if bits != 16 {
                    return Err(Error::UnsupportedFormat {
                        field: "bits per sample",
                        value: bits.to_string(),
                    });
                }
                rate = Some(u32_at(bytes, body + 4));
            }
            b"data" => {
                let rate = rate.ok_or_else(|| Error::CorruptFile("data chunk before fmt chunk".into()))?;
                if !size.is_multiple_of(2) {
                    return Err(Error::CorruptFile("data chunk holds a partial sample".into()));
                }
                let samples = bytes[body..end]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
                    .collect();
                return Ok((Tensor::vector(samples), rate));
            }
            _ => {}
        }
        // Chunks are padded to an even length.
        at = end + (size & 1);
    }
    Err(Error::CorruptFile("no data chunk".into()))
}

/// Quantizes to 16 bits: scale by 32768, round half away from zero, and
/// saturate to the `i16` range (so inputs outside `[-1, 1)` clamp).
fn quantize(v: f32) -> i16 {
    (v as f64 * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Canonical 44-byte-header PCM16 mono encoding.
pub fn encode_wav(wave: &Tensor<f32>, sample_rate_hz: u32) -> Result<Vec<u8>> {
    if wave.rank() != 1 {
        return Err(Error::shape(format!("waveform must be one-dimensional, got {:?}", wave.dims())));
    }
    if !wave.is_finite() {
        return Err(Error::DegenerateSignal("waveform with non-finite samples"));
    }
    let data_len = u32::try_from(2 * wave.len()).map_err(|_| Error::config("waveform too long for a WAV file"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(2 * sample_rate_hz).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &v in wave.data() {
        out.extend_from_slice(&quantize(v).to_le_bytes());
    }
    Ok(out)
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<(Tensor<f32>, u32)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes).map_err(|e| with_path(e, path))
}

pub fn save_wav(path: impl AsRef<Path>, wave: &Tensor<f32>, sample_rate_hz: u32) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav(wave, sample_rate_hz)?).map_err(|e| Error::io(path, e))
}

/// Prefixes file-format errors with the offending path.
pub(crate) fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::CorruptFile(m) => Error::CorruptFile(format!("{}: {m}", path.display())),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let bytes = encode_wav(&Tensor::zeros([3]), 16000).unwrap();
        assert_eq!(bytes.len(), 44 + 6);
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(u32_at(&bytes, 4), 42);
        assert_eq!(u32_at(&bytes, 24), 16000);
        assert_eq!(u32_at(&bytes, 28), 32000);
        assert!(bytes[44..].iter().all(|&b| b == 0));
    }

    #[test]
    fn known_payload_scaling() {
        let mut bytes = encode_wav(&Tensor::zeros([4]), 8000).unwrap();
        for (i, v) in [0i16, 32767, -32768, 16384].iter().enumerate() {
            bytes[44 + 2 * i..46 + 2 * i].copy_from_slice(&v.to_le_bytes());
        }
        let (w, rate) = decode_wav(&bytes).unwrap();
        assert_eq!(rate, 8000);
        assert_eq!(w.data(), &[0.0, 32767.0 / 32768.0, -1.0, 0.5]);
    }

    #[test]
    fn clamping() {
        let bytes = encode_wav(&Tensor::vector(vec![1.5, -2.0, 1.0, -1.0]), 8000).unwrap();
        let stored: Vec<i16> = bytes[44..].chunks(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect();
        assert_eq!(stored, vec![32767, -32768, 32767, -32768]);
    }

    #[test]
    fn rejects_unsupported_and_corrupt() {
        let good = encode_wav(&Tensor::zeros([4]), 8000).unwrap();
        let mut rifx = good.clone();
        rifx[0..4].copy_from_slice(b"RIFX");
        assert!(matches!(decode_wav(&rifx), Err(Error::UnsupportedFormat { field: "byte order", .. })));

        let mut stereo = good.clone();
        stereo[22] = 2;
        assert!(matches!(decode_wav(&stereo), Err(Error::UnsupportedFormat { field: "channels", .. })));

        let mut float = good.clone();
        float[20] = 3;
        assert!(matches!(decode_wav(&float), Err(Error::UnsupportedFormat { field: "audio format", .. })));

        let mut bits = good.clone();
        bits[34] = 24;
        assert!(matches!(decode_wav(&bits), Err(Error::UnsupportedFormat { field: "bits per sample", .. })));

        assert!(matches!(decode_wav(&good[..good.len() - 1]), Err(Error::CorruptFile(_))));
        assert!(matches!(decode_wav(&good[..20]), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let good = encode_wav(&Tensor::vector(vec![0.25, -0.25]), 8000).unwrap();
        let mut bytes = good[..36].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]);
        bytes.extend_from_slice(&good[36..]);
        let (w, _) = decode_wav(&bytes).unwrap();
        assert_eq!(w.data(), &[0.25, -0.25]);
    }
}
