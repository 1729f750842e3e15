use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{si_sdr, stoi};
use crate::data::load_wav;
use crate::error::{Error, Result};

/// Scores of one enhanced file against its clean reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub id: String,
    pub sisdr_db: f64,
    pub stoi: f64,
    /// Filled in by an external PESQ tool, if any.
    pub pesq: Option<f64>,
}

/// Means over a batch of reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean_sisdr_db: f64,
    pub mean_stoi: f64,
    pub mean_pesq: Option<f64>,
}

impl Aggregate {
    pub fn of(reports: &[MetricReport]) -> Self {
        let n = reports.len().max(1) as f64;
        let pesq: Option<Vec<f64>> = reports.iter().map(|r| r.pesq).collect();
        Self {
            count: reports.len(),
            mean_sisdr_db: reports.iter().map(|r| r.sisdr_db).sum::<f64>() / n,
            mean_stoi: reports.iter().map(|r| r.stoi).sum::<f64>() / n,
            mean_pesq: pesq.filter(|p| !p.is_empty()).map(|p| p.iter().sum::<f64>() / n),
        }
    }
}

/// Scores two in-memory signals, trimming both to the shorter length.
pub fn evaluate_signals(id: &str, clean: &[f32], enhanced: &[f32], rate_hz: u32) -> Result<MetricReport> {
    let n = clean.len().min(enhanced.len());
    let (clean, enhanced) = (&clean[..n], &enhanced[..n]);
    Ok(MetricReport {
        id: id.to_string(),
        sisdr_db: si_sdr(clean, enhanced)?,
        stoi: stoi(clean, enhanced, rate_hz)?,
        pesq: None,
    })
}

/// Loads a clean and an enhanced WAV file and scores the pair. The id is
/// the enhanced file's stem.
pub fn evaluate_pair(clean_path: impl AsRef<Path>, enhanced_path: impl AsRef<Path>) -> Result<MetricReport> {
    let (clean_path, enhanced_path) = (clean_path.as_ref(), enhanced_path.as_ref());
    let (clean, rate) = load_wav(clean_path)?;
    let (enhanced, enhanced_rate) = load_wav(enhanced_path)?;
    if rate != enhanced_rate {
        return Err(Error::UnsupportedFormat {
            field: "sample rate",
            value: format!(
                "{} is {rate} Hz but {} is {enhanced_rate} Hz",
                clean_path.display(),
                enhanced_path.display()
            ),
        });
    }
    let id = enhanced_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    evaluate_signals(&id, clean.data(), enhanced.data(), rate)
}
