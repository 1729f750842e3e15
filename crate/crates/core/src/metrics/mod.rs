//! Objective quality measures: SI-SDR, STOI, and per-file reports.

mod report;
mod resample;
mod sisdr;
mod stoi;

pub use report::{evaluate_pair, evaluate_signals, Aggregate, MetricReport};
pub use resample::resample;
pub use sisdr::{si_sdr, SI_SDR_CAP_DB};
pub use stoi::{bands, stoi, Band};
