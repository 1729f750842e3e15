//! End-to-end gradient check against central finite differences.

use rand::seq::index::sample;
use serde::Serialize;

use crate::error::Result;
use crate::model::{backward, enhance, forward, init_parameters, ModelConfig, ModelParams};
use crate::numerics::Tensor;
use crate::rng::Xorshift64Star;

use super::loss::{si_sdr_loss, si_sdr_loss_grad};

/// Minimum number of parameter entries compared per check.
pub const GRAD_CHECK_MIN_ENTRIES: usize = 200;
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Gradients smaller than this compare by absolute rather than relative error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;
const WAVE_LEN: usize = 96;
const FRAMES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_parameter: String,
    pub entries_checked: usize,
    /// Every named tensor that had at least one entry checked.
    pub tensors: Vec<String>,
}

/// Entries to check per tensor: an equal share of
/// [`GRAD_CHECK_MIN_ENTRIES`], with the share that small tensors cannot use
/// handed to larger ones.
fn entry_quotas(sizes: &[usize]) -> Vec<usize> {
    let share = GRAD_CHECK_MIN_ENTRIES.div_ceil(sizes.len().max(1));
    let mut quotas: Vec<usize> = sizes.iter().map(|&n| n.min(share)).collect();
    let mut total: usize = quotas.iter().sum();
    while total < GRAD_CHECK_MIN_ENTRIES && quotas.iter().zip(sizes).any(|(q, n)| q < n) {
        for (q, &n) in quotas.iter_mut().zip(sizes) {
            if *q < n && total < GRAD_CHECK_MIN_ENTRIES {
                *q += 1;
                total += 1;
            }
        }
    }
    quotas
}

/// Compares the analytic gradient of the SI-SDR loss of a random scene with
/// central differences in f64, on at least [`GRAD_CHECK_MIN_ENTRIES`]
/// parameter entries drawn from every tensor. Intended for the tiny
/// configuration; cost grows with model size.
pub fn grad_check(config: &ModelConfig, seed: u64) -> Result<GradCheckReport> {
    config.validate()?;
    let params: ModelParams<f64> = init_parameters(config, seed)?.cast();
    let mut rng = Xorshift64Star::derive(seed, 2);
    let wave = Tensor::from_fn([WAVE_LEN], |_| 0.5 * rng.normal());
    let clean = Tensor::from_fn([WAVE_LEN], |_| 0.5 * rng.normal());
    let [h, w] = config.frame_hw;
    let frames = Tensor::from_fn([FRAMES, 1, h, w], |_| rng.next_f64());

    let (out, trace) = forward(&wave, &frames, &params, config)?;
    let (_, d_out) = si_sdr_loss_grad(clean.data(), out.data())?;
    let grads = backward(&trace, &params, config, &Tensor::vector(d_out))?;
    let loss_with = |p: &ModelParams<f64>| -> Result<f64> { si_sdr_loss(clean.data(), enhance(&wave, &frames, p, config)?.data()) };

    let quotas = entry_quotas(&params.iter().map(|(_, t)| t.len()).collect::<Vec<_>>());
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_parameter: String::new(),
        entries_checked: 0,
        tensors: Vec::new(),
    };
    let mut probe = params.clone();
    for ((name, value), quota) in params.iter().zip(quotas) {
        let analytic = grads.get(name)?;
        for idx in sample(&mut rng, value.len(), quota) {
            let original = value.data()[idx];
            probe.get_mut(name)?.data_mut()[idx] = original + GRAD_CHECK_STEP;
            let up = loss_with(&probe)?;
            probe.get_mut(name)?.data_mut()[idx] = original - GRAD_CHECK_STEP;
            let down = loss_with(&probe)?;
            probe.get_mut(name)?.data_mut()[idx] = original;

            let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
            let a = analytic.data()[idx];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            if report.worst_parameter.is_empty() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_parameter = format!("{name}[{idx}]");
            }
            report.entries_checked += 1;
        }
        report.tensors.push(name.to_owned());
    }
    Ok(report)
}
