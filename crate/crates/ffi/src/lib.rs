//! C interface to the enhancement model and metrics.
//!
//! Every function returns an `AvseStatus`. On failure a description is
//! kept per thread and can be read with `avse_last_error`. Models are
//! opaque handles created by `avse_model_load` or `avse_model_init` and
//! released with `avse_model_free`. Buffers are caller-owned and lengths
//! count elements, not bytes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use avse_core::data::{mix_scene, MixOptions};
use avse_core::metrics::{si_sdr, stoi};
use avse_core::model::{enhance, init_parameters, ModelConfig, ModelParams};
use avse_core::numerics::Tensor;
use avse_core::training::load_checkpoint;
use avse_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvseStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    CorruptData = 5,
    DegenerateSignal = 6,
    NonFinite = 7,
    Panic = 8,
}

/// Built-in model sizes for `avse_model_init`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvsePreset {
    Default = 0,
    Small = 1,
    Tiny = 2,
}

/// A model configuration with its parameters.
pub struct AvseModel {
    config: ModelConfig,
    params: ModelParams,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AvseStatus {
    match e {
        Error::Shape(_) | Error::InputTooShort { .. } | Error::EmptySequence => AvseStatus::Shape,
        Error::Config(_) => AvseStatus::InvalidArgument,
        Error::Io { .. } => AvseStatus::Io,
        Error::DegenerateReference | Error::DegenerateSignal(_) | Error::InsufficientSignal { .. } => {
            AvseStatus::DegenerateSignal
        }
        Error::NonFinite { .. } => AvseStatus::NonFinite,
        _ => AvseStatus::CorruptData,
    }
}

struct Failure(AvseStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AvseStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, records any failure, and converts panics into `AvseStatus::Panic`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AvseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AvseStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {message}"));
            AvseStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or point to `len` readable elements.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or point to `len` writable elements.
unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn c_path<'a>(ptr: *const c_char) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure(AvseStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next `avse_*` call on the same thread.
#[no_mangle]
pub extern "C" fn avse_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn avse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file into a new model handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn avse_model_load(path: *const c_char, out: *mut *mut AvseModel) -> AvseStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ckpt = load_checkpoint(c_path(path)?)?;
        let model = AvseModel {
            config: ckpt.config,
            params: ckpt.params,
        };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Creates a freshly initialized model of a built-in size.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn avse_model_init(preset: AvsePreset, seed: u64, out: *mut *mut AvseModel) -> AvseStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = match preset {
            AvsePreset::Default => ModelConfig::default(),
            AvsePreset::Small => ModelConfig::small(),
            AvsePreset::Tiny => ModelConfig::tiny(),
        };
        let params = init_parameters(&config, seed)?;
        *out = Box::into_raw(Box::new(AvseModel { config, params }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from `avse_model_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn avse_model_free(model: *mut AvseModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Total number of scalar parameters.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn avse_model_parameter_count(model: *const AvseModel, out: *mut usize) -> AvseStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = model.params.parameter_count();
        Ok(())
    })
}

/// Sample rate the model was configured for.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn avse_model_sample_rate(model: *const AvseModel, out: *mut u32) -> AvseStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = model.config.sample_rate_hz;
        Ok(())
    })
}

/// Enhances `samples` samples of noisy audio using `frame_count` grayscale
/// video frames of `height` x `width` (row-major, frame after frame).
/// Writes `samples` samples to `out`.
///
/// # Safety
/// `model` must be a live handle; `audio` and `out` must hold `samples`
/// floats and `frames` must hold `frame_count * height * width` floats.
#[no_mangle]
pub unsafe extern "C" fn avse_enhance(
    model: *const AvseModel,
    audio: *const f32,
    samples: usize,
    frames: *const f32,
    frame_count: usize,
    height: usize,
    width: usize,
    out: *mut f32,
) -> AvseStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let audio = slice(audio, samples, "audio")?;
        let frame_len = frame_count
            .checked_mul(height)
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| Failure(AvseStatus::InvalidArgument, "frame dimensions overflow".into()))?;
        let frames = slice(frames, frame_len, "frames")?;
        let out = slice_mut(out, samples, "out")?;
        let wave = Tensor::vector(audio.to_vec());
        let video = Tensor::new([frame_count, 1, height, width], frames.to_vec())?;
        let enhanced = enhance(&wave, &video, &model.params, &model.config)?;
        out.copy_from_slice(enhanced.data());
        Ok(())
    })
}

/// Scale-invariant SDR in dB, capped at +60.
///
/// # Safety
/// `reference` and `estimate` must hold `len` floats; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn avse_si_sdr(reference: *const f32, estimate: *const f32, len: usize, out: *mut f64) -> AvseStatus {
    guard(|| {
        let r = slice(reference, len, "reference")?;
        let e = slice(estimate, len, "estimate")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = si_sdr(r, e)?;
        Ok(())
    })
}

/// Short-time objective intelligibility of `estimate` against `reference`.
///
/// # Safety
/// `reference` and `estimate` must hold `len` floats; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn avse_stoi(
    reference: *const f32,
    estimate: *const f32,
    len: usize,
    sample_rate_hz: u32,
    out: *mut f64,
) -> AvseStatus {
    guard(|| {
        let r = slice(reference, len, "reference")?;
        let e = slice(estimate, len, "estimate")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = stoi(r, e, sample_rate_hz)?;
        Ok(())
    })
}

/// Mixes `target` with `interferer` (looped or cut to the target length)
/// at `snr_db`, writing `target_len` samples to `out`.
///
/// # Safety
/// `target` and `out` must hold `target_len` floats and `interferer`
/// `interferer_len` floats.
#[no_mangle]
pub unsafe extern "C" fn avse_mix(
    target: *const f32,
    target_len: usize,
    interferer: *const f32,
    interferer_len: usize,
    snr_db: f64,
    sample_rate_hz: u32,
    seed: u64,
    out: *mut f32,
) -> AvseStatus {
    guard(|| {
        let t = Tensor::vector(slice(target, target_len, "target")?.to_vec());
        let i = Tensor::vector(slice(interferer, interferer_len, "interferer")?.to_vec());
        let out = slice_mut(out, target_len, "out")?;
        let opts = MixOptions { sample_rate_hz, seed };
        out.copy_from_slice(mix_scene(&t, &i, snr_db, &opts)?.data());
        Ok(())
    })
}
