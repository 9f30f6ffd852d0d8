//! C ABI over the vadkit core.
//!
//! Every fallible call returns a [`VadStatus`]; on failure the message is
//! available from [`vadkit_last_error`] on the same thread. Handles are
//! opaque and must be released with their matching `_free` function.
//! Output buffers are caller-owned: pass the capacity, receive the length
//! written (or required, when the buffer is too small).

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vadkit::io::read_feature_stream;
use vadkit::metrics::{average_precision, roc_auc};
use vadkit::pseudo_label::{gaussian_splat_sigma, mine_pseudo_snippets};
use vadkit::sampler::select_frames;
use vadkit::scorer::{load_checkpoint, score, ScorerModel};
use vadkit::types::FeatureStream;
use vadkit::VadError;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VadStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Io = 4,
    Format = 5,
    Schema = 6,
    GlanceOutOfRange = 7,
    LengthMismatch = 8,
    SingleClass = 9,
    Client = 10,
    Panic = 11,
}

/// A validated feature stream.
pub struct VadStream(FeatureStream);

/// A trained scorer.
pub struct VadModel(ScorerModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

fn status_of(err: &VadError) -> VadStatus {
    match err {
        VadError::Io { .. } => VadStatus::Io,
        VadError::MagicMismatch { .. }
        | VadError::TruncatedPayload { .. }
        | VadError::NonFiniteValue { .. }
        | VadError::TrailingData { .. }
        | VadError::Checkpoint(_) => VadStatus::Format,
        VadError::SchemaViolation { .. } => VadStatus::Schema,
        VadError::GlanceOutOfRange { .. } | VadError::EmptyGlanceSet => VadStatus::GlanceOutOfRange,
        VadError::LengthMismatch { .. } | VadError::DimMismatch { .. } => VadStatus::LengthMismatch,
        VadError::SingleClass => VadStatus::SingleClass,
        VadError::ClientTimeout { .. }
        | VadError::ClientHttpError { .. }
        | VadError::ClientTransport(_)
        | VadError::EmptyCaption => VadStatus::Client,
        _ => VadStatus::InvalidArgument,
    }
}

struct Failure(VadStatus, String);

impl From<VadError> for Failure {
    fn from(e: VadError) -> Self {
        Failure(status_of(&e), format!("{}: {e}", e.code()))
    }
}

fn null(what: &str) -> Failure {
    Failure(VadStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VadStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            VadStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            VadStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Failure(VadStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(Path::new(s))
}

/// Copies `values` into a caller buffer, reporting the length through `out_len`.
unsafe fn emit<T: Copy>(values: &[T], out: *mut T, capacity: usize, out_len: *mut usize) -> Result<(), Failure> {
    if out_len.is_null() {
        return Err(null("out_len"));
    }
    *out_len = values.len();
    if values.len() > capacity {
        return Err(Failure(
            VadStatus::BufferTooSmall,
            format!("buffer holds {capacity}, need {}", values.len()),
        ));
    }
    if !values.is_empty() {
        if out.is_null() {
            return Err(null("output buffer"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vadkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn vadkit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn vadkit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn vadkit_stream_read(path: *const c_char, out: *mut *mut VadStream) -> VadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let stream = read_feature_stream(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(VadStream(stream)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vadkit_stream_free(stream: *mut VadStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Snippet count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn vadkit_stream_len(stream: *const VadStream) -> usize {
    stream.as_ref().map_or(0, |s| s.0.snippet_count)
}

/// Feature dimension, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn vadkit_stream_dim(stream: *const VadStream) -> usize {
    stream.as_ref().map_or(0, |s| s.0.feature_dim)
}

/// Owned copy of the video id; release with `vadkit_string_free`.
#[no_mangle]
pub unsafe extern "C" fn vadkit_stream_video_id(stream: *const VadStream) -> *mut c_char {
    match stream.as_ref() {
        Some(s) => CString::new(s.0.video_id.replace('\0', " "))
            .map(CString::into_raw)
            .unwrap_or(ptr::null_mut()),
        None => ptr::null_mut(),
    }
}

#[no_mangle]
pub unsafe extern "C" fn vadkit_model_load(path: *const c_char, out: *mut *mut VadModel) -> VadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let (model, _) = load_checkpoint(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(VadModel(model)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vadkit_model_free(model: *mut VadModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Per-snippet anomaly scores of `stream`.
#[no_mangle]
pub unsafe extern "C" fn vadkit_score(
    model: *const VadModel,
    stream: *const VadStream,
    out_scores: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> VadStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let stream = stream.as_ref().ok_or_else(|| null("stream"))?;
        let series = score(&model.0, &stream.0)?;
        emit(&series.scores, out_scores, capacity, out_len)
    })
}

/// Indices whose score is strictly above `theta`.
#[no_mangle]
pub unsafe extern "C" fn vadkit_select_frames(
    scores: *const f64,
    len: usize,
    theta: f64,
    out_indices: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> VadStatus {
    guard(|| {
        let scores = slice(scores, len, "scores")?;
        emit(&select_frames(scores, theta), out_indices, capacity, out_len)
    })
}

/// Mines pseudo-anomalous snippets; `out_mask[t]` is set to 1 for mined
/// snippets and 0 elsewhere (`len` entries). Glances must be strictly
/// increasing.
#[no_mangle]
pub unsafe extern "C" fn vadkit_mine_pseudo_snippets(
    scores: *const f64,
    len: usize,
    glances: *const usize,
    glance_count: usize,
    alpha: f64,
    out_mask: *mut u8,
) -> VadStatus {
    guard(|| {
        let scores = slice(scores, len, "scores")?;
        let glances = slice(glances, glance_count, "glances")?;
        if len > 0 && out_mask.is_null() {
            return Err(null("out_mask"));
        }
        let mined = mine_pseudo_snippets(scores, glances, alpha)?;
        for t in 0..len {
            *out_mask.add(t) = mined.contains(&t) as u8;
        }
        Ok(())
    })
}

/// Max-normalised sum of Gaussians of width `sigma` centred on every
/// snippet whose mask entry is non-zero; writes `len` values.
#[no_mangle]
pub unsafe extern "C" fn vadkit_gaussian_splat(mask: *const u8, len: usize, sigma: f64, out: *mut f64) -> VadStatus {
    guard(|| {
        let mask = slice(mask, len, "mask")?;
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Failure(VadStatus::InvalidArgument, format!("sigma {sigma} must be positive")));
        }
        if len > 0 && out.is_null() {
            return Err(null("out"));
        }
        let mined = (0..len).filter(|&t| mask[t] != 0).collect();
        let labels = gaussian_splat_sigma(&mined, len, sigma);
        ptr::copy_nonoverlapping(labels.values.as_ptr(), out, len);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vadkit_roc_auc(scores: *const f64, labels: *const u8, len: usize, out: *mut f64) -> VadStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = roc_auc(slice(scores, len, "scores")?, slice(labels, len, "labels")?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vadkit_average_precision(
    scores: *const f64,
    labels: *const u8,
    len: usize,
    out: *mut f64,
) -> VadStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = average_precision(slice(scores, len, "scores")?, slice(labels, len, "labels")?)?;
        Ok(())
    })
}
