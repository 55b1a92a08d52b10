//! C ABI over the `ordeg` library.
//!
//! Every fallible function returns an [`OrdegStatus`]; on failure a
//! description is available from [`ordeg_last_error`] on the same thread.
//! Models are opaque handles created by [`ordeg_model_load`] and released
//! with [`ordeg_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use image::RgbImage;
use ordeg::cfpg::{rectify, CfpgError, CfpgParams, GuidanceBundle};
use ordeg::degrade::{DegradationType, DegradeError};
use ordeg::encoder::{Checkpoint, EncoderError};
use ordeg::infer::{predict, InferError, LevelPrediction, RegressionConfig, TopK};

/// Result codes. Values 2 to 5 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrdegStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Numeric = 4,
    InvalidCheckpoint = 5,
    ImageTooSmall = 6,
    Panic = 7,
}

/// A loaded checkpoint.
pub struct OrdegModel {
    ckpt: Checkpoint,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrdegRegressionConfig {
    /// Bins used for level interpolation; 0 means all bins.
    pub top_k: u32,
    pub conf_threshold: f64,
    pub tau_w: f64,
}

/// `level_norm` and `level_raw` are NaN when `present` is false.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrdegTypePrediction {
    pub present: bool,
    pub conf: f64,
    pub level_norm: f64,
    pub level_raw: f64,
}

/// Entries in the order Blur, Downsample, Noisy, JPEG.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrdegPrediction {
    pub types: [OrdegTypePrediction; 4],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrdegCfpgParams {
    pub eta_par: f64,
    pub eta_perp: f64,
    pub w: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Failure = (OrdegStatus, String);

fn fail<T>(status: OrdegStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err((status, msg.into()))
}

fn degrade_status(e: &DegradeError) -> OrdegStatus {
    match e {
        DegradeError::Io { .. } | DegradeError::Codec(_) => OrdegStatus::Io,
        DegradeError::ImageTooSmall { .. } => OrdegStatus::ImageTooSmall,
        _ => OrdegStatus::InvalidArgument,
    }
}

fn encoder_failure(e: EncoderError) -> Failure {
    let s = match &e {
        EncoderError::Io { .. } => OrdegStatus::Io,
        EncoderError::ImageTooSmall { .. } => OrdegStatus::ImageTooSmall,
        EncoderError::Image(d) => degrade_status(d),
        _ => OrdegStatus::InvalidCheckpoint,
    };
    (s, e.to_string())
}

fn infer_failure(e: InferError) -> Failure {
    match e {
        InferError::Encoder(x) => encoder_failure(x),
        InferError::Numerics(_) => (OrdegStatus::Numeric, e.to_string()),
        InferError::OrdSpace(_) => (OrdegStatus::InvalidCheckpoint, e.to_string()),
        InferError::Degrade(ref d) => (degrade_status(d), e.to_string()),
        _ => (OrdegStatus::InvalidArgument, e.to_string()),
    }
}

fn cfpg_failure(e: CfpgError) -> Failure {
    let s = match e {
        CfpgError::ZeroNorm | CfpgError::NonFinite | CfpgError::Numerics(_) => OrdegStatus::Numeric,
        _ => OrdegStatus::InvalidArgument,
    };
    (s, e.to_string())
}

/// Runs `f`, converting errors and panics into a status and the
/// thread's last-error message.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> OrdegStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OrdegStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            OrdegStatus::Panic
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ordeg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn ordeg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Name of degradation type `index` (0 to 3), or NULL.
#[no_mangle]
pub extern "C" fn ordeg_type_name(index: u32) -> *const c_char {
    match DegradationType::from_index(index as usize) {
        Some(DegradationType::Blur) => c"Blur".as_ptr(),
        Some(DegradationType::Downsample) => c"Downsample".as_ptr(),
        Some(DegradationType::Noisy) => c"Noisy".as_ptr(),
        Some(DegradationType::Jpeg) => c"JPEG".as_ptr(),
        None => ptr::null(),
    }
}

/// Loads a checkpoint file and stores a new handle in `*out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a writable
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn ordeg_model_load(
    path: *const c_char,
    out: *mut *mut OrdegModel,
) -> OrdegStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(OrdegStatus::NullPointer, "path and out must be non-null");
        }
        *out = ptr::null_mut();
        let path = match CStr::from_ptr(path).to_str() {
            Ok(s) => s,
            Err(_) => return fail(OrdegStatus::InvalidArgument, "path is not valid UTF-8"),
        };
        let ckpt = Checkpoint::load(Path::new(path)).map_err(encoder_failure)?;
        *out = Box::into_raw(Box::new(OrdegModel { ckpt }));
        Ok(())
    })
}

/// Releases a handle from [`ordeg_model_load`]. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ordeg_model_free(model: *mut OrdegModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Embedding dimension of the model, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ordeg_model_embedding_dim(model: *const OrdegModel) -> usize {
    model.as_ref().map_or(0, |m| m.ckpt.space.spec.d)
}

#[no_mangle]
pub extern "C" fn ordeg_regression_default() -> OrdegRegressionConfig {
    let r = RegressionConfig::default();
    OrdegRegressionConfig {
        top_k: match r.top_k {
            TopK::Count(k) => k as u32,
            TopK::All => 0,
        },
        conf_threshold: r.conf_threshold,
        tau_w: r.tau_w,
    }
}

fn to_prediction(p: &LevelPrediction) -> OrdegPrediction {
    let mut types = [OrdegTypePrediction {
        present: false,
        conf: 0.0,
        level_norm: f64::NAN,
        level_raw: f64::NAN,
    }; 4];
    for (t, tp) in &p.0 {
        types[t.index()] = OrdegTypePrediction {
            present: tp.present,
            conf: tp.conf,
            level_norm: tp.level_norm.unwrap_or(f64::NAN),
            level_raw: tp.level_raw.unwrap_or(f64::NAN),
        };
    }
    OrdegPrediction { types }
}

/// Predicts degradations for an 8-bit interleaved RGB image. `stride` is
/// the byte distance between rows (at least `3 * width`). `config` may be
/// NULL for defaults.
///
/// # Safety
/// `pixels` must point to `stride * height` readable bytes; `model` must be
/// a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ordeg_predict_rgb(
    model: *const OrdegModel,
    pixels: *const u8,
    width: u32,
    height: u32,
    stride: usize,
    config: *const OrdegRegressionConfig,
    out: *mut OrdegPrediction,
) -> OrdegStatus {
    guard(|| {
        if model.is_null() || pixels.is_null() || out.is_null() {
            return fail(
                OrdegStatus::NullPointer,
                "model, pixels and out must be non-null",
            );
        }
        let row = 3 * width as usize;
        if stride < row {
            return fail(
                OrdegStatus::InvalidArgument,
                format!("stride {stride} < 3 * width"),
            );
        }
        let cfg = match config.as_ref() {
            None => RegressionConfig::default(),
            Some(c) => RegressionConfig {
                top_k: if c.top_k == 0 {
                    TopK::All
                } else {
                    TopK::Count(c.top_k as usize)
                },
                conf_threshold: c.conf_threshold,
                tau_w: c.tau_w,
            },
        };
        let src = std::slice::from_raw_parts(pixels, stride * height as usize);
        let mut buf = Vec::with_capacity(row * height as usize);
        for y in 0..height as usize {
            buf.extend_from_slice(&src[y * stride..y * stride + row]);
        }
        let img =
            RgbImage::from_raw(width, height, buf).expect("buffer sized to width * height * 3");
        let p = predict(&(*model).ckpt, &img, &cfg).map_err(infer_failure)?;
        *out = to_prediction(&p);
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn ordeg_cfpg_default_params() -> OrdegCfpgParams {
    let p = CfpgParams::default();
    OrdegCfpgParams {
        eta_par: p.eta_par,
        eta_perp: p.eta_perp,
        w: p.w,
    }
}

/// Projection-guided combination of four noise estimates of length `len`,
/// written to `out`. `params` may be NULL for defaults. `out` may alias
/// any input.
///
/// # Safety
/// All five arrays must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ordeg_cfpg_rectify(
    eps_txt_pos: *const f64,
    eps_txt_neg: *const f64,
    eps_sem: *const f64,
    eps_deg: *const f64,
    len: usize,
    params: *const OrdegCfpgParams,
    out: *mut f64,
) -> OrdegStatus {
    guard(|| {
        let inputs = [eps_txt_pos, eps_txt_neg, eps_sem, eps_deg];
        if inputs.iter().any(|p| p.is_null()) || out.is_null() {
            return fail(OrdegStatus::NullPointer, "vectors and out must be non-null");
        }
        let [a, b, c, d] = inputs.map(|p| std::slice::from_raw_parts(p, len).to_vec());
        let bundle = GuidanceBundle::new(a, b, c, d).map_err(cfpg_failure)?;
        let p = match params.as_ref() {
            None => CfpgParams::default(),
            Some(p) => CfpgParams {
                eta_par: p.eta_par,
                eta_perp: p.eta_perp,
                w: p.w,
            },
        };
        let r = rectify(&bundle, &p).map_err(cfpg_failure)?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&r);
        Ok(())
    })
}
