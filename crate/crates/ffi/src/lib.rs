//! C ABI for the grasp detector.
//!
//! Models are opaque handles created by `stn_grasp_model_*` constructors and
//! released with [`stn_grasp_model_free`]. Every fallible call returns a
//! [`StnGraspStatus`]; on failure a description is available from
//! [`stn_grasp_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use stn_grasp::data::{preprocess, ImageMeta, MultiModalImage, RawFrame, NUM_CHANNELS};
use stn_grasp::geometry::{is_success, jaccard, GraspRect};
use stn_grasp::pipeline::{GraspModel, PipelineConfig};
use stn_grasp::Error;

/// Result codes. The numeric values of the error kinds match the exit codes
/// of the command-line tool.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StnGraspStatus {
    Ok = 0,
    /// Null pointer, bad length or otherwise unusable argument.
    InvalidArgument = 1,
    /// Unreadable or malformed input data.
    InputError = 2,
    /// Non-finite values during computation.
    NumericError = 3,
    /// Checkpoint does not match the expected format or configuration.
    Mismatch = 4,
    /// Unexpected internal failure.
    InternalError = 5,
}

/// A grasp rectangle in pixels of the 400×400 preprocessed crop. `theta_deg`
/// lies in [-90, 90); `h` is the plate length and `w` the opening.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StnGraspRect {
    pub x: f64,
    pub y: f64,
    pub theta_deg: f64,
    pub w: f64,
    pub h: f64,
}

/// A detection: the winning rectangle and its classifier score.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StnGraspDetection {
    pub rect: StnGraspRect,
    pub score: f64,
}

/// Opaque detector handle.
pub struct StnGraspModel {
    model: GraspModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: StnGraspStatus, msg: impl Into<String>) -> StnGraspStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> StnGraspStatus {
    let status = match e.exit_code() {
        3 => StnGraspStatus::NumericError,
        4 => StnGraspStatus::Mismatch,
        _ => match e {
            Error::Contract(_) | Error::Shape(_) => StnGraspStatus::InvalidArgument,
            _ => StnGraspStatus::InputError,
        },
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> StnGraspStatus) -> StnGraspStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(StnGraspStatus::InternalError, "internal panic"),
    }
}

impl From<GraspRect> for StnGraspRect {
    fn from(r: GraspRect) -> Self {
        StnGraspRect {
            x: r.x,
            y: r.y,
            theta_deg: r.theta,
            w: r.w,
            h: r.h,
        }
    }
}

impl StnGraspRect {
    fn to_rect(self) -> Result<GraspRect, Error> {
        GraspRect::new(self.x, self.y, self.theta_deg, self.w, self.h)
    }
}

fn store_model(model: GraspModel, out: *mut *mut StnGraspModel) -> StnGraspStatus {
    let handle = Box::new(StnGraspModel { model });
    // SAFETY: checked non-null by the callers.
    unsafe { *out = Box::into_raw(handle) };
    StnGraspStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn stn_grasp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn stn_grasp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a model with the default architecture and freshly initialized
/// parameters. Output heads start at zero, so every candidate initially
/// decodes to the centred canonical rectangle.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn stn_grasp_model_new(seed: u64, out: *mut *mut StnGraspModel) -> StnGraspStatus {
    guard(|| {
        if out.is_null() {
            return fail(StnGraspStatus::InvalidArgument, "out is null");
        }
        match GraspModel::new(PipelineConfig::default(), seed) {
            Ok(m) => store_model(m, out),
            Err(e) => from_error(e),
        }
    })
}

/// Loads a checkpoint written by the command-line tool.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn stn_grasp_model_load(path: *const c_char, out: *mut *mut StnGraspModel) -> StnGraspStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(StnGraspStatus::InvalidArgument, "path or out is null");
        }
        // SAFETY: non-null and NUL-terminated per the contract.
        let Ok(path) = (unsafe { CStr::from_ptr(path) }).to_str() else {
            return fail(StnGraspStatus::InvalidArgument, "path is not valid UTF-8");
        };
        match GraspModel::load(Path::new(path), None) {
            Ok(m) => store_model(m, out),
            Err(e) => from_error(e),
        }
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stn_grasp_model_free(model: *mut StnGraspModel) {
    if !model.is_null() {
        // SAFETY: created by Box::into_raw in store_model.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Side length of the square input the model expects, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stn_grasp_model_image_size(model: *const StnGraspModel) -> usize {
    // SAFETY: NULL or live per the contract.
    unsafe { model.as_ref() }.map_or(0, |m| m.model.config.image_size)
}

/// Number of input channels (R, G, B, depth, nx, ny, nz).
#[no_mangle]
pub extern "C" fn stn_grasp_num_channels() -> usize {
    NUM_CHANNELS
}

fn detect_image(m: &StnGraspModel, image: &MultiModalImage, out: *mut StnGraspDetection) -> StnGraspStatus {
    match m.model.detect(image) {
        Ok((rect, trace)) => {
            let d = StnGraspDetection {
                rect: rect.into(),
                score: trace.winner_record().score,
            };
            // SAFETY: checked non-null by the callers.
            unsafe { *out = d };
            StnGraspStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Detects on a preprocessed image: `len` floats in channel-major order
/// `[channel][row][column]` with `height == width == image size`.
///
/// # Safety
/// `model` must be a live handle, `data` must point to `len` readable
/// floats and `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn stn_grasp_detect(
    model: *const StnGraspModel,
    data: *const f32,
    len: usize,
    height: usize,
    width: usize,
    out: *mut StnGraspDetection,
) -> StnGraspStatus {
    guard(|| {
        // SAFETY: NULL or live per the contract.
        let Some(m) = (unsafe { model.as_ref() }) else {
            return fail(StnGraspStatus::InvalidArgument, "model is null");
        };
        if data.is_null() || out.is_null() {
            return fail(StnGraspStatus::InvalidArgument, "data or out is null");
        }
        if height.checked_mul(width).and_then(|n| n.checked_mul(NUM_CHANNELS)) != Some(len) {
            return fail(
                StnGraspStatus::InvalidArgument,
                format!("len {len} does not equal {NUM_CHANNELS} x {height} x {width}"),
            );
        }
        // SAFETY: `len` readable floats per the contract.
        let values = unsafe { std::slice::from_raw_parts(data, len) }.to_vec();
        let meta = ImageMeta {
            source: "ffi".into(),
            crop_offset: [0, 0],
        };
        match MultiModalImage::new(height, width, values, meta) {
            Ok(img) => detect_image(m, &img, out),
            Err(e) => from_error(e),
        }
    })
}

/// Preprocesses a raw RGB-D frame (centre 400×400 crop, depth hole filling,
/// normals) and detects on it. `rgb` holds `3·width·height` interleaved
/// bytes, `depth_mm` holds `width·height` depths where NaN marks missing
/// values. Returned coordinates are in the crop.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn stn_grasp_detect_rgbd(
    model: *const StnGraspModel,
    rgb: *const u8,
    depth_mm: *const f32,
    width: usize,
    height: usize,
    out: *mut StnGraspDetection,
) -> StnGraspStatus {
    guard(|| {
        // SAFETY: NULL or live per the contract.
        let Some(m) = (unsafe { model.as_ref() }) else {
            return fail(StnGraspStatus::InvalidArgument, "model is null");
        };
        if rgb.is_null() || depth_mm.is_null() || out.is_null() {
            return fail(StnGraspStatus::InvalidArgument, "rgb, depth_mm or out is null");
        }
        let Some(n) = width.checked_mul(height) else {
            return fail(StnGraspStatus::InvalidArgument, "frame size overflows");
        };
        // SAFETY: lengths per the contract.
        let (rgb, depth) = unsafe {
            (
                std::slice::from_raw_parts(rgb, 3 * n).to_vec(),
                std::slice::from_raw_parts(depth_mm, n),
            )
        };
        let frame = RawFrame {
            width,
            height,
            rgb,
            depth: depth.iter().map(|&d| f64::from(d)).collect(),
        };
        match preprocess("ffi", &frame, &[], &[]) {
            Ok(sample) => detect_image(m, &sample.image, out),
            Err(e) => from_error(e),
        }
    })
}

/// Jaccard index (intersection over union) of two rectangles.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn stn_grasp_jaccard(a: StnGraspRect, b: StnGraspRect, out: *mut f64) -> StnGraspStatus {
    guard(|| {
        if out.is_null() {
            return fail(StnGraspStatus::InvalidArgument, "out is null");
        }
        match a.to_rect().and_then(|a| jaccard(&a, &b.to_rect()?)) {
            Ok(j) => {
                // SAFETY: non-null per the check above.
                unsafe { *out = j };
                StnGraspStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Success criterion: orientation difference below 30° and Jaccard index
/// above 0.25 against at least one of `count` ground truths.
///
/// # Safety
/// `truths` must point to `count` rectangles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn stn_grasp_is_success(
    pred: StnGraspRect,
    truths: *const StnGraspRect,
    count: usize,
    out: *mut bool,
) -> StnGraspStatus {
    guard(|| {
        if truths.is_null() || out.is_null() || count == 0 {
            return fail(StnGraspStatus::InvalidArgument, "truths or out is null, or count is 0");
        }
        // SAFETY: `count` rectangles per the contract.
        let truths = unsafe { std::slice::from_raw_parts(truths, count) };
        let result = pred.to_rect().and_then(|p| {
            let gts = truths.iter().map(|t| t.to_rect()).collect::<Result<Vec<_>, _>>()?;
            is_success(&p, &gts)
        });
        match result {
            Ok(m) => {
                // SAFETY: non-null per the check above.
                unsafe { *out = m.success };
                StnGraspStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
