//! C ABI over the `mtof` crate: load a checkpoint, score RGB + ToF pairs,
//! plus a few stateless helpers.
//!
//! Every function returns an [`MtofStatus`]. On failure the message is kept
//! per thread and can be read with [`mtof_last_error`]. Panics never cross
//! the boundary; they surface as `MTOF_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use mtof::checkpoint::Checkpoint;
use mtof::data_model::{
    decode_tof_pixel, Label, PairSample, PlanarMap, RgbImage, SampleMeta, ToFMap, NO_DISPLAY,
};
use mtof::evaluation::{auroc, ScoredSample};
use mtof::spectrum::power_spectrum_1d;
use mtof::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtofStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Malformed checkpoint, image or manifest.
    Format = 4,
    /// A panic inside the library.
    Internal = 5,
}

/// A loaded detector. Opaque to C.
pub struct MtofDetector {
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> MtofStatus {
    match err {
        Error::Io { .. } => MtofStatus::Io,
        Error::Checkpoint(_) | Error::Manifest(_) | Error::Json(_) | Error::Image(_) => MtofStatus::Format,
        _ => MtofStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), (MtofStatus, String)>) -> MtofStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MtofStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            MtofStatus::Internal
        }
    }
}

fn lib<T>(r: mtof::Result<T>) -> Result<T, (MtofStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), (MtofStatus, String)> {
    if p.is_null() {
        Err((MtofStatus::NullPointer, format!("{name} is NULL")))
    } else {
        Ok(())
    }
}

fn invalid(msg: impl Into<String>) -> (MtofStatus, String) {
    (MtofStatus::InvalidArgument, msg.into())
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next `mtof_*` call on the same thread.
#[no_mangle]
pub extern "C" fn mtof_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a checkpoint written by `mtof train`. On success `*out` owns a
/// detector that must be released with [`mtof_detector_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtof_detector_load(path: *const c_char, out: *mut *mut MtofDetector) -> MtofStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| invalid("path is not UTF-8"))?;
        let checkpoint = lib(Checkpoint::load(Path::new(path)))?;
        *out = Box::into_raw(Box::new(MtofDetector { checkpoint }));
        Ok(())
    })
}

/// Releases a detector; NULL is ignored.
///
/// # Safety
/// `detector` must come from [`mtof_detector_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mtof_detector_free(detector: *mut MtofDetector) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}

/// Scores one pair. `rgb` holds `3 * width * height` values in `[0, 1]`,
/// planar (all red, then green, then blue), rows top to bottom; `tof` holds
/// `width * height` refined depth values in `[0, 1]`. The detector's stored
/// preprocessing (resize, center crop) is applied first. `is_display` may be
/// NULL.
///
/// # Safety
/// All non-NULL pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mtof_detector_predict(
    detector: *const MtofDetector,
    rgb: *const f64,
    tof: *const f64,
    width: usize,
    height: usize,
    p_display: *mut f64,
    is_display: *mut i32,
) -> MtofStatus {
    guard(|| {
        non_null(detector, "detector")?;
        non_null(rgb, "rgb")?;
        non_null(tof, "tof")?;
        non_null(p_display, "p_display")?;
        let hw = width
            .checked_mul(height)
            .filter(|&n| n > 0 && n.checked_mul(3).is_some())
            .ok_or_else(|| invalid(format!("bad size {width}x{height}")))?;
        let rgb = lib(RgbImage::from_parts(width, height, slice::from_raw_parts(rgb, 3 * hw).to_vec()))?;
        let tof = lib(ToFMap::from_parts(width, height, slice::from_raw_parts(tof, hw).to_vec()))?;
        let meta = SampleMeta {
            id: "ffi".into(),
            label: Label::Real,
            display_id: NO_DISPLAY.into(),
            display_type: NO_DISPLAY.into(),
            device_type: NO_DISPLAY.into(),
            object_category: "ffi".into(),
            split: None,
        };
        let sample = lib(PairSample::new(meta, rgb, tof))?;
        let prediction = lib((*detector).checkpoint.predict(&sample))?;
        *p_display = prediction.p_display;
        if !is_display.is_null() {
            *is_display = i32::from(prediction.label.is_display());
        }
        Ok(())
    })
}

/// Splits a 16-bit ToF word into depth (mm) and confidence.
///
/// # Safety
/// `depth_mm` and `confidence` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mtof_decode_tof_pixel(word: u16, depth_mm: *mut u16, confidence: *mut f64) -> MtofStatus {
    guard(|| {
        non_null(depth_mm, "depth_mm")?;
        non_null(confidence, "confidence")?;
        let (d, c) = decode_tof_pixel(word);
        *depth_mm = d;
        *confidence = c;
        Ok(())
    })
}

/// Radially averaged log power spectrum of a `width × height` map. Writes
/// at most `out_len` values to `out` and the full profile length to
/// `*written`; pass `out = NULL, out_len = 0` to query the length.
///
/// # Safety
/// `map` must hold `width * height` values and `out` (if non-NULL) `out_len`.
#[no_mangle]
pub unsafe extern "C" fn mtof_power_spectrum_1d(
    map: *const f64,
    width: usize,
    height: usize,
    out: *mut f64,
    out_len: usize,
    written: *mut usize,
) -> MtofStatus {
    guard(|| {
        non_null(map, "map")?;
        non_null(written, "written")?;
        let hw = width
            .checked_mul(height)
            .filter(|&n| n > 0)
            .ok_or_else(|| invalid(format!("bad size {width}x{height}")))?;
        let tof = lib(ToFMap::from_parts(width, height, slice::from_raw_parts(map, hw).to_vec()))?;
        let profile = lib(power_spectrum_1d(&tof))?.values;
        *written = profile.len();
        if !out.is_null() {
            let n = profile.len().min(out_len);
            slice::from_raw_parts_mut(out, n).copy_from_slice(&profile[..n]);
        } else if out_len > 0 {
            return Err((MtofStatus::NullPointer, "out is NULL but out_len > 0".into()));
        }
        Ok(())
    })
}

/// Area under the ROC curve of display scores; `labels[i]` is 1 for display
/// and 0 for real. Ties count one half.
///
/// # Safety
/// `scores` and `labels` must hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mtof_auroc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> MtofStatus {
    guard(|| {
        non_null(scores, "scores")?;
        non_null(labels, "labels")?;
        non_null(out, "out")?;
        let scores = slice::from_raw_parts(scores, n);
        let labels = slice::from_raw_parts(labels, n);
        let mut scored = Vec::with_capacity(n);
        for (i, (&s, &l)) in scores.iter().zip(labels).enumerate() {
            let label = match l {
                0 => Label::Real,
                1 => Label::Display,
                other => return Err(invalid(format!("label {other} at {i} is not 0 or 1"))),
            };
            let group = if label.is_display() { "display" } else { NO_DISPLAY };
            let meta = SampleMeta {
                id: i.to_string(),
                label,
                display_id: group.into(),
                display_type: group.into(),
                device_type: group.into(),
                object_category: String::new(),
                split: None,
            };
            scored.push(lib(ScoredSample::new(&meta, s))?);
        }
        *out = lib(auroc(&scored))?;
        Ok(())
    })
}
