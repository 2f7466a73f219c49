//! C ABI over the heartformer library.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free`. Every fallible call returns an [`HfStatus`]; on
//! failure, [`hf_last_error`] describes the most recent error on the calling
//! thread. Output pointers are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use heartformer::evalmetrics::{chamber_volume, ejection_fraction, sa_cd};
use heartformer::formats::{read_lpc_file, write_lpc_file};
use heartformer::geokernels::LabeledPointCloud;
use heartformer::heartformer::{load_model, HeartFormer, Mode};
use heartformer::Error;

/// Result codes.
#[repr(i32)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    NonFinite = 6,
    EmptyClass = 7,
    Degenerate = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// A labeled point cloud.
pub struct HfCloud(LabeledPointCloud);

/// A trained network ready for inference.
pub struct HfModel(HeartFormer);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> HfStatus {
    match e {
        Error::Shape { .. } => HfStatus::Shape,
        Error::NonFinite { .. } => HfStatus::NonFinite,
        Error::InvalidArgument(_) => HfStatus::InvalidArgument,
        Error::EmptyClass { .. } => HfStatus::EmptyClass,
        Error::Degenerate(_) => HfStatus::Degenerate,
        Error::Format { .. } => HfStatus::Format,
        Error::Io { .. } => HfStatus::Io,
    }
}

struct Fail(HfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(HfStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HfStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(HfStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn cloud_arg<'a>(c: *const HfCloud, what: &str) -> Result<&'a LabeledPointCloud, Fail> {
    c.as_ref().map(|c| &c.0).ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread; empty if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a cloud from `n` xyz triples (`3n` doubles, millimetres) and `n`
/// labels in `0..6`.
///
/// # Safety
/// `xyz` and `labels` must point to `3n` and `n` readable elements.
#[no_mangle]
pub unsafe extern "C" fn hf_cloud_new(xyz: *const f64, labels: *const u8, n: usize, out: *mut *mut HfCloud) -> HfStatus {
    guard(|| {
        if n > 0 && (xyz.is_null() || labels.is_null()) {
            return Err(null("xyz or labels"));
        }
        let (xyz, labels) = if n == 0 {
            (&[][..], &[][..])
        } else {
            (std::slice::from_raw_parts(xyz, 3 * n), std::slice::from_raw_parts(labels, n))
        };
        let pts = xyz.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        put(out, HfCloud(LabeledPointCloud::new(pts, labels.to_vec())?))
    })
}

/// Reads an LPC file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_cloud_read_lpc(path: *const c_char, out: *mut *mut HfCloud) -> HfStatus {
    guard(|| put(out, HfCloud(read_lpc_file(&path_arg(path)?)?)))
}

/// Writes an LPC file (coordinates stored as 32-bit floats).
///
/// # Safety
/// `cloud` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hf_cloud_write_lpc(cloud: *const HfCloud, path: *const c_char) -> HfStatus {
    guard(|| Ok(write_lpc_file(&path_arg(path)?, cloud_arg(cloud, "cloud")?)?))
}

/// Number of points; 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_cloud_len(cloud: *const HfCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

/// Copies coordinates (`3·len` doubles) and labels (`len` bytes) into caller
/// buffers of `capacity` points. Either buffer may be null to skip it.
///
/// # Safety
/// Non-null buffers must hold `3·capacity` doubles / `capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn hf_cloud_copy(cloud: *const HfCloud, xyz: *mut f64, labels: *mut u8, capacity: usize) -> HfStatus {
    guard(|| {
        let c = cloud_arg(cloud, "cloud")?;
        if capacity < c.len() {
            return Err(Fail(
                HfStatus::BufferTooSmall,
                format!("buffer holds {capacity} points, cloud has {}", c.len()),
            ));
        }
        if !xyz.is_null() {
            let dst = std::slice::from_raw_parts_mut(xyz, 3 * c.len());
            for (d, p) in dst.chunks_exact_mut(3).zip(c.points()) {
                d.copy_from_slice(p);
            }
        }
        if !labels.is_null() {
            std::slice::from_raw_parts_mut(labels, c.len()).copy_from_slice(c.labels());
        }
        Ok(())
    })
}

/// Releases a cloud; null is ignored.
///
/// # Safety
/// `cloud` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hf_cloud_free(cloud: *mut HfCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Loads a network from a training checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_model_load(path: *const c_char, out: *mut *mut HfModel) -> HfStatus {
    guard(|| put(out, HfModel(load_model(&path_arg(path)?)?)))
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hf_model_free(model: *mut HfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Completes a sparse cloud; `out` receives the fine-stage prediction.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_model_complete(model: *const HfModel, sparse: *const HfCloud, out: *mut *mut HfCloud) -> HfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let fine = m.0.forward(cloud_arg(sparse, "sparse")?, Mode::Eval)?.p_fine;
        put(out, HfCloud(fine))
    })
}

/// Semantic-aware Chamfer distance (mm) between two labeled clouds.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_sa_cd(pred: *const HfCloud, gt: *const HfCloud, out: *mut f64) -> HfStatus {
    guard(|| {
        let v = sa_cd(cloud_arg(pred, "pred")?, cloud_arg(gt, "gt")?)?.value;
        out.as_mut().map(|o| *o = v).ok_or_else(|| null("out"))
    })
}

/// Convex-hull volume (ml) of one labeled chamber.
///
/// # Safety
/// `cloud` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_chamber_volume(cloud: *const HfCloud, chamber: u8, out: *mut f64) -> HfStatus {
    guard(|| {
        let v = chamber_volume(cloud_arg(cloud, "cloud")?, chamber)?;
        out.as_mut().map(|o| *o = v).ok_or_else(|| null("out"))
    })
}

/// Ejection fraction in percent.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_ejection_fraction(edv_ml: f64, esv_ml: f64, out: *mut f64) -> HfStatus {
    guard(|| {
        let v = ejection_fraction(edv_ml, esv_ml)?;
        out.as_mut().map(|o| *o = v).ok_or_else(|| null("out"))
    })
}

