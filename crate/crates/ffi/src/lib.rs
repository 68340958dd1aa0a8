//! C interface to `isar-core`.
//!
//! Configs, sinograms and images cross the boundary as opaque handles that
//! this library allocates and frees. Every fallible call returns an
//! [`IsarStatus`]; after a failure, [`isar_last_error`] describes it for the
//! calling thread. Panics never unwind into C: they surface as
//! `ISAR_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use isar_core::config::ExperimentConfig;
use isar_core::io::{load_sinogram, read_raw_image, save_sinogram, write_atomic, write_raw_image};
use isar_core::pipeline;
use isar_core::recon::{ReconImage, TrainHooks};
use isar_core::signal::RangeAxis;
use isar_core::sim::Sinogram;
use isar_core::IsarError;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsarStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Divergence = 4,
    Io = 5,
    Format = 6,
    ShapeMismatch = 7,
    OutOfDomain = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Experiment configuration (all `key = value` settings).
pub struct IsarConfig(ExperimentConfig);

/// Range profiles over aperture angle.
pub struct IsarSinogram(Sinogram);

/// Reconstructed or reference image.
pub struct IsarImage(ReconImage);

/// Image quality against ground truth.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IsarMetrics {
    pub psnr_db: f64,
    pub mse: f64,
    pub ssim: f64,
    pub peak_count: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(IsarStatus, String);

impl From<IsarError> for Failure {
    fn from(e: IsarError) -> Self {
        let status = match &e {
            IsarError::InvalidArgument(_) => IsarStatus::InvalidArgument,
            IsarError::ShapeMismatch(_) => IsarStatus::ShapeMismatch,
            IsarError::OutOfDomain { .. } => IsarStatus::OutOfDomain,
            IsarError::Divergence(_) => IsarStatus::Divergence,
            IsarError::Config(_) => IsarStatus::Config,
            IsarError::Format(_) => IsarStatus::Format,
            IsarError::Io(_) => IsarStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> IsarStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return IsarStatus::Ok,
        Ok(Err(Failure(s, m))) => (s, m),
        Err(_) => (IsarStatus::Panic, "internal panic".to_string()),
    };
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
    status
}

fn null(what: &str) -> Failure {
    Failure(IsarStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(IsarStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Outcome {
    let slot = deref_mut(out, "output pointer")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Outcome {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < src.len() {
        return Err(Failure(IsarStatus::BufferTooSmall, format!("buffer holds {len} values, need {}", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Message for the last failed call on this thread, or null if none.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn isar_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn isar_status_name(status: IsarStatus) -> *const c_char {
    let s: &'static CStr = match status {
        IsarStatus::Ok => c"ok",
        IsarStatus::NullPointer => c"null pointer",
        IsarStatus::InvalidArgument => c"invalid argument",
        IsarStatus::Config => c"config error",
        IsarStatus::Divergence => c"numeric divergence",
        IsarStatus::Io => c"i/o error",
        IsarStatus::Format => c"malformed file",
        IsarStatus::ShapeMismatch => c"shape mismatch",
        IsarStatus::OutOfDomain => c"out of domain",
        IsarStatus::BufferTooSmall => c"buffer too small",
        IsarStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

// ---- config ----

/// Default configuration. Free with `isar_config_free`.
#[no_mangle]
pub extern "C" fn isar_config_new() -> *mut IsarConfig {
    Box::into_raw(Box::new(IsarConfig(ExperimentConfig::default())))
}

/// Load a `key = value` config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn isar_config_load(path: *const c_char, out: *mut *mut IsarConfig) -> IsarStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_file(Path::new(text(path, "path")?))?;
        put(out, IsarConfig(cfg))
    })
}

/// Set one key, as in a config file line.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn isar_config_set(cfg: *mut IsarConfig, key: *const c_char, value: *const c_char) -> IsarStatus {
    guard(|| {
        let cfg = deref_mut(cfg, "config")?;
        cfg.0.set(text(key, "key")?, text(value, "value")?)?;
        Ok(())
    })
}

/// Check that every derived setting is usable.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn isar_config_validate(cfg: *const IsarConfig) -> IsarStatus {
    guard(|| Ok(deref(cfg, "config")?.0.validate()?))
}

/// # Safety
/// `cfg` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn isar_config_free(cfg: *mut IsarConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

// ---- sinogram ----

/// Simulate the configured scene, including noise.
///
/// # Safety
/// `cfg` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn isar_simulate(cfg: *const IsarConfig, out: *mut *mut IsarSinogram) -> IsarStatus {
    guard(|| {
        let cfg = &deref(cfg, "config")?.0;
        cfg.validate()?;
        put(out, IsarSinogram(pipeline::simulate(cfg)?))
    })
}

/// Build a sinogram from caller data: `n_angles` angles in degrees and
/// `n_angles * n_bins` row-major samples on bins spanning `[r_min, r_max]`.
///
/// # Safety
/// `angles_deg` and `data` must point to that many readable doubles.
#[no_mangle]
pub unsafe extern "C" fn isar_sinogram_from_data(
    angles_deg: *const f64,
    n_angles: usize,
    data: *const f64,
    r_min: f64,
    r_max: f64,
    n_bins: usize,
    out: *mut *mut IsarSinogram,
) -> IsarStatus {
    guard(|| {
        if angles_deg.is_null() || data.is_null() {
            return Err(null("input array"));
        }
        let axis = RangeAxis::new(r_min, r_max, n_bins)?;
        let len = n_angles.checked_mul(n_bins).ok_or_else(|| Failure(IsarStatus::InvalidArgument, "sinogram too large".into()))?;
        let angles = std::slice::from_raw_parts(angles_deg, n_angles).to_vec();
        let values = std::slice::from_raw_parts(data, len).to_vec();
        put(out, IsarSinogram(Sinogram::new(values, angles, axis)?))
    })
}

/// Read a binary (`.isgm`) or CSV (`.csv`) sinogram.
///
/// # Safety
/// `path` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn isar_sinogram_load(path: *const c_char, out: *mut *mut IsarSinogram) -> IsarStatus {
    guard(|| put(out, IsarSinogram(load_sinogram(Path::new(text(path, "path")?))?)))
}

/// Write a sinogram; a `.csv` extension selects the text format.
///
/// # Safety
/// `s` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn isar_sinogram_save(s: *const IsarSinogram, path: *const c_char) -> IsarStatus {
    guard(|| Ok(save_sinogram(Path::new(text(path, "path")?), &deref(s, "sinogram")?.0)?))
}

/// # Safety
/// `s` must come from this library; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn isar_sinogram_shape(s: *const IsarSinogram, n_angles: *mut usize, n_bins: *mut usize) -> IsarStatus {
    guard(|| {
        let s = &deref(s, "sinogram")?.0;
        *deref_mut(n_angles, "n_angles")? = s.n_angles();
        *deref_mut(n_bins, "n_bins")? = s.n_bins();
        Ok(())
    })
}

/// Copy the row-major samples into `buf`, which holds `len` doubles.
///
/// # Safety
/// `s` must come from this library and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn isar_sinogram_copy_data(s: *const IsarSinogram, buf: *mut f64, len: usize) -> IsarStatus {
    guard(|| copy_out(&deref(s, "sinogram")?.0.data, buf, len))
}

/// # Safety
/// `s` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn isar_sinogram_free(s: *mut IsarSinogram) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

// ---- reconstruction ----

/// Backprojection image on the configured grid.
///
/// # Safety
/// `cfg` and `s` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn isar_backproject(cfg: *const IsarConfig, s: *const IsarSinogram, out: *mut *mut IsarImage) -> IsarStatus {
    guard(|| {
        let cfg = &deref(cfg, "config")?.0;
        put(out, IsarImage(pipeline::run_bp(cfg, &deref(s, "sinogram")?.0)?))
    })
}

/// Neural-field reconstruction with the configured training settings.
/// Runs to completion on the calling thread.
///
/// # Safety
/// `cfg` and `s` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn isar_reconstruct(cfg: *const IsarConfig, s: *const IsarSinogram, out: *mut *mut IsarImage) -> IsarStatus {
    guard(|| {
        let cfg = &deref(cfg, "config")?.0;
        cfg.validate()?;
        let result = pipeline::run_ats(cfg, &deref(s, "sinogram")?.0, None, TrainHooks::default())?;
        put(out, IsarImage(result.image))
    })
}

/// Ground-truth image of the configured scene.
///
/// # Safety
/// `cfg` must come from this library and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn isar_ground_truth(cfg: *const IsarConfig, out: *mut *mut IsarImage) -> IsarStatus {
    guard(|| put(out, IsarImage(pipeline::ground_truth(&deref(cfg, "config")?.0)?)))
}

/// Score `img` against the configured scene's ground truth.
///
/// # Safety
/// `cfg` and `img` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn isar_score(cfg: *const IsarConfig, img: *const IsarImage, out: *mut IsarMetrics) -> IsarStatus {
    guard(|| {
        let cfg = &deref(cfg, "config")?.0;
        let truth = pipeline::ground_truth(cfg)?;
        let r = pipeline::score(cfg, &deref(img, "image")?.0, &truth)?;
        *deref_mut(out, "metrics")? = IsarMetrics { psnr_db: r.psnr_db, mse: r.mse, ssim: r.ssim, peak_count: r.peak_count };
        Ok(())
    })
}

// ---- image ----

/// # Safety
/// `img` must come from this library; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn isar_image_shape(img: *const IsarImage, width: *mut usize, height: *mut usize) -> IsarStatus {
    guard(|| {
        let img = &deref(img, "image")?.0;
        *deref_mut(width, "width")? = img.width();
        *deref_mut(height, "height")? = img.height();
        Ok(())
    })
}

/// Copy pixels row-major, row 0 at the most negative y, into `buf`.
///
/// # Safety
/// `img` must come from this library and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn isar_image_copy_pixels(img: *const IsarImage, buf: *mut f64, len: usize) -> IsarStatus {
    guard(|| copy_out(&deref(img, "image")?.0.pixels, buf, len))
}

/// Write the raw float image format read by `isar metrics`.
///
/// # Safety
/// `img` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn isar_image_save(img: *const IsarImage, path: *const c_char) -> IsarStatus {
    guard(|| {
        let img = &deref(img, "image")?.0;
        Ok(write_atomic(Path::new(text(path, "path")?), |w| write_raw_image(w, img))?)
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn isar_image_load(path: *const c_char, out: *mut *mut IsarImage) -> IsarStatus {
    guard(|| {
        let f = std::fs::File::open(text(path, "path")?).map_err(IsarError::from)?;
        put(out, IsarImage(read_raw_image(std::io::BufReader::new(f))?))
    })
}

/// # Safety
/// `img` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn isar_image_free(img: *mut IsarImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}
