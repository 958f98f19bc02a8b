//! C ABI for `spherepinn`.
//!
//! Objects cross the boundary as opaque handles created by `sp_*_new`,
//! `sp_*_load` or an operation, and released with the matching `sp_*_free`.
//! Every fallible call returns an [`SpStatus`]; on failure the message is
//! available through [`sp_last_error_message`] on the same thread.
//!
//! Matrices are row-major `f64` arrays; complex data is passed as separate
//! real and imaginary arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use num_complex::Complex64;
use spherepinn::evalkit::{nmse_time, TimeSignalSet};
use spherepinn::pinn::PinnModel;
use spherepinn::sma::{baseline_upsample, subset_select, ArrayGeometry, ComplexPressureField, Direction};
use spherepinn::specfun::{sph_harm, Enclosure};
use spherepinn::{io, pinn, Error};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    InvalidGeometry = 4,
    ShapeMismatch = 5,
    InvalidConfig = 6,
    TrainingAborted = 7,
    Io = 8,
    Format = 9,
    Panic = 10,
}

/// Capsule layout on a sphere.
pub struct SpGeometry(ArrayGeometry);

/// Complex pressures at the capsules of a geometry, for `K` wavenumbers.
pub struct SpField(ComplexPressureField);

/// Trained upsampling model.
pub struct SpModel(PinnModel);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(error: &Error) -> SpStatus {
    match error {
        Error::Domain(_) | Error::OrderTooHigh { .. } | Error::BesselNull { .. } | Error::EnclosureUnsupported(_) => {
            SpStatus::Domain
        }
        Error::InvalidGeometry(_) => SpStatus::InvalidGeometry,
        Error::ShapeMismatch(_) => SpStatus::ShapeMismatch,
        Error::InvalidConfig(_) => SpStatus::InvalidConfig,
        Error::NonFiniteLoss { .. } => SpStatus::TrainingAborted,
        Error::Format { .. } => SpStatus::Format,
        Error::Io(_) => SpStatus::Io,
    }
}

struct Failure(SpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SpStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SpStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SpStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (always
/// NUL-terminated when `len > 0`) and returns the full message length
/// excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sp_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// 32-capsule reference layout. `rigid` selects a rigid sphere.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_geometry_reference(radius: f64, rigid: bool, out: *mut *mut SpGeometry) -> SpStatus {
    guard(|| {
        let enclosure = if rigid { Enclosure::Rigid } else { Enclosure::Open };
        put(out, SpGeometry(ArrayGeometry::reference(radius, enclosure)?))
    })
}

/// Geometry from `theta`/`phi` (radians) with uniform quadrature weights.
///
/// # Safety
/// `theta` and `phi` must hold `count` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sp_geometry_new(
    radius: f64,
    rigid: bool,
    theta: *const f64,
    phi: *const f64,
    count: usize,
    out: *mut *mut SpGeometry,
) -> SpStatus {
    guard(|| {
        let t = slice_arg(theta, count, "theta")?;
        let p = slice_arg(phi, count, "phi")?;
        let dirs = t.iter().zip(p).map(|(t, p)| Direction::new(*t, *p)).collect();
        let enclosure = if rigid { Enclosure::Rigid } else { Enclosure::Open };
        put(out, SpGeometry(ArrayGeometry::with_uniform_weights(radius, dirs, enclosure)?))
    })
}

/// Reads a geometry text file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sp_geometry_load(path: *const c_char, out: *mut *mut SpGeometry) -> SpStatus {
    guard(|| put(out, SpGeometry(io::read_geometry(&path_arg(path)?)?)))
}

/// Number of capsules, or 0 for a null handle.
///
/// # Safety
/// `geometry` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_geometry_len(geometry: *const SpGeometry) -> usize {
    geometry.as_ref().map_or(0, |g| g.0.len())
}

/// Direction of capsule `index`.
///
/// # Safety
/// Handles and output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sp_geometry_direction(
    geometry: *const SpGeometry,
    index: usize,
    theta: *mut f64,
    phi: *mut f64,
) -> SpStatus {
    guard(|| {
        let g = borrow(geometry, "geometry")?;
        let d = g.0.capsules().get(index).ok_or_else(|| invalid(format!("capsule {index} out of range")))?;
        if theta.is_null() || phi.is_null() {
            return Err(null("output"));
        }
        *theta = d.theta;
        *phi = d.phi;
        Ok(())
    })
}

/// Maximin subset of `q` capsules. Writes the ascending indices into
/// `indices` (room for `q` values) and the subset geometry into `out`.
///
/// # Safety
/// Handles and output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sp_geometry_subset(
    geometry: *const SpGeometry,
    q: usize,
    indices: *mut usize,
    out: *mut *mut SpGeometry,
) -> SpStatus {
    guard(|| {
        let g = borrow(geometry, "geometry")?;
        let (subset, idx) = subset_select(&g.0, q)?;
        if indices.is_null() {
            return Err(null("indices"));
        }
        ptr::copy_nonoverlapping(idx.as_ptr(), indices, idx.len());
        put(out, SpGeometry(subset))
    })
}

/// # Safety
/// `geometry` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sp_geometry_free(geometry: *mut SpGeometry) {
    if !geometry.is_null() {
        drop(Box::from_raw(geometry));
    }
}

/// Field from row-major `Q x K` real and imaginary parts.
///
/// # Safety
/// `wavenumbers` must hold `k` values, `re` and `im` `Q * k` values.
#[no_mangle]
pub unsafe extern "C" fn sp_field_new(
    geometry: *const SpGeometry,
    wavenumbers: *const f64,
    k: usize,
    re: *const f64,
    im: *const f64,
    out: *mut *mut SpField,
) -> SpStatus {
    guard(|| {
        let g = borrow(geometry, "geometry")?;
        let n = g.0.len() * k;
        let ks = slice_arg(wavenumbers, k, "wavenumbers")?;
        let (re, im) = (slice_arg(re, n, "re")?, slice_arg(im, n, "im")?);
        let p = re.iter().zip(im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        put(out, SpField(ComplexPressureField::new(g.0.clone(), ks.to_vec(), p)?))
    })
}

/// Reads a field file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sp_field_load(path: *const c_char, out: *mut *mut SpField) -> SpStatus {
    guard(|| put(out, SpField(io::read_field(&path_arg(path)?)?)))
}

/// Writes a field file.
///
/// # Safety
/// `field` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sp_field_save(field: *const SpField, path: *const c_char) -> SpStatus {
    guard(|| Ok(io::write_field(&path_arg(path)?, &borrow(field, "field")?.0)?))
}

/// Capsule and wavenumber counts.
///
/// # Safety
/// `field` must be a live handle; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn sp_field_dims(field: *const SpField, capsules: *mut usize, bins: *mut usize) -> SpStatus {
    guard(|| {
        let f = borrow(field, "field")?;
        if capsules.is_null() || bins.is_null() {
            return Err(null("output"));
        }
        *capsules = f.0.capsule_count();
        *bins = f.0.bin_count();
        Ok(())
    })
}

/// Copies the `Q x K` pressures into `re` and `im`.
///
/// # Safety
/// `re` and `im` must each have room for `Q * K` values.
#[no_mangle]
pub unsafe extern "C" fn sp_field_values(field: *const SpField, re: *mut f64, im: *mut f64) -> SpStatus {
    guard(|| {
        let f = borrow(field, "field")?;
        let n = f.0.pressures().len();
        let (re, im) = (slice_out(re, n, "re")?, slice_out(im, n, "im")?);
        for (i, p) in f.0.pressures().iter().enumerate() {
            re[i] = p.re;
            im[i] = p.im;
        }
        Ok(())
    })
}

/// # Safety
/// `field` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sp_field_free(field: *mut SpField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Order-limited spherical-harmonics interpolation of `field` at the
/// capsules of `targets`.
///
/// # Safety
/// Handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sp_baseline_upsample(
    field: *const SpField,
    targets: *const SpGeometry,
    out: *mut *mut SpField,
) -> SpStatus {
    guard(|| {
        let f = borrow(field, "field")?;
        let t = borrow(targets, "targets")?;
        let up = baseline_upsample(&f.0, t.0.capsules())?;
        let field = ComplexPressureField::new(t.0.clone(), up.wavenumbers().to_vec(), up.pressures().to_vec())?;
        put(out, SpField(field))
    })
}

/// Reads a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sp_model_load(path: *const c_char, out: *mut *mut SpModel) -> SpStatus {
    guard(|| put(out, SpModel(io::read_model(&path_arg(path)?)?.0)))
}

/// Number of wavenumbers the model predicts, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_model_bin_count(model: *const SpModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.bin_count())
}

/// Model prediction at the capsules of `targets`.
///
/// # Safety
/// Handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sp_model_predict(
    model: *const SpModel,
    targets: *const SpGeometry,
    out: *mut *mut SpField,
) -> SpStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let t = borrow(targets, "targets")?;
        put(out, SpField(pinn::predict(&m.0, &t.0)?))
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sp_model_free(model: *mut SpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Time-domain NMSE in dB between channel-major `channels x length` arrays.
///
/// # Safety
/// `estimate` and `reference` must hold `channels * length` values.
#[no_mangle]
pub unsafe extern "C" fn sp_nmse_time(
    estimate: *const f64,
    reference: *const f64,
    channels: usize,
    length: usize,
    out_db: *mut f64,
) -> SpStatus {
    guard(|| {
        let n = channels * length;
        let split = |s: &[f64]| -> Vec<Vec<f64>> {
            if length == 0 {
                vec![Vec::new(); channels]
            } else {
                s.chunks(length).map(<[f64]>::to_vec).collect()
            }
        };
        let est = TimeSignalSet::new(1.0, split(slice_arg(estimate, n, "estimate")?))?;
        let reference = TimeSignalSet::new(1.0, split(slice_arg(reference, n, "reference")?))?;
        if out_db.is_null() {
            return Err(null("out_db"));
        }
        *out_db = nmse_time(&est, &reference)?.overall_db;
        Ok(())
    })
}

/// Complex spherical harmonic `Y_n^m(theta, phi)`.
///
/// # Safety
/// `re` and `im` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sp_sph_harm(n: usize, m: i64, theta: f64, phi: f64, re: *mut f64, im: *mut f64) -> SpStatus {
    guard(|| {
        if re.is_null() || im.is_null() {
            return Err(null("output"));
        }
        let y = sph_harm(n, m, theta, phi)?;
        *re = y.re;
        *im = y.im;
        Ok(())
    })
}
