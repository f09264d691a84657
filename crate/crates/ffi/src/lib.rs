//! C ABI for `drikit`.
//!
//! Objects are opaque heap handles created by `*_new`/constructor functions
//! and released with the matching `*_free`. Every fallible call returns a
//! [`DrikitStatus`]; on failure [`drikit_last_error`] describes the cause.
//! Output pointers are written only on success.

use drikit::config::DensityConfig;
use drikit::convolution::{convolve_power, PowerOptions};
use drikit::density::DensitySpec;
use drikit::error::Error;
use drikit::grid::{GridFunction, DEFAULT_MAX_POINTS};
use drikit::renewal::{renewal_density, simulate_renewal_window, RenewalSeries};
use drikit::riemann::{dri_verdict, GridSource};
use drikit::special::heavy_tail_constant;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Result codes shared by all functions.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DrikitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

/// Verdict of [`drikit_dri_verdict`], numerically equal to the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DrikitVerdict {
    Verified = 0,
    Inconclusive = 2,
    UpperSumDiverges = 3,
}

/// A probability density.
pub struct DrikitDensity(DensitySpec);

/// Samples of a function on a uniform grid.
pub struct DrikitGrid(GridFunction);

/// A truncated renewal density series.
pub struct DrikitRenewal(RenewalSeries);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DrikitStatus {
    match e {
        Error::InvalidParameter(_)
        | Error::SpacingMismatch(..)
        | Error::GridOverflow { .. }
        | Error::MeshTooFine { .. }
        | Error::NegativeSupport
        | Error::Config(_) => DrikitStatus::InvalidArgument,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => DrikitStatus::Io,
        _ => DrikitStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), DrikitStatus>>(f: F) -> DrikitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DrikitStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            DrikitStatus::Panic
        }
    }
}

fn lift<T>(r: drikit::error::Result<T>) -> Result<T, DrikitStatus> {
    r.map_err(|e| {
        set_error(&e.to_string());
        status_of(&e)
    })
}

fn null() -> DrikitStatus {
    set_error("null pointer argument");
    DrikitStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, DrikitStatus> {
    p.as_ref().ok_or_else(null)
}

unsafe fn write<T>(out: *mut T, v: T) -> Result<(), DrikitStatus> {
    if out.is_null() {
        return Err(null());
    }
    out.write(v);
    Ok(())
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, DrikitStatus> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        DrikitStatus::InvalidArgument
    })
}

/// Message for the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn drikit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn drikit_version() -> *const c_char {
    static V: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    V.as_ptr().cast()
}

/// Builds a density from a JSON descriptor such as
/// `{"name": "pareto", "params": {"alpha": 0.6}}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn drikit_density_from_json(json: *const c_char, out: *mut *mut DrikitDensity) -> DrikitStatus {
    guard(|| {
        let s = str_arg(json)?;
        let cfg: DensityConfig = serde_json::from_str(s).map_err(|e| {
            set_error(&e.to_string());
            DrikitStatus::InvalidArgument
        })?;
        let spec = lift(cfg.build())?;
        write(out, Box::into_raw(Box::new(DrikitDensity(spec))))
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn drikit_density_exponential(rate: f64, out: *mut *mut DrikitDensity) -> DrikitStatus {
    guard(|| {
        write(
            out,
            Box::into_raw(Box::new(DrikitDensity(lift(DensitySpec::exponential(rate))?))),
        )
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn drikit_density_uniform(a: f64, b: f64, out: *mut *mut DrikitDensity) -> DrikitStatus {
    guard(|| {
        write(
            out,
            Box::into_raw(Box::new(DrikitDensity(lift(DensitySpec::uniform(a, b))?))),
        )
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn drikit_density_pareto(alpha: f64, scale: f64, out: *mut *mut DrikitDensity) -> DrikitStatus {
    guard(|| {
        write(
            out,
            Box::into_raw(Box::new(DrikitDensity(lift(DensitySpec::pareto(alpha, scale))?))),
        )
    })
}

/// # Safety
/// `d` must come from a density constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn drikit_density_free(d: *mut DrikitDensity) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// `d` must be a live density handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn drikit_density_eval(d: *const DrikitDensity, x: f64, out: *mut f64) -> DrikitStatus {
    guard(|| write(out, deref(d)?.0.eval(x)))
}

/// # Safety
/// `d` must be a live density handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn drikit_density_cdf(d: *const DrikitDensity, x: f64, out: *mut f64) -> DrikitStatus {
    guard(|| write(out, deref(d)?.0.cdf(x)))
}

/// Cell averages of `d` on `[lo, hi]` with spacing `h`.
///
/// # Safety
/// `d` must be a live density handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn drikit_grid_discretize(
    d: *const DrikitDensity,
    lo: f64,
    hi: f64,
    h: f64,
    out: *mut *mut DrikitGrid,
) -> DrikitStatus {
    guard(|| {
        let g = lift(GridFunction::discretize(&deref(d)?.0, (lo, hi), h, DEFAULT_MAX_POINTS))?;
        write(out, Box::into_raw(Box::new(DrikitGrid(g))))
    })
}

/// A grid from `len` samples starting at `origin`.
///
/// # Safety
/// `values` must point to `len` readable doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn drikit_grid_new(
    origin: f64,
    spacing: f64,
    values: *const f64,
    len: usize,
    out: *mut *mut DrikitGrid,
) -> DrikitStatus {
    guard(|| {
        if values.is_null() {
            return Err(null());
        }
        let v = std::slice::from_raw_parts(values, len).to_vec();
        let g = lift(GridFunction::new(origin, spacing, v))?;
        write(out, Box::into_raw(Box::new(DrikitGrid(g))))
    })
}

/// # Safety
/// `g` must come from a grid constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn drikit_grid_free(g: *mut DrikitGrid) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn drikit_grid_len(g: *const DrikitGrid) -> usize {
    g.as_ref().map_or(0, |g| g.0.len())
}

/// Writes origin and spacing.
///
/// # Safety
/// `g` must be a live grid handle; the outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn drikit_grid_geometry(
    g: *const DrikitGrid,
    origin: *mut f64,
    spacing: *mut f64,
) -> DrikitStatus {
    guard(|| {
        let g = &deref(g)?.0;
        write(origin, g.origin())?;
        write(spacing, g.spacing())
    })
}

/// Copies up to `cap` samples into `buf` and stores the count in `written`.
///
/// # Safety
/// `buf` must have room for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn drikit_grid_values(
    g: *const DrikitGrid,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> DrikitStatus {
    guard(|| {
        let v = deref(g)?.0.values();
        if buf.is_null() {
            return Err(null());
        }
        let n = v.len().min(cap);
        std::ptr::copy_nonoverlapping(v.as_ptr(), buf, n);
        write(written, n)
    })
}

/// Linear interpolation of the samples; zero outside the window.
///
/// # Safety
/// `g` must be a live grid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn drikit_grid_eval(g: *const DrikitGrid, x: f64, out: *mut f64) -> DrikitStatus {
    guard(|| write(out, deref(g)?.0.eval(x)))
}

/// `k`-fold convolution power of `g`.
///
/// # Safety
/// `g` must be a live grid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn drikit_grid_convolution_power(
    g: *const DrikitGrid,
    k: usize,
    out: *mut *mut DrikitGrid,
) -> DrikitStatus {
    guard(|| {
        let p = lift(convolve_power(&deref(g)?.0, k, &PowerOptions::default()))?;
        write(out, Box::into_raw(Box::new(DrikitGrid(p))))
    })
}

/// d.R.i. verdict over a strictly decreasing mesh ladder.
///
/// # Safety
/// `ladder` must point to `n` doubles; `g` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn drikit_dri_verdict(
    g: *const DrikitGrid,
    ladder: *const f64,
    n: usize,
    tol: f64,
    out: *mut DrikitVerdict,
) -> DrikitStatus {
    guard(|| {
        if ladder.is_null() {
            return Err(null());
        }
        let ladder = std::slice::from_raw_parts(ladder, n);
        let r = lift(dri_verdict(&GridSource(&deref(g)?.0), ladder, tol))?;
        let v = match r.verdict.exit_code() {
            0 => DrikitVerdict::Verified,
            3 => DrikitVerdict::UpperSumDiverges,
            _ => DrikitVerdict::Inconclusive,
        };
        write(out, v)
    })
}

/// `u_N = Σ_{n≤N} f_n` on `[0, x_max]` with spacing `h`; the window shrinks
/// until the certified remainder is at most `tol`.
///
/// # Safety
/// `d` must be a live density handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn drikit_renewal_new(
    d: *const DrikitDensity,
    n_terms: usize,
    x_max: f64,
    h: f64,
    tol: f64,
    out: *mut *mut DrikitRenewal,
) -> DrikitStatus {
    guard(|| {
        let s = lift(renewal_density(&deref(d)?.0, n_terms, (0.0, x_max), h, tol))?;
        write(out, Box::into_raw(Box::new(DrikitRenewal(s))))
    })
}

/// # Safety
/// `r` must come from [`drikit_renewal_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn drikit_renewal_free(r: *mut DrikitRenewal) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Reported window end and remainder bound.
///
/// # Safety
/// `r` must be a live handle; the outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn drikit_renewal_info(
    r: *const DrikitRenewal,
    x_max: *mut f64,
    remainder: *mut f64,
) -> DrikitStatus {
    guard(|| {
        let s = &deref(r)?.0;
        write(x_max, s.window.1)?;
        write(remainder, s.remainder_bound)
    })
}

/// `u_N(x)`.
///
/// # Safety
/// `r` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn drikit_renewal_eval(r: *const DrikitRenewal, x: f64, out: *mut f64) -> DrikitStatus {
    guard(|| write(out, deref(r)?.0.grid.eval(x)))
}

/// Monte Carlo estimate and standard error of `U([x, x + delta))`.
///
/// # Safety
/// `d` must be a live density handle; the outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn drikit_simulate_window(
    d: *const DrikitDensity,
    x: f64,
    delta: f64,
    paths: u64,
    seed: u64,
    estimate: *mut f64,
    std_error: *mut f64,
) -> DrikitStatus {
    guard(|| {
        let w = lift(simulate_renewal_window(&deref(d)?.0, x, delta, paths, seed))?;
        write(estimate, w.estimate)?;
        write(std_error, w.std_error)
    })
}

/// `1 / (Γ(α) Γ(2 − α))`; NaN outside `(0, 1]`.
#[no_mangle]
pub extern "C" fn drikit_heavy_tail_constant(alpha: f64) -> f64 {
    if alpha > 0.0 && alpha <= 1.0 {
        heavy_tail_constant(alpha)
    } else {
        f64::NAN
    }
}
