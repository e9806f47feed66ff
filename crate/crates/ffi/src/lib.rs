//! C interface to `srblab`.
//!
//! Objects are opaque handles created by `*_new` functions and released with
//! the matching `*_free`. Every fallible call returns an [`SrbStatus`]; on a
//! nonzero status, [`srb_last_error`] yields a message for the calling
//! thread. Output arrays are caller-allocated: functions that fill them take
//! a capacity and report the number of elements required.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use srblab::criteria::{det_identity_check, nue_test, EnsembleSpec};
use srblab::flow::{advance, lookup, IntegratorConfig, SystemSpec};
use srblab::lpf::{cocycle_trace, CocycleTrace, TraceConfig};
use srblab::pliss::{hyperbolic_times, pliss_times, HyperbolicTimeConfig, PlissConfig};
use srblab::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownSystem = 3,
    Numerical = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// A vector field from the built-in registry.
pub struct SrbSystem {
    inner: SystemSpec,
}

/// Per-step expansion and recurrence data along one orbit.
pub struct SrbTrace {
    inner: CocycleTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn fail(status: SrbStatus, msg: impl Into<String>) -> SrbStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> SrbStatus {
    let status = match e.root() {
        Error::UnknownSystem { .. } | Error::Definition(_) => SrbStatus::UnknownSystem,
        Error::InvalidArgument(_) | Error::Precondition(_) | Error::TermAboveBound { .. } => {
            SrbStatus::InvalidArgument
        }
        _ => SrbStatus::Numerical,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> SrbStatus) -> SrbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == SrbStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(SrbStatus::Panic, "internal panic"),
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize) -> Option<&'a [f64]> {
    if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(p, n))
    }
}

/// Copies `src` into `out[..cap]` and stores `src.len()` in `len`.
unsafe fn emit<T: Copy>(src: &[T], out: *mut T, cap: usize, len: *mut usize) -> SrbStatus {
    if len.is_null() {
        return fail(SrbStatus::NullPointer, "length pointer is null");
    }
    *len = src.len();
    if src.len() > cap {
        return fail(
            SrbStatus::BufferTooSmall,
            format!("need {} elements, capacity {cap}", src.len()),
        );
    }
    if !src.is_empty() {
        if out.is_null() {
            return fail(SrbStatus::NullPointer, "output buffer is null");
        }
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    SrbStatus::Ok
}

/// Message for the most recent failure on this thread; empty after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn srb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn srb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Looks up a system spec such as `"lorenz"` or `"diag(1,0.5,-2)"`.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn srb_system_new(spec: *const c_char, out: *mut *mut SrbSystem) -> SrbStatus {
    guard(|| {
        if spec.is_null() || out.is_null() {
            return fail(SrbStatus::NullPointer, "spec or out is null");
        }
        let Ok(s) = CStr::from_ptr(spec).to_str() else {
            return fail(SrbStatus::InvalidArgument, "spec is not UTF-8");
        };
        match lookup(s) {
            Ok(sys) => {
                *out = Box::into_raw(Box::new(SrbSystem { inner: sys }));
                SrbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `sys` must come from [`srb_system_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn srb_system_free(sys: *mut SrbSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Phase-space dimension, or 0 for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn srb_system_dim(sys: *const SrbSystem) -> usize {
    sys.as_ref().map(|s| s.inner.dim()).unwrap_or(0)
}

unsafe fn point<'a>(x: *const f64, m: usize) -> Result<&'a [f64], SrbStatus> {
    slice(x, m).ok_or_else(|| fail(SrbStatus::NullPointer, "point is null"))
}

/// `out = phi_t(x)` with the default integrator; `x` and `out` hold
/// `srb_system_dim(sys)` values.
///
/// # Safety
/// Pointers must be valid for `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn srb_advance(sys: *const SrbSystem, x: *const f64, t: f64, out: *mut f64) -> SrbStatus {
    guard(|| {
        let Some(sys) = sys.as_ref() else {
            return fail(SrbStatus::NullPointer, "system is null");
        };
        let m = sys.inner.dim();
        let x = match point(x, m) {
            Ok(x) => x,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(SrbStatus::NullPointer, "out is null");
        }
        match advance(&sys.inner, x, t, &IntegratorConfig::default()) {
            Ok(y) => {
                ptr::copy_nonoverlapping(y.as_ptr(), out, m);
                SrbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Cocycle trace of `steps` time-one steps from `x` (default warm-up 20),
/// with recurrence measured at scale `delta`.
///
/// # Safety
/// `x` must hold `dim` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn srb_trace_new(
    sys: *const SrbSystem,
    x: *const f64,
    steps: usize,
    delta: f64,
    out: *mut *mut SrbTrace,
) -> SrbStatus {
    guard(|| {
        let Some(sys) = sys.as_ref() else {
            return fail(SrbStatus::NullPointer, "system is null");
        };
        if out.is_null() {
            return fail(SrbStatus::NullPointer, "out is null");
        }
        let x = match point(x, sys.inner.dim()) {
            Ok(x) => x,
            Err(s) => return s,
        };
        match cocycle_trace(&sys.inner, x, steps, delta, &TraceConfig::default()) {
            Ok(tr) => {
                *out = Box::into_raw(Box::new(SrbTrace { inner: tr }));
                SrbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `tr` must come from [`srb_trace_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn srb_trace_free(tr: *mut SrbTrace) {
    if !tr.is_null() {
        drop(Box::from_raw(tr));
    }
}

/// Number of steps, or 0 for a null handle.
///
/// # Safety
/// `tr` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn srb_trace_len(tr: *const SrbTrace) -> usize {
    tr.as_ref().map(|t| t.inner.n).unwrap_or(0)
}

/// Copies the per-step log inverse norms `a_i`.
///
/// # Safety
/// `out` must be valid for `cap` doubles; `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn srb_trace_log_inverse_norms(
    tr: *const SrbTrace,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> SrbStatus {
    guard(|| match tr.as_ref() {
        Some(t) => emit(&t.inner.a, out, cap, len),
        None => fail(SrbStatus::NullPointer, "trace is null"),
    })
}

/// Per-step residual of the determinant identity.
///
/// # Safety
/// `tr` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn srb_trace_identity_residual(tr: *const SrbTrace, out: *mut f64) -> SrbStatus {
    guard(|| {
        let (Some(t), false) = (tr.as_ref(), out.is_null()) else {
            return fail(SrbStatus::NullPointer, "trace or out is null");
        };
        match det_identity_check(&t.inner) {
            Ok(r) => {
                *out = r;
                SrbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Hyperbolic times of the trace (1-based indices).
///
/// # Safety
/// `out` must be valid for `cap` elements; `tr` and `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn srb_hyperbolic_times(
    tr: *const SrbTrace,
    c0: f64,
    delta0: f64,
    eps0: f64,
    lip_bound: f64,
    kappa_min: usize,
    out: *mut usize,
    cap: usize,
    len: *mut usize,
) -> SrbStatus {
    guard(|| {
        let Some(t) = tr.as_ref() else {
            return fail(SrbStatus::NullPointer, "trace is null");
        };
        let cfg = HyperbolicTimeConfig { c0, delta0, eps0, lip_bound, kappa_min };
        match hyperbolic_times(&t.inner, &cfg) {
            Ok(h) => emit(&h.indices, out, cap, len),
            Err(e) => from_error(e),
        }
    })
}

/// Pliss times of `a[0..n]` (1-based indices).
///
/// # Safety
/// `a` must be valid for `n` doubles, `out` for `cap` elements.
#[no_mangle]
pub unsafe extern "C" fn srb_pliss_times(
    a: *const f64,
    n: usize,
    a_max: f64,
    c1: f64,
    c2: f64,
    out: *mut usize,
    cap: usize,
    len: *mut usize,
) -> SrbStatus {
    guard(|| {
        let a = if n == 0 { Some(&[][..]) } else { slice(a, n) };
        let Some(a) = a else {
            return fail(SrbStatus::NullPointer, "sequence is null");
        };
        let r = PlissConfig::new(a_max, c1, c2).and_then(|cfg| pliss_times(a, &cfg));
        match r {
            Ok(r) => emit(&r.indices, out, cap, len),
            Err(e) => from_error(e),
        }
    })
}

/// Fraction of a seeded ensemble of `count` orbits that passes the
/// expansion test at rate `c0` over `n` time-one steps.
///
/// # Safety
/// `sys` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn srb_nue_pass_fraction(
    sys: *const SrbSystem,
    count: usize,
    seed: u64,
    c0: f64,
    n: usize,
    out: *mut f64,
) -> SrbStatus {
    guard(|| {
        let (Some(sys), false) = (sys.as_ref(), out.is_null()) else {
            return fail(SrbStatus::NullPointer, "system or out is null");
        };
        let ens = EnsembleSpec::new(&sys.inner.name, count, seed);
        match ens.validate().and_then(|_| nue_test(&sys.inner, &ens, c0, n, &TraceConfig::default())) {
            Ok(r) => {
                *out = r.pass_fraction;
                SrbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
