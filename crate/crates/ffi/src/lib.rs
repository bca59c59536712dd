//! C ABI over `merton-core`.
//!
//! Objects cross the boundary as opaque handles created by `merton_*_new`-style
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`MertonStatus`]; on failure a description is available from
//! [`merton_last_error`] until the next call on the same thread.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use merton_core::config::{self, RunConfig};
use merton_core::experiments;
use merton_core::qsolver::{ConvergenceStatus, RateField};
use merton_core::valuepde::{self, StrategyField, ValueKind};
use merton_core::{io, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MertonStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidString = 2,
    Config = 3,
    MissingInput = 4,
    Numerical = 5,
    Io = 6,
    InvalidArgument = 7,
    Panic = 8,
}

/// Outcome of the rate-field fixed point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MertonConvergence {
    Converged = 0,
    NoiseFloor = 1,
    Diverged = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MertonKind {
    Subgame = 0,
    Precommitment = 1,
}

/// Validated run configuration.
pub struct MertonConfig(RunConfig);

/// Utility-weighted discount rate on its grid.
pub struct MertonRateField(RateField);

/// Investment and consumption surfaces of one agent.
pub struct MertonStrategy {
    strategy: StrategyField,
    value: valuepde::ValueField,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> MertonStatus {
    match e {
        Error::Config { .. } | Error::Parse(_) | Error::UnsupportedFamily(_) => MertonStatus::Config,
        Error::MissingInput(_) => MertonStatus::MissingInput,
        Error::Domain(_) => MertonStatus::InvalidArgument,
        Error::Io { .. } | Error::Csv(_) => MertonStatus::Io,
        _ => MertonStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), MertonStatus>) -> MertonStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MertonStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MertonStatus::Panic
        }
    }
}

fn fail(e: Error) -> MertonStatus {
    set_error(e.to_string());
    status_of(&e)
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, MertonStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(MertonStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        MertonStatus::InvalidString
    })
}

unsafe fn obj<'a, T>(p: *const T) -> Result<&'a T, MertonStatus> {
    p.as_ref().ok_or_else(|| {
        set_error("null handle");
        MertonStatus::NullPointer
    })
}

fn out_ptr<T>(p: *mut T) -> Result<(), MertonStatus> {
    if p.is_null() {
        set_error("null output pointer");
        Err(MertonStatus::NullPointer)
    } else {
        Ok(())
    }
}

/// Message describing the last failure on this thread; empty after a success.
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn merton_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn merton_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn merton_config_from_toml(toml: *const c_char, out: *mut *mut MertonConfig) -> MertonStatus {
    guard(|| {
        out_ptr(out)?;
        let cfg = RunConfig::from_toml_str(str_arg(toml)?).map_err(fail)?;
        *out = Box::into_raw(Box::new(MertonConfig(cfg)));
        Ok(())
    })
}

/// Shipped preset, `"constant"` or `"cev"`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn merton_config_preset(name: *const c_char, out: *mut *mut MertonConfig) -> MertonStatus {
    guard(|| {
        out_ptr(out)?;
        let cfg = config::preset(str_arg(name)?).map_err(fail)?;
        *out = Box::into_raw(Box::new(MertonConfig(cfg)));
        Ok(())
    })
}

/// Sets the random seed.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn merton_config_set_seed(cfg: *mut MertonConfig, seed: u64) -> MertonStatus {
    guard(|| {
        obj(cfg)?;
        (*cfg).0.sim.seed = seed;
        Ok(())
    })
}

/// Writes the canonical TOML of `cfg` into `buf` (capacity `len`, NUL included)
/// and the required capacity into `needed`.
///
/// # Safety
/// `cfg` must be a live handle, `buf` valid for `len` bytes or null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn merton_config_to_toml(
    cfg: *const MertonConfig,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> MertonStatus {
    guard(|| {
        let text = obj(cfg)?.0.to_toml_string();
        if !needed.is_null() {
            *needed = text.len() + 1;
        }
        if len > text.len() && !buf.is_null() {
            ptr::copy_nonoverlapping(text.as_ptr().cast(), buf, text.len());
            *buf.add(text.len()) = 0;
            Ok(())
        } else if len == 0 && buf.is_null() {
            Ok(())
        } else {
            set_error(format!("buffer of {len} bytes is too small, need {}", text.len() + 1));
            Err(MertonStatus::InvalidString)
        }
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn merton_config_free(cfg: *mut MertonConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Solves the fixed point for the rate field.
///
/// # Safety
/// `cfg` must be a live handle; `out` valid; `status` null or valid.
#[no_mangle]
pub unsafe extern "C" fn merton_solve_q(
    cfg: *const MertonConfig,
    out: *mut *mut MertonRateField,
    status: *mut MertonConvergence,
) -> MertonStatus {
    guard(|| {
        out_ptr(out)?;
        let cfg = &obj(cfg)?.0;
        let model = cfg.model().map_err(fail)?;
        let sol = experiments::solve_rate_field(cfg, &model).map_err(fail)?;
        if !status.is_null() {
            *status = match sol.report.status {
                ConvergenceStatus::Converged => MertonConvergence::Converged,
                ConvergenceStatus::NoiseFloor => MertonConvergence::NoiseFloor,
                ConvergenceStatus::Diverged => MertonConvergence::Diverged,
            };
        }
        *out = Box::into_raw(Box::new(MertonRateField(sol.field)));
        Ok(())
    })
}

/// Reads a rate field previously written as CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn merton_rate_field_read_csv(
    path: *const c_char,
    out: *mut *mut MertonRateField,
) -> MertonStatus {
    guard(|| {
        out_ptr(out)?;
        let field = io::read_qfield(Path::new(str_arg(path)?)).map_err(fail)?;
        *out = Box::into_raw(Box::new(MertonRateField(field)));
        Ok(())
    })
}

/// Writes the rate field as `t,y,z,q` CSV.
///
/// # Safety
/// `q` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn merton_rate_field_write_csv(q: *const MertonRateField, path: *const c_char) -> MertonStatus {
    guard(|| io::write_qfield(Path::new(str_arg(path)?), &obj(q)?.0).map_err(fail))
}

/// Interpolated rate at time `t` and price `z > 0`.
///
/// # Safety
/// `q` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn merton_rate_field_value(
    q: *const MertonRateField,
    t: f64,
    z: f64,
    out: *mut f64,
) -> MertonStatus {
    guard(|| {
        out_ptr(out)?;
        let q = obj(q)?;
        if !(z > 0.0) {
            return Err(fail(Error::Domain(format!("price must be positive, got {z}"))));
        }
        *out = q.0.value(t, z.ln());
        Ok(())
    })
}

/// Number of time and price nodes.
///
/// # Safety
/// `q` must be a live handle; `n_t`, `n_y` valid.
#[no_mangle]
pub unsafe extern "C" fn merton_rate_field_dims(
    q: *const MertonRateField,
    n_t: *mut usize,
    n_y: *mut usize,
) -> MertonStatus {
    guard(|| {
        out_ptr(n_t)?;
        out_ptr(n_y)?;
        let g = obj(q)?.0.grid();
        *n_t = g.n_t();
        *n_y = g.n_y();
        Ok(())
    })
}

/// # Safety
/// `q` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn merton_rate_field_free(q: *mut MertonRateField) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Solves the value-function PDE of one agent. `q` is required for the
/// subgame agent and ignored for the precommitted one.
///
/// # Safety
/// `cfg` must be a live handle, `q` null or live, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn merton_solve_strategy(
    cfg: *const MertonConfig,
    q: *const MertonRateField,
    kind: MertonKind,
    out: *mut *mut MertonStrategy,
) -> MertonStatus {
    guard(|| {
        out_ptr(out)?;
        let cfg = &obj(cfg)?.0;
        let model = cfg.model().map_err(fail)?;
        let kind = match kind {
            MertonKind::Subgame => ValueKind::Subgame,
            MertonKind::Precommitment => ValueKind::Precommitment,
        };
        let field = q.as_ref().map(|q| &q.0);
        let agent = experiments::solve_agent(cfg, &model, kind, field).map_err(fail)?;
        *out = Box::into_raw(Box::new(MertonStrategy {
            strategy: agent.strategy,
            value: agent.value,
        }));
        Ok(())
    })
}

/// Investment fraction, consumption rate and `v` at `(t, z)`.
/// Any of the output pointers may be null.
///
/// # Safety
/// `s` must be a live handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn merton_strategy_at(
    s: *const MertonStrategy,
    t: f64,
    z: f64,
    pi: *mut f64,
    c: *mut f64,
    v: *mut f64,
) -> MertonStatus {
    guard(|| {
        let s = obj(s)?;
        if !(z > 0.0) {
            return Err(fail(Error::Domain(format!("price must be positive, got {z}"))));
        }
        let y = z.ln();
        if !pi.is_null() {
            *pi = s.strategy.pi.interp(t, y);
        }
        if !c.is_null() {
            *c = s.strategy.c.interp(t, y);
        }
        if !v.is_null() {
            *v = s.value.v.interp(t, y);
        }
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn merton_strategy_free(s: *mut MertonStrategy) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Checks the PDE solver against the constant-coefficient closed form at time
/// step `dt` on the market of `cfg` (the constant preset when `cfg` is null or
/// not a constant market) and reports the largest relative error of `v`.
///
/// # Safety
/// `cfg` must be null or live; `max_rel_error` must be valid.
#[no_mangle]
pub unsafe extern "C" fn merton_self_test(cfg: *const MertonConfig, dt: f64, max_rel_error: *mut f64) -> MertonStatus {
    guard(|| {
        out_ptr(max_rel_error)?;
        if !(dt > 0.0) {
            return Err(fail(Error::Domain(format!("dt must be positive, got {dt}"))));
        }
        let cfg = cfg.as_ref().map(|c| &c.0);
        let report = experiments::self_test_report(cfg, dt).map_err(fail)?;
        *max_rel_error = report.max_rel_error;
        Ok(())
    })
}
