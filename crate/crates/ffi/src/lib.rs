//! C ABI for `scgl`.
//!
//! Every fallible function returns a [`ScglStatus`]. On failure the message
//! is kept per thread and read with [`scgl_last_error_message`]. Fields and
//! solvers are opaque handles released with their `_free` function.

use libc::{c_char, size_t};
use num_complex::Complex64;
use scgl::dyadic::{besov_norm, BesovParams, DyadicPartition};
use scgl::error::Error;
use scgl::snapshot::Snapshot;
use scgl::solver::Solver;
use scgl::spectral::{Grid, SpectralField};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScglStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    GridMismatch = 4,
    BlowUp = 5,
    Format = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScglComplex {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ScglComplex {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl From<ScglComplex> for Complex64 {
    fn from(z: ScglComplex) -> Self {
        Complex64::new(z.re, z.im)
    }
}

/// Fourier coefficients on the ball `|m| ≤ n`.
pub struct ScglField {
    inner: SpectralField,
}

/// One solver replica.
pub struct ScglSolver {
    inner: Solver,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ScglStatus {
    match e {
        Error::Config(_) => ScglStatus::Config,
        Error::Input(_) => ScglStatus::InvalidArgument,
        Error::GridMismatch(_) => ScglStatus::GridMismatch,
        Error::BlowUp { .. } => ScglStatus::BlowUp,
        Error::Format(_) => ScglStatus::Format,
        Error::Io(_) => ScglStatus::Io,
    }
}

struct Fail(ScglStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ScglStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ScglStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScglStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            ScglStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(ScglStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn scgl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn scgl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Renormalization constant `c_n` at viscosity `mu`.
///
/// # Safety
/// `out_c` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scgl_renorm_constant(n: size_t, mu: f64, out_c: *mut f64) -> ScglStatus {
    guard(|| {
        let o = out(out_c, "out_c")?;
        *o = scgl::ou::renorm_constant(n, mu)?.value;
        Ok(())
    })
}

/// Complex Hermite polynomial `H_{k,l}(z, c)`.
///
/// # Safety
/// `out_h` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scgl_hermite(
    k: size_t,
    l: size_t,
    z: ScglComplex,
    c: f64,
    out_h: *mut ScglComplex,
) -> ScglStatus {
    guard(|| {
        let o = out(out_h, "out_h")?;
        *o = scgl::wick::hermite_eval(k, l, z.into(), c)?.into();
        Ok(())
    })
}

/// Zero field with cutoff `n` on `points²` collocation points (`0` selects
/// `4n + 4`).
///
/// # Safety
/// `out_field` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scgl_field_new(n: size_t, points: size_t, out_field: *mut *mut ScglField) -> ScglStatus {
    guard(|| {
        let o = out(out_field, "out_field")?;
        let grid = if points == 0 {
            Grid::with_default_points(n)
        } else {
            Grid::new(n, points)?
        };
        *o = Box::into_raw(Box::new(ScglField {
            inner: SpectralField::zeros(grid),
        }));
        Ok(())
    })
}

/// # Safety
/// `field` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn scgl_field_free(field: *mut ScglField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Cutoff `n` of a field, `0` for a null handle.
///
/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scgl_field_cutoff(field: *const ScglField) -> size_t {
    field.as_ref().map_or(0, |f| f.inner.grid.n)
}

/// # Safety
/// `field` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn scgl_field_set(field: *mut ScglField, m1: i32, m2: i32, value: ScglComplex) -> ScglStatus {
    guard(|| {
        let f = out(field, "field")?;
        f.inner.set((m1, m2), value.into())?;
        Ok(())
    })
}

/// Coefficient at `(m1, m2)`; zero outside the ball.
///
/// # Safety
/// `field` must be a live handle and `out_value` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scgl_field_get(
    field: *const ScglField,
    m1: i32,
    m2: i32,
    out_value: *mut ScglComplex,
) -> ScglStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null("field"))?;
        *out(out_value, "out_value")? = f.inner.get((m1, m2)).into();
        Ok(())
    })
}

/// `‖f‖_{B^alpha_{p,q}}`; pass `INFINITY` for `p` or `q` to get the sup.
///
/// # Safety
/// `field` must be a live handle and `out_norm` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scgl_field_besov_norm(
    field: *const ScglField,
    alpha: f64,
    p: f64,
    q: f64,
    out_norm: *mut f64,
) -> ScglStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null("field"))?;
        let o = out(out_norm, "out_norm")?;
        let params = BesovParams::new(alpha, p, q)?;
        *o = besov_norm(&f.inner, &params, &DyadicPartition::for_band(f.inner.grid.n))?;
        Ok(())
    })
}

/// Writes a binary snapshot.
///
/// # Safety
/// `field` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn scgl_field_write_snapshot(
    field: *const ScglField,
    path: *const c_char,
    t: f64,
    seed: u64,
) -> ScglStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null("field"))?;
        let p = str_arg(path, "path")?;
        Snapshot {
            t,
            seed,
            field: f.inner.clone(),
        }
        .write(Path::new(p))?;
        Ok(())
    })
}

/// Reads a binary snapshot into a new field. `out_t` and `out_seed` may be
/// null.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_field` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scgl_field_read_snapshot(
    path: *const c_char,
    out_field: *mut *mut ScglField,
    out_t: *mut f64,
    out_seed: *mut u64,
) -> ScglStatus {
    guard(|| {
        let p = str_arg(path, "path")?;
        let o = out(out_field, "out_field")?;
        let s = Snapshot::read(Path::new(p))?;
        if let Some(t) = out_t.as_mut() {
            *t = s.t;
        }
        if let Some(seed) = out_seed.as_mut() {
            *seed = s.seed;
        }
        *o = Box::into_raw(Box::new(ScglField { inner: s.field }));
        Ok(())
    })
}

/// Solver for one replica, configured by a TOML string.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out_solver` valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn scgl_solver_new(
    config_toml: *const c_char,
    replica: u64,
    out_solver: *mut *mut ScglSolver,
) -> ScglStatus {
    guard(|| {
        let text = str_arg(config_toml, "config_toml")?;
        let o = out(out_solver, "out_solver")?;
        let cfg = scgl::config::SolverConfig::from_toml_str(text)?;
        *o = Box::into_raw(Box::new(ScglSolver {
            inner: Solver::new(&cfg, replica, None)?,
        }));
        Ok(())
    })
}

/// # Safety
/// `solver` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn scgl_solver_free(solver: *mut ScglSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Advances `steps` time steps. Stops at the first failure.
///
/// # Safety
/// `solver` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn scgl_solver_advance(solver: *mut ScglSolver, steps: u64) -> ScglStatus {
    guard(|| {
        let s = out(solver, "solver")?;
        for _ in 0..steps {
            s.inner.step()?;
        }
        Ok(())
    })
}

/// Current time.
///
/// # Safety
/// `solver` must be a live handle and `out_t` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scgl_solver_time(solver: *const ScglSolver, out_t: *mut f64) -> ScglStatus {
    guard(|| {
        let s = solver.as_ref().ok_or_else(|| null("solver"))?;
        *out(out_t, "out_t")? = s.inner.state.t();
        Ok(())
    })
}

/// Copy of the current solution `u` as a new field.
///
/// # Safety
/// `solver` must be a live handle and `out_field` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scgl_solver_solution(solver: *const ScglSolver, out_field: *mut *mut ScglField) -> ScglStatus {
    guard(|| {
        let s = solver.as_ref().ok_or_else(|| null("solver"))?;
        let o = out(out_field, "out_field")?;
        *o = Box::into_raw(Box::new(ScglField {
            inner: s.inner.state.solution(),
        }));
        Ok(())
    })
}
