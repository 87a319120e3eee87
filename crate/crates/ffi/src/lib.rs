//! C ABI over the simulation driver.
//!
//! Handles are opaque; every call returns an [`NpsStatus`]. The message of
//! the most recent failure on the calling thread is available from
//! [`nps_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nps_core::diagnostics;
use nps_core::sim::{checkpoint, SimConfig, Simulation};
use nps_core::Error;

/// Status codes returned by every function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NpsStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Solver = 3,
    Io = 4,
    Format = 5,
    InvalidArgument = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Fields that can be copied out of a simulation.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NpsField {
    C1 = 0,
    C2 = 1,
    Phi = 2,
    Rho = 3,
    /// x-face velocities, `(nx + 1) * ny` values.
    Ux = 4,
    /// y-face velocities, `nx * (ny + 1)` values.
    Uy = 5,
}

/// Number of values written by [`nps_simulation_diagnostics`].
pub const NPS_DIAGNOSTICS_LEN: usize = 16;

/// Opaque simulation handle.
pub struct NpsSimulation {
    sim: Simulation,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> NpsStatus {
    match e {
        Error::Config(_) | Error::GridMismatch(_) => NpsStatus::Config,
        Error::InvalidInput(_) | Error::IdenticalStates | Error::InsufficientWindow { .. } => NpsStatus::InvalidArgument,
        Error::Format { .. } => NpsStatus::Format,
        Error::Io(_) => NpsStatus::Io,
        _ => NpsStatus::Solver,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (NpsStatus, String)>) -> NpsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NpsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            NpsStatus::Panic
        }
    }
}

fn lift(e: Error) -> (NpsStatus, String) {
    (status_of(&e), e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (NpsStatus, String)> {
    if p.is_null() {
        return Err((NpsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (NpsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a>(h: *mut NpsSimulation) -> Result<&'a mut NpsSimulation, (NpsStatus, String)> {
    h.as_mut().ok_or_else(|| (NpsStatus::NullPointer, "simulation handle is null".into()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn nps_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a simulation from a TOML configuration text.
///
/// # Safety
/// `config` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nps_simulation_new(config: *const c_char, out: *mut *mut NpsSimulation) -> NpsStatus {
    guard(|| {
        if out.is_null() {
            return Err((NpsStatus::NullPointer, "out is null".into()));
        }
        *out = ptr::null_mut();
        let text = str_arg(config, "config")?;
        let cfg = SimConfig::from_toml_str(text).map_err(lift)?;
        let sim = Simulation::from_config(&cfg).map_err(lift)?;
        *out = Box::into_raw(Box::new(NpsSimulation { sim }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sim` must come from [`nps_simulation_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nps_simulation_free(sim: *mut NpsSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Integrates to time `t` (not before the current time).
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nps_simulation_advance(sim: *mut NpsSimulation, t: f64) -> NpsStatus {
    guard(|| {
        let h = handle(sim)?;
        if !(t >= h.sim.state.t) || !t.is_finite() {
            return Err((NpsStatus::InvalidArgument, format!("target time {t} precedes current time {}", h.sim.state.t)));
        }
        h.sim.advance_to(t).map_err(lift)
    })
}

/// Current simulation time.
///
/// # Safety
/// `sim` must be a live handle and `t` writable.
#[no_mangle]
pub unsafe extern "C" fn nps_simulation_time(sim: *mut NpsSimulation, t: *mut f64) -> NpsStatus {
    guard(|| {
        let h = handle(sim)?;
        let t = t.as_mut().ok_or((NpsStatus::NullPointer, "t is null".into()))?;
        *t = h.sim.state.t;
        Ok(())
    })
}

/// Grid dimensions.
///
/// # Safety
/// `sim` must be a live handle; `nx`, `ny` writable.
#[no_mangle]
pub unsafe extern "C" fn nps_simulation_grid(sim: *mut NpsSimulation, nx: *mut usize, ny: *mut usize) -> NpsStatus {
    guard(|| {
        let h = handle(sim)?;
        if nx.is_null() || ny.is_null() {
            return Err((NpsStatus::NullPointer, "nx or ny is null".into()));
        }
        *nx = h.sim.model.grid.nx;
        *ny = h.sim.model.grid.ny;
        Ok(())
    })
}

/// Copies a field into `buf`. `len` must be at least the field length,
/// which is written to `written` (may be null).
///
/// # Safety
/// `sim` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nps_simulation_copy_field(
    sim: *mut NpsSimulation,
    field: NpsField,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> NpsStatus {
    guard(|| {
        let h = handle(sim)?;
        let s = &h.sim.state;
        let src: &[f64] = match field {
            NpsField::C1 => &s.c1.values,
            NpsField::C2 => &s.c2.values,
            NpsField::Phi => &s.phi.values,
            NpsField::Rho => &s.rho.values,
            NpsField::Ux => &s.u.ux,
            NpsField::Uy => &s.u.uy,
        };
        if let Some(w) = written.as_mut() {
            *w = src.len();
        }
        if buf.is_null() {
            return Err((NpsStatus::NullPointer, "buf is null".into()));
        }
        if len < src.len() {
            return Err((NpsStatus::BufferTooSmall, format!("field has {} values, buffer holds {len}", src.len())));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
        Ok(())
    })
}

/// Writes the diagnostics of the current state in CSV column order
/// (`NPS_DIAGNOSTICS_LEN` values).
///
/// # Safety
/// `sim` must be a live handle; `out` must hold `NPS_DIAGNOSTICS_LEN` doubles.
#[no_mangle]
pub unsafe extern "C" fn nps_simulation_diagnostics(sim: *mut NpsSimulation, out: *mut f64) -> NpsStatus {
    guard(|| {
        let h = handle(sim)?;
        if out.is_null() {
            return Err((NpsStatus::NullPointer, "out is null".into()));
        }
        let m = &h.sim.model;
        let r = diagnostics::record(&h.sim.state, &m.params, &m.bd, &m.lap, None).map_err(lift)?;
        let v = r.values();
        ptr::copy_nonoverlapping(v.as_ptr(), out, NPS_DIAGNOSTICS_LEN);
        Ok(())
    })
}

/// Writes a binary checkpoint of the current state.
///
/// # Safety
/// `sim` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nps_simulation_save(sim: *mut NpsSimulation, path: *const c_char) -> NpsStatus {
    guard(|| {
        let h = handle(sim)?;
        let path = str_arg(path, "path")?;
        checkpoint::save(Path::new(path), &h.sim.state, &h.sim.model.params).map_err(lift)
    })
}
