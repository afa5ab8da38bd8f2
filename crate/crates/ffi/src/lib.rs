//! C interface to the magflow library.
//!
//! Systems and trajectories are opaque handles created from JSON and released
//! with the matching `_free` function. Every call returns a [`MagflowStatus`];
//! the message of the most recent failure on the calling thread is available
//! from [`magflow_last_error`].
//!
//! # Safety
//!
//! Pointer arguments must be null or valid for the documented number of
//! elements, and handles must come from this library and not be used after
//! they are freed.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use serde::Deserialize;

use magflow::curvature::magnetic_sectional_of_plane;
use magflow::diagnostics::{lyapunov_spectrum, LyapunovConfig};
use magflow::flow::{
    dynamical_exp_derivative, integrate, IntegratorConfig, Method, PhaseState, Trajectory,
};
use magflow::linalg::Vector;
use magflow::magnetic::MagneticSystem;
use magflow::registry::{build_system, FormSpec, ManifoldSpec};
use magflow::Error;

/// Status codes. Input and numerical failures use the same values as the
/// command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MagflowStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Numerical = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MagflowMethod {
    Rk4 = 0,
    Rk45 = 1,
}

/// Integrator settings. `step` is the RK4 step or the initial RK45 step.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagflowIntegrator {
    pub method: MagflowMethod,
    pub step: f64,
    pub rtol: f64,
    pub atol: f64,
}

/// Opaque magnetic system.
pub struct MagflowSystem {
    inner: MagneticSystem,
}

/// Opaque sampled trajectory.
pub struct MagflowTrajectory {
    inner: Trajectory,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSpec {
    manifold: ManifoldSpec,
    #[serde(default = "zero_form")]
    magnetic: FormSpec,
}

fn zero_form() -> FormSpec {
    FormSpec::Zero {}
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message.into_bytes());
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T> = std::result::Result<T, Failure>;

fn guard(body: impl FnOnce() -> FfiResult<()>) -> MagflowStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            MagflowStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for `{what}`"));
            MagflowStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            if e.exit_code() == 2 {
                MagflowStatus::InvalidInput
            } else {
                MagflowStatus::Numerical
            }
        }
        Err(_) => {
            set_error("internal panic".into());
            MagflowStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    // SAFETY: callers pass either null or a pointer obtained from this library.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

fn vector(p: *const f64, n: usize, what: &'static str) -> FfiResult<Vector> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: the caller guarantees `n` readable doubles at `p`.
    Ok(Vector::from_column_slice(unsafe {
        std::slice::from_raw_parts(p, n)
    }))
}

fn write_out(p: *mut f64, values: &[f64], what: &'static str) -> FfiResult<()> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: the caller guarantees room for `values.len()` doubles at `p`.
    unsafe { ptr::copy_nonoverlapping(values.as_ptr(), p, values.len()) };
    Ok(())
}

fn check_dim(sys: &MagneticSystem, n: usize) -> FfiResult<()> {
    if n != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: n,
        }
        .into());
    }
    Ok(())
}

fn config(integrator: *const MagflowIntegrator) -> FfiResult<IntegratorConfig> {
    let c = non_null(integrator, "integrator")?;
    let method = match c.method {
        MagflowMethod::Rk4 => Method::Rk4,
        MagflowMethod::Rk45 => Method::Rk45,
    };
    let cfg = IntegratorConfig {
        method,
        step: c.step,
        rtol: c.rtol,
        atol: c.atol,
        ..IntegratorConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Copies the last error message of this thread into `buffer` (NUL
/// terminated, truncated to `len`) and returns its full length in bytes.
/// Passing a null buffer only queries the length.
#[no_mangle]
pub unsafe extern "C" fn magflow_last_error(buffer: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buffer.is_null() && len > 0 {
            let count = msg.len().min(len - 1);
            // SAFETY: the caller guarantees `len` writable bytes at `buffer`.
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buffer, count);
                *buffer.add(count) = 0;
            }
        }
        msg.len()
    })
}

/// Builds a system from `{"manifold": {...}, "magnetic": {...}}`, using the
/// same names as scenario files.
#[no_mangle]
pub unsafe extern "C" fn magflow_system_from_json(
    json: *const c_char,
    out: *mut *mut MagflowSystem,
) -> MagflowStatus {
    guard(|| {
        if json.is_null() {
            return Err(Failure::Null("json"));
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        // SAFETY: `json` is a NUL-terminated string supplied by the caller.
        let text = unsafe { CStr::from_ptr(json) }
            .to_str()
            .map_err(|e| Error::InvalidConfig(format!("system: not UTF-8: {e}")))?;
        let spec: SystemSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("system: {e}")))?;
        let inner = build_system(&spec.manifold, &spec.magnetic)?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = Box::into_raw(Box::new(MagflowSystem { inner })) };
        Ok(())
    })
}

/// Releases a system. Null is accepted.
#[no_mangle]
pub unsafe extern "C" fn magflow_system_free(system: *mut MagflowSystem) {
    if !system.is_null() {
        // SAFETY: `system` came from `magflow_system_from_json` and is freed once.
        drop(unsafe { Box::from_raw(system) });
    }
}

/// Chart dimension of the system, or 0 for null.
#[no_mangle]
pub unsafe extern "C" fn magflow_system_dim(system: *const MagflowSystem) -> usize {
    // SAFETY: null or a live handle.
    unsafe { system.as_ref() }.map_or(0, |s| s.inner.dim())
}

/// Integrates from `(x, v)` for time `horizon` and stores the samples in a
/// new trajectory handle. Leaving the chart is reported as a numerical
/// failure and no handle is produced.
#[no_mangle]
pub unsafe extern "C" fn magflow_integrate(
    system: *const MagflowSystem,
    x: *const f64,
    v: *const f64,
    n: usize,
    horizon: f64,
    integrator: *const MagflowIntegrator,
    out: *mut *mut MagflowTrajectory,
) -> MagflowStatus {
    guard(|| {
        let sys = &non_null(system, "system")?.inner;
        check_dim(sys, n)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let state = PhaseState::new(sys, vector(x, n, "x")?, vector(v, n, "v")?)?;
        let inner = integrate(sys, &state, horizon, &config(integrator)?)?.complete()?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = Box::into_raw(Box::new(MagflowTrajectory { inner })) };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn magflow_trajectory_free(trajectory: *mut MagflowTrajectory) {
    if !trajectory.is_null() {
        // SAFETY: `trajectory` came from `magflow_integrate` and is freed once.
        drop(unsafe { Box::from_raw(trajectory) });
    }
}

/// Number of samples, or 0 for null.
#[no_mangle]
pub unsafe extern "C" fn magflow_trajectory_len(trajectory: *const MagflowTrajectory) -> usize {
    // SAFETY: null or a live handle.
    unsafe { trajectory.as_ref() }.map_or(0, |t| t.inner.times.len())
}

/// Copies sample `index` into `t`, `x` and `v` (`n` doubles each).
#[no_mangle]
pub unsafe extern "C" fn magflow_trajectory_sample(
    trajectory: *const MagflowTrajectory,
    index: usize,
    t: *mut f64,
    x: *mut f64,
    v: *mut f64,
) -> MagflowStatus {
    guard(|| {
        let traj = &non_null(trajectory, "trajectory")?.inner;
        let state = traj.states.get(index).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "index {index} out of range for {} samples",
                traj.times.len()
            ))
        })?;
        write_out(t, &[traj.times[index]], "t")?;
        write_out(x, state.x.as_slice(), "x")?;
        write_out(v, state.v.as_slice(), "v")
    })
}

/// Magnetic sectional curvature `Sec^s` of the plane spanned by `v` and `w`.
#[no_mangle]
pub unsafe extern "C" fn magflow_sectional(
    system: *const MagflowSystem,
    s: f64,
    x: *const f64,
    v: *const f64,
    w: *const f64,
    n: usize,
    out: *mut f64,
) -> MagflowStatus {
    guard(|| {
        let sys = &non_null(system, "system")?.inner;
        check_dim(sys, n)?;
        let value = magnetic_sectional_of_plane(
            sys,
            s,
            &vector(x, n, "x")?,
            &vector(v, n, "v")?,
            &vector(w, n, "w")?,
        )?;
        write_out(out, &[value], "out")
    })
}

/// `exp_x(u)` into `point` (`n` doubles) and, when `jacobian` is not null,
/// its derivative in row-major order (`n * n` doubles).
#[no_mangle]
pub unsafe extern "C" fn magflow_dynamical_exp(
    system: *const MagflowSystem,
    x: *const f64,
    u: *const f64,
    n: usize,
    integrator: *const MagflowIntegrator,
    point: *mut f64,
    jacobian: *mut f64,
) -> MagflowStatus {
    guard(|| {
        let sys = &non_null(system, "system")?.inner;
        check_dim(sys, n)?;
        let (p, d) = dynamical_exp_derivative(
            sys,
            &vector(x, n, "x")?,
            &vector(u, n, "u")?,
            &config(integrator)?,
        )?;
        write_out(point, p.as_slice(), "point")?;
        if !jacobian.is_null() {
            write_out(jacobian, d.transpose().as_slice(), "jacobian")?;
        }
        Ok(())
    })
}

/// Finite-time Lyapunov spectrum of the orbit of `(x, v)`, written in
/// descending order to `exponents` (`2 n` doubles).
#[no_mangle]
pub unsafe extern "C" fn magflow_lyapunov(
    system: *const MagflowSystem,
    x: *const f64,
    v: *const f64,
    n: usize,
    horizon: f64,
    interval: f64,
    integrator: *const MagflowIntegrator,
    exponents: *mut f64,
) -> MagflowStatus {
    guard(|| {
        let sys = &non_null(system, "system")?.inner;
        check_dim(sys, n)?;
        let state = PhaseState::new(sys, vector(x, n, "x")?, vector(v, n, "v")?)?;
        let cfg = LyapunovConfig {
            interval,
            integrator: config(integrator)?,
        };
        let report = lyapunov_spectrum(sys, &state, horizon, &cfg)?;
        write_out(exponents, &report.exponents, "exponents")
    })
}
