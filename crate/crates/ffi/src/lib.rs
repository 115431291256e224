//! C ABI for the sdgbp solver.
//!
//! Every entry point returns an [`SdgbpStatus`]; on failure the message is
//! available from [`sdgbp_last_error`] on the same thread. Simulations live
//! behind an opaque [`SdgbpSimulation`] handle owned by the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sdgbp::config::parse_config;
use sdgbp::gpc::Normalization;
use sdgbp::kernels::{compute_c_minus_analytic, KernelMatrices, Mat2};
use sdgbp::quadrature::QuadratureRule;
use sdgbp::scaling::{build_scaling, PhysicalConstants, ScalingOverrides};
use sdgbp::simulate::{Simulation, SimulationConfig};
use sdgbp::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdgbpStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad configuration, argument or usage.
    InvalidArgument = 2,
    /// The discrete state became unusable.
    Numerical = 3,
    Io = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Moment profiles available from [`sdgbp_simulation_moment`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdgbpMoment {
    X = 0,
    Density = 1,
    Momentum = 2,
    Energy = 3,
    Velocity = 4,
    Efield = 5,
    Potential = 6,
    /// Per-cell `E[f]`, length `nx*nr*nmu`.
    Mean = 7,
    /// Per-cell `Var[f]`, length `nx*nr*nmu`.
    Variance = 8,
}

/// Kernel constants and 2x2 matrices, row-major.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SdgbpKernels {
    pub a: f64,
    pub b: f64,
    pub n_q: f64,
    pub n_divisor: f64,
    pub c_minus: [f64; 4],
    pub c_minus_polylog: [f64; 4],
    pub c_plus: [f64; 4],
    pub recomb_split: [f64; 4],
}

/// Opaque simulation handle.
pub struct SdgbpSimulation {
    inner: Simulation,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> SdgbpStatus {
    match e {
        Error::Numerical(_) => SdgbpStatus::Numerical,
        Error::Io { .. } | Error::MissingFile(_) => SdgbpStatus::Io,
        _ => SdgbpStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), SdgbpStatus>) -> SdgbpStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SdgbpStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SdgbpStatus::Panic
        }
    }
}

fn fail(e: Error) -> SdgbpStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> SdgbpStatus {
    set_error(format!("{what} is null"));
    SdgbpStatus::NullPointer
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, SdgbpStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        SdgbpStatus::InvalidArgument
    })
}

fn flat(m: &Mat2) -> [f64; 4] {
    [m[0][0], m[0][1], m[1][0], m[1][1]]
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sdgbp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sdgbp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Kernel constants and matrices for divisor `n_divisor`, in the orthonormal
/// basis if `orthonormal` is nonzero and in the unnormalized one otherwise.
///
/// # Safety
/// `out` must be null or point to writable memory for one `SdgbpKernels`.
#[no_mangle]
pub unsafe extern "C" fn sdgbp_kernels(
    n_divisor: f64,
    orthonormal: i32,
    out: *mut SdgbpKernels,
) -> SdgbpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scaling = build_scaling(
            PhysicalConstants::default(),
            ScalingOverrides {
                n_divisor,
                ..ScalingOverrides::default()
            },
        )
        .map_err(fail)?;
        let quad = QuadratureRule::gauss_legendre(64).map_err(fail)?;
        let norm = if orthonormal != 0 {
            Normalization::Orthonormal
        } else {
            Normalization::PaperUnnormalized
        };
        let basis = sdgbp::gpc::GpcBasis::new(norm, &quad);
        let k = KernelMatrices::new(&scaling, &basis, &quad).map_err(fail)?;
        let paper = compute_c_minus_analytic(&scaling).map_err(fail)?;
        let s = [1.0, basis.scale];
        let mut poly = [0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                poly[2 * i + j] = s[i] * s[j] * paper[i][j];
            }
        }
        *out = SdgbpKernels {
            a: scaling.a,
            b: scaling.b,
            n_q: scaling.n_q,
            n_divisor: scaling.n_divisor,
            c_minus: flat(&k.c_minus),
            c_minus_polylog: poly,
            c_plus: flat(&k.c_plus),
            recomb_split: flat(&k.recomb_split),
        };
        Ok(())
    })
}

/// Create a simulation from TOML text; null `config_toml` uses the defaults.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must point to
/// writable storage for one pointer. Free the handle with
/// [`sdgbp_simulation_free`].
#[no_mangle]
pub unsafe extern "C" fn sdgbp_simulation_new(
    config_toml: *const c_char,
    out: *mut *mut SdgbpSimulation,
) -> SdgbpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cfg = if config_toml.is_null() {
            SimulationConfig::default()
        } else {
            parse_config(text(config_toml, "config_toml")?).map_err(fail)?
        };
        let inner = Simulation::new(cfg).map_err(fail)?;
        *out = Box::into_raw(Box::new(SdgbpSimulation { inner }));
        Ok(())
    })
}

/// # Safety
/// `sim` must be null or a handle from [`sdgbp_simulation_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sdgbp_simulation_free(sim: *mut SdgbpSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

unsafe fn handle<'a>(sim: *mut SdgbpSimulation) -> Result<&'a mut Simulation, SdgbpStatus> {
    sim.as_mut().map(|s| &mut s.inner).ok_or_else(|| null("sim"))
}

/// Current time [ps]; NaN for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdgbp_simulation_time(sim: *const SdgbpSimulation) -> f64 {
    sim.as_ref().map_or(f64::NAN, |s| s.inner.time)
}

/// Grid sizes `[nx, nr, nmu]`.
///
/// # Safety
/// `sim` must be a live handle and `dims` must point to 3 writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn sdgbp_simulation_dims(sim: *mut SdgbpSimulation, dims: *mut usize) -> SdgbpStatus {
    guard(|| {
        let s = handle(sim)?;
        if dims.is_null() {
            return Err(null("dims"));
        }
        let d = std::slice::from_raw_parts_mut(dims, 3);
        d.copy_from_slice(&[s.grid.nx, s.grid.nr, s.grid.nmu]);
        Ok(())
    })
}

/// One step of size at most `dt_max` [ps]; the size taken goes to `dt_taken`
/// when it is non-null.
///
/// # Safety
/// `sim` must be a live handle; `dt_taken` null or writable.
#[no_mangle]
pub unsafe extern "C" fn sdgbp_simulation_step(
    sim: *mut SdgbpSimulation,
    dt_max: f64,
    dt_taken: *mut f64,
) -> SdgbpStatus {
    guard(|| {
        let s = handle(sim)?;
        if dt_max.is_nan() || dt_max <= 0.0 {
            set_error(format!("dt_max = {dt_max} must be positive"));
            return Err(SdgbpStatus::InvalidArgument);
        }
        let rec = s.step(dt_max).map_err(fail)?;
        if !dt_taken.is_null() {
            *dt_taken = rec.dt;
        }
        Ok(())
    })
}

/// Advance to `t_end` [ps].
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdgbp_simulation_advance(sim: *mut SdgbpSimulation, t_end: f64) -> SdgbpStatus {
    guard(|| {
        let s = handle(sim)?;
        if !t_end.is_finite() {
            set_error("t_end must be finite");
            return Err(SdgbpStatus::InvalidArgument);
        }
        s.advance_to(t_end).map_err(fail)
    })
}

/// Copy a moment profile into `buf`. The required length is always written
/// to `len_out` (when non-null); if `cap` is too small nothing is copied and
/// `InvalidArgument` is returned.
///
/// # Safety
/// `sim` must be a live handle; `buf` must hold `cap` doubles or be null with
/// `cap == 0`.
#[no_mangle]
pub unsafe extern "C" fn sdgbp_simulation_moment(
    sim: *mut SdgbpSimulation,
    which: SdgbpMoment,
    buf: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> SdgbpStatus {
    guard(|| {
        let s = handle(sim)?;
        let ms = s.moments();
        let v = match which {
            SdgbpMoment::X => &ms.x,
            SdgbpMoment::Density => &ms.density,
            SdgbpMoment::Momentum => &ms.momentum,
            SdgbpMoment::Energy => &ms.energy,
            SdgbpMoment::Velocity => &ms.velocity,
            SdgbpMoment::Efield => &ms.efield,
            SdgbpMoment::Potential => &ms.potential,
            SdgbpMoment::Mean => &ms.mean,
            SdgbpMoment::Variance => &ms.variance,
        };
        if !len_out.is_null() {
            *len_out = v.len();
        }
        if cap < v.len() || buf.is_null() {
            set_error(format!("buffer holds {cap} values, {} needed", v.len()));
            return Err(SdgbpStatus::InvalidArgument);
        }
        std::slice::from_raw_parts_mut(buf, v.len()).copy_from_slice(v);
        Ok(())
    })
}

/// Run a configuration file to completion and write the run directory.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sdgbp_run(config_path: *const c_char, out_dir: *const c_char) -> SdgbpStatus {
    guard(|| {
        let cfg = sdgbp::config::load_config(Path::new(text(config_path, "config_path")?)).map_err(fail)?;
        let dir = text(out_dir, "out_dir")?;
        sdgbp::output::run_to_dir(cfg, Path::new(dir))
            .map(|_| ())
            .map_err(fail)
    })
}
