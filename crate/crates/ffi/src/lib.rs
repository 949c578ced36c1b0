//! C ABI over the damped acoustic laboratory.
//!
//! A `DwLab` owns one grid, one damping field and one damping law. Every
//! entry point returns a `DwStatus`; on failure the message is kept per
//! thread and can be copied out with `dw_last_error_message`. State vectors
//! are flat `[u_x, u_y, r]` arrays of length `dw_lab_state_dim`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

use dampwave::damping::{sample_profile, DampingField, DampingLaw, DampingProfile};
use dampwave::grid::{energy, Grid, State};
use dampwave::helmholtz::{HelmholtzSolver, SolverMode};
use dampwave::observability::{default_quadrature_step, gramian_constant};
use dampwave::semigroup::{apply_generator, simulate, EvolutionConfig};
use dampwave::spectral::{assemble, eigen, resolvent_norm, ReducedGenerator, DEFAULT_DENSE_CAP};
use dampwave::Error;

/// Result code of every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Numerical = 4,
    CapacityExceeded = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DwLaw {
    None = 0,
    Brinkman = 1,
    Modified = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DwProfileKind {
    Zero = 0,
    Constant = 1,
    BoundaryCollar = 2,
    InteriorBump = 3,
    VanishingSmooth = 4,
}

/// Damping profile; fields a kind does not use are ignored.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DwProfile {
    pub kind: DwProfileKind,
    pub level: f64,
    pub width: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
}

/// Opaque laboratory handle.
pub struct DwLab {
    alpha: DampingField,
    law: DampingLaw,
    helmholtz: HelmholtzSolver,
    reduced: OnceLock<ReducedGenerator>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(DwStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidGrid(_)
            | Error::InvalidProfile(_)
            | Error::InvalidArgument(_)
            | Error::ShapeMismatch { .. }
            | Error::QuadratureTooCoarse { .. } => DwStatus::InvalidArgument,
            Error::DenseCapExceeded { .. } => DwStatus::CapacityExceeded,
            _ => DwStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: DwStatus, msg: &str) -> Failure {
    Failure(status, msg.to_string())
}

/// Runs `f`, converting errors and panics to a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            DwStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DwStatus::Panic
        }
    }
}

fn lab_ref<'a>(lab: *const DwLab) -> Result<&'a DwLab, Failure> {
    // SAFETY: non-null handles come from `dw_lab_new` and are live until `dw_lab_free`
    unsafe { lab.as_ref() }.ok_or_else(|| fail(DwStatus::NullPointer, "lab handle is null"))
}

fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(Failure(DwStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: caller guarantees `len` readable doubles at `ptr`
    Ok(unsafe { std::slice::from_raw_parts(ptr, len) })
}

fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if ptr.is_null() {
        return Err(Failure(DwStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: caller guarantees `len` writable doubles at `ptr`
    Ok(unsafe { std::slice::from_raw_parts_mut(ptr, len) })
}

fn out<T>(ptr: *mut T, value: T) -> Result<(), Failure> {
    if ptr.is_null() {
        return Err(fail(DwStatus::NullPointer, "output pointer is null"));
    }
    // SAFETY: non-null output pointer supplied by the caller
    unsafe { ptr.write(value) };
    Ok(())
}

impl DwLab {
    fn grid(&self) -> &Grid {
        self.helmholtz.grid()
    }

    fn state(&self, z: *const f64, len: usize) -> Result<State, Failure> {
        let n = self.grid().state_dim();
        if len != n {
            return Err(Failure(DwStatus::InvalidArgument, format!("state length {len}, expected {n}")));
        }
        Ok(State::from_slice(self.grid(), slice(z, len, "state")?)?)
    }

    fn write_state(&self, z: &State, dst: *mut f64, len: usize) -> Result<(), Failure> {
        let v = z.to_vec();
        if len < v.len() {
            return Err(Failure(DwStatus::BufferTooSmall, format!("output length {len}, need {}", v.len())));
        }
        slice_mut(dst, len, "output state")?[..v.len()].copy_from_slice(&v);
        Ok(())
    }
}

fn profile(p: &DwProfile) -> DampingProfile {
    match p.kind {
        DwProfileKind::Zero => DampingProfile::Zero,
        DwProfileKind::Constant => DampingProfile::Constant { level: p.level },
        DwProfileKind::BoundaryCollar => DampingProfile::BoundaryCollar {
            level: p.level,
            width: p.width,
        },
        DwProfileKind::InteriorBump => DampingProfile::InteriorBump {
            level: p.level,
            center: [p.center_x, p.center_y],
            radius: p.radius,
        },
        DwProfileKind::VanishingSmooth => DampingProfile::VanishingSmooth {
            level: p.level,
            center: [p.center_x, p.center_y],
            radius: p.radius,
        },
    }
}

/// Creates a laboratory on an `nx` by `ny` grid over `[0, lx] x [0, ly]`.
///
/// # Safety
/// `profile_spec` must point to a valid `DwProfile` and `out_lab` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn dw_lab_new(
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    law: DwLaw,
    profile_spec: *const DwProfile,
    out_lab: *mut *mut DwLab,
) -> DwStatus {
    guard(|| {
        if out_lab.is_null() {
            return Err(fail(DwStatus::NullPointer, "out_lab is null"));
        }
        let spec = unsafe { profile_spec.as_ref() }.ok_or_else(|| fail(DwStatus::NullPointer, "profile is null"))?;
        let g = Grid::new(nx, ny, lx, ly)?;
        let helmholtz = HelmholtzSolver::new(&g, SolverMode::Auto)?;
        let alpha = sample_profile(&profile(spec), &g)?;
        let law = match law {
            DwLaw::None => DampingLaw::None,
            DwLaw::Brinkman => DampingLaw::Brinkman,
            DwLaw::Modified => DampingLaw::Modified,
        };
        let lab = Box::new(DwLab {
            alpha,
            law,
            helmholtz,
            reduced: OnceLock::new(),
        });
        out(out_lab, Box::into_raw(lab))
    })
}

/// Releases a laboratory. Null is ignored.
///
/// # Safety
/// `lab` must come from `dw_lab_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dw_lab_free(lab: *mut DwLab) {
    if !lab.is_null() {
        drop(unsafe { Box::from_raw(lab) });
    }
}

/// Length of a state vector, `3 nx ny - nx - ny`.
///
/// # Safety
/// `lab` must be a live handle and `out_dim` writable.
#[no_mangle]
pub unsafe extern "C" fn dw_lab_state_dim(lab: *const DwLab, out_dim: *mut usize) -> DwStatus {
    guard(|| out(out_dim, lab_ref(lab)?.grid().state_dim()))
}

/// Energy `(|u|^2 + |r|^2) / 2` of a state.
///
/// # Safety
/// `z` must hold `len` doubles and `out_energy` be writable.
#[no_mangle]
pub unsafe extern "C" fn dw_lab_energy(lab: *const DwLab, z: *const f64, len: usize, out_energy: *mut f64) -> DwStatus {
    guard(|| {
        let lab = lab_ref(lab)?;
        let s = lab.state(z, len)?;
        out(out_energy, energy(&s, lab.grid())?)
    })
}

/// Writes the damped generator applied to `z` into `dst`.
///
/// # Safety
/// `z` must hold `len` doubles and `dst` have room for `dst_len`.
#[no_mangle]
pub unsafe extern "C" fn dw_lab_apply_generator(
    lab: *const DwLab,
    z: *const f64,
    len: usize,
    dst: *mut f64,
    dst_len: usize,
) -> DwStatus {
    guard(|| {
        let lab = lab_ref(lab)?;
        let s = lab.state(z, len)?;
        let a = apply_generator(&s, &lab.alpha, lab.law, &lab.helmholtz)?;
        lab.write_state(&a, dst, dst_len)
    })
}

/// Integrates `nsteps` implicit midpoint steps of size `dt` from `z0`.
///
/// `energies` receives `nsteps + 1` values. `z_final` may be null; otherwise
/// it receives the final state.
///
/// # Safety
/// Buffers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn dw_lab_simulate(
    lab: *const DwLab,
    z0: *const f64,
    len: usize,
    dt: f64,
    nsteps: usize,
    energies: *mut f64,
    energies_len: usize,
    z_final: *mut f64,
) -> DwStatus {
    guard(|| {
        let lab = lab_ref(lab)?;
        let s = lab.state(z0, len)?;
        if energies_len < nsteps + 1 {
            return Err(Failure(
                DwStatus::BufferTooSmall,
                format!("energies length {energies_len}, need {}", nsteps + 1),
            ));
        }
        let dst = slice_mut(energies, energies_len, "energies")?;
        let cfg = EvolutionConfig {
            state_stride: nsteps.max(1),
            ..EvolutionConfig::new(dt, nsteps, lab.law)
        };
        let tr = simulate(&s, &cfg, &lab.alpha, &lab.helmholtz)?;
        if !tr.complete {
            return Err(Failure(
                DwStatus::Numerical,
                tr.failure.unwrap_or_else(|| "time stepping stopped early".into()),
            ));
        }
        dst[..tr.energies.len()].copy_from_slice(&tr.energies);
        if !z_final.is_null() {
            let last = tr.final_state().ok_or_else(|| fail(DwStatus::Numerical, "no final state recorded"))?;
            lab.write_state(last, z_final, len)?;
        }
        Ok(())
    })
}

/// `||(i beta - A)^{-1}||` on the complement of the generator kernel.
///
/// The dense reduced generator is built on first use and cached in the handle.
///
/// # Safety
/// `lab` must be a live handle and `out_norm` writable.
#[no_mangle]
pub unsafe extern "C" fn dw_lab_resolvent_norm(lab: *const DwLab, beta: f64, out_norm: *mut f64) -> DwStatus {
    guard(|| {
        let lab = lab_ref(lab)?;
        if !beta.is_finite() {
            return Err(fail(DwStatus::InvalidArgument, "beta must be finite"));
        }
        let red = match lab.reduced.get() {
            Some(r) => r,
            None => {
                let m = assemble(lab.grid(), &lab.alpha, lab.law, &lab.helmholtz, DEFAULT_DENSE_CAP)?;
                let rep = eigen(&m, &lab.alpha)?;
                let kernel = rep.kernel.as_ref().ok_or_else(|| fail(DwStatus::Numerical, "kernel unavailable"))?;
                lab.reduced.get_or_init(|| ReducedGenerator::new(&m, kernel))
            }
        };
        out(out_norm, resolvent_norm(red, beta)?.resolvent_norm)
    })
}

/// Observability constant of the damping over `[0, horizon]`.
///
/// A nonpositive `dt` selects the default quadrature step.
///
/// # Safety
/// `lab` must be a live handle and `out_constant` writable.
#[no_mangle]
pub unsafe extern "C" fn dw_lab_observability_constant(
    lab: *const DwLab,
    horizon: f64,
    dt: f64,
    out_constant: *mut f64,
) -> DwStatus {
    guard(|| {
        let lab = lab_ref(lab)?;
        let step = if dt > 0.0 { dt } else { default_quadrature_step(lab.grid(), horizon) };
        out(out_constant, gramian_constant(&lab.alpha, horizon, lab.grid(), step)?.constant)
    })
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `len` bytes. Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must have room for `len` bytes, or be null with `len` zero.
#[no_mangle]
pub unsafe extern "C" fn dw_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Nonzero when the status is `DW_STATUS_OK`.
#[no_mangle]
pub extern "C" fn dw_status_ok(status: DwStatus) -> c_int {
    c_int::from(status == DwStatus::Ok)
}
