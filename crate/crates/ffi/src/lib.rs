//! C ABI over `spinpulse`.
//!
//! Every fallible call returns an [`SpStatus`]; on failure the message is
//! available from [`spinpulse_last_error`] on the same thread. Objects are
//! opaque handles created by `*_new` functions and released by the matching
//! `*_free`. Panics never cross the boundary; they surface as
//! [`SpStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spinpulse::analysis::{fit_decaying_sine, RabiTrace};
use spinpulse::antenna::{converged_field, SpiralGeometry};
use spinpulse::landscape::{optimize, pulse_fidelity_of, pulse_template, ScanSettings};
use spinpulse::spin::{propagate, DriveSystem, PropagatorConfig, SpinState, Trajectory};
use spinpulse::waveform::{default_rise_time, EnvelopeKind, PulseSpec};
use spinpulse::Error;

/// Result of a call. The numeric values of the first four match the exit
/// codes of the `spinpulse` command.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    /// A parameter is outside the model's domain.
    Validation = 1,
    /// Malformed input data.
    Parse = 2,
    /// A numerical method failed (convergence, fit).
    Numerical = 3,
    NullPointer = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpEnvelope {
    ErrorFunction = 0,
    Rectangular = 1,
}

impl From<SpEnvelope> for EnvelopeKind {
    fn from(e: SpEnvelope) -> Self {
        match e {
            SpEnvelope::ErrorFunction => EnvelopeKind::ErrorFunction,
            SpEnvelope::Rectangular => EnvelopeKind::Rectangular,
        }
    }
}

/// Driven two-level system.
pub struct SpSystem(DriveSystem);

/// Offset-sine π pulse.
pub struct SpPulse(PulseSpec);

/// Sampled evolution from spin up.
pub struct SpTrajectory(Trajectory);

/// Refined landscape optimum.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpOptimum {
    pub best_phase: f64,
    pub best_offset: f64,
    pub best_fidelity: f64,
    pub zero_offset_best_phase: f64,
    pub zero_offset_best_fidelity: f64,
}

/// Damped-sine fit of a Rabi trace; frequencies in kHz for times in µs.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpRabiFit {
    pub rabi_frequency: f64,
    pub frequency_stderr: f64,
    /// µs; zero when the fitted decay rate is not positive.
    pub decay_time: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub baseline: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SpStatus {
    match e.exit_code() {
        1 => SpStatus::Validation,
        2 => SpStatus::Parse,
        _ => SpStatus::Numerical,
    }
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

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("null pointer: {name}"));
            SpStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SpStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn write<T>(p: *mut T, name: &'static str, value: T) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    p.write(value);
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn spinpulse_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spinpulse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a system with splitting `omega0`, drive amplitude `omega_d` and
/// tilt `theta_d` (radians).
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_system_new(
    omega0: f64,
    omega_d: f64,
    theta_d: f64,
    out: *mut *mut SpSystem,
) -> SpStatus {
    guard(|| {
        let sys = DriveSystem::new(omega0, omega_d, theta_d)?;
        write(out, "out", boxed(SpSystem(sys)))
    })
}

/// Creates the system whose amplitude cancels the splitting, `Ωd = ω0 / (2 tan θd)`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_system_exact_cancellation(
    omega0: f64,
    theta_d: f64,
    out: *mut *mut SpSystem,
) -> SpStatus {
    guard(|| {
        let sys = DriveSystem::exact_cancellation(omega0, theta_d)?;
        write(out, "out", boxed(SpSystem(sys)))
    })
}

/// Drive amplitude of `sys`, or NaN for NULL.
///
/// # Safety
/// `sys` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_system_omega_d(sys: *const SpSystem) -> f64 {
    sys.as_ref().map_or(f64::NAN, |s| s.0.omega_d)
}

/// # Safety
/// `sys` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_system_free(sys: *mut SpSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Creates the standard π pulse for `sys` with offset `a` in `[-1, 1]` and
/// phase `phi`; the rise time is `π/(10 ω0)`.
///
/// # Safety
/// `sys` must be a live handle and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_pulse_new(
    sys: *const SpSystem,
    offset: f64,
    phase: f64,
    envelope: SpEnvelope,
    out: *mut *mut SpPulse,
) -> SpStatus {
    guard(|| {
        let sys = &deref(sys, "sys")?.0;
        let spec = pulse_template(sys, envelope.into(), default_rise_time(sys.omega0))?.with_params(offset, phase)?;
        write(out, "out", boxed(SpPulse(spec)))
    })
}

/// Creates a pulse with explicit rise time and duration.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_pulse_custom(
    offset: f64,
    phase: f64,
    rise_time: f64,
    duration: f64,
    envelope: SpEnvelope,
    out: *mut *mut SpPulse,
) -> SpStatus {
    guard(|| {
        let spec = PulseSpec::new(offset, phase, rise_time, duration, envelope.into())?;
        write(out, "out", boxed(SpPulse(spec)))
    })
}

/// Duration of `pulse`, or NaN for NULL.
///
/// # Safety
/// `pulse` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_pulse_duration(pulse: *const SpPulse) -> f64 {
    pulse.as_ref().map_or(f64::NAN, |p| p.0.duration_tpi)
}

/// # Safety
/// `pulse` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_pulse_free(pulse: *mut SpPulse) {
    if !pulse.is_null() {
        drop(Box::from_raw(pulse));
    }
}

/// Converged π-pulse fidelity `|⟨ψ(T)|↓⟩|²` starting from spin up.
///
/// # Safety
/// `sys` and `pulse` must be live handles; `fidelity` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_pulse_fidelity(
    sys: *const SpSystem,
    pulse: *const SpPulse,
    fidelity: *mut f64,
) -> SpStatus {
    guard(|| {
        let f = pulse_fidelity_of(
            &deref(sys, "sys")?.0,
            &deref(pulse, "pulse")?.0,
            &PropagatorConfig::default(),
        )?;
        write(fidelity, "fidelity", f)
    })
}

/// Propagates spin up through `pulse`, keeping `samples` uniform output
/// samples (at least 2).
///
/// # Safety
/// `sys` and `pulse` must be live handles; `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_simulate(
    sys: *const SpSystem,
    pulse: *const SpPulse,
    samples: usize,
    out: *mut *mut SpTrajectory,
) -> SpStatus {
    guard(|| {
        let sys = &deref(sys, "sys")?.0;
        let drive = deref(pulse, "pulse")?.0.drive(sys)?;
        let cfg = PropagatorConfig {
            output_samples: samples,
            ..Default::default()
        };
        cfg.validate()?;
        let traj = propagate(sys, &drive, &SpinState::spin_up(), &cfg)?;
        write(out, "out", boxed(SpTrajectory(traj)))
    })
}

/// Number of samples in `traj`, zero for NULL.
///
/// # Safety
/// `traj` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_trajectory_len(traj: *const SpTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.times.len())
}

/// Final fidelity of `traj`, or NaN for NULL.
///
/// # Safety
/// `traj` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_trajectory_fidelity(traj: *const SpTrajectory) -> f64 {
    traj.as_ref().map_or(f64::NAN, |t| t.0.final_fidelity)
}

/// Time and populations of sample `index`.
///
/// # Safety
/// `traj` must be a live handle; the outputs valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_trajectory_sample(
    traj: *const SpTrajectory,
    index: usize,
    t: *mut f64,
    p_up: *mut f64,
    p_down: *mut f64,
) -> SpStatus {
    guard(|| {
        let traj = &deref(traj, "traj")?.0;
        let n = traj.times.len();
        if index >= n {
            return Err(Error::Contract(format!("sample index {index} out of range for {n} samples")).into());
        }
        let [up, down] = traj.populations[index];
        write(t, "t", traj.times[index])?;
        write(p_up, "p_up", up)?;
        write(p_down, "p_down", down)
    })
}

/// # Safety
/// `traj` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_trajectory_free(traj: *mut SpTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Scans a `phase_n × offset_n` landscape of erf-enveloped π pulses and
/// refines the optimum to `refine_tol`.
///
/// # Safety
/// `sys` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_optimize(
    sys: *const SpSystem,
    phase_n: usize,
    offset_n: usize,
    refine_tol: f64,
    out: *mut SpOptimum,
) -> SpStatus {
    guard(|| {
        let settings = ScanSettings {
            phase_n,
            offset_n,
            refine_tol,
            ..Default::default()
        };
        let (_, r) = optimize(&deref(sys, "sys")?.0, &settings, &PropagatorConfig::default())?;
        write(
            out,
            "out",
            SpOptimum {
                best_phase: r.best_phase,
                best_offset: r.best_offset,
                best_fidelity: r.best_fidelity,
                zero_offset_best_phase: r.zero_offset_best_phase,
                zero_offset_best_fidelity: r.zero_offset_best_fidelity,
            },
        )
    })
}

/// Field per unit current (G/A) of the default spiral antenna at `(x, y, z)`
/// in µm, converged to relative `tol`. Writes three components to `b`.
///
/// # Safety
/// `b` must be valid for writing three doubles.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_spiral_field(x: f64, y: f64, z: f64, tol: f64, b: *mut f64) -> SpStatus {
    guard(|| {
        if b.is_null() {
            return Err(Failure::Null("b"));
        }
        let (s, _) = converged_field(&SpiralGeometry::default(), [x, y, z].into(), tol)?;
        ptr::copy_nonoverlapping(s.b_per_current.as_ptr(), b, 3);
        Ok(())
    })
}

/// Fits a damped sine to `n` samples (times in µs, ascending).
///
/// # Safety
/// `times` and `signal` must point to `n` readable doubles; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn spinpulse_fit_rabi(
    times: *const f64,
    signal: *const f64,
    n: usize,
    out: *mut SpRabiFit,
) -> SpStatus {
    guard(|| {
        if times.is_null() {
            return Err(Failure::Null("times"));
        }
        if signal.is_null() {
            return Err(Failure::Null("signal"));
        }
        let trace = RabiTrace {
            times: std::slice::from_raw_parts(times, n).to_vec(),
            signal: std::slice::from_raw_parts(signal, n).to_vec(),
            current: 0.0,
        };
        let fit = fit_decaying_sine(&trace)?;
        write(
            out,
            "out",
            SpRabiFit {
                rabi_frequency: fit.rabi_frequency,
                frequency_stderr: fit.frequency_stderr,
                decay_time: fit.decay_time.unwrap_or(0.0),
                amplitude: fit.amplitude,
                phase: fit.phase,
                baseline: fit.baseline,
            },
        )
    })
}
