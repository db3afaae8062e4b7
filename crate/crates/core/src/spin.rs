//! The driven two-level system and its time evolution.
//!
//! The Hamiltonian (ħ = 1) is
//!
//! ```text
//! H(t) = (ω0/2) σz + Ωd f(t) (σx + tan θd σz)
//! ```
//!
//! with `|↑⟩` the `+1` eigenstate of `σz`. Evolution is integrated with
//! exact 2×2 exponentials on a uniform step grid that is halved until the
//! final π-pulse fidelity stops changing.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::su2::{self, Amplitudes};
use crate::{Error, Result};

/// Tolerance on `‖ψ‖ = 1` accepted for initial states.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Parameters of the driven two-level problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSystem {
    /// Level splitting ω0 (angular).
    pub omega0: f64,
    /// Peak drive amplitude Ωd (angular).
    pub omega_d: f64,
    /// Tilt of the drive field away from the transverse axis, radians.
    pub theta_d: f64,
}

impl DriveSystem {
    pub fn new(omega0: f64, omega_d: f64, theta_d: f64) -> Result<Self> {
        let sys = Self {
            omega0,
            omega_d,
            theta_d,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// The amplitude at which a constant `f = −1` cancels the longitudinal
    /// splitting exactly, `Ωd = ω0 / (2 tan θd)`.
    pub fn exact_cancellation(omega0: f64, theta_d: f64) -> Result<Self> {
        if !(theta_d > 0.0) {
            return Err(Error::domain("exact cancellation needs a strictly positive tilt"));
        }
        Self::new(omega0, omega0 / (2.0 * theta_d.tan()), theta_d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::domain(format!(
                "omega0 must be finite and > 0, got {}",
                self.omega0
            )));
        }
        if !(self.omega_d.is_finite() && self.omega_d >= 0.0) {
            return Err(Error::domain(format!(
                "omega_d must be finite and >= 0, got {}",
                self.omega_d
            )));
        }
        if !(self.theta_d.is_finite() && self.theta_d >= 0.0 && self.theta_d < PI / 2.0) {
            return Err(Error::domain(format!(
                "theta_d must lie in [0, pi/2), got {}",
                self.theta_d
            )));
        }
        Ok(())
    }

    pub fn with_amplitude(&self, omega_d: f64) -> Result<Self> {
        Self::new(self.omega0, omega_d, self.theta_d)
    }

    pub fn tan_tilt(&self) -> f64 {
        self.theta_d.tan()
    }

    /// Bloch vector `b` with `H = b·σ` for drive value `f`.
    #[inline]
    pub fn bloch_vector(&self, f: f64) -> [f64; 3] {
        let drive = self.omega_d * f;
        [drive, 0.0, 0.5 * self.omega0 + drive * self.tan_tilt()]
    }

    /// `min(2π/ω0, 2π/(Ωd (1 + tan θd)))`, the fastest dynamical timescale.
    pub fn shortest_period(&self) -> f64 {
        let carrier = 2.0 * PI / self.omega0;
        let rate = self.omega_d * (1.0 + self.tan_tilt());
        if rate > 0.0 {
            carrier.min(2.0 * PI / rate)
        } else {
            carrier
        }
    }
}

/// `(ω0/2)σz + Ωd f (σx + tan θd σz)`.
pub fn hamiltonian_at(sys: &DriveSystem, f_value: f64) -> Result<Matrix2<Complex64>> {
    sys.validate()?;
    if !f_value.is_finite() {
        return Err(Error::domain("drive value must be finite"));
    }
    let b = sys.bloch_vector(f_value);
    let m = su2::pauli_dot(b);
    Ok(Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]))
}

/// Pure state `⟨↑|ψ⟩ |↑⟩ + ⟨↓|ψ⟩ |↓⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinState {
    pub up: Complex64,
    pub down: Complex64,
}

impl SpinState {
    pub fn new(up: Complex64, down: Complex64) -> Result<Self> {
        let s = Self { up, down };
        if (s.norm() - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::contract(format!(
                "state is not normalized (norm = {:.16})",
                s.norm()
            )));
        }
        Ok(s)
    }

    pub fn spin_up() -> Self {
        Self {
            up: Complex64::new(1.0, 0.0),
            down: Complex64::new(0.0, 0.0),
        }
    }

    pub fn spin_down() -> Self {
        Self {
            up: Complex64::new(0.0, 0.0),
            down: Complex64::new(1.0, 0.0),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.up.norm_sqr() + self.down.norm_sqr()).sqrt()
    }

    /// `(|⟨↑|ψ⟩|², |⟨↓|ψ⟩|²)`.
    pub fn populations(&self) -> [f64; 2] {
        [self.up.norm_sqr(), self.down.norm_sqr()]
    }

    pub fn conj(&self) -> Self {
        Self {
            up: self.up.conj(),
            down: self.down.conj(),
        }
    }

    /// `|⟨other|self⟩|²`, insensitive to global phase.
    pub fn overlap(&self, other: &SpinState) -> f64 {
        (other.up.conj() * self.up + other.down.conj() * self.down).norm_sqr()
    }

    pub(crate) fn amplitudes(&self) -> Amplitudes {
        [self.up, self.down]
    }

    pub(crate) fn from_amplitudes(a: Amplitudes) -> Self {
        Self { up: a[0], down: a[1] }
    }
}

/// A drive waveform `f(t)` on `[0, duration]`.
pub trait Drive: Sync {
    fn duration(&self) -> f64;

    fn value(&self, t: f64) -> f64;

    /// Number of equal intervals on which `f` is smooth. Integration steps
    /// are aligned to these knots.
    fn segments(&self) -> usize {
        1
    }
}

/// A drive given by a closure.
pub struct FnDrive<F> {
    duration: f64,
    f: F,
}

impl<F: Fn(f64) -> f64 + Sync> FnDrive<F> {
    pub fn new(duration: f64, f: F) -> Self {
        Self { duration, f }
    }
}

impl<F: Fn(f64) -> f64 + Sync> Drive for FnDrive<F> {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn value(&self, t: f64) -> f64 {
        (self.f)(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// One exponential per step, drive sampled at the step midpoint.
    Midpoint,
    /// Fourth-order commutator-free Magnus: two exponentials per step built
    /// from the drive at the two Gauss–Legendre nodes.
    Magnus4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagatorConfig {
    /// Initial step as a fraction of [`DriveSystem::shortest_period`].
    pub base_step: f64,
    /// Largest accepted change of the final fidelity between two successive
    /// step halvings (fidelities are bounded by 1, so this is also relative).
    pub convergence_tol: f64,
    pub max_refinements: usize,
    /// Uniform output samples on `[0, duration]`, independent of the steps.
    pub output_samples: usize,
    pub integrator: Integrator,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            base_step: 1.0 / 200.0,
            convergence_tol: 1e-10,
            max_refinements: 16,
            output_samples: 1000,
            integrator: Integrator::Magnus4,
        }
    }
}

impl PropagatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_step > 0.0 && self.base_step.is_finite()) {
            return Err(Error::domain("base_step must be > 0"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::domain("convergence_tol must be > 0"));
        }
        if self.max_refinements < 1 {
            return Err(Error::domain("max_refinements must be >= 1"));
        }
        if self.output_samples < 2 {
            return Err(Error::domain("output_samples must be >= 2"));
        }
        Ok(())
    }
}

/// Sampled evolution of a pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpinState>,
    /// `[p_up, p_down]` per sample.
    pub populations: Vec<[f64; 2]>,
    /// `|⟨ψ(t_final)|↓⟩|²`.
    pub final_fidelity: f64,
    /// Integration steps used by the converged pass.
    pub steps: usize,
}

impl Trajectory {
    fn from_states(times: Vec<f64>, states: Vec<SpinState>, steps: usize) -> Self {
        let populations = states.iter().map(SpinState::populations).collect();
        let final_fidelity = states.last().map_or(0.0, |s| s.populations()[1]);
        Self {
            times,
            states,
            populations,
            final_fidelity: final_fidelity.clamp(0.0, 1.0),
            steps,
        }
    }

    pub fn final_state(&self) -> Option<&SpinState> {
        self.states.last()
    }
}

/// `|⟨ψ(t_final)|↓⟩|²`.
pub fn pulse_fidelity(traj: &Trajectory) -> f64 {
    traj.states.last().map_or(0.0, |s| s.populations()[1].clamp(0.0, 1.0))
}

const GAUSS_LO: f64 = 0.5 - 0.288_675_134_594_812_9; // 1/2 − √3/6
const GAUSS_HI: f64 = 0.5 + 0.288_675_134_594_812_9;
/// Commutator-free Magnus weights: (3 − 2√3)/12 and (3 + 2√3)/12.
pub(crate) const CF_SMALL: f64 = 0.25 - 0.288_675_134_594_812_9;
pub(crate) const CF_LARGE: f64 = 0.25 + 0.288_675_134_594_812_9;
pub(crate) const GAUSS_NODES: [f64; 2] = [GAUSS_LO, GAUSS_HI];

#[inline]
fn combine(w1: f64, b1: [f64; 3], w2: f64, b2: [f64; 3]) -> [f64; 3] {
    [
        w1 * b1[0] + w2 * b2[0],
        w1 * b1[1] + w2 * b2[1],
        w1 * b1[2] + w2 * b2[2],
    ]
}

#[inline]
fn step(sys: &DriveSystem, drive: &dyn Drive, integrator: Integrator, t: f64, h: f64, psi: Amplitudes) -> Amplitudes {
    match integrator {
        Integrator::Midpoint => su2::apply_exp(sys.bloch_vector(drive.value(t + 0.5 * h)), h, psi),
        Integrator::Magnus4 => {
            let b1 = sys.bloch_vector(drive.value(t + GAUSS_LO * h));
            let b2 = sys.bloch_vector(drive.value(t + GAUSS_HI * h));
            let first = combine(CF_LARGE, b1, CF_SMALL, b2);
            let second = combine(CF_SMALL, b1, CF_LARGE, b2);
            su2::apply_exp(second, h, su2::apply_exp(first, h, psi))
        }
    }
}

/// Evolves `state0` over the whole drive with exactly `n_steps` uniform steps.
pub fn evolve_fixed(
    sys: &DriveSystem,
    drive: &dyn Drive,
    state0: &SpinState,
    n_steps: usize,
    integrator: Integrator,
) -> SpinState {
    let (end, _) = run_pass(sys, drive, state0.amplitudes(), n_steps, integrator, None);
    SpinState::from_amplitudes(end)
}

/// One integration pass. When `outputs` is given, states at those times are
/// recorded from partial steps taken on copies, so the main integration grid
/// and therefore the final state do not depend on the output sampling.
fn run_pass(
    sys: &DriveSystem,
    drive: &dyn Drive,
    psi0: Amplitudes,
    n_steps: usize,
    integrator: Integrator,
    outputs: Option<&[f64]>,
) -> (Amplitudes, Vec<SpinState>) {
    let duration = drive.duration();
    let h = duration / n_steps as f64;
    let mut psi = psi0;
    let mut recorded = Vec::with_capacity(outputs.map_or(0, <[f64]>::len));
    let mut next = 0usize;
    let last_output = outputs.map_or(0, |o| o.len().saturating_sub(1));
    let snap = 1e-13 * duration;

    for k in 0..n_steps {
        let t = k as f64 * h;
        let t_next = if k + 1 == n_steps { duration } else { (k + 1) as f64 * h };
        if let Some(out) = outputs {
            while next < last_output && out[next] < t_next - snap {
                let dt = out[next] - t;
                if dt <= snap {
                    recorded.push(SpinState::from_amplitudes(psi));
                } else {
                    let partial = step(sys, drive, integrator, t, dt, psi);
                    recorded.push(SpinState::from_amplitudes(partial));
                }
                next += 1;
            }
        }
        psi = step(sys, drive, integrator, t, t_next - t, psi);
    }
    if let Some(out) = outputs {
        while recorded.len() < out.len() {
            recorded.push(SpinState::from_amplitudes(psi));
        }
    }
    (psi, recorded)
}

fn base_steps(sys: &DriveSystem, drive: &dyn Drive, cfg: &PropagatorConfig) -> usize {
    let dt = cfg.base_step * sys.shortest_period();
    let raw = (drive.duration() / dt).ceil().max(1.0) as usize;
    let seg = drive.segments().max(1);
    seg * raw.div_ceil(seg)
}

fn check_inputs(sys: &DriveSystem, drive: &dyn Drive, state0: &SpinState, cfg: &PropagatorConfig) -> Result<()> {
    sys.validate()?;
    cfg.validate()?;
    if !(drive.duration() > 0.0 && drive.duration().is_finite()) {
        return Err(Error::domain("drive duration must be finite and > 0"));
    }
    if (state0.norm() - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::contract(format!(
            "initial state is not normalized (norm = {:.16})",
            state0.norm()
        )));
    }
    Ok(())
}

fn converge(
    sys: &DriveSystem,
    drive: &dyn Drive,
    state0: &SpinState,
    cfg: &PropagatorConfig,
    outputs: Option<&[f64]>,
) -> Result<(Amplitudes, Vec<SpinState>, usize)> {
    check_inputs(sys, drive, state0, cfg)?;
    let n0 = base_steps(sys, drive, cfg);
    let psi0 = state0.amplitudes();
    let (psi, _) = run_pass(sys, drive, psi0, n0, cfg.integrator, None);
    let mut previous = psi[1].norm_sqr();
    let mut refinements = 1;
    loop {
        let n = n0 << refinements;
        let (psi, rec) = run_pass(sys, drive, psi0, n, cfg.integrator, outputs);
        let fid = psi[1].norm_sqr();
        if (fid - previous).abs() < cfg.convergence_tol {
            return Ok((psi, rec, n));
        }
        if refinements == cfg.max_refinements {
            return Err(Error::Convergence {
                refinements,
                previous,
                last: fid,
            });
        }
        previous = fid;
        refinements += 1;
    }
}

/// Uniform output grid with exact endpoints.
pub fn output_grid(duration: f64, samples: usize) -> Vec<f64> {
    let last = samples - 1;
    (0..samples)
        .map(|j| {
            if j == last {
                duration
            } else {
                duration * j as f64 / last as f64
            }
        })
        .collect()
}

/// Integrates `i dψ/dt = H(t) ψ` from `state0` over the drive.
///
/// The step is halved from the configured base step until two successive
/// final fidelities agree within `convergence_tol`.
pub fn propagate(
    sys: &DriveSystem,
    drive: &dyn Drive,
    state0: &SpinState,
    cfg: &PropagatorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let times = output_grid(drive.duration(), cfg.output_samples);
    let (_, states, steps) = converge(sys, drive, state0, cfg, Some(&times))?;
    Ok(Trajectory::from_states(times, states, steps))
}

/// Converged final state only; identical to the last sample of
/// [`propagate`] for the same inputs.
pub fn propagate_final(
    sys: &DriveSystem,
    drive: &dyn Drive,
    state0: &SpinState,
    cfg: &PropagatorConfig,
) -> Result<(SpinState, usize)> {
    let (psi, _, steps) = converge(sys, drive, state0, cfg, None)?;
    Ok((SpinState::from_amplitudes(psi), steps))
}

/// π-pulse fidelity `|⟨ψ(T)|↓⟩|²` starting from `|↑⟩`.
pub fn pi_pulse_fidelity(sys: &DriveSystem, drive: &dyn Drive, cfg: &PropagatorConfig) -> Result<f64> {
    let (end, _) = propagate_final(sys, drive, &SpinState::spin_up(), cfg)?;
    Ok(end.populations()[1].clamp(0.0, 1.0))
}

/// Rotating-wave evolution from `|↑⟩` under a resonant sine of phase `phase`.
///
/// In the frame rotating at ω0 the Hamiltonian is
/// `(Ωd/2)(sin φ σx − cos φ σy)`; the returned states are transformed back
/// to the laboratory frame with `exp(−i ω0 t σz / 2)`.
pub fn rwa_reference(sys: &DriveSystem, phase: f64, duration: f64, samples: usize) -> Result<Trajectory> {
    sys.validate()?;
    if !(sys.omega_d > 0.0) {
        return Err(Error::domain("the rotating-wave reference needs omega_d > 0"));
    }
    if !(duration > 0.0) || samples < 2 {
        return Err(Error::domain("duration must be > 0 and samples >= 2"));
    }
    let times = output_grid(duration, samples);
    let axis = [phase.sin(), -phase.cos(), 0.0];
    let states = times
        .iter()
        .map(|&t| {
            let rotating = su2::apply_exp(axis, 0.5 * sys.omega_d * t, SpinState::spin_up().amplitudes());
            let lab = su2::apply_exp([0.0, 0.0, 0.5 * sys.omega0], t, rotating);
            SpinState::from_amplitudes(lab)
        })
        .collect();
    Ok(Trajectory::from_states(times, states, 0))
}
