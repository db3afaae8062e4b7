//! Adjoint-gradient optimal control of a π-pulse under bandwidth, boundary
//! and energy constraints, plus offset-sine fitting and a comparison suite.
//!
//! The control is a periodic sample vector `f_0 … f_{N−1}` on a uniform grid
//! over `[0, t_π]` (with `f_N = f_0`), linearly interpolated in time. Every
//! iterate lies in the linear subspace of band-limited signals with `f(0) = 0`
//! and `f'(0) = 0`; since the grid is periodic this pins both ends of the
//! pulse. Steps are projected onto that subspace exactly, so constraints hold
//! at every iterate rather than only at convergence.

mod fit;
mod suite;

pub use fit::{fit_offset_sine, FitOptions, OffsetSineFit};
pub use suite::{compare_suite, default_amplitudes, SuiteOptions, SuiteRow, SuiteTable};

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::io;
use crate::landscape::pi_duration;
use crate::spin::{self, DriveSystem, PropagatorConfig, CF_LARGE, CF_SMALL, GAUSS_NODES};
use crate::su2::{self, Amplitudes};
use crate::waveform::{BandLimit, ControlWaveform};
use crate::{Error, Result};

/// Default spectral cutoff in units of ω0.
pub const DEFAULT_CUTOFF: f64 = 10.7;
/// Default `λ` of the energy penalty `λ ∫ f² dt`.
pub const DEFAULT_ENERGY_WEIGHT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OctProblem {
    pub sys: DriveSystem,
    pub t_pi: f64,
    /// Angular frequency above which the control carries no spectral weight.
    pub spectral_cutoff: f64,
    pub energy_weight: f64,
    pub max_iters: usize,
    /// Stop once an accepted step changes `J` by less than this, relatively.
    pub grad_tol: f64,
    pub samples_per_period: usize,
}

impl OctProblem {
    pub fn new(sys: DriveSystem, t_pi: f64) -> Result<Self> {
        let p = Self {
            sys,
            t_pi,
            spectral_cutoff: DEFAULT_CUTOFF * sys.omega0,
            energy_weight: DEFAULT_ENERGY_WEIGHT,
            max_iters: 500,
            grad_tol: 1e-10,
            samples_per_period: 128,
        };
        p.validate()?;
        Ok(p)
    }

    /// Problem of duration `π/Ωd + 2 dt`.
    pub fn pi_pulse(sys: DriveSystem, dt: f64) -> Result<Self> {
        Self::new(sys, pi_duration(&sys, dt)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.sys.validate()?;
        if !(self.sys.omega_d > 0.0) {
            return Err(Error::domain("optimal control needs omega_d > 0"));
        }
        if !(self.t_pi > 0.0 && self.t_pi.is_finite()) {
            return Err(Error::domain("t_pi must be finite and > 0"));
        }
        if !(self.spectral_cutoff > self.sys.omega0) {
            return Err(Error::domain(format!(
                "spectral cutoff {} must exceed omega0 = {}",
                self.spectral_cutoff, self.sys.omega0
            )));
        }
        if !(self.energy_weight >= 0.0 && self.energy_weight.is_finite()) {
            return Err(Error::domain("energy weight must be finite and >= 0"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::domain("grad_tol must be > 0"));
        }
        if self.samples_per_period < 8 {
            return Err(Error::domain("samples_per_period must be >= 8"));
        }
        let nyquist = PI * self.sample_count() as f64 / self.t_pi;
        if self.spectral_cutoff >= nyquist {
            return Err(Error::domain(format!(
                "spectral cutoff {} is not below the grid Nyquist frequency {nyquist}",
                self.spectral_cutoff
            )));
        }
        Ok(())
    }

    /// Number of periodic samples `N`.
    pub fn sample_count(&self) -> usize {
        let periods = self.t_pi * self.sys.omega0 / TAU;
        ((periods * self.samples_per_period as f64).ceil() as usize).max(16)
    }
}

/// Objective, fidelity and gradient at one control vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub fidelity: f64,
    /// `∂J/∂f_k`, unprojected.
    pub gradient: Vec<f64>,
}

/// The discretized control problem: propagator model, constraint projector
/// and objective.
pub struct ControlModel {
    problem: OctProblem,
    n: usize,
    h: f64,
    band: BandLimit,
    /// Projection of the unit vector at sample 0 onto the band.
    u0: Vec<f64>,
    /// Spectral derivative at `t = 0` as a linear functional (lies in the band).
    d0: Vec<f64>,
    d0_norm2: f64,
    /// Weights of `f_k` and `f_{k+1}` in the two half-step controls.
    weights: [[f64; 2]; 2],
}

impl std::fmt::Debug for ControlModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlModel")
            .field("problem", &self.problem)
            .field("n", &self.n)
            .finish()
    }
}

impl ControlModel {
    pub fn new(problem: &OctProblem) -> Result<Self> {
        problem.validate()?;
        let n = problem.sample_count();
        let h = problem.t_pi / n as f64;
        let band = BandLimit::new(n, problem.t_pi, problem.spectral_cutoff);
        let mut u0 = vec![0.0; n];
        u0[0] = 1.0;
        band.project(&mut u0);
        let omegas = band.kept_positive();
        let d0: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 * h;
                2.0 / n as f64 * omegas.iter().map(|w| w * (w * t).sin()).sum::<f64>()
            })
            .collect();
        let d0_norm2 = d0.iter().map(|x| x * x).sum();
        let [c1, c2] = GAUSS_NODES;
        let weights = [
            [
                CF_LARGE * (1.0 - c1) + CF_SMALL * (1.0 - c2),
                CF_LARGE * c1 + CF_SMALL * c2,
            ],
            [
                CF_SMALL * (1.0 - c1) + CF_LARGE * (1.0 - c2),
                CF_SMALL * c1 + CF_LARGE * c2,
            ],
        ];
        Ok(Self {
            problem: *problem,
            n,
            h,
            band,
            u0,
            d0,
            d0_norm2,
            weights,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Orthogonal projection onto band-limited vectors with zero value and
    /// zero spectral derivative at `t = 0`.
    pub fn project(&self, x: &mut [f64]) {
        self.band.project(x);
        let value = x[0] / self.u0[0];
        let slope = dot(&self.d0, x) / self.d0_norm2;
        for ((xi, u), d) in x.iter_mut().zip(&self.u0).zip(&self.d0) {
            *xi -= value * u + slope * d;
        }
        x[0] = 0.0;
    }

    fn bloch(&self, w: f64) -> [f64; 3] {
        let sys = &self.problem.sys;
        let drive = sys.omega_d * w;
        [drive, 0.0, 0.25 * sys.omega0 + drive * sys.tan_tilt()]
    }

    /// Half-step controls `w_j`, two per interval.
    fn controls(&self, x: &[f64]) -> Vec<f64> {
        let mut w = Vec::with_capacity(2 * self.n);
        for k in 0..self.n {
            let (a, b) = (x[k], x[(k + 1) % self.n]);
            for row in &self.weights {
                w.push(row[0] * a + row[1] * b);
            }
        }
        w
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<Amplitudes>) {
        let w = self.controls(x);
        let mut states = Vec::with_capacity(w.len() + 1);
        let mut psi = up();
        states.push(psi);
        for &wj in &w {
            psi = su2::apply_exp(self.bloch(wj), self.h, psi);
            states.push(psi);
        }
        (w, states)
    }

    /// Fidelity of the linear-interpolated control under one fourth-order
    /// Magnus step per sample interval.
    pub fn fidelity(&self, x: &[f64]) -> f64 {
        let (_, states) = self.forward(x);
        states.last().map_or(0.0, |s| s[1].norm_sqr())
    }

    fn energy(&self, x: &[f64]) -> f64 {
        self.h * x.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.fidelity(x) - self.problem.energy_weight * self.energy(x)
    }

    /// `J` and its gradient from one forward and one backward sweep.
    pub fn evaluate(&self, x: &[f64]) -> Evaluation {
        let (w, states) = self.forward(x);
        let end = states[w.len()];
        let amplitude = end[1];
        let fidelity = amplitude.norm_sqr();
        let sys = &self.problem.sys;
        let db = [sys.omega_d, 0.0, sys.omega_d * sys.tan_tilt()];

        let mut dfdw = vec![0.0; w.len()];
        let mut chi = down();
        for j in (0..w.len()).rev() {
            let b = self.bloch(w[j]);
            let du = su2::exp_derivative(b, db, self.h);
            let moved = su2::mat_vec(&du, states[j]);
            let d_amp = chi[0].conj() * moved[0] + chi[1].conj() * moved[1];
            dfdw[j] = 2.0 * (amplitude.conj() * d_amp).re;
            chi = su2::apply_exp_adjoint(b, self.h, chi);
        }

        let lambda = self.problem.energy_weight;
        let mut gradient: Vec<f64> = x.iter().map(|v| -2.0 * lambda * self.h * v).collect();
        for k in 0..self.n {
            let next = (k + 1) % self.n;
            for (half, row) in self.weights.iter().enumerate() {
                let g = dfdw[2 * k + half];
                gradient[k] += row[0] * g;
                gradient[next] += row[1] * g;
            }
        }
        Evaluation {
            objective: fidelity - lambda * self.energy(x),
            fidelity,
            gradient,
        }
    }

    /// Sampled waveform on `N + 1` points including `t_π`.
    pub fn waveform(&self, x: &[f64]) -> Result<ControlWaveform> {
        let mut values = x.to_vec();
        values.push(x[0]);
        let times = spin::output_grid(self.problem.t_pi, self.n + 1);
        ControlWaveform::new(times, values, true)
    }

    /// Spectral derivative of the control at `t = 0` (equal to that at `t_π`).
    pub fn edge_derivative(&self, x: &[f64]) -> f64 {
        self.band.derivative_at_start(x)
    }

    /// RMS fraction of spectral weight above the cutoff.
    pub fn fraction_above_cutoff(&self, x: &[f64]) -> f64 {
        self.band.fraction_outside(x)
    }

    /// Best zero-offset resonant sine among 16 phases, projected onto the
    /// constraint set.
    pub fn initial_guess(&self) -> Vec<f64> {
        let omega0 = self.problem.sys.omega0;
        let mut best: Option<(f64, Vec<f64>)> = None;
        for p in 0..16 {
            let phi = TAU * p as f64 / 16.0;
            let mut x: Vec<f64> = (0..self.n).map(|k| (omega0 * k as f64 * self.h + phi).sin()).collect();
            self.project(&mut x);
            let f = self.fidelity(&x);
            if best.as_ref().is_none_or(|(bf, _)| f > *bf) {
                best = Some((f, x));
            }
        }
        best.map(|(_, x)| x).unwrap_or_else(|| vec![0.0; self.n])
    }
}

fn up() -> Amplitudes {
    [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
}

fn down() -> Amplitudes {
    [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub fidelity: f64,
    pub peak_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OctResult {
    /// Unconstrained in amplitude; `t_π` repeats the value at 0.
    pub waveform: ControlWaveform,
    /// Fidelity of `waveform` from the converged propagator.
    pub fidelity: f64,
    /// Fidelity of the optimizer's own discretization.
    pub model_fidelity: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `max |f|`, in units of Ωd.
    pub peak_amplitude: f64,
    pub log: Vec<IterationRecord>,
}

impl OctResult {
    pub fn write_log_csv<W: Write>(&self, out: W, meta: &[(String, String)]) -> Result<()> {
        io::write_csv(
            out,
            meta,
            &["iteration", "objective", "fidelity", "peak_amplitude"],
            self.log
                .iter()
                .map(|r| vec![r.iteration as f64, r.objective, r.fidelity, r.peak_amplitude]),
        )
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
const MAX_FAILED_SEARCHES: usize = 10;

/// Maximizes `J = F − λ ∫ f² dt` from the default initial guess.
pub fn solve(problem: &OctProblem, cfg: &PropagatorConfig) -> Result<OctResult> {
    let model = ControlModel::new(problem)?;
    let x0 = model.initial_guess();
    ascend(&model, x0, cfg)
}

/// Projected Polak–Ribière conjugate-gradient ascent with Armijo
/// backtracking, starting from `x0` (projected first).
pub fn solve_from(model: &ControlModel, mut x: Vec<f64>, cfg: &PropagatorConfig) -> Result<OctResult> {
    if x.len() != model.n {
        return Err(Error::contract(format!(
            "initial control has {} samples, the problem needs {}",
            x.len(),
            model.n
        )));
    }
    model.project(&mut x);
    ascend(model, x, cfg)
}

fn ascend(model: &ControlModel, mut x: Vec<f64>, cfg: &PropagatorConfig) -> Result<OctResult> {
    let problem = &model.problem;

    let mut eval = model.evaluate(&x);
    let mut log = vec![IterationRecord {
        iteration: 0,
        objective: eval.objective,
        fidelity: eval.fidelity,
        peak_amplitude: peak(&x),
    }];
    let mut grad = eval.gradient.clone();
    model.project(&mut grad);
    let mut direction = grad.clone();
    let mut step = 0.1 / peak(&direction).max(1e-300);
    let mut failures = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < problem.max_iters {
        iterations += 1;
        let mut slope = dot(&grad, &direction);
        if !(slope > 0.0) {
            direction.clone_from(&grad);
            slope = dot(&grad, &direction);
        }
        if slope == 0.0 {
            converged = true;
            break;
        }
        let mut alpha = step * 4.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(&direction).map(|(a, d)| a + alpha * d).collect();
            let j = model.objective(&trial);
            if j >= eval.objective + ARMIJO * alpha * slope {
                accepted = Some(trial);
                break;
            }
            alpha *= 0.5;
        }
        let Some(mut trial) = accepted else {
            failures += 1;
            direction.clone_from(&grad);
            step *= 1e-3;
            if failures >= MAX_FAILED_SEARCHES {
                break;
            }
            continue;
        };
        failures = 0;
        step = alpha;
        model.project(&mut trial);
        let next = model.evaluate(&trial);
        let change = (next.objective - eval.objective).abs() / eval.objective.abs().max(1e-12);

        let mut next_grad = next.gradient.clone();
        model.project(&mut next_grad);
        let beta = {
            let num: f64 = next_grad.iter().zip(&grad).map(|(g, p)| g * (g - p)).sum();
            (num / dot(&grad, &grad)).max(0.0)
        };
        for (d, g) in direction.iter_mut().zip(&next_grad) {
            *d = g + beta * *d;
        }
        x = trial;
        eval = next;
        grad = next_grad;
        log.push(IterationRecord {
            iteration: iterations,
            objective: eval.objective,
            fidelity: eval.fidelity,
            peak_amplitude: peak(&x),
        });
        if change < problem.grad_tol {
            converged = true;
            break;
        }
    }

    let waveform = model.waveform(&x)?;
    let fidelity = spin::pi_pulse_fidelity(&problem.sys, &waveform, cfg)?;
    Ok(OctResult {
        peak_amplitude: waveform.peak(),
        waveform,
        fidelity,
        model_fidelity: eval.fidelity,
        objective: eval.objective,
        iterations,
        converged,
        log,
    })
}

/// Relative discrepancy `|adjoint − fd| / max(|adjoint|, |fd|)` of the
/// gradient against central differences of `J`, per requested coordinate.
pub fn gradient_check(model: &ControlModel, x: &[f64], coordinates: &[usize], step: f64) -> Vec<f64> {
    let analytic = model.evaluate(x).gradient;
    coordinates
        .iter()
        .map(|&k| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[k] += step;
            minus[k] -= step;
            let fd = (model.objective(&plus) - model.objective(&minus)) / (2.0 * step);
            let scale = analytic[k].abs().max(fd.abs());
            if scale == 0.0 {
                0.0
            } else {
                (analytic[k] - fd).abs() / scale
            }
        })
        .collect()
}

/// Peak window accepted by [`autotune_energy_weight`].
pub const PEAK_WINDOW: (f64, f64) = (0.95, 1.10);
const TUNE_STEPS: usize = 20;

/// Finds `λ` such that the solved waveform peaks within [`PEAK_WINDOW`].
///
/// Starts from `λ = 0` and the problem's own weight (raised tenfold until it
/// over-penalizes), then bisects geometrically. Every probe counts toward the
/// budget of 20 solves.
pub fn autotune_energy_weight(problem: &OctProblem, cfg: &PropagatorConfig) -> Result<f64> {
    problem.validate()?;
    let (lo_peak_target, hi_peak_target) = PEAK_WINDOW;
    let peak_at = |lambda: f64| -> Result<f64> {
        let p = OctProblem {
            energy_weight: lambda,
            ..*problem
        };
        Ok(solve(&p, cfg)?.peak_amplitude)
    };
    let in_window = |p: f64| (lo_peak_target..=hi_peak_target).contains(&p);

    let mut budget = TUNE_STEPS;
    let mut lo = 0.0;
    let mut lo_peak = peak_at(lo)?;
    budget -= 1;
    if in_window(lo_peak) {
        return Ok(lo);
    }
    if lo_peak < lo_peak_target {
        return Err(Error::Tuning {
            lo,
            hi: lo,
            peak_lo: lo_peak,
            peak_hi: lo_peak,
        });
    }
    let mut hi = problem.energy_weight.max(1e-6);
    let mut hi_peak = peak_at(hi)?;
    budget -= 1;
    while hi_peak > hi_peak_target && budget > 0 {
        if in_window(hi_peak) {
            return Ok(hi);
        }
        lo = hi;
        lo_peak = hi_peak;
        hi *= 10.0;
        hi_peak = peak_at(hi)?;
        budget -= 1;
    }
    if in_window(hi_peak) {
        return Ok(hi);
    }
    while budget > 0 {
        let mid = if lo == 0.0 { hi * 0.1 } else { (lo * hi).sqrt() };
        let p = peak_at(mid)?;
        budget -= 1;
        if in_window(p) {
            return Ok(mid);
        }
        if p > hi_peak_target {
            lo = mid;
            lo_peak = p;
        } else {
            hi = mid;
            hi_peak = p;
        }
    }
    Err(Error::Tuning {
        lo,
        hi,
        peak_lo: lo_peak,
        peak_hi: hi_peak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{evolve_fixed, Integrator, SpinState};
    use crate::waveform::default_rise_time;

    fn problem(omega_d: f64) -> OctProblem {
        let sys = DriveSystem::new(1.0, omega_d, 35.3f64.to_radians()).unwrap();
        OctProblem::pi_pulse(sys, default_rise_time(1.0)).unwrap()
    }

    #[test]
    fn model_matches_the_propagator_on_the_same_grid() {
        let p = problem(0.5);
        let model = ControlModel::new(&p).unwrap();
        let x = model.initial_guess();
        let w = model.waveform(&x).unwrap();
        let end = evolve_fixed(
            &p.sys,
            &w,
            &SpinState::spin_up(),
            model.sample_count(),
            Integrator::Magnus4,
        );
        assert!((end.populations()[1] - model.fidelity(&x)).abs() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_pins_the_edges() {
        let model = ControlModel::new(&problem(0.3)).unwrap();
        let mut x: Vec<f64> = (0..model.sample_count())
            .map(|k| ((k * 7919) % 101) as f64 / 50.0 - 1.0)
            .collect();
        model.project(&mut x);
        let once = x.clone();
        model.project(&mut x);
        let diff = once.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-13);
        assert_eq!(x[0], 0.0);
        assert!(model.edge_derivative(&x).abs() < 1e-12);
        assert!(model.fraction_above_cutoff(&x) < 1e-12);
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let model = ControlModel::new(&problem(0.5)).unwrap();
        let x = model.initial_guess();
        let n = model.sample_count();
        let coords = [1, n / 5, n / 3, n / 2, n - 2];
        for err in gradient_check(&model, &x, &coords, 1e-6) {
            assert!(err < 1e-6, "{err}");
        }
    }

    #[test]
    fn zero_iterations_return_the_initial_guess() {
        let mut p = problem(0.5);
        p.max_iters = 0;
        let model = ControlModel::new(&p).unwrap();
        let x0 = model.initial_guess();
        let r = solve(&p, &PropagatorConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(&r.waveform.values[..x0.len()], &x0[..]);
        assert_eq!(r.model_fidelity, model.fidelity(&x0));
        assert_eq!(r.log.len(), 1);
    }

    #[test]
    fn ascent_never_decreases_the_objective() {
        let mut p = problem(0.25);
        p.max_iters = 40;
        let r = solve(&p, &PropagatorConfig::default()).unwrap();
        assert!(r.log.windows(2).all(|w| w[1].objective >= w[0].objective));
        assert!(r.fidelity > r.log[0].fidelity);
    }

    #[test]
    fn invalid_cutoff_is_rejected() {
        let mut p = problem(0.5);
        p.spectral_cutoff = 0.5;
        assert!(matches!(ControlModel::new(&p), Err(Error::Domain(_))));
    }
}
