//! Three-way comparison across drive amplitudes: optimal control, its
//! offset-sine fit, and the directly optimized offset-sine.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    fit_offset_sine, solve, ControlModel, FitOptions, OctProblem, OffsetSineFit, DEFAULT_CUTOFF, DEFAULT_ENERGY_WEIGHT,
};
use crate::io;
use crate::landscape::{optimize, OptimumReport, ScanSettings};
use crate::spin::{DriveSystem, PropagatorConfig};
use crate::waveform::{default_rise_time, offset_sine, ControlWaveform};
use crate::{Error, Result};

/// `{1/10, 1/6, 1/4, 1/3, 1/2, 1} · ω0`.
pub fn default_amplitudes(omega0: f64) -> Vec<f64> {
    [10.0, 6.0, 4.0, 3.0, 2.0, 1.0].iter().map(|d| omega0 / d).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteOptions {
    /// `None` means `π/(10 ω0)`.
    pub rise_time: Option<f64>,
    /// Cutoff in units of ω0.
    pub cutoff_ratio: f64,
    pub energy_weight: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub samples_per_period: usize,
    pub scan: ScanSettings,
    pub fit: FitOptions,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            rise_time: None,
            cutoff_ratio: DEFAULT_CUTOFF,
            energy_weight: DEFAULT_ENERGY_WEIGHT,
            max_iters: 500,
            grad_tol: 1e-10,
            samples_per_period: 128,
            scan: ScanSettings::default(),
            fit: FitOptions {
                fit_scale: true,
                ..FitOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub omega_d: f64,
    pub t_pi: Option<f64>,
    pub oct_infidelity: Option<f64>,
    pub oct_converged: Option<bool>,
    pub oct_iterations: Option<usize>,
    pub oct_peak_amplitude: Option<f64>,
    /// RMS spectral fraction of the OCT control above the cutoff.
    pub oct_fraction_above_cutoff: Option<f64>,
    /// Largest of `|f(0)|`, `|f(t_π)|` and the spectral `|f'(0)|`.
    pub oct_edge_residual: Option<f64>,
    pub fit: Option<OffsetSineFit>,
    pub fit_infidelity: Option<f64>,
    pub offset_sine: Option<OptimumReport>,
    pub offset_sine_infidelity: Option<f64>,
    pub errors: Vec<String>,
}

impl SuiteRow {
    pub fn is_complete(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Waveforms behind one row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteWaveforms {
    pub oct: Option<ControlWaveform>,
    pub fit: Option<ControlWaveform>,
    pub offset_sine: Option<ControlWaveform>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteTable {
    pub omega0: f64,
    pub theta_d: f64,
    pub rows: Vec<SuiteRow>,
    #[serde(skip)]
    pub waveforms: Vec<SuiteWaveforms>,
}

const CSV_COLUMNS: [&str; 14] = [
    "omega_d",
    "t_pi",
    "oct_infidelity",
    "fit_infidelity",
    "offset_sine_infidelity",
    "oct_converged",
    "oct_iterations",
    "oct_peak_amplitude",
    "fit_offset",
    "fit_phase",
    "fit_scale",
    "fit_residual_rms",
    "best_offset",
    "best_phase",
];

impl SuiteTable {
    /// Missing entries are written as `NaN`; flags as 0/1.
    pub fn write_csv<W: Write>(&self, out: W, meta: &[(String, String)]) -> Result<()> {
        let nan = f64::NAN;
        let rows = self.rows.iter().map(|r| {
            vec![
                r.omega_d,
                r.t_pi.unwrap_or(nan),
                r.oct_infidelity.unwrap_or(nan),
                r.fit_infidelity.unwrap_or(nan),
                r.offset_sine_infidelity.unwrap_or(nan),
                r.oct_converged.map_or(nan, |c| f64::from(u8::from(c))),
                r.oct_iterations.map_or(nan, |n| n as f64),
                r.oct_peak_amplitude.unwrap_or(nan),
                r.fit.map_or(nan, |f| f.offset_a),
                r.fit.map_or(nan, |f| f.phase_phi),
                r.fit.and_then(|f| f.amplitude_scale).unwrap_or(nan),
                r.fit.map_or(nan, |f| f.residual_rms),
                r.offset_sine.map_or(nan, |o| o.best_offset),
                r.offset_sine.map_or(nan, |o| o.best_phase),
            ]
        });
        io::write_csv(out, meta, &CSV_COLUMNS, rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Runs every amplitude independently (in parallel). A failing stage is
/// recorded in its row's `errors` and leaves the other rows untouched.
pub fn compare_suite(
    amplitudes: &[f64],
    sys_base: &DriveSystem,
    opts: &SuiteOptions,
    cfg: &PropagatorConfig,
) -> Result<SuiteTable> {
    if amplitudes.is_empty() {
        return Err(Error::domain("the amplitude suite is empty"));
    }
    sys_base.validate()?;
    cfg.validate()?;
    let (rows, waveforms) = amplitudes
        .par_iter()
        .map(|&omega_d| suite_row(omega_d, sys_base, opts, cfg))
        .unzip();
    Ok(SuiteTable {
        omega0: sys_base.omega0,
        theta_d: sys_base.theta_d,
        rows,
        waveforms,
    })
}

fn suite_row(
    omega_d: f64,
    base: &DriveSystem,
    opts: &SuiteOptions,
    cfg: &PropagatorConfig,
) -> (SuiteRow, SuiteWaveforms) {
    let dt = opts.rise_time.unwrap_or_else(|| default_rise_time(base.omega0));
    let mut row = SuiteRow {
        omega_d,
        t_pi: None,
        oct_infidelity: None,
        oct_converged: None,
        oct_iterations: None,
        oct_peak_amplitude: None,
        oct_fraction_above_cutoff: None,
        oct_edge_residual: None,
        fit: None,
        fit_infidelity: None,
        offset_sine: None,
        offset_sine_infidelity: None,
        errors: Vec::new(),
    };
    let mut waves = SuiteWaveforms::default();
    let sys = match base.with_amplitude(omega_d) {
        Ok(s) => s,
        Err(e) => {
            row.errors.push(format!("system: {e}"));
            return (row, waves);
        }
    };
    let scan = ScanSettings {
        rise_time: Some(dt),
        ..opts.scan
    };
    let template = match scan.template(&sys) {
        Ok(t) => t,
        Err(e) => {
            row.errors.push(format!("template: {e}"));
            return (row, waves);
        }
    };
    row.t_pi = Some(template.duration_tpi);

    let oct = OctProblem::pi_pulse(sys, dt).and_then(|p| {
        let p = OctProblem {
            spectral_cutoff: opts.cutoff_ratio * sys.omega0,
            energy_weight: opts.energy_weight,
            max_iters: opts.max_iters,
            grad_tol: opts.grad_tol,
            samples_per_period: opts.samples_per_period,
            ..p
        };
        let model = ControlModel::new(&p)?;
        let result = solve(&p, cfg)?;
        Ok((model, result))
    });
    match oct {
        Ok((model, result)) => {
            let x = &result.waveform.values[..model.sample_count()];
            let last = *result.waveform.values.last().unwrap_or(&0.0);
            row.oct_infidelity = Some(1.0 - result.fidelity);
            row.oct_converged = Some(result.converged);
            row.oct_iterations = Some(result.iterations);
            row.oct_peak_amplitude = Some(result.peak_amplitude);
            row.oct_fraction_above_cutoff = Some(model.fraction_above_cutoff(x));
            row.oct_edge_residual = Some(x[0].abs().max(last.abs()).max(model.edge_derivative(x).abs()));
            match fit_offset_sine(&result.waveform, &sys, &template, &opts.fit, cfg) {
                Ok(fit) => {
                    row.fit_infidelity = Some(1.0 - fit.fit_fidelity);
                    let n = result.waveform.len();
                    waves.fit = fit
                        .system(&sys)
                        .and_then(|s| offset_sine(&fit.spec, &s, n))
                        .ok()
                        .map(|mut w| {
                            let scale = fit.amplitude_scale.unwrap_or(1.0);
                            w.values.iter_mut().for_each(|v| *v *= scale);
                            w.unconstrained = true;
                            w
                        });
                    row.fit = Some(fit);
                }
                Err(e) => row.errors.push(format!("fit: {e}")),
            }
            waves.oct = Some(result.waveform);
        }
        Err(e) => row.errors.push(format!("oct: {e}")),
    }

    match optimize(&sys, &scan, cfg) {
        Ok((_, report)) => {
            row.offset_sine_infidelity = Some(1.0 - report.best_fidelity);
            row.offset_sine = Some(report);
            let samples = waves.oct.as_ref().map_or(1025, ControlWaveform::len);
            waves.offset_sine = template
                .with_params(report.best_offset, report.best_phase)
                .and_then(|spec| offset_sine(&spec, &sys, samples))
                .ok();
        }
        Err(e) => row.errors.push(format!("offset-sine: {e}")),
    }
    (row, waves)
}
