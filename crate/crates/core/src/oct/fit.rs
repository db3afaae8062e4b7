//! Least-squares fit of the offset-sine family to a sampled waveform.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::landscape::{offset_grid, phase_grid, pulse_fidelity_of};
use crate::search::{self, Bound};
use crate::spin::{Drive, DriveSystem, PropagatorConfig};
use crate::waveform::{wrap_phase, ControlWaveform, PulseSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Also fit an overall amplitude factor (profiled out in closed form).
    pub fit_scale: bool,
    pub phase_n: usize,
    pub offset_n: usize,
    /// Pattern-search stopping step in `(φ, a)`.
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            fit_scale: false,
            phase_n: 64,
            offset_n: 41,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetSineFit {
    pub offset_a: f64,
    pub phase_phi: f64,
    pub amplitude_scale: Option<f64>,
    pub residual_rms: f64,
    /// π-pulse fidelity of the fitted waveform itself (drive amplitude scaled
    /// by `amplitude_scale` when fitted).
    pub fit_fidelity: f64,
    pub spec: PulseSpec,
}

impl OffsetSineFit {
    /// The fitted drive system: `sys` with Ωd multiplied by the fitted scale.
    pub fn system(&self, sys: &DriveSystem) -> Result<DriveSystem> {
        sys.with_amplitude(sys.omega_d * self.amplitude_scale.unwrap_or(1.0))
    }
}

struct Basis<'a> {
    target: &'a [f64],
    envelope: Vec<f64>,
    sin: Vec<f64>,
    cos: Vec<f64>,
    fit_scale: bool,
}

impl Basis<'_> {
    /// `(rms, scale)` for one `(a, φ)`.
    fn residual(&self, a: f64, phi: f64) -> (f64, f64) {
        let (s_phi, c_phi) = phi.sin_cos();
        let carrier = 1.0 - a.abs();
        let model = |k: usize| self.envelope[k] * (a + carrier * (self.sin[k] * c_phi + self.cos[k] * s_phi));
        let scale = if self.fit_scale {
            let (mut mw, mut mm) = (0.0, 0.0);
            for (k, w) in self.target.iter().enumerate() {
                let m = model(k);
                mw += m * w;
                mm += m * m;
            }
            if mm > 0.0 {
                mw / mm
            } else {
                0.0
            }
        } else {
            1.0
        };
        let ss: f64 = self
            .target
            .iter()
            .enumerate()
            .map(|(k, w)| (w - scale * model(k)).powi(2))
            .sum();
        ((ss / self.target.len() as f64).sqrt(), scale)
    }
}

/// Fits `s·ε(t)(a + (1 − |a|) sin(ω0 t + φ))` to `w` with the template's
/// envelope and duration; `s = 1` unless `opts.fit_scale`.
///
/// A full `(φ, a)` grid seeds a pattern search, so the reported minimum is
/// global up to the grid resolution.
pub fn fit_offset_sine(
    w: &ControlWaveform,
    sys: &DriveSystem,
    template: &PulseSpec,
    opts: &FitOptions,
    cfg: &PropagatorConfig,
) -> Result<OffsetSineFit> {
    w.validate()?;
    sys.validate()?;
    template.validate()?;
    if (w.duration() - template.duration_tpi).abs() > 1e-9 * template.duration_tpi {
        return Err(Error::contract(format!(
            "waveform lasts {} but the template lasts {}",
            w.duration(),
            template.duration_tpi
        )));
    }
    if opts.phase_n < 2 || opts.offset_n < 2 || !(opts.tol > 0.0) {
        return Err(Error::domain("fit grids need >= 2 points and tol > 0"));
    }
    let unit = template.with_params(1.0, 0.0)?.drive(sys)?;
    let basis = Basis {
        target: &w.values,
        envelope: w.times.iter().map(|&t| unit.value(t)).collect(),
        sin: w.times.iter().map(|&t| (sys.omega0 * t).sin()).collect(),
        cos: w.times.iter().map(|&t| (sys.omega0 * t).cos()).collect(),
        fit_scale: opts.fit_scale,
    };

    let phases = phase_grid(opts.phase_n);
    let offsets = offset_grid(opts.offset_n);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &a in &offsets {
        for &phi in &phases {
            let (r, _) = basis.residual(a, phi);
            if r < best.0 {
                best = (r, phi, a);
            }
        }
    }
    let refined = search::minimize(
        |x| Ok(basis.residual(x[1], x[0]).0),
        &[best.1, best.2],
        &[TAU / opts.phase_n as f64, 2.0 / (opts.offset_n - 1) as f64],
        &[Bound::Wrap { period: TAU }, Bound::Clamp { lo: -1.0, hi: 1.0 }],
        opts.tol,
    )?;
    let (mut phi, mut a) = (refined.x[0], refined.x[1]);
    let (residual_rms, mut scale) = basis.residual(a, phi);
    // −(a + c sin x) = −a + c sin(x + π): keep the scale positive.
    if scale < 0.0 {
        scale = -scale;
        a = -a;
        phi = wrap_phase(phi + std::f64::consts::PI);
    }
    let spec = template.with_params(a, phi)?;
    let amplitude_scale = opts.fit_scale.then_some(scale);
    let fit_fidelity = if scale > 0.0 {
        pulse_fidelity_of(&sys.with_amplitude(sys.omega_d * scale)?, &spec, cfg)?
    } else {
        0.0
    };
    Ok(OffsetSineFit {
        offset_a: a,
        phase_phi: phi,
        amplitude_scale,
        residual_rms,
        fit_fidelity,
        spec,
    })
}
