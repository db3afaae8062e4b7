//! π-pulse fidelity landscapes over drive phase and offset, and their local
//! refinement.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io;
use crate::search::{self, Bound};
use crate::spin::{self, DriveSystem, PropagatorConfig};
use crate::waveform::{default_rise_time, EnvelopeKind, PulseSpec};
use crate::{Error, Result};

/// `t_π = π/Ωd + 2 δt`.
pub fn pi_duration(sys: &DriveSystem, dt: f64) -> Result<f64> {
    sys.validate()?;
    if !(sys.omega_d > 0.0) {
        return Err(Error::domain("pi_duration needs omega_d > 0"));
    }
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::domain("rise time must be finite and >= 0"));
    }
    Ok(PI / sys.omega_d + 2.0 * dt)
}

/// Zero-offset, zero-phase pulse of duration [`pi_duration`].
///
/// Rectangular envelopes have no rise, so their duration is `π/Ωd` and
/// `rise_time` is only recorded.
pub fn pulse_template(sys: &DriveSystem, envelope: EnvelopeKind, rise_time: f64) -> Result<PulseSpec> {
    let duration = match envelope {
        EnvelopeKind::ErrorFunction => pi_duration(sys, rise_time)?,
        EnvelopeKind::Rectangular => pi_duration(sys, 0.0)?,
    };
    PulseSpec::new(0.0, 0.0, rise_time, duration, envelope)
}

/// π-pulse fidelity of `spec` on `sys`, starting from `|↑⟩`.
pub fn pulse_fidelity_of(sys: &DriveSystem, spec: &PulseSpec, cfg: &PropagatorConfig) -> Result<f64> {
    let drive = spec.drive(sys)?;
    spin::pi_pulse_fidelity(sys, &drive, cfg)
}

/// Uniform phases `k·2π/n`, `k = 0..n`.
pub fn phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

/// `n` offsets from −1 to 1 inclusive; odd `n` puts an exact 0 in the middle.
pub fn offset_grid(n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let mirrored = n - 1 - i;
            if 2 * i == n - 1 {
                0.0
            } else if 2 * i < n - 1 {
                -1.0 + 2.0 * i as f64 / last
            } else {
                1.0 - 2.0 * mirrored as f64 / last
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub sys: DriveSystem,
    pub spec_template: PulseSpec,
    pub phases: Vec<f64>,
    pub offsets: Vec<f64>,
    /// `infidelity[offset_index][phase_index] = 1 − F`.
    pub infidelity: Vec<Vec<f64>>,
}

impl LandscapeGrid {
    pub fn fidelity(&self, offset_index: usize, phase_index: usize) -> f64 {
        1.0 - self.infidelity[offset_index][phase_index]
    }

    /// Best cell `(offset_index, phase_index)`; ties go to the smallest pair.
    pub fn best_cell(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (i, row) in self.infidelity.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v < self.infidelity[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        best
    }

    /// Row holding `a = 0` exactly, if the grid has one.
    pub fn zero_offset_row(&self) -> Option<usize> {
        self.offsets.iter().position(|a| *a == 0.0)
    }

    pub fn spec_at(&self, offset_index: usize, phase_index: usize) -> Result<PulseSpec> {
        self.spec_template
            .with_params(self.offsets[offset_index], self.phases[phase_index])
    }

    /// Offset rows, phase columns; the header row lists the phases.
    pub fn write_csv<W: Write>(&self, out: W, extra_meta: &[(String, String)]) -> Result<()> {
        let mut meta = extra_meta.to_vec();
        meta.extend([
            ("omega0".to_string(), format!("{}", self.sys.omega0)),
            ("omega_d".to_string(), format!("{}", self.sys.omega_d)),
            ("theta_d".to_string(), format!("{}", self.sys.theta_d)),
            ("duration".to_string(), format!("{}", self.spec_template.duration_tpi)),
        ]);
        let mut header = vec!["offset\\phase".to_string()];
        header.extend(self.phases.iter().map(|p| format!("{p}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = self.offsets.iter().zip(&self.infidelity).map(|(a, row)| {
            let mut r = vec![*a];
            r.extend_from_slice(row);
            r
        });
        io::write_csv(out, &meta, &header, rows)
    }

    /// gnuplot `nonuniform matrix` layout: the first row is `n_phases`
    /// followed by the phases, every later row is an offset and its cells.
    pub fn write_gnuplot_matrix<W: Write>(&self, out: W) -> Result<()> {
        let mut out = std::io::BufWriter::new(out);
        write!(out, "{}", self.phases.len())?;
        for p in &self.phases {
            write!(out, " {p}")?;
        }
        writeln!(out)?;
        for (a, row) in self.offsets.iter().zip(&self.infidelity) {
            write!(out, "{a}")?;
            for v in row {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// The numeric part of a landscape CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeTable {
    pub phases: Vec<f64>,
    pub offsets: Vec<f64>,
    pub infidelity: Vec<Vec<f64>>,
}

pub fn read_landscape_csv(text: &str) -> Result<LandscapeTable> {
    let header_line = text
        .lines()
        .position(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
        .ok_or_else(|| Error::parse(1, "no header row"))?;
    let header = text.lines().nth(header_line).unwrap_or_default();
    let phases = header
        .split(',')
        .skip(1)
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(header_line + 1, format!("phase header {c:?} is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = io::read_csv(text, phases.len() + 1)?;
    let offsets = table.rows.iter().map(|r| r[0]).collect();
    let infidelity = table.rows.iter().map(|r| r[1..].to_vec()).collect();
    Ok(LandscapeTable {
        phases,
        offsets,
        infidelity,
    })
}

/// Infidelity `1 − F` over `offset_n × phase_n` cells.
///
/// Cells are evaluated in parallel and assembled in row-major order, so the
/// result is identical to a serial run.
pub fn landscape(
    sys: &DriveSystem,
    template: &PulseSpec,
    phase_n: usize,
    offset_n: usize,
    cfg: &PropagatorConfig,
) -> Result<LandscapeGrid> {
    sys.validate()?;
    template.validate()?;
    cfg.validate()?;
    if phase_n < 2 || offset_n < 2 {
        return Err(Error::domain(format!(
            "landscape grids need >= 2 points per axis (got {phase_n} phases x {offset_n} offsets)"
        )));
    }
    let phases = phase_grid(phase_n);
    let offsets = offset_grid(offset_n);
    let cells: Vec<f64> = (0..phase_n * offset_n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / phase_n, idx % phase_n);
            let (a, phi) = (offsets[i], phases[j]);
            template
                .with_params(a, phi)
                .and_then(|spec| pulse_fidelity_of(sys, &spec, cfg))
                .map(|f| 1.0 - f)
                .map_err(|e| Error::GridPoint {
                    offset_index: i,
                    phase_index: j,
                    offset: a,
                    phase: phi,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let infidelity = cells.chunks(phase_n).map(<[f64]>::to_vec).collect();
    Ok(LandscapeGrid {
        sys: *sys,
        spec_template: *template,
        phases,
        offsets,
        infidelity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimumReport {
    pub best_phase: f64,
    pub best_offset: f64,
    pub best_fidelity: f64,
    pub zero_offset_best_phase: f64,
    pub zero_offset_best_fidelity: f64,
    pub zero_offset_worst_phase: f64,
    pub zero_offset_worst_fidelity: f64,
}

/// Pattern-search refinement from the landscape.
///
/// The `a = 0` phase extremes are refined first, from the best and worst
/// phases of the zero-offset row (evaluated if the grid lacks one). The joint
/// search over `(φ, a)` then starts from whichever of the best grid cell and
/// the zero-offset optimum is better; since the search only accepts
/// improvements, the joint optimum can never fall below the phase-only one.
pub fn refine_optimum(grid: &LandscapeGrid, tol: f64, cfg: &PropagatorConfig) -> Result<OptimumReport> {
    if !(tol > 0.0) {
        return Err(Error::domain("refinement tolerance must be > 0"));
    }
    let sys = &grid.sys;
    let template = &grid.spec_template;
    let eval = |a: f64, phi: f64| -> Result<f64> { pulse_fidelity_of(sys, &template.with_params(a, phi)?, cfg) };

    let zero_row: Vec<f64> = match grid.zero_offset_row() {
        Some(i) => grid.infidelity[i].iter().map(|v| 1.0 - v).collect(),
        None => grid
            .phases
            .par_iter()
            .map(|&phi| eval(0.0, phi))
            .collect::<Result<_>>()?,
    };
    let argmax = first_index_by(&zero_row, |a, b| a > b);
    let argmin = first_index_by(&zero_row, |a, b| a < b);
    let phase_step = TAU / grid.phases.len() as f64;
    let wrap = [Bound::Wrap { period: TAU }];

    let zero_best = search::maximize(|x| eval(0.0, x[0]), &[grid.phases[argmax]], &[phase_step], &wrap, tol)?;
    let zero_worst = search::minimize(|x| eval(0.0, x[0]), &[grid.phases[argmin]], &[phase_step], &wrap, tol)?;

    let (bi, bj) = grid.best_cell();
    let (start, start_f) = if grid.fidelity(bi, bj) >= zero_best.value {
        ([grid.phases[bj], grid.offsets[bi]], grid.fidelity(bi, bj))
    } else {
        ([zero_best.x[0], 0.0], zero_best.value)
    };
    let offset_step = 2.0 / (grid.offsets.len() - 1) as f64;
    let joint = search::maximize(
        |x| eval(x[1], x[0]),
        &start,
        &[phase_step, offset_step],
        &[Bound::Wrap { period: TAU }, Bound::Clamp { lo: -1.0, hi: 1.0 }],
        tol,
    )?;
    debug_assert!(joint.value >= start_f);

    Ok(OptimumReport {
        best_phase: joint.x[0],
        best_offset: joint.x[1],
        best_fidelity: joint.value,
        zero_offset_best_phase: zero_best.x[0],
        zero_offset_best_fidelity: zero_best.value,
        zero_offset_worst_phase: zero_worst.x[0],
        zero_offset_worst_fidelity: zero_worst.value,
    })
}

fn first_index_by(v: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut k = 0;
    for (i, x) in v.iter().enumerate() {
        if better(*x, v[k]) {
            k = i;
        }
    }
    k
}

/// Grid and refinement settings for a full landscape optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanSettings {
    pub phase_n: usize,
    pub offset_n: usize,
    pub envelope: EnvelopeKind,
    /// Rise time; `None` means `π/(10 ω0)`.
    pub rise_time: Option<f64>,
    pub refine_tol: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            phase_n: 64,
            offset_n: 41,
            envelope: EnvelopeKind::ErrorFunction,
            rise_time: None,
            refine_tol: 1e-6,
        }
    }
}

impl ScanSettings {
    pub fn template(&self, sys: &DriveSystem) -> Result<PulseSpec> {
        let dt = self.rise_time.unwrap_or_else(|| default_rise_time(sys.omega0));
        pulse_template(sys, self.envelope, dt)
    }
}

/// Landscape followed by [`refine_optimum`].
pub fn optimize(
    sys: &DriveSystem,
    settings: &ScanSettings,
    cfg: &PropagatorConfig,
) -> Result<(LandscapeGrid, OptimumReport)> {
    let template = settings.template(sys)?;
    let grid = landscape(sys, &template, settings.phase_n, settings.offset_n, cfg)?;
    let report = refine_optimum(&grid, settings.refine_tol, cfg)?;
    Ok((grid, report))
}

/// Jointly optimized reports for a tilted and an untilted drive of equal
/// strength. No ordering between the two is implied.
pub fn tilt_comparison(
    sys_tilted: &DriveSystem,
    sys_flat: &DriveSystem,
    settings: &ScanSettings,
    cfg: &PropagatorConfig,
) -> Result<(OptimumReport, OptimumReport)> {
    if sys_tilted.omega0 != sys_flat.omega0 || sys_tilted.omega_d != sys_flat.omega_d {
        return Err(Error::contract(format!(
            "tilt comparison needs equal omega0 and omega_d (got {}/{} vs {}/{})",
            sys_tilted.omega0, sys_tilted.omega_d, sys_flat.omega0, sys_flat.omega_d
        )));
    }
    if sys_flat.theta_d != 0.0 {
        return Err(Error::contract("the flat system must have theta_d = 0"));
    }
    let (_, tilted) = optimize(sys_tilted, settings, cfg)?;
    let (_, flat) = optimize(sys_flat, settings, cfg)?;
    Ok((tilted, flat))
}
