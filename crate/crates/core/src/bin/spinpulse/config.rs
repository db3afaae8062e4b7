//! Run configurations. Control-module frequencies are in units of ω0 (so
//! ω0 = 1 internally); antenna and analysis sections use µm, G, A and MHz.

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::Vector3;
use serde::Deserialize;

use spinpulse::analysis::odmr::DEFAULT_ZFS;
use spinpulse::analysis::{NvModel, Species};
use spinpulse::antenna::{CrossSection, NvFrame, SpiralGeometry, DEFAULT_SEGMENT_TOL, NV_TILT_DEG};
use spinpulse::landscape::ScanSettings;
use spinpulse::oct::{default_amplitudes, SuiteOptions};
use spinpulse::spin::{DriveSystem, PropagatorConfig};
use spinpulse::waveform::{default_rise_time, EnvelopeKind, PulseSpec};
use spinpulse::{pulse_template, Error, Result};

const DEFAULT_TILT_DEG: f64 = 35.3;

fn invalid(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Domain(format!("{field}: {msg}"))
}

/// Names the offending field in a validation error from the library.
fn within(field: &str, e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Domain(format!("{field}: {m}")),
        Error::Contract(m) => Error::Contract(format!("{field}: {m}")),
        other => other,
    }
}

fn default_tilt() -> f64 {
    DEFAULT_TILT_DEG
}

/// One drive system for `simulate`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub omega_d: Option<f64>,
    #[serde(default = "default_tilt")]
    pub theta_d_deg: f64,
    /// Use `Ωd = ω0/(2 tan θd)` instead of `omega_d`.
    #[serde(default)]
    pub exact_cancellation: bool,
}

impl SystemSection {
    pub fn build(&self) -> Result<DriveSystem> {
        let theta = self.theta_d_deg.to_radians();
        let sys = match (self.omega_d, self.exact_cancellation) {
            (Some(_), true) => return Err(invalid("system", "give omega_d or exact_cancellation, not both")),
            (None, false) => return Err(invalid("system.omega_d", "missing")),
            (None, true) => DriveSystem::exact_cancellation(1.0, theta),
            (Some(w), false) => DriveSystem::new(1.0, w, theta),
        };
        sys.map_err(|e| within("system", e))
    }
}

/// Several amplitudes sharing one tilt, for `landscape` and `oct`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSection {
    #[serde(default = "default_tilt")]
    pub theta_d_deg: f64,
    pub amplitudes: Option<Vec<f64>>,
    /// `Ωd = ω0/n` for each entry; exact where decimals are not.
    pub amplitude_divisors: Option<Vec<f64>>,
}

impl Default for BatchSection {
    fn default() -> Self {
        Self {
            theta_d_deg: DEFAULT_TILT_DEG,
            amplitudes: None,
            amplitude_divisors: None,
        }
    }
}

impl BatchSection {
    pub fn amplitudes(&self, default: Vec<f64>) -> Result<Vec<f64>> {
        let list = match (&self.amplitudes, &self.amplitude_divisors) {
            (Some(_), Some(_)) => return Err(invalid("system", "give amplitudes or amplitude_divisors, not both")),
            (Some(a), None) => a.clone(),
            (None, Some(d)) => {
                if let Some(bad) = d.iter().find(|&&n| !(n > 0.0 && n.is_finite())) {
                    return Err(invalid("system.amplitude_divisors", format!("{bad} is not > 0")));
                }
                d.iter().map(|n| 1.0 / n).collect()
            }
            (None, None) => default,
        };
        if list.is_empty() {
            return Err(invalid("system", "the amplitude list is empty"));
        }
        if let Some(bad) = list.iter().find(|&&w| !(w > 0.0 && w.is_finite())) {
            return Err(invalid("system.amplitudes", format!("{bad} is not > 0")));
        }
        Ok(list)
    }

    pub fn base(&self) -> Result<DriveSystem> {
        DriveSystem::new(1.0, 1.0, self.theta_d_deg.to_radians()).map_err(|e| within("system.theta_d_deg", e))
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum Duration {
    Value(f64),
    Named(NamedDuration),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedDuration {
    /// `π/Ωd + 2δt` (rectangular: `π/Ωd`).
    TPi,
    /// `π/(2Ωd)`, the flip time of the exact-cancellation Hamiltonian.
    Flip,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "default_envelope")]
    pub envelope: EnvelopeKind,
    /// In units of 1/ω0; defaults to π/10.
    pub rise_time: Option<f64>,
    #[serde(default = "default_duration")]
    pub duration: Duration,
}

fn default_envelope() -> EnvelopeKind {
    EnvelopeKind::ErrorFunction
}

fn default_duration() -> Duration {
    Duration::Named(NamedDuration::TPi)
}

impl PulseSection {
    pub fn build(&self, sys: &DriveSystem) -> Result<PulseSpec> {
        let dt = self.rise_time.unwrap_or_else(|| default_rise_time(sys.omega0));
        let duration = match self.duration {
            Duration::Value(t) => t,
            Duration::Named(NamedDuration::TPi) => {
                pulse_template(sys, self.envelope, dt)
                    .map_err(|e| within("pulse.duration", e))?
                    .duration_tpi
            }
            Duration::Named(NamedDuration::Flip) => {
                if !(sys.omega_d > 0.0) {
                    return Err(invalid("pulse.duration", "\"flip\" needs a nonzero drive"));
                }
                PI / (2.0 * sys.omega_d)
            }
        };
        let dt = if self.envelope == EnvelopeKind::Rectangular {
            0.0
        } else {
            dt
        };
        PulseSpec::new(self.offset, self.phase, dt, duration, self.envelope).map_err(|e| within("pulse", e))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub system: SystemSection,
    pub pulse: PulseSection,
    #[serde(default)]
    pub propagator: PropagatorConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    #[serde(default)]
    pub system: BatchSection,
    #[serde(default)]
    pub scan: ScanSettings,
    #[serde(default)]
    pub propagator: PropagatorConfig,
}

impl LandscapeConfig {
    /// The three columns of the landscape figure: ω0/10, ω0/3, ω0.
    pub fn default_amplitudes() -> Vec<f64> {
        vec![0.1, 1.0 / 3.0, 1.0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.scan.phase_n < 2 || self.scan.offset_n < 2 {
            return Err(invalid("scan", "phase_n and offset_n must be >= 2"));
        }
        if !(self.scan.refine_tol > 0.0) {
            return Err(invalid("scan.refine_tol", "must be > 0"));
        }
        self.propagator.validate().map_err(|e| within("propagator", e))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OctConfig {
    #[serde(default)]
    pub system: BatchSection,
    #[serde(default)]
    pub oct: SuiteOptions,
    #[serde(default)]
    pub propagator: PropagatorConfig,
}

impl OctConfig {
    pub fn default_amplitudes() -> Vec<f64> {
        default_amplitudes(1.0)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NvSection {
    /// Angle between the NV axis and the spiral normal, in the `xz` plane.
    pub tilt_deg: Option<f64>,
    /// Explicit axis in the antenna frame.
    pub axis: Option<[f64; 3]>,
}

impl NvSection {
    pub fn frame(&self) -> Result<NvFrame> {
        match (self.tilt_deg, self.axis) {
            (Some(_), Some(_)) => Err(invalid("nv", "give tilt_deg or axis, not both")),
            (Some(t), None) => Ok(NvFrame::tilted(t.to_radians())),
            (None, Some(a)) => NvFrame::new(Vector3::from(a)).map_err(|e| within("nv.axis", e)),
            (None, None) => Ok(NvFrame::tilted(NV_TILT_DEG.to_radians())),
        }
    }
}

fn default_segment_tol() -> f64 {
    DEFAULT_SEGMENT_TOL
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpiralConfig {
    #[serde(default)]
    pub geometry: SpiralGeometry,
    #[serde(default)]
    pub map: CrossSection,
    pub nv: Option<NvSection>,
    /// Polygon refinement tolerance at the sample point.
    #[serde(default = "default_segment_tol")]
    pub segment_tol: f64,
    /// Looser tolerance that sets the polygon used for the map.
    #[serde(default = "default_map_segment_tol")]
    pub map_segment_tol: f64,
}

fn default_map_segment_tol() -> f64 {
    1e-6
}

impl SpiralConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate().map_err(|e| within("geometry", e))?;
        self.map.validate().map_err(|e| within("map", e))?;
        for (name, tol) in [
            ("segment_tol", self.segment_tol),
            ("map_segment_tol", self.map_segment_tol),
        ] {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(invalid(name, "must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

fn default_species() -> Species {
    Species::Proton
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiSection {
    /// Trace files, relative to the config file.
    pub inputs: Vec<PathBuf>,
    #[serde(default = "default_species")]
    pub species: Species,
}

/// Starting point of the ODMR fit.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdmrInit {
    pub zero_field_splitting_d: f64,
    pub strain_e: f64,
    pub field_per_current: f64,
    /// Field tilt from the plane transverse to the NV axis.
    pub tilt_deg: f64,
    pub azimuth_deg: f64,
}

impl Default for OdmrInit {
    fn default() -> Self {
        Self {
            zero_field_splitting_d: DEFAULT_ZFS,
            strain_e: 1.0,
            field_per_current: 100.0,
            tilt_deg: 30.0,
            azimuth_deg: 0.0,
        }
    }
}

impl OdmrInit {
    pub fn model(&self) -> Result<NvModel> {
        NvModel::tilted(
            self.zero_field_splitting_d,
            self.strain_e,
            self.field_per_current,
            self.tilt_deg.to_radians(),
            self.azimuth_deg.to_radians(),
        )
        .map_err(|e| within("odmr.init", e))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdmrSection {
    pub input: PathBuf,
    #[serde(default)]
    pub init: OdmrInit,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub rabi: Option<RabiSection>,
    pub odmr: Option<OdmrSection>,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rabi.is_none() && self.odmr.is_none() {
            return Err(invalid("fit", "nothing to fit: add a [rabi] or [odmr] section"));
        }
        if self.rabi.as_ref().is_some_and(|r| r.inputs.is_empty()) {
            return Err(invalid("rabi.inputs", "empty"));
        }
        if let Some(r) = &self.rabi {
            r.species.gamma().map_err(|e| within("rabi.species", e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use spinpulse::io::parse_toml;

    #[test]
    fn system_needs_exactly_one_amplitude_source() {
        let ok: SimulateConfig = parse_toml("[system]\nomega_d = 0.5\n[pulse]\n").unwrap();
        assert_eq!(ok.system.build().unwrap().omega_d, 0.5);
        let both: SimulateConfig = parse_toml("[system]\nomega_d = 0.5\nexact_cancellation = true\n[pulse]\n").unwrap();
        assert!(both.system.build().is_err());
        let none: SimulateConfig = parse_toml("[system]\n[pulse]\n").unwrap();
        assert!(none.system.build().unwrap_err().to_string().contains("system.omega_d"));
    }

    #[test]
    fn unknown_fields_report_their_line() {
        let err = parse_toml::<SimulateConfig>("[system]\nomega_d = 1.0\n[pulse]\nofset = 0.2\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("ofset"));
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn named_durations() {
        let c: SimulateConfig =
            parse_toml("[system]\nexact_cancellation = true\n[pulse]\noffset = -1.0\nenvelope = \"rectangular\"\nduration = \"flip\"\n")
                .unwrap();
        let sys = c.system.build().unwrap();
        let spec = c.pulse.build(&sys).unwrap();
        assert_eq!(spec.duration_tpi, PI / (2.0 * sys.omega_d));
        let c: SimulateConfig = parse_toml("[system]\nomega_d = 1.0\n[pulse]\n").unwrap();
        let spec = c.pulse.build(&c.system.build().unwrap()).unwrap();
        assert!((spec.duration_tpi - 1.2 * PI).abs() < 1e-15);
        let c: SimulateConfig = parse_toml("[system]\nomega_d = 0.0\n[pulse]\nduration = 12.5\n").unwrap();
        assert_eq!(c.pulse.build(&c.system.build().unwrap()).unwrap().duration_tpi, 12.5);
    }

    #[test]
    fn divisors_and_defaults() {
        let c: OctConfig = parse_toml("[system]\namplitude_divisors = [10, 3]\n").unwrap();
        assert_eq!(c.system.amplitudes(vec![]).unwrap(), vec![0.1, 1.0 / 3.0]);
        let c: OctConfig = parse_toml("").unwrap();
        assert_eq!(c.system.amplitudes(OctConfig::default_amplitudes()).unwrap().len(), 6);
        let c: OctConfig = parse_toml("[system]\namplitudes = [0.5, -1.0]\n").unwrap();
        assert!(c.system.amplitudes(vec![]).is_err());
    }
}
