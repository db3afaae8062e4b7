//! Offset-sine pulses, their envelopes, and spectral tools for sampled
//! waveforms.
//!
//! The offset-sine family is
//!
//! ```text
//! f(t) = ε(t) · (a + (1 − |a|) sin(ω0 t + φ))
//! ```
//!
//! with `|a| ≤ 1`, so `|f| ≤ 1` whenever `0 ≤ ε ≤ 1`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::io::{self, CsvTable};
use crate::spin::{Drive, DriveSystem};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeKind {
    #[serde(alias = "erf")]
    ErrorFunction,
    Rectangular,
}

/// Parameters of one offset-sine pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub offset_a: f64,
    /// Drive phase, kept in `[0, 2π)`.
    pub phase_phi: f64,
    pub rise_time_dt: f64,
    pub duration_tpi: f64,
    pub envelope_kind: EnvelopeKind,
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Default rise time `π / (10 ω0)`.
pub fn default_rise_time(omega0: f64) -> f64 {
    PI / (10.0 * omega0)
}

impl PulseSpec {
    pub fn new(
        offset_a: f64,
        phase_phi: f64,
        rise_time_dt: f64,
        duration_tpi: f64,
        envelope_kind: EnvelopeKind,
    ) -> Result<Self> {
        let spec = Self {
            offset_a,
            phase_phi: wrap_phase(phase_phi),
            rise_time_dt,
            duration_tpi,
            envelope_kind,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.offset_a.abs() <= 1.0) {
            return Err(Error::domain(format!(
                "offset must satisfy |a| <= 1, got {}",
                self.offset_a
            )));
        }
        if !(self.phase_phi.is_finite() && (0.0..TAU).contains(&self.phase_phi)) {
            return Err(Error::domain(format!(
                "phase must lie in [0, 2pi), got {}",
                self.phase_phi
            )));
        }
        if !(self.duration_tpi > 0.0 && self.duration_tpi.is_finite()) {
            return Err(Error::domain("pulse duration must be finite and > 0"));
        }
        if self.envelope_kind == EnvelopeKind::ErrorFunction {
            if !(self.rise_time_dt > 0.0) {
                return Err(Error::domain("error-function envelopes need a rise time > 0"));
            }
            if !(self.duration_tpi > 2.0 * self.rise_time_dt) {
                return Err(Error::domain(format!(
                    "duration {} is too short for rise time {} (needs > 2 dt)",
                    self.duration_tpi, self.rise_time_dt
                )));
            }
        }
        Ok(())
    }

    /// Same pulse with other offset and phase; the phase is wrapped.
    pub fn with_params(&self, offset_a: f64, phase_phi: f64) -> Result<Self> {
        Self::new(
            offset_a,
            phase_phi,
            self.rise_time_dt,
            self.duration_tpi,
            self.envelope_kind,
        )
    }

    pub fn drive(&self, sys: &DriveSystem) -> Result<OffsetSineDrive> {
        OffsetSineDrive::new(*self, sys.omega0)
    }
}

/// Error-function envelope with edges pinned to zero.
///
/// `g(t) = ½[erf(2(t − δt)/δt) + erf(2(T − t − δt)/δt)]` is shifted and
/// rescaled so that `ε(0) = ε(T) = 0` and `ε(T/2) = 1`. The half-height points
/// sit at `δt` and `T − δt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErfEnvelope {
    t_pi: f64,
    dt: f64,
    floor: f64,
    scale: f64,
}

impl ErfEnvelope {
    pub fn new(t_pi: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && t_pi > 2.0 * dt) {
            return Err(Error::domain(format!(
                "erf envelope needs dt > 0 and t_pi > 2 dt (t_pi = {t_pi}, dt = {dt})"
            )));
        }
        let mut env = Self {
            t_pi,
            dt,
            floor: 0.0,
            scale: 1.0,
        };
        env.floor = env.raw(0.0);
        env.scale = env.raw(0.5 * t_pi) - env.floor;
        Ok(env)
    }

    fn raw(&self, t: f64) -> f64 {
        // Evaluate on the nearer edge so that ε(t) and ε(T − t) share bits.
        let near = t.min(self.t_pi - t);
        let far = self.t_pi - near;
        0.5 * (libm::erf(2.0 * (near - self.dt) / self.dt) + libm::erf(2.0 * (far - self.dt) / self.dt))
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.t_pi {
            return 0.0;
        }
        ((self.raw(t) - self.floor) / self.scale).clamp(0.0, 1.0)
    }
}

/// `ε(t)` for a pulse of length `t_pi` with rise time `dt`; zero outside
/// `(0, t_pi)` and when the parameters are invalid.
pub fn erf_envelope(t: f64, t_pi: f64, dt: f64) -> f64 {
    ErfEnvelope::new(t_pi, dt).map_or(0.0, |e| e.eval(t))
}

/// The analytic offset-sine drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetSineDrive {
    spec: PulseSpec,
    omega0: f64,
    envelope: Option<ErfEnvelope>,
}

impl OffsetSineDrive {
    pub fn new(spec: PulseSpec, omega0: f64) -> Result<Self> {
        spec.validate()?;
        if !(omega0 > 0.0) {
            return Err(Error::domain("omega0 must be > 0"));
        }
        let envelope = match spec.envelope_kind {
            EnvelopeKind::ErrorFunction => Some(ErfEnvelope::new(spec.duration_tpi, spec.rise_time_dt)?),
            EnvelopeKind::Rectangular => None,
        };
        Ok(Self { spec, omega0, envelope })
    }

    pub fn spec(&self) -> &PulseSpec {
        &self.spec
    }

    pub fn envelope(&self, t: f64) -> f64 {
        match &self.envelope {
            Some(e) => e.eval(t),
            None => 1.0,
        }
    }
}

impl Drive for OffsetSineDrive {
    fn duration(&self) -> f64 {
        self.spec.duration_tpi
    }

    #[inline]
    fn value(&self, t: f64) -> f64 {
        let a = self.spec.offset_a;
        let carrier = if a.abs() == 1.0 {
            0.0
        } else {
            (1.0 - a.abs()) * (self.omega0 * t + self.spec.phase_phi).sin()
        };
        self.envelope(t) * (a + carrier)
    }
}

/// Samples of a drive on a uniform grid over `[0, t_pulse]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlWaveform {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Set for optimal-control waveforms, whose amplitude is not bounded by 1.
    #[serde(default)]
    pub unconstrained: bool,
}

const UNIFORM_TOL: f64 = 1e-9;

impl ControlWaveform {
    pub fn new(times: Vec<f64>, values: Vec<f64>, unconstrained: bool) -> Result<Self> {
        let w = Self {
            times,
            values,
            unconstrained,
        };
        w.validate()?;
        Ok(w)
    }

    /// Samples `f` at `n` uniform points including both endpoints.
    pub fn from_fn(duration: f64, n: usize, unconstrained: bool, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain("a waveform needs at least 2 samples"));
        }
        let times = crate::spin::output_grid(duration, n);
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values, unconstrained)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if n < 2 || self.values.len() != n {
            return Err(Error::domain(format!(
                "waveform needs >= 2 samples and matching lengths ({} times, {} values)",
                n,
                self.values.len()
            )));
        }
        if self.times[0] != 0.0 {
            return Err(Error::domain("waveform grid must start at t = 0"));
        }
        let duration = self.duration();
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::domain("waveform duration must be finite and > 0"));
        }
        let h = self.spacing();
        for (k, &t) in self.times.iter().enumerate() {
            if (t - k as f64 * h).abs() > UNIFORM_TOL * duration {
                return Err(Error::domain(format!("waveform grid is not uniform at sample {k}")));
            }
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("waveform holds a non-finite value {v}")));
        }
        if !self.unconstrained {
            if let Some(v) = self.values.iter().find(|v| v.abs() > 1.0 + 1e-12) {
                return Err(Error::domain(format!("constrained waveform exceeds |f| <= 1 ({v})")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn spacing(&self) -> f64 {
        self.duration() / (self.times.len() - 1) as f64
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn rms(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.len() as f64).sqrt()
    }

    /// Reversed in time, `f(T − t)`.
    pub fn time_reversed(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        Self {
            times: self.times.clone(),
            values,
            unconstrained: self.unconstrained,
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W, extra_meta: &[(String, String)]) -> Result<()> {
        let mut meta = extra_meta.to_vec();
        meta.push(("unconstrained".to_string(), self.unconstrained.to_string()));
        io::write_csv(
            out,
            &meta,
            &["time", "value"],
            self.times.iter().zip(&self.values).map(|(t, v)| vec![*t, *v]),
        )
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let table: CsvTable = io::read_csv(text, 2)?;
        let unconstrained = match table.meta_value("unconstrained") {
            None => false,
            Some(v) => v
                .parse()
                .map_err(|_| Error::parse(1, format!("bad 'unconstrained' flag {v:?}")))?,
        };
        let times = table.rows.iter().map(|r| r[0]).collect();
        let values = table.rows.iter().map(|r| r[1]).collect();
        Self::new(times, values, unconstrained).map_err(|e| match e {
            Error::Domain(m) => Error::parse(table.lines.first().copied().unwrap_or(1), m),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: Self = serde_json::from_str(text)?;
        w.validate()?;
        Ok(w)
    }
}

/// Linear interpolation between samples.
impl Drive for ControlWaveform {
    fn duration(&self) -> f64 {
        ControlWaveform::duration(self)
    }

    #[inline]
    fn value(&self, t: f64) -> f64 {
        let n = self.values.len();
        let h = self.spacing();
        let x = (t / h).max(0.0);
        let k = (x.floor() as usize).min(n - 2);
        let frac = x - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    fn segments(&self) -> usize {
        self.values.len() - 1
    }
}

/// Samples the offset-sine pulse at `n_samples` uniform points.
pub fn offset_sine(spec: &PulseSpec, sys: &DriveSystem, n_samples: usize) -> Result<ControlWaveform> {
    sys.validate()?;
    let drive = spec.drive(sys)?;
    ControlWaveform::from_fn(spec.duration_tpi, n_samples, false, |t| drive.value(t))
}

/// Zero-frequency component `(2 / T) ∫₀ᵀ f(t) dt`, by the trapezoidal rule.
///
/// For `T = π/Ωd` this is `(2Ωd/π) ∫ f dt`.
pub fn dc_component(w: &ControlWaveform) -> f64 {
    let n = w.values.len();
    if n < 2 {
        return 0.0;
    }
    let interior: f64 = w.values[1..n - 1].iter().sum();
    let integral = w.spacing() * (interior + 0.5 * (w.values[0] + w.values[n - 1]));
    2.0 * integral / w.duration()
}

/// Periodic band limit on the `n − 1` samples `[0, T)` of a waveform whose
/// last sample repeats the first. Bin `m` carries angular frequency
/// `2π m / T`.
pub struct BandLimit {
    period_samples: usize,
    keep: Vec<bool>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    omegas: Vec<f64>,
}

impl std::fmt::Debug for BandLimit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BandLimit")
            .field("period_samples", &self.period_samples)
            .field("kept", &self.keep.iter().filter(|k| **k).count())
            .finish()
    }
}

impl BandLimit {
    pub fn new(period_samples: usize, duration: f64, cutoff: f64) -> Self {
        let n = period_samples;
        let mut planner = FftPlanner::new();
        let omegas: Vec<f64> = (0..n)
            .map(|m| {
                let signed = if 2 * m <= n { m as f64 } else { m as f64 - n as f64 };
                TAU * signed / duration
            })
            .collect();
        let keep = (0..n)
            .map(|m| {
                // The Nyquist bin of an even grid has no sign; drop it.
                let nyquist = n.is_multiple_of(2) && 2 * m == n;
                !nyquist && omegas[m].abs() <= cutoff
            })
            .collect();
        Self {
            period_samples: n,
            keep,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            omegas,
        }
    }

    pub fn period_samples(&self) -> usize {
        self.period_samples
    }

    /// Angular frequencies of the kept positive bins.
    pub fn kept_positive(&self) -> Vec<f64> {
        self.omegas
            .iter()
            .zip(&self.keep)
            .filter(|(w, k)| **k && **w > 0.0)
            .map(|(w, _)| *w)
            .collect()
    }

    pub fn spectrum(&self, samples: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = samples[..self.period_samples]
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Orthogonal projection of the periodic samples onto the kept band.
    pub fn project(&self, samples: &mut [f64]) {
        let mut spec = self.spectrum(samples);
        for (c, keep) in spec.iter_mut().zip(&self.keep) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        self.inverse.process(&mut spec);
        let scale = 1.0 / self.period_samples as f64;
        for (x, c) in samples.iter_mut().zip(&spec) {
            *x = c.re * scale;
        }
    }

    /// RMS fraction `sqrt(Σ_removed |c|² / Σ |c|²)` of the spectrum outside the band.
    pub fn fraction_outside(&self, samples: &[f64]) -> f64 {
        let spec = self.spectrum(samples);
        let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let outside: f64 = spec
            .iter()
            .zip(&self.keep)
            .filter(|(_, k)| !**k)
            .map(|(c, _)| c.norm_sqr())
            .sum();
        (outside / total).sqrt()
    }

    /// Spectral derivative at `t = 0` of the band-limited interpolant.
    pub fn derivative_at_start(&self, samples: &[f64]) -> f64 {
        let spec = self.spectrum(samples);
        let n = self.period_samples as f64;
        spec.iter()
            .zip(&self.omegas)
            .zip(&self.keep)
            .filter(|(_, k)| **k)
            .map(|((c, w), _)| -w * c.im)
            .sum::<f64>()
            / n
    }
}

/// Result of [`spectral_filter`].
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredWaveform {
    pub waveform: ControlWaveform,
    /// The strongest non-DC spectral line of the input lies above the cutoff,
    /// so the filtered signal has lost its carrier.
    pub lost_carrier: bool,
}

/// Removes all spectral content above `cutoff` (angular) and re-pins both
/// endpoints to zero.
///
/// The transform treats `[0, T)` as one period, so the filtered value at `T`
/// equals the one at `0`; the linear ramp through the two endpoint values that
/// is subtracted afterwards is therefore a constant, which lies inside the
/// band. Applying the filter twice gives the same result as applying it once.
pub fn spectral_filter(w: &ControlWaveform, cutoff: f64) -> Result<FilteredWaveform> {
    w.validate()?;
    if !(cutoff > 0.0) {
        return Err(Error::domain("cutoff must be > 0"));
    }
    let n = w.len() - 1;
    let band = BandLimit::new(n, w.duration(), cutoff);

    let spec = band.spectrum(&w.values);
    let dominant = spec
        .iter()
        .enumerate()
        .skip(1)
        .take(n / 2)
        .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
        .map(|(m, c)| (m, c.norm_sqr()));
    let lost_carrier = matches!(dominant, Some((m, p)) if p > 0.0 && !band.keep[m]);

    let mut values = w.values.clone();
    band.project(&mut values[..n]);
    values[n] = values[0];
    let (start, end) = (values[0], values[n]);
    let duration = w.duration();
    for (v, t) in values.iter_mut().zip(&w.times) {
        *v -= start + (end - start) * t / duration;
    }
    values[0] = 0.0;
    values[n] = 0.0;
    let unconstrained = w.unconstrained || values.iter().any(|v| v.abs() > 1.0);
    Ok(FilteredWaveform {
        waveform: ControlWaveform {
            times: w.times.clone(),
            values,
            unconstrained,
        },
        lost_carrier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sys() -> DriveSystem {
        DriveSystem::new(1.0, 0.5, 0.3).unwrap()
    }

    fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
    }

    #[test]
    fn phase_is_wrapped() {
        let s = PulseSpec::new(0.0, -0.5, 0.1, 3.0, EnvelopeKind::Rectangular).unwrap();
        assert_abs_diff_eq!(s.phase_phi, TAU - 0.5, epsilon = 1e-15);
        let s = PulseSpec::new(0.0, TAU, 0.1, 3.0, EnvelopeKind::Rectangular).unwrap();
        assert_eq!(s.phase_phi, 0.0);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(PulseSpec::new(1.2, 0.0, 0.1, 3.0, EnvelopeKind::Rectangular).is_err());
        assert!(PulseSpec::new(0.0, 0.0, 0.5, 0.9, EnvelopeKind::ErrorFunction).is_err());
        assert!(PulseSpec::new(0.0, 0.0, 0.0, 0.9, EnvelopeKind::ErrorFunction).is_err());
        // Rectangular pulses ignore the rise time.
        assert!(PulseSpec::new(0.0, 0.0, 0.5, 0.9, EnvelopeKind::Rectangular).is_ok());
    }

    #[test]
    fn unit_offset_is_pure_envelope() {
        let spec = PulseSpec::new(1.0, 1.3, 0.2, 4.0, EnvelopeKind::ErrorFunction).unwrap();
        let w = offset_sine(&spec, &sys(), 257).unwrap();
        for (t, v) in w.times.iter().zip(&w.values) {
            assert_eq!(*v, erf_envelope(*t, 4.0, 0.2));
        }
    }

    #[test]
    fn zero_offset_rectangular_is_plain_sine() {
        let spec = PulseSpec::new(0.0, 0.7, 0.2, 4.0, EnvelopeKind::Rectangular).unwrap();
        let w = offset_sine(&spec, &sys(), 101).unwrap();
        for (t, v) in w.times.iter().zip(&w.values) {
            assert_abs_diff_eq!(*v, (t + 0.7).sin(), epsilon = 1e-15);
        }
    }

    #[test]
    fn erf_pulse_has_zero_edges_and_bounded_peak() {
        let spec = PulseSpec::new(-0.3, PI / 4.0, PI / 10.0, 2.0 * PI, EnvelopeKind::ErrorFunction).unwrap();
        let w = offset_sine(&spec, &sys(), 1001).unwrap();
        assert_eq!(w.values[0], 0.0);
        assert_eq!(*w.values.last().unwrap(), 0.0);
        assert!(w.peak() <= 1.0);
        // Interior peak of ε(−0.3 + 0.7 sin): at most |−0.3 − 0.7| = 1.
        assert!(w.peak() > 0.9);
    }

    #[test]
    fn envelope_edges_plateau_and_symmetry() {
        let (t_pi, dt) = (1.2 * PI, PI / 10.0);
        assert_eq!(erf_envelope(0.0, t_pi, dt), 0.0);
        assert_eq!(erf_envelope(t_pi, t_pi, dt), 0.0);
        assert!(erf_envelope(0.5 * t_pi, t_pi, dt) >= 0.999);
        for k in 0..=200 {
            let t = t_pi * k as f64 / 200.0;
            let a = erf_envelope(t, t_pi, dt);
            let b = erf_envelope(t_pi - t, t_pi, dt);
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
            assert!((0.0..=1.0).contains(&a));
        }
        // Monotone rise over the first half.
        let mut prev = 0.0;
        for k in 0..=100 {
            let v = erf_envelope(0.5 * t_pi * k as f64 / 100.0, t_pi, dt);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn envelope_matches_high_precision_reference() {
        // (g(t) − g(0)) / (g(T/2) − g(0)) at T = 6, δt = 1, t = 6k/60, evaluated
        // with 40-digit arithmetic.
        let reference = [
            (1, 0.0031231864590378683891),
            (4, 0.042603788667780485316),
            (10, 0.49882783240060385072),
            (15, 0.92116602846353616379),
            (30, 1.0),
            (47, 0.80146370770058744711),
            (59, 0.0031231864590378683891),
        ];
        for (k, expected) in reference {
            let t = 6.0 * k as f64 / 60.0;
            assert_abs_diff_eq!(erf_envelope(t, 6.0, 1.0), expected, epsilon = 1e-14);
        }
        assert!(erf_envelope(3.0, 6.0, 1.0) >= 0.999);
    }

    #[test]
    fn dc_component_cases() {
        let omega_d = 0.37;
        let t = PI / omega_d;
        let ones = ControlWaveform::from_fn(t, 11, false, |_| 1.0).unwrap();
        assert_abs_diff_eq!(dc_component(&ones), 2.0, epsilon = 1e-14);

        let full = ControlWaveform::from_fn(TAU, 4097, false, |t: f64| t.sin()).unwrap();
        assert_abs_diff_eq!(dc_component(&full), 0.0, epsilon = 1e-14);

        // Closed form (2 / (T ω0)) sin(ω0 T) for cos(ω0 t); trapezoid error ≤ T h² / 12 · max|f''| · 2/T.
        for &t_end in &[PI, 1.3, 2.9] {
            let n = 4097;
            let w = ControlWaveform::from_fn(t_end, n, false, |t: f64| (t + PI / 2.0).sin()).unwrap();
            let exact = 2.0 * t_end.sin() / t_end;
            let h = t_end / (n - 1) as f64;
            assert_abs_diff_eq!(dc_component(&w), exact, epsilon = h * h / 6.0 + 1e-14);
        }
    }

    #[test]
    fn band_limited_tone_passes_unchanged() {
        let t_end = 3.0 * TAU;
        let w = ControlWaveform::from_fn(t_end, 3 * 256 + 1, false, |t: f64| t.sin()).unwrap();
        let out = spectral_filter(&w, 10.7).unwrap();
        assert!(rms_diff(&out.waveform.values, &w.values) < 1e-9);
        assert!(!out.lost_carrier);
    }

    #[test]
    fn square_wave_keeps_harmonics_up_to_ninth() {
        let periods = 4;
        let per = 4096;
        let n = periods * per + 1;
        let w = ControlWaveform::from_fn(periods as f64 * TAU, n, false, |t: f64| {
            let s = t.sin();
            if s.abs() < 1e-12 {
                0.0
            } else {
                s.signum()
            }
        })
        .unwrap();
        let out = spectral_filter(&w, 10.7).unwrap();
        // Truncated series Σ_{k odd ≤ 9} (4/(πk)) sin(kt): RMS² = Σ 8/(π k)².
        let expected_rms = [1.0f64, 3.0, 5.0, 7.0, 9.0]
            .iter()
            .map(|k| 8.0 / (PI * k).powi(2))
            .sum::<f64>()
            .sqrt();
        let vals = &out.waveform.values[..n - 1];
        let rms = (vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64).sqrt();
        assert_abs_diff_eq!(rms, expected_rms, epsilon = 1e-3);
        let series = |t: f64| {
            [1.0f64, 3.0, 5.0, 7.0, 9.0]
                .iter()
                .map(|k| 4.0 / (PI * k) * (k * t).sin())
                .sum::<f64>()
        };
        assert!(rms_diff(vals, &w.times[..n - 1].iter().map(|&t| series(t)).collect::<Vec<_>>()) < 2e-3);
    }

    #[test]
    fn filter_pins_endpoints_and_flags_lost_carrier() {
        let w = ControlWaveform::from_fn(5.3, 300, false, |t: f64| 0.4 + 0.5 * (3.0 * t).cos()).unwrap();
        let out = spectral_filter(&w, 1.0).unwrap();
        assert_eq!(out.waveform.values[0], 0.0);
        assert_eq!(*out.waveform.values.last().unwrap(), 0.0);
        assert!(out.lost_carrier);
        assert!(spectral_filter(&w, 0.0).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let spec = PulseSpec::new(0.21, 2.2, 0.3, 7.1, EnvelopeKind::ErrorFunction).unwrap();
        let w = offset_sine(&spec, &sys(), 333).unwrap();
        let mut buf = Vec::new();
        w.write_csv(&mut buf, &[]).unwrap();
        let back = ControlWaveform::from_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, w);
        let json = w.to_json().unwrap();
        assert_eq!(ControlWaveform::from_json(&json).unwrap(), w);
    }

    #[test]
    fn non_uniform_csv_is_a_parse_error() {
        let text = "time,value\n0,0\n1,0.5\n2.5,0\n";
        assert!(matches!(ControlWaveform::from_csv(text), Err(Error::Parse { .. })));
    }

    #[test]
    fn linear_interpolation_drive() {
        let w = ControlWaveform::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, -1.0], false).unwrap();
        assert_abs_diff_eq!(w.value(0.5), 0.5);
        assert_abs_diff_eq!(w.value(1.5), 0.0);
        assert_abs_diff_eq!(w.value(2.0), -1.0);
        assert_eq!(w.segments(), 2);
    }
}
