//! Decaying-sine fits of Rabi traces and the Rabi-frequency-vs-current line.
//!
//! Times are in µs, so fitted frequencies come out in MHz internally and are
//! reported in kHz.

use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::least_squares;
use crate::io;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiTrace {
    /// µs, strictly ascending.
    pub times: Vec<f64>,
    pub signal: Vec<f64>,
    /// A.
    pub current: f64,
}

impl RabiTrace {
    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() || self.times.len() != self.signal.len() {
            return Err(Error::domain(
                "a Rabi trace needs matching, nonempty time and signal columns",
            ));
        }
        if !self.times.iter().chain(&self.signal).all(|x| x.is_finite()) || !self.current.is_finite() {
            return Err(Error::domain("Rabi trace values must be finite"));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("Rabi trace times must be strictly ascending"));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiFit {
    /// kHz.
    pub rabi_frequency: f64,
    /// µs; `None` when the fitted decay rate is not positive.
    pub decay_time: Option<f64>,
    pub amplitude: f64,
    pub phase: f64,
    pub baseline: f64,
    /// kHz.
    pub frequency_stderr: f64,
    pub residual_rms: f64,
}

/// Periodogram peak must exceed this multiple of the median power.
const PEAK_OVER_FLOOR: f64 = 10.0;
const OVERSAMPLE: usize = 8;

/// Frequency (MHz) of the strongest periodogram line of the mean-removed
/// signal, or `None` if nothing stands above the floor.
fn spectral_peak(trace: &RabiTrace, mean: f64) -> Option<f64> {
    let n = trace.times.len();
    let span = trace.span();
    let spacing = span / (n - 1) as f64;
    let df = 1.0 / (span * OVERSAMPLE as f64);
    let bins = ((0.5 / spacing) / df).floor() as usize;
    let power: Vec<f64> = (1..=bins)
        .map(|k| {
            let w = TAU * k as f64 * df;
            let (mut re, mut im) = (0.0, 0.0);
            for (t, y) in trace.times.iter().zip(&trace.signal) {
                let (s, c) = (w * t).sin_cos();
                re += (y - mean) * c;
                im += (y - mean) * s;
            }
            re * re + im * im
        })
        .collect();
    let mut sorted = power.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[sorted.len() / 2];
    let (k, &peak) = power.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    (peak > 0.0 && peak > PEAK_OVER_FLOOR * floor).then_some((k + 1) as f64 * df)
}

/// Fits `c + A·exp(−t/τ)·sin(2π f t + φ)`. The frequency is seeded from the
/// periodogram peak; amplitude, phase and baseline from a linear fit at that
/// frequency.
pub fn fit_decaying_sine(trace: &RabiTrace) -> Result<RabiFit> {
    trace.validate()?;
    let n = trace.times.len();
    if n < 8 {
        return Err(Error::Fit(format!("need at least 8 samples, got {n}")));
    }
    let mean = trace.signal.iter().sum::<f64>() / n as f64;
    let f0 = spectral_peak(trace, mean).ok_or_else(|| Error::Fit("no spectral peak above the noise floor".into()))?;

    // Linear seed: y ≈ c + α sin(ωt) + β cos(ωt).
    let w0 = TAU * f0;
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (t, y) in trace.times.iter().zip(&trace.signal) {
        let (s, c) = (w0 * t).sin_cos();
        let row = Vector3::new(1.0, s, c);
        ata += row * row.transpose();
        aty += row * *y;
    }
    let lin = ata
        .try_inverse()
        .map(|inv| inv * aty)
        .ok_or_else(|| Error::Fit("sine seed is singular".into()))?;
    let p0 = DVector::from_vec(vec![lin[0], lin[1].hypot(lin[2]), lin[2].atan2(lin[1]), f0, 0.0]);

    let model = |p: &DVector<f64>| {
        let (c, a, phi, f, rate) = (p[0], p[1], p[2], p[3], p[4]);
        let mut r = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, 5);
        for (i, (t, y)) in trace.times.iter().zip(&trace.signal).enumerate() {
            let decay = (-rate * t).exp();
            let (s, co) = (TAU * f * t + phi).sin_cos();
            r[i] = c + a * decay * s - y;
            jac[(i, 0)] = 1.0;
            jac[(i, 1)] = decay * s;
            jac[(i, 2)] = a * decay * co;
            jac[(i, 3)] = a * decay * co * TAU * t;
            jac[(i, 4)] = -a * decay * s * t;
        }
        r.iter().all(|x| x.is_finite()).then_some((r, jac))
    };
    let sol = least_squares(&model, p0)?;
    let (mut a, mut phi, mut f) = (sol.params[1], sol.params[2], sol.params[3]);
    if f < 0.0 {
        f = -f;
        phi = -phi;
        a = -a;
    }
    if a < 0.0 {
        a = -a;
        phi += std::f64::consts::PI;
    }
    if !(f > 0.0) || f * trace.span() < 1.0 {
        return Err(Error::Fit(format!(
            "fitted frequency {} kHz does not span one period of the trace",
            1e3 * f
        )));
    }
    let rate = sol.params[4];
    Ok(RabiFit {
        rabi_frequency: 1e3 * f,
        decay_time: (rate > 0.0).then(|| 1.0 / rate),
        amplitude: a,
        phase: phi.rem_euclid(TAU),
        baseline: sol.params[0],
        frequency_stderr: 1e3 * sol.stderr(3).unwrap_or(f64::NAN),
        residual_rms: sol.rms(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiLine {
    /// kHz/A.
    pub slope: f64,
    /// kHz.
    pub intercept: f64,
    /// `None` with only two distinct currents (exact interpolation).
    pub slope_stderr: Option<f64>,
    pub intercept_stderr: Option<f64>,
    /// Whether the per-fit frequency errors were usable as weights.
    pub weighted: bool,
}

/// Weighted regression of Rabi frequency on current, weights `1/σ²` from the
/// fits' frequency errors. If any error is zero or not finite, all points are
/// weighted equally. Standard errors are scaled by the residual variance.
pub fn rabi_vs_current(fits: &[(f64, RabiFit)]) -> Result<RabiLine> {
    let mut distinct: Vec<f64> = fits.iter().map(|(i, _)| *i).collect();
    if distinct.iter().any(|i| !i.is_finite()) {
        return Err(Error::domain("currents must be finite"));
    }
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Fit("need at least two distinct currents".into()));
    }
    let weighted = fits
        .iter()
        .all(|(_, f)| f.frequency_stderr > 0.0 && f.frequency_stderr.is_finite());
    let w: Vec<f64> = fits
        .iter()
        .map(|(_, f)| if weighted { f.frequency_stderr.powi(-2) } else { 1.0 })
        .collect();
    let sw: f64 = w.iter().sum();
    let mx = fits.iter().zip(&w).map(|((i, _), w)| w * i).sum::<f64>() / sw;
    let my = fits.iter().zip(&w).map(|((_, f), w)| w * f.rabi_frequency).sum::<f64>() / sw;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for ((i, f), w) in fits.iter().zip(&w) {
        sxx += w * (i - mx) * (i - mx);
        sxy += w * (i - mx) * (f.rabi_frequency - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = fits.len() as f64 - 2.0;
    let (slope_stderr, intercept_stderr) = if distinct.len() > 2 {
        let chi2: f64 = fits
            .iter()
            .zip(&w)
            .map(|((i, f), w)| w * (f.rabi_frequency - slope * i - intercept).powi(2))
            .sum();
        let s2 = chi2 / dof;
        (Some((s2 / sxx).sqrt()), Some((s2 * (1.0 / sw + mx * mx / sxx)).sqrt()))
    } else {
        (None, None)
    };
    Ok(RabiLine {
        slope,
        intercept,
        slope_stderr,
        intercept_stderr,
        weighted,
    })
}

const RABI_COLUMNS: [&str; 2] = ["time_us", "signal"];

/// Trace CSV with the current in a `# current_A: <value>` header line.
pub fn read_rabi_csv(text: &str) -> Result<RabiTrace> {
    let table = io::read_csv(text, RABI_COLUMNS.len())?;
    let current = table.meta_f64("current_A", text)?;
    if let Some(w) = table.rows.windows(2).position(|w| w[1][0] <= w[0][0]) {
        return Err(Error::parse(table.lines[w + 1], "times must be strictly ascending"));
    }
    let trace = RabiTrace {
        times: table.rows.iter().map(|r| r[0]).collect(),
        signal: table.rows.iter().map(|r| r[1]).collect(),
        current,
    };
    trace.validate()?;
    Ok(trace)
}

pub fn write_rabi_csv<W: Write>(out: W, meta: &[(String, String)], trace: &RabiTrace) -> Result<()> {
    let mut meta = meta.to_vec();
    meta.push(("current_A".to_string(), format!("{}", trace.current)));
    io::write_csv(
        out,
        &meta,
        &RABI_COLUMNS,
        trace.times.iter().zip(&trace.signal).map(|(t, y)| vec![*t, *y]),
    )
}
