//! NV ground-state level shifts under a tilted field, and their fit.
//!
//! The spin-1 Hamiltonian is `D·Sz² + E·(Sx² − Sy²) + γe·(B·S)` in MHz with
//! `B = k·I·n̂`. The field direction is written as a tilt `θ` from the plane
//! transverse to the NV axis and an azimuth `φ`:
//! `n̂ = (cos θ cos φ, cos θ sin φ, sin θ)`.

use std::io::Write;

use nalgebra::{Complex, DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::least_squares;
use crate::io;
use crate::{Error, Result};

/// MHz.
pub const DEFAULT_ZFS: f64 = 2870.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NvModel {
    /// `D` in MHz.
    pub zero_field_splitting_d: f64,
    /// `E` in MHz.
    pub strain_e: f64,
    /// `γe/2π` in MHz/G.
    pub gyro_e: f64,
    /// Unit vector in the NV frame, `z` along the NV axis.
    pub field_dir: Vector3<f64>,
    /// G/A.
    pub field_per_current: f64,
}

impl Default for NvModel {
    fn default() -> Self {
        Self {
            zero_field_splitting_d: DEFAULT_ZFS,
            strain_e: 0.0,
            gyro_e: super::units::ELECTRON_GAMMA,
            field_dir: Vector3::z(),
            field_per_current: 100.0,
        }
    }
}

fn direction(tilt: f64, azimuth: f64) -> Vector3<f64> {
    let (st, ct) = tilt.sin_cos();
    let (sp, cp) = azimuth.sin_cos();
    Vector3::new(ct * cp, ct * sp, st)
}

impl NvModel {
    /// Field along `(tilt, azimuth)`; see the module docs.
    pub fn tilted(d: f64, e: f64, field_per_current: f64, tilt: f64, azimuth: f64) -> Result<Self> {
        let m = Self {
            zero_field_splitting_d: d,
            strain_e: e,
            field_dir: direction(tilt, azimuth),
            field_per_current,
            ..Self::default()
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zero_field_splitting_d > 0.0 && self.zero_field_splitting_d.is_finite()) {
            return Err(Error::domain("D must be finite and > 0"));
        }
        if !(self.gyro_e > 0.0 && self.gyro_e.is_finite()) {
            return Err(Error::domain("gyro_e must be finite and > 0"));
        }
        if !self.strain_e.is_finite() || !self.field_per_current.is_finite() {
            return Err(Error::domain("strain and field-per-current must be finite"));
        }
        if (self.field_dir.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!(
                "field_dir must be a unit vector, |n| = {}",
                self.field_dir.norm()
            )));
        }
        Ok(())
    }

    /// Tilt from the plane transverse to the NV axis.
    pub fn tilt(&self) -> f64 {
        self.field_dir.z.clamp(-1.0, 1.0).asin()
    }

    pub fn azimuth(&self) -> f64 {
        self.field_dir.y.atan2(self.field_dir.x)
    }

    fn hamiltonian(&self, current: f64) -> Matrix3<Complex<f64>> {
        let (d, e) = (self.zero_field_splitting_d, self.strain_e);
        let b = self.field_dir * (self.field_per_current * current * self.gyro_e);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = |re: f64, im: f64| Complex::new(re, im);
        // Basis |+1⟩, |0⟩, |−1⟩.
        let plus = c(s * b.x, -s * b.y);
        Matrix3::new(
            c(d + b.z, 0.0),
            plus,
            c(e, 0.0),
            plus.conj(),
            c(0.0, 0.0),
            plus,
            c(e, 0.0),
            plus.conj(),
            c(d - b.z, 0.0),
        )
    }
}

/// The two transition frequencies from the lowest level, ascending, in MHz.
pub fn odmr_transitions(model: &NvModel, current: f64) -> Result<(f64, f64)> {
    model.validate()?;
    if !current.is_finite() {
        return Err(Error::domain("current must be finite"));
    }
    Ok(transitions(model, current))
}

fn transitions(model: &NvModel, current: f64) -> (f64, f64) {
    let mut ev: Vec<f64> = model
        .hamiltonian(current)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    (ev[1] - ev[0], ev[2] - ev[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdmrPoint {
    /// A.
    pub current: f64,
    /// MHz.
    pub f_minus: f64,
    /// MHz.
    pub f_plus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdmrFit {
    pub model: NvModel,
    pub tilt: f64,
    pub field_per_current_stderr: f64,
    pub tilt_stderr: f64,
    pub strain_stderr: f64,
    /// MHz.
    pub residual_rms: f64,
}

/// Fits `(field_per_current, tilt, E)` with `D`, `γe` and the azimuth held at
/// their values in `init`.
pub fn fit_odmr_series(data: &[OdmrPoint], init: &NvModel) -> Result<OdmrFit> {
    init.validate()?;
    if data.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 ODMR points, got {}", data.len())));
    }
    if data
        .iter()
        .any(|p| !(p.current.is_finite() && p.f_minus.is_finite() && p.f_plus.is_finite()))
    {
        return Err(Error::domain("ODMR data must be finite"));
    }
    if data.iter().all(|p| p.current == data[0].current) {
        return Err(Error::Fit(
            "all ODMR points share one current: the fit is degenerate".into(),
        ));
    }
    let azimuth = init.azimuth();
    let build = |p: &DVector<f64>| NvModel {
        field_per_current: p[0],
        field_dir: direction(p[1], azimuth),
        strain_e: p[2],
        ..*init
    };
    let residuals = |p: &DVector<f64>| {
        let m = build(p);
        DVector::from_iterator(
            2 * data.len(),
            data.iter().flat_map(|pt| {
                let (lo, hi) = transitions(&m, pt.current);
                [lo - pt.f_minus, hi - pt.f_plus]
            }),
        )
    };
    let model = |p: &DVector<f64>| {
        let r = residuals(p);
        if !r.iter().all(|x| x.is_finite()) {
            return None;
        }
        let mut jac = DMatrix::zeros(r.len(), 3);
        for k in 0..3 {
            let h = 1e-6 * (p[k].abs() + 1.0);
            let (mut up, mut down) = (p.clone(), p.clone());
            up[k] += h;
            down[k] -= h;
            jac.set_column(k, &((residuals(&up) - residuals(&down)) / (2.0 * h)));
        }
        Some((r, jac))
    };
    let p0 = DVector::from_vec(vec![init.field_per_current, init.tilt(), init.strain_e]);
    let sol = least_squares(&model, p0)?;
    let cov = sol
        .covariance
        .as_ref()
        .ok_or_else(|| Error::Fit("singular curvature: parameters are not identifiable from these data".into()))?;
    let (mut k, mut tilt, mut az) = (sol.params[0], sol.params[1], azimuth);
    // B is even under k → −k with n̂ → −n̂.
    if k < 0.0 {
        k = -k;
        tilt = -tilt;
        az += std::f64::consts::PI;
    }
    let fitted = NvModel {
        field_per_current: k,
        field_dir: direction(tilt, az),
        strain_e: sol.params[2],
        ..*init
    };
    Ok(OdmrFit {
        model: fitted,
        tilt: fitted.tilt(),
        field_per_current_stderr: cov[(0, 0)].max(0.0).sqrt(),
        tilt_stderr: cov[(1, 1)].max(0.0).sqrt(),
        strain_stderr: cov[(2, 2)].max(0.0).sqrt(),
        residual_rms: sol.rms(),
    })
}

const ODMR_COLUMNS: [&str; 3] = ["current_A", "f_minus_MHz", "f_plus_MHz"];

pub fn read_odmr_csv(text: &str) -> Result<Vec<OdmrPoint>> {
    let table = io::read_csv(text, ODMR_COLUMNS.len())?;
    Ok(table
        .rows
        .iter()
        .map(|r| OdmrPoint {
            current: r[0],
            f_minus: r[1],
            f_plus: r[2],
        })
        .collect())
}

pub fn write_odmr_csv<W: Write>(out: W, meta: &[(String, String)], data: &[OdmrPoint]) -> Result<()> {
    io::write_csv(
        out,
        meta,
        &ODMR_COLUMNS,
        data.iter().map(|p| vec![p.current, p.f_minus, p.f_plus]),
    )
}
