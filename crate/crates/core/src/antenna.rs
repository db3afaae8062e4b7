//! Static field of the two-layer planar spiral antenna, per unit current.
//!
//! Each layer is modelled as concentric circular filaments, one per turn at
//! mid-trace radius, approximated by inscribed polygons whose straight
//! segments are integrated exactly. Lengths are in µm, fields in G/A. The
//! origin sits at the spiral centre in the top copper plane, `z` points
//! towards the sample and the second layer lies at `z = −layer_gap`.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io;
use crate::{Error, Result};

/// μ0/4π in G·µm/A.
pub const MU0_OVER_4PI: f64 = 1000.0;

/// Stop refining once doubling the segment count changes `|B|` by less than
/// this, relatively.
pub const DEFAULT_SEGMENT_TOL: f64 = 1e-8;

const MIN_SEGMENTS: usize = 16;
const MAX_SEGMENTS: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpiralGeometry {
    pub inner_diameter: f64,
    pub turns: usize,
    pub trace_width: f64,
    /// Centre-to-centre spacing of neighbouring turns.
    pub turn_pitch: f64,
    pub layers: usize,
    pub layer_gap: f64,
    pub aperture_diameter: f64,
    /// Height of the sample point above the top copper plane, on axis.
    pub sample_height: f64,
}

impl Default for SpiralGeometry {
    fn default() -> Self {
        Self {
            inner_diameter: 600.0,
            turns: 15,
            trace_width: 100.0,
            turn_pitch: 200.0,
            layers: 2,
            layer_gap: 20.0,
            aperture_diameter: 200.0,
            sample_height: 50.0,
        }
    }
}

impl SpiralGeometry {
    /// One filament of radius `radius` in the plane `z = 0`.
    pub fn single_loop(radius: f64) -> Result<Self> {
        let trace_width = 0.1 * radius;
        let g = Self {
            inner_diameter: 2.0 * radius - trace_width,
            turns: 1,
            trace_width,
            turn_pitch: trace_width,
            layers: 1,
            layer_gap: trace_width,
            aperture_diameter: radius,
            sample_height: 0.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("inner_diameter", self.inner_diameter),
            ("trace_width", self.trace_width),
            ("turn_pitch", self.turn_pitch),
            ("layer_gap", self.layer_gap),
            ("aperture_diameter", self.aperture_diameter),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.sample_height >= 0.0 && self.sample_height.is_finite()) {
            return Err(Error::domain("sample_height must be finite and >= 0"));
        }
        if self.turns == 0 {
            return Err(Error::domain("the spiral needs at least one turn"));
        }
        if !matches!(self.layers, 1 | 2) {
            return Err(Error::domain(format!("layers must be 1 or 2, got {}", self.layers)));
        }
        if self.turn_pitch < self.trace_width {
            return Err(Error::domain(format!(
                "turn_pitch {} is below trace_width {}: traces would overlap",
                self.turn_pitch, self.trace_width
            )));
        }
        if self.aperture_diameter > self.inner_diameter {
            return Err(Error::domain("the aperture is wider than the inner loop"));
        }
        Ok(())
    }

    /// `r_i = inner_diameter/2 + (i + 1/2)·turn_pitch`.
    pub fn radii(&self) -> Vec<f64> {
        (0..self.turns)
            .map(|i| 0.5 * self.inner_diameter + (i as f64 + 0.5) * self.turn_pitch)
            .collect()
    }

    pub fn outer_radius(&self) -> f64 {
        0.5 * self.inner_diameter + self.turns as f64 * self.turn_pitch
    }

    pub fn layer_heights(&self) -> Vec<f64> {
        (0..self.layers)
            .map(|l| if l == 0 { 0.0 } else { -self.layer_gap })
            .collect()
    }

    pub fn sample_point(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.sample_height)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let g: Self = crate::io::parse_toml(text)?;
        g.validate()?;
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub position: Vector3<f64>,
    /// G/A.
    pub b_per_current: Vector3<f64>,
}

impl FieldSample {
    pub fn magnitude(&self) -> f64 {
        self.b_per_current.norm()
    }

    /// Angle between the field and the spiral normal, in `[0, π/2]`.
    pub fn tilt_from_normal(&self) -> f64 {
        let b = self.b_per_current;
        b.xy().norm().atan2(b.z.abs())
    }
}

/// Exact field of a straight filament from `a` to `b` at `p`, per unit
/// current, without the μ0/4π factor.
fn segment_field(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    let r1 = p - a;
    let r2 = p - b;
    let (n1, n2) = (r1.norm(), r2.norm());
    let denom = n1 * n2 * (n1 * n2 + r1.dot(&r2));
    r1.cross(&r2) * ((n1 + n2) / denom)
}

fn check_clearance(geom: &SpiralGeometry, p: &Vector3<f64>) -> Result<()> {
    let rho = p.xy().norm();
    for z in geom.layer_heights() {
        for r in geom.radii() {
            if (rho - r).hypot(p.z - z) < 0.5 * geom.trace_width {
                return Err(Error::Singularity {
                    x: p.x,
                    y: p.y,
                    z: p.z,
                    radius: r,
                    layer_z: z,
                });
            }
        }
    }
    Ok(())
}

/// Field per ampere at `point`, each turn an inscribed regular polygon with
/// `segments_per_turn` sides carrying counter-clockwise current.
pub fn biot_savart(geom: &SpiralGeometry, point: Vector3<f64>, segments_per_turn: usize) -> Result<FieldSample> {
    geom.validate()?;
    if segments_per_turn < MIN_SEGMENTS {
        return Err(Error::domain(format!(
            "segments_per_turn must be >= {MIN_SEGMENTS}, got {segments_per_turn}"
        )));
    }
    if !point.iter().all(|c| c.is_finite()) {
        return Err(Error::domain("field point must be finite"));
    }
    check_clearance(geom, &point)?;
    let unit: Vec<(f64, f64)> = (0..=segments_per_turn)
        .map(|k| (TAU * k as f64 / segments_per_turn as f64).sin_cos())
        .collect();
    let mut b = Vector3::zeros();
    for z in geom.layer_heights() {
        for r in geom.radii() {
            let mut loop_b = Vector3::zeros();
            for w in unit.windows(2) {
                let a = Vector3::new(r * w[0].1, r * w[0].0, z);
                let c = Vector3::new(r * w[1].1, r * w[1].0, z);
                loop_b += segment_field(&point, &a, &c);
            }
            b += loop_b;
        }
    }
    Ok(FieldSample {
        position: point,
        b_per_current: b * MU0_OVER_4PI,
    })
}

/// Doubles the segment count from 64 until `|B|` changes by less than `tol`
/// relatively. Returns the finer sample and its segment count.
pub fn converged_field(geom: &SpiralGeometry, point: Vector3<f64>, tol: f64) -> Result<(FieldSample, usize)> {
    if !(tol > 0.0) {
        return Err(Error::domain("tolerance must be > 0"));
    }
    let mut n = 64;
    let mut prev = biot_savart(geom, point, n)?;
    while n < MAX_SEGMENTS {
        n *= 2;
        let next = biot_savart(geom, point, n)?;
        let scale = next.magnitude().max(f64::MIN_POSITIVE);
        if (next.b_per_current - prev.b_per_current).norm() <= tol * scale {
            return Ok((next, n));
        }
        prev = next;
    }
    Err(Error::Convergence {
        refinements: MAX_SEGMENTS.trailing_zeros() as usize - 6,
        previous: prev.magnitude(),
        last: prev.magnitude(),
    })
}

/// `μ0/(2R)` in G/A.
pub fn loop_center_field(radius: f64) -> f64 {
    2.0 * PI * MU0_OVER_4PI / radius
}

/// On-axis field of one loop, `μ0 R²/(2(R² + z²)^{3/2})`.
pub fn loop_axis_field(radius: f64, z: f64) -> f64 {
    2.0 * PI * MU0_OVER_4PI * radius * radius / (radius * radius + z * z).powf(1.5)
}

/// Rectangular grid in the plane `y = const`, rows of constant `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossSection {
    pub y: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub nx: usize,
    pub nz: usize,
}

impl Default for CrossSection {
    fn default() -> Self {
        Self {
            y: 0.0,
            x_min: -300.0,
            x_max: 300.0,
            z_min: 10.0,
            z_max: 150.0,
            nx: 61,
            nz: 15,
        }
    }
}

impl CrossSection {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 1 || self.nz < 1 {
            return Err(Error::domain("cross-section needs nx, nz >= 1"));
        }
        let ordered =
            |lo: f64, hi: f64, n: usize| lo.is_finite() && hi.is_finite() && (lo < hi || (n == 1 && lo == hi));
        if !ordered(self.x_min, self.x_max, self.nx) || !ordered(self.z_min, self.z_max, self.nz) {
            return Err(Error::domain("cross-section ranges must be finite and increasing"));
        }
        if !self.y.is_finite() {
            return Err(Error::domain("cross-section y must be finite"));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        // Mirror-exact: x_k and x_{n−1−k} are computed from opposite ends.
        (0..n)
            .map(|k| {
                if 2 * k < n {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                } else {
                    hi - (hi - lo) * (n - 1 - k) as f64 / (n - 1) as f64
                }
            })
            .collect()
    }

    pub fn points(&self) -> Vec<Vector3<f64>> {
        let xs = Self::axis(self.x_min, self.x_max, self.nx);
        let zs = Self::axis(self.z_min, self.z_max, self.nz);
        zs.iter()
            .flat_map(|&z| xs.iter().map(move |&x| Vector3::new(x, self.y, z)))
            .collect()
    }
}

/// Field over a cross-section at a fixed segment count, evaluated in parallel
/// and returned in grid order.
pub fn field_map(geom: &SpiralGeometry, plane: &CrossSection, segments_per_turn: usize) -> Result<Vec<FieldSample>> {
    geom.validate()?;
    plane.validate()?;
    plane
        .points()
        .into_par_iter()
        .map(|p| biot_savart(geom, p, segments_per_turn))
        .collect()
}

const MAP_COLUMNS: [&str; 6] = ["x_um", "y_um", "z_um", "bx_G_per_A", "by_G_per_A", "bz_G_per_A"];

pub fn write_field_csv<W: Write>(out: W, meta: &[(String, String)], samples: &[FieldSample]) -> Result<()> {
    let rows = samples.iter().map(|s| {
        let (p, b) = (s.position, s.b_per_current);
        vec![p.x, p.y, p.z, b.x, b.y, b.z]
    });
    io::write_csv(out, meta, &MAP_COLUMNS, rows)
}

pub fn read_field_csv(text: &str) -> Result<Vec<FieldSample>> {
    let table = io::read_csv(text, MAP_COLUMNS.len())?;
    Ok(table
        .rows
        .iter()
        .map(|r| FieldSample {
            position: Vector3::new(r[0], r[1], r[2]),
            b_per_current: Vector3::new(r[3], r[4], r[5]),
        })
        .collect())
}

/// NV symmetry axis in the antenna frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvFrame {
    nv_axis: Vector3<f64>,
}

/// Angle between the NV axis and the surface normal for a [100] diamond.
pub const NV_TILT_DEG: f64 = 54.7;

impl Default for NvFrame {
    fn default() -> Self {
        Self::tilted(NV_TILT_DEG.to_radians())
    }
}

impl NvFrame {
    pub fn new(axis: Vector3<f64>) -> Result<Self> {
        let n = axis.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::domain("NV axis must be a finite nonzero vector"));
        }
        Ok(Self { nv_axis: axis / n })
    }

    /// Axis in the `xz` plane, `angle` away from the spiral normal.
    pub fn tilted(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            nv_axis: Vector3::new(s, 0.0, c),
        }
    }

    pub fn axis(&self) -> Vector3<f64> {
        self.nv_axis
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvProjection {
    pub b_parallel: f64,
    pub b_transverse: f64,
    /// Tilt from the plane transverse to the NV axis, `atan(b∥/b⊥)`.
    pub theta_d: f64,
    /// The field is along the axis (`b⊥` negligible), so `θd = ±π/2`.
    pub along_axis: bool,
}

pub fn project_to_nv(sample: &FieldSample, frame: &NvFrame) -> Result<NvProjection> {
    let b = sample.b_per_current;
    let norm = b.norm();
    if !(norm > 0.0) {
        return Err(Error::domain("zero field: the drive tilt is undefined"));
    }
    let b_parallel = b.dot(&frame.nv_axis);
    let b_transverse = (b - frame.nv_axis * b_parallel).norm();
    Ok(NvProjection {
        b_parallel,
        b_transverse,
        theta_d: b_parallel.atan2(b_transverse),
        along_axis: b_transverse <= 1e-12 * norm,
    })
}
