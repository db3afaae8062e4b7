//! Simulation and optimization of strong, tilted drive pulses for two-level
//! spin systems, beyond the rotating-wave approximation.
//!
//! The crate is organised by concern:
//!
//! - [`spin`]: the driven two-level system and its unitary propagator.
//! - [`waveform`]: offset-sine pulses, envelopes and spectral diagnostics.
//! - [`landscape`]: π-pulse fidelity landscapes over phase and offset.
//! - [`oct`]: adjoint-gradient optimal control and offset-sine fitting.
//! - [`antenna`]: Biot–Savart field of a planar two-layer spiral.
//! - [`analysis`]: NV ODMR and Rabi data analysis, unit conversions.
//!
//! Control-side quantities are dimensionless with ħ = 1 and all frequencies
//! angular; physical units appear only in [`antenna`] and [`analysis`].

// `!(x > 0.0)` is used throughout to reject NaN together with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod antenna;
mod error;
pub mod io;
pub mod landscape;
pub mod oct;
pub mod search;
pub mod spin;
pub mod su2;
pub mod waveform;

pub use analysis::{
    fit_decaying_sine, fit_odmr_series, larmor_frequency, odmr_transitions, rabi_to_field, rabi_vs_current, NvModel,
    RabiFit, RabiTrace, Species,
};
pub use antenna::{biot_savart, field_map, project_to_nv, FieldSample, NvFrame, SpiralGeometry};
pub use error::{Error, Result};
pub use landscape::{
    landscape, pi_duration, pulse_template, refine_optimum, tilt_comparison, LandscapeGrid, OptimumReport,
};
pub use oct::{compare_suite, solve, OctProblem, OctResult};
pub use spin::{
    hamiltonian_at, propagate, pulse_fidelity, rwa_reference, Drive, DriveSystem, Integrator, PropagatorConfig,
    SpinState, Trajectory,
};
pub use waveform::{
    dc_component, erf_envelope, offset_sine, spectral_filter, ControlWaveform, EnvelopeKind, OffsetSineDrive, PulseSpec,
};

/// Crate version, stamped into every emitted artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
