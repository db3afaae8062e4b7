//! Invariants over randomized inputs.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use num_complex::Complex64;
use proptest::prelude::*;

use spinpulse::analysis::{larmor_frequency, rabi_vs_current, RabiFit, Species};
use spinpulse::antenna::{biot_savart, project_to_nv, FieldSample, NvFrame, SpiralGeometry};
use spinpulse::landscape::pulse_fidelity_of;
use spinpulse::spin::{propagate, DriveSystem, PropagatorConfig, SpinState};
use spinpulse::su2;
use spinpulse::waveform::{
    dc_component, erf_envelope, offset_sine, spectral_filter, wrap_phase, ControlWaveform, EnvelopeKind, PulseSpec,
};

fn envelope() -> impl Strategy<Value = EnvelopeKind> {
    prop_oneof![Just(EnvelopeKind::ErrorFunction), Just(EnvelopeKind::Rectangular)]
}

fn rms(a: &[f64]) -> f64 {
    (a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn propagation_preserves_the_norm(
        omega_d in 0.05f64..1.2,
        theta in 0.0f64..1.2,
        a in -1.0f64..=1.0,
        phi in 0.0f64..TAU,
        kind in envelope(),
    ) {
        let sys = DriveSystem::new(1.0, omega_d, theta).unwrap();
        let spec = PulseSpec::new(a, phi, PI / 10.0, PI / omega_d + PI / 5.0, kind).unwrap();
        let traj = propagate(&sys, &spec.drive(&sys).unwrap(), &SpinState::spin_up(), &PropagatorConfig {
            output_samples: 64,
            ..Default::default()
        })
        .unwrap();
        for s in &traj.states {
            prop_assert!((s.norm() - 1.0).abs() < 1e-12);
        }
        prop_assert!((0.0..=1.0).contains(&traj.final_fidelity));
    }

    #[test]
    fn fidelity_is_two_pi_periodic_in_phase(
        omega_d in 0.1f64..1.0,
        a in -1.0f64..=1.0,
        phi in 0.0f64..TAU,
    ) {
        let sys = DriveSystem::new(1.0, omega_d, 0.6).unwrap();
        let base = PulseSpec::new(a, phi, PI / 10.0, PI / omega_d + PI / 5.0, EnvelopeKind::ErrorFunction).unwrap();
        let shifted = base.with_params(a, phi + TAU).unwrap();
        let cfg = PropagatorConfig::default();
        let f1 = pulse_fidelity_of(&sys, &base, &cfg).unwrap();
        let f2 = pulse_fidelity_of(&sys, &shifted, &cfg).unwrap();
        if wrap_phase(phi + TAU) == base.phase_phi {
            prop_assert_eq!(f1, f2);
        } else {
            prop_assert!((f1 - f2).abs() < 1e-12);
        }
    }

    #[test]
    fn offset_sine_is_bounded_and_phase_blind_at_full_offset(
        omega_d in 0.1f64..1.0,
        a in -1.0f64..=1.0,
        phi in 0.0f64..TAU,
        phi2 in 0.0f64..TAU,
        kind in envelope(),
    ) {
        let sys = DriveSystem::new(1.0, omega_d, 0.0).unwrap();
        let t = PI / omega_d + PI / 5.0;
        let w = offset_sine(&PulseSpec::new(a, phi, PI / 10.0, t, kind).unwrap(), &sys, 513).unwrap();
        prop_assert!(w.peak() <= 1.0);
        let sign = if a >= 0.0 { 1.0 } else { -1.0 };
        let full1 = offset_sine(&PulseSpec::new(sign, phi, PI / 10.0, t, kind).unwrap(), &sys, 129).unwrap();
        let full2 = offset_sine(&PulseSpec::new(sign, phi2, PI / 10.0, t, kind).unwrap(), &sys, 129).unwrap();
        prop_assert_eq!(full1.values, full2.values);
    }

    #[test]
    fn erf_envelope_is_mirror_symmetric(t_pi in 1.0f64..40.0, frac in 0.0f64..=1.0) {
        let dt = PI / 10.0;
        let t = frac * t_pi;
        let e = erf_envelope(t, t_pi, dt);
        prop_assert!((0.0..=1.0).contains(&e));
        prop_assert!((e - erf_envelope(t_pi - t, t_pi, dt)).abs() < 1e-14);
    }

    #[test]
    fn spectral_filter_is_idempotent(
        coeffs in prop::collection::vec(-1.0f64..1.0, 24),
        cutoff in 1.0f64..12.0,
    ) {
        let duration = 4.0 * PI;
        let w = ControlWaveform::from_fn(duration, 401, false, |t| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * ((k as f64 + 1.0) * t + 0.3 * k as f64).sin())
                .sum::<f64>()
                / 48.0
        })
        .unwrap();
        let once = spectral_filter(&w, cutoff).unwrap().waveform;
        let twice = spectral_filter(&once, cutoff).unwrap().waveform;
        prop_assert_eq!(*once.values.first().unwrap(), 0.0);
        prop_assert_eq!(*once.values.last().unwrap(), 0.0);
        let diff: Vec<f64> = once.values.iter().zip(&twice.values).map(|(a, b)| a - b).collect();
        prop_assert!(rms(&diff) < 1e-12);
    }

    #[test]
    fn dc_component_is_linear(x in -2.0f64..2.0, y in -2.0f64..2.0, p in 0.0f64..TAU) {
        let d = 3.0 * PI;
        let f = ControlWaveform::from_fn(d, 301, true, |t| (t + p).sin()).unwrap();
        let g = ControlWaveform::from_fn(d, 301, true, |t| 0.5 - (2.0 * t).cos()).unwrap();
        let h = ControlWaveform::from_fn(d, 301, true, |t| x * (t + p).sin() + y * (0.5 - (2.0 * t).cos())).unwrap();
        let lhs = dc_component(&h);
        let rhs = x * dc_component(&f) + y * dc_component(&g);
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn waveform_files_round_trip_exactly(values in prop::collection::vec(-1.0f64..1.0, 2..64), t in 0.1f64..50.0) {
        let n = values.len();
        let w = ControlWaveform::from_fn(t, n, true, |s| values[((s / t) * (n - 1) as f64).round() as usize]).unwrap();
        let mut buf = Vec::new();
        w.write_csv(&mut buf, &[]).unwrap();
        prop_assert_eq!(&ControlWaveform::from_csv(std::str::from_utf8(&buf).unwrap()).unwrap(), &w);
        prop_assert_eq!(&ControlWaveform::from_json(&w.to_json().unwrap()).unwrap(), &w);
    }

    #[test]
    fn su2_exponential_is_unitary(b in prop::array::uniform3(-5.0f64..5.0), tau in -3.0f64..3.0) {
        let m = su2::exp_matrix(0.0, b, tau);
        let p = su2::mat_mul(&su2::adjoint(&m), &m);
        for (i, row) in p.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
                prop_assert!((v - want).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn loop_field_is_mirror_symmetric(x in 0.0f64..300.0, z in 10.0f64..200.0) {
        let g = SpiralGeometry::default();
        let a = biot_savart(&g, Vector3::new(x, 0.0, z), 256).unwrap();
        let b = biot_savart(&g, Vector3::new(-x, 0.0, z), 256).unwrap();
        prop_assert!((a.magnitude() - b.magnitude()).abs() <= 1e-9 * a.magnitude());
        prop_assert!((a.b_per_current.x + b.b_per_current.x).abs() <= 1e-9 * a.magnitude());
    }

    #[test]
    fn nv_projection_splits_the_field(
        b in prop::array::uniform3(-100.0f64..100.0),
        tilt in 0.0f64..PI,
    ) {
        let field = Vector3::from(b);
        prop_assume!(field.norm() > 1e-3);
        let s = FieldSample { position: Vector3::zeros(), b_per_current: field };
        let p = project_to_nv(&s, &NvFrame::tilted(tilt)).unwrap();
        let total = p.b_parallel.hypot(p.b_transverse);
        prop_assert!((total - field.norm()).abs() <= 1e-12 * field.norm());
        prop_assert!(p.theta_d.abs() <= PI / 2.0);
    }

    #[test]
    fn larmor_is_linear_in_field_and_ratio(b in 0.0f64..1e4, g in 1e-4f64..10.0, k in 0.0f64..5.0) {
        let f = larmor_frequency(b, Species::Custom(g)).unwrap();
        prop_assert!((larmor_frequency(k * b, Species::Custom(g)).unwrap() - k * f).abs() <= 1e-12 * (1.0 + k * f));
        prop_assert!((larmor_frequency(b, Species::Custom(k.max(1e-3) * g)).unwrap() - k.max(1e-3) * f).abs() <= 1e-12 * (1.0 + k * f));
    }

    #[test]
    fn exact_lines_are_recovered(slope in 1.0f64..1000.0, intercept in -50.0f64..50.0, n in 3usize..10) {
        let fits: Vec<(f64, RabiFit)> = (0..n)
            .map(|i| {
                let current = 0.1 + 0.15 * i as f64;
                (current, RabiFit {
                    rabi_frequency: slope * current + intercept,
                    decay_time: None,
                    amplitude: 1.0,
                    phase: 0.0,
                    baseline: 0.0,
                    frequency_stderr: 1.0,
                    residual_rms: 0.0,
                })
            })
            .collect();
        let line = rabi_vs_current(&fits).unwrap();
        prop_assert!((line.slope - slope).abs() <= 1e-9 * slope);
        prop_assert!((line.intercept - intercept).abs() <= 1e-9 * slope);
    }
}
