//! End-to-end runs of the `spinpulse` binary.

use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;
use tempfile::TempDir;

use spinpulse::analysis::{odmr_transitions, write_odmr_csv, write_rabi_csv, NvModel, OdmrPoint, RabiTrace};
use spinpulse::antenna::read_field_csv;
use spinpulse::io::read_csv;
use spinpulse::landscape::{phase_grid, pulse_fidelity_of, pulse_template, read_landscape_csv};
use spinpulse::spin::{DriveSystem, PropagatorConfig};
use spinpulse::waveform::{default_rise_time, ControlWaveform, EnvelopeKind};

struct Case {
    dir: TempDir,
}

impl Case {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn out(&self) -> PathBuf {
        self.path("out")
    }

    fn run(&self, sub: &str, config: &str) -> Output {
        let cfg = self.file(&format!("{sub}.toml"), config);
        Command::new(env!("CARGO_BIN_EXE_spinpulse"))
            .arg(sub)
            .arg("--config")
            .arg(cfg)
            .arg("--out")
            .arg(self.out())
            .arg("--seed")
            .arg("7")
            .output()
            .unwrap()
    }

    fn ok(&self, sub: &str, config: &str) -> Output {
        let o = self.run(sub, config);
        assert!(
            o.status.success(),
            "{sub} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        o
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.out().join(name)).unwrap()).unwrap()
    }

    fn text(&self, name: &str) -> String {
        fs::read_to_string(self.out().join(name)).unwrap()
    }
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_best_phase_at_full_strength() {
    let sys = DriveSystem::new(1.0, 1.0, 35.3f64.to_radians()).unwrap();
    let t = pulse_template(&sys, EnvelopeKind::ErrorFunction, default_rise_time(1.0)).unwrap();
    let cfg = PropagatorConfig::default();
    let best = phase_grid(64)
        .into_iter()
        .map(|phi| {
            (
                phi,
                pulse_fidelity_of(&sys, &t.with_params(0.0, phi).unwrap(), &cfg).unwrap(),
            )
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();

    let case = Case::new();
    case.ok(
        "simulate",
        &format!(
            "[system]\nomega_d = 1.0\ntheta_d_deg = 35.3\n[pulse]\nphase = {}\n",
            best.0
        ),
    );
    let s = case.json("summary.json");
    let fid = f(&s["final_fidelity"]);
    assert_eq!(fid, best.1);
    assert!((fid - 0.94).abs() < 0.03, "F = {fid}");
    assert_eq!(s["provenance"]["seed"], 7);
    assert!(f(&s["max_norm_error"]) < 1e-12);

    let table = read_csv(&case.text("trajectory.csv"), 7).unwrap();
    assert_eq!(table.rows.len(), 1000);
    assert_eq!(table.meta_value("seed"), Some("7"));
    let last = table.rows.last().unwrap();
    assert_eq!(last[2], fid);
    assert_eq!(last[5] * last[5] + last[6] * last[6], last[2]);
}

#[test]
fn simulate_zero_drive_stays_up() {
    let case = Case::new();
    case.ok("simulate", "[system]\nomega_d = 0.0\n[pulse]\nduration = 12.5\n");
    let table = read_csv(&case.text("trajectory.csv"), 7).unwrap();
    assert!(table.rows.iter().all(|r| (r[1] - 1.0).abs() < 1e-12 && r[2] == 0.0));
    assert_eq!(f(&case.json("summary.json")["final_fidelity"]), 0.0);
}

#[test]
fn simulate_exact_cancellation_flip() {
    let case = Case::new();
    case.ok(
        "simulate",
        "[system]\nexact_cancellation = true\ntheta_d_deg = 35.3\n[pulse]\noffset = -1.0\nenvelope = \"rectangular\"\nduration = \"flip\"\n",
    );
    assert!(f(&case.json("summary.json")["infidelity"]) < 1e-10);
}

#[test]
fn reruns_are_bit_identical() {
    let config = "[system]\nomega_d = 0.4\n[pulse]\noffset = 0.1\nphase = 1.0\n";
    let a = Case::new();
    let b = Case::new();
    a.ok("simulate", config);
    b.ok("simulate", config);
    for name in ["trajectory.csv", "summary.json"] {
        assert_eq!(a.text(name), b.text(name), "{name}");
    }
}

#[test]
fn out_dir_from_environment() {
    let case = Case::new();
    let cfg = case.file("s.toml", "[system]\nomega_d = 0.5\n[pulse]\n");
    let target = case.path("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_spinpulse"))
        .args(["simulate", "--config"])
        .arg(&cfg)
        .env("SPINPULSE_OUT_DIR", &target)
        .env("SPINPULSE_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(target.join("summary.json").exists());
}

#[test]
fn exit_codes() {
    let case = Case::new();
    let o = case.run("simulate", "[system]\nomega_d = -1.0\n[pulse]\n");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("system"), "{}", stderr(&o));

    let o = case.run("simulate", "[system]\nomega_d = 1.0\n[pulse]\nofset = 0.2\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    let o = case.run("simulate", "[system\n");
    assert_eq!(o.status.code(), Some(2));

    let o = case.run(
        "simulate",
        "[system]\nomega_d = 1.0\n[pulse]\n[propagator]\nmax_refinements = 1\nbase_step = 0.5\n",
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn landscape_batch_of_three_amplitudes() {
    let case = Case::new();
    case.ok(
        "landscape",
        "[system]\namplitude_divisors = [10, 3, 1]\n[scan]\nphase_n = 16\noffset_n = 11\n",
    );
    let report = case.json("landscape_report.json");
    let entries = report["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    for (i, e) in entries.iter().enumerate() {
        let table = read_landscape_csv(&case.text(&format!("landscape_{i}.csv"))).unwrap();
        assert_eq!((table.phases.len(), table.offsets.len()), (16, 11));
        assert!(case.out().join(format!("landscape_{i}.dat")).exists());
        let grid_best = table.infidelity.iter().flatten().copied().fold(f64::MAX, f64::min);
        assert!(f(&e["best_infidelity"]) <= grid_best);
    }
    assert_eq!(f(&entries[1]["omega_d"]), 1.0 / 3.0);
    let full = &entries[2];
    assert!(f(&full["best_infidelity"]) < 1e-3, "{}", full["best_infidelity"]);
}

#[test]
fn landscape_minimal_grid() {
    let case = Case::new();
    case.ok(
        "landscape",
        "[system]\namplitudes = [0.5]\n[scan]\nphase_n = 2\noffset_n = 2\n",
    );
    let table = read_landscape_csv(&case.text("landscape_0.csv")).unwrap();
    assert_eq!(table.infidelity.iter().flatten().count(), 4);
    assert!(table.infidelity.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn oct_default_suite() {
    let case = Case::new();
    case.ok("oct", "");
    let table = case.json("oct_table.json");
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    for (i, r) in rows.iter().enumerate() {
        let w = f(&r["omega_d"]);
        assert!(r["errors"].as_array().unwrap().is_empty());
        assert!(f(&r["oct_infidelity"]) < 1e-3, "OCT at {w}");
        let os = f(&r["offset_sine_infidelity"]);
        if w == 0.5 {
            // Known limit of the offset-sine family at this amplitude.
            assert!((1e-2..3e-2).contains(&os), "offset-sine at ω0/2: {os}");
        } else {
            assert!(os < 1e-3, "offset-sine at {w}: {os}");
        }
        assert!(r["fit_infidelity"].is_number());
        for kind in ["oct", "fit", "offset_sine"] {
            let w = ControlWaveform::from_csv(&case.text(&format!("{kind}_{i}.csv"))).unwrap();
            assert!(w.len() > 2);
        }
    }
    let csv = read_csv(&case.text("oct_table.csv"), 14).unwrap();
    assert_eq!(csv.rows.len(), 6);
}

#[test]
fn oct_single_and_infeasible_rows() {
    let case = Case::new();
    case.ok("oct", "[system]\namplitudes = [0.25]\n");
    assert_eq!(case.json("oct_table.json")["rows"].as_array().unwrap().len(), 1);

    let case = Case::new();
    let o = case.ok("oct", "[system]\namplitudes = [0.25]\n[oct]\ncutoff_ratio = 0.5\n");
    let rows = case.json("oct_table.json")["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 1);
    assert!(!rows[0]["errors"].as_array().unwrap().is_empty());
    assert!(stderr(&o).contains("warning: row 0"));
}

#[test]
fn spiral_default_geometry() {
    let case = Case::new();
    case.ok("spiral", "[map]\nnx = 9\nnz = 4\n");
    let r = case.json("spiral_report.json");
    let b = f(&r["b_magnitude_per_current"]);
    assert!((b / 136.0 - 1.0).abs() <= 0.2, "|B|/I = {b}");
    assert!(f(&r["tilt_from_normal_deg"]) <= 3.0);
    assert!((f(&r["theta_d_deg"]) - 35.3).abs() < 0.1);
    let map = read_field_csv(&case.text("field_map.csv")).unwrap();
    assert_eq!(map.len(), 36);
    // Rows of constant z, x ascending over a symmetric range.
    for row in map.chunks(9) {
        for k in 0..9 {
            let (a, b) = (row[k].magnitude(), row[8 - k].magnitude());
            assert!((a - b).abs() <= 1e-9 * a.max(b));
        }
    }
}

#[test]
fn spiral_single_loop_center() {
    let case = Case::new();
    case.ok(
        "spiral",
        "[geometry]\nturns = 1\nlayers = 1\ninner_diameter = 600\ntrace_width = 100\nturn_pitch = 100\nsample_height = 0\n\
         [map]\nnx = 3\nnz = 2\n",
    );
    let r = case.json("spiral_report.json");
    let radius = 350.0;
    let exact = 2.0 * PI * 1000.0 / radius;
    let b = f(&r["b_magnitude_per_current"]);
    assert!((b - exact).abs() <= 1e-6 * exact, "{b} vs {exact}");
}

#[test]
fn spiral_invalid_geometry_is_a_validation_error() {
    let case = Case::new();
    let o = case.run("spiral", "[geometry]\nturn_pitch = 50\n");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("geometry"));
}

fn rabi_trace(freq_khz: f64, current: f64, noise: f64, seed: u64) -> RabiTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, noise.max(1e-300)).unwrap();
    let times: Vec<f64> = (0..400).map(|i| i as f64 * 0.025).collect();
    let signal = times
        .iter()
        .map(|t| {
            let clean = 0.5 + 0.4 * (-t / 6.0f64).exp() * (2.0 * PI * freq_khz * 1e-3 * t + 0.3).cos();
            clean + if noise > 0.0 { n.sample(&mut rng) } else { 0.0 }
        })
        .collect();
    RabiTrace { times, signal, current }
}

fn write_trace(case: &Case, name: &str, trace: &RabiTrace) {
    let mut buf = Vec::new();
    write_rabi_csv(&mut buf, &[], trace).unwrap();
    case.file(name, std::str::from_utf8(&buf).unwrap());
}

#[test]
fn fit_rabi_traces_and_line() {
    let case = Case::new();
    let slope = 463.0;
    for (i, current) in [0.4, 0.8, 1.1447].iter().enumerate() {
        write_trace(
            &case,
            &format!("r{i}.csv"),
            &rabi_trace(slope * current, *current, 0.0, 0),
        );
    }
    case.ok(
        "fit",
        "[rabi]\ninputs = [\"r0.csv\", \"r1.csv\", \"r2.csv\"]\nspecies = \"proton\"\n",
    );
    let r = case.json("rabi_fit.json");
    let top = f(&r["fits"][2]["fit"]["rabi_frequency"]);
    assert!((top / (slope * 1.1447) - 1.0).abs() < 1e-3, "{top}");
    assert!((f(&r["line"]["slope"]) - slope).abs() < 1e-6);
    assert!((f(&r["field_per_current"]) - 108.8).abs() < 0.1);
}

#[test]
fn fit_rabi_530_khz_single_trace() {
    let case = Case::new();
    write_trace(&case, "t.csv", &rabi_trace(530.0, 1.1447, 0.0, 0));
    case.ok("fit", "[rabi]\ninputs = [\"t.csv\"]\n");
    let r = case.json("rabi_fit.json");
    assert!((f(&r["fits"][0]["fit"]["rabi_frequency"]) / 530.0 - 1.0).abs() < 1e-3);
    assert!(r["line"].is_null());
}

#[test]
fn fit_malformed_csv_reports_its_line() {
    let case = Case::new();
    case.file("bad.csv", "# current_A: 1.0\ntime_us,signal\n0.0,0.5\n0.1,oops\n");
    let o = case.run("fit", "[rabi]\ninputs = [\"bad.csv\"]\n");
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 4") && err.contains("bad.csv"), "{err}");

    let o = case.run("fit", "[rabi]\ninputs = [\"missing.csv\"]\n");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fit_odmr_series_recovers_the_field() {
    let truth = NvModel::tilted(2870.0, 3.0, 113.0, 36.5f64.to_radians(), 0.0).unwrap();
    let data: Vec<OdmrPoint> = (0..12)
        .map(|i| {
            let current = 0.05 + 0.05 * i as f64;
            let (f_minus, f_plus) = odmr_transitions(&truth, current).unwrap();
            OdmrPoint {
                current,
                f_minus,
                f_plus,
            }
        })
        .collect();
    let case = Case::new();
    let mut buf = Vec::new();
    write_odmr_csv(&mut buf, &[], &data).unwrap();
    case.file("odmr.csv", std::str::from_utf8(&buf).unwrap());
    case.ok(
        "fit",
        "[odmr]\ninput = \"odmr.csv\"\n[odmr.init]\nfield_per_current = 90\ntilt_deg = 25\nstrain_e = 1\n",
    );
    let r = case.json("odmr_fit.json");
    assert!((f(&r["field_per_current"]) / 113.0 - 1.0).abs() < 1e-3);
    assert!((f(&r["tilt_deg"]) / 36.5 - 1.0).abs() < 1e-3);
    assert_eq!(r["points"], 12);
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_spinpulse"))
        .arg("simulate")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
