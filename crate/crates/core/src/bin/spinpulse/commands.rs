use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::Serialize;

use spinpulse::analysis::{
    fit_decaying_sine, fit_odmr_series, rabi_to_field, rabi_vs_current, read_odmr_csv, read_rabi_csv, OdmrFit, RabiFit,
    RabiLine, Species,
};
use spinpulse::antenna::{converged_field, field_map, project_to_nv, write_field_csv, NvProjection, SpiralGeometry};
use spinpulse::io::Provenance;
use spinpulse::landscape::{optimize, OptimumReport};
use spinpulse::oct::compare_suite;
use spinpulse::spin::{propagate, DriveSystem, SpinState};
use spinpulse::waveform::PulseSpec;
use spinpulse::{Error, Result};

use crate::config::{FitConfig, LandscapeConfig, OctConfig, SimulateConfig, SpiralConfig};

/// Output directory, provenance stamp and the list of files written.
pub struct Run {
    out_dir: PathBuf,
    config_dir: PathBuf,
    provenance: Provenance,
    written: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: T,
}

impl Run {
    pub fn new(out_dir: PathBuf, config_path: &Path, config_text: &str, seed: u64) -> Result<Self> {
        fs::create_dir_all(&out_dir)?;
        let config_dir = config_path.parent().map_or_else(PathBuf::new, Path::to_path_buf);
        Ok(Self {
            out_dir,
            config_dir,
            provenance: Provenance::new(config_text, seed),
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn meta(&self) -> Vec<(String, String)> {
        self.provenance.csv_meta()
    }

    fn create(&mut self, name: &str) -> Result<File> {
        let path = self.out_dir.join(name);
        let file = File::create(&path)?;
        self.written.push(path);
        Ok(file)
    }

    fn json<T: Serialize>(&mut self, name: &str, body: T) -> Result<()> {
        let text = serde_json::to_string_pretty(&Artifact {
            provenance: &self.provenance,
            body,
        })?;
        let path = self.out_dir.join(name);
        fs::write(&path, text + "\n")?;
        self.written.push(path);
        Ok(())
    }

    fn input(&self, path: &Path) -> Result<(PathBuf, String)> {
        let full = self.config_dir.join(path);
        let text = fs::read_to_string(&full)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", full.display()))))?;
        Ok((full, text))
    }
}

/// Prefixes parse errors with the file they came from.
fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

fn system_meta(sys: &DriveSystem) -> Vec<(String, String)> {
    vec![
        ("omega0".to_string(), format!("{}", sys.omega0)),
        ("omega_d".to_string(), format!("{}", sys.omega_d)),
        ("theta_d".to_string(), format!("{}", sys.theta_d)),
    ]
}

#[derive(Serialize)]
struct SimulateSummary {
    system: DriveSystem,
    pulse: PulseSpec,
    final_fidelity: f64,
    infidelity: f64,
    final_state: SpinState,
    steps: usize,
    max_norm_error: f64,
}

pub fn simulate(run: &mut Run, cfg: &SimulateConfig) -> Result<()> {
    let sys = cfg.system.build()?;
    let spec = cfg.pulse.build(&sys)?;
    cfg.propagator.validate()?;
    let drive = spec.drive(&sys)?;
    let traj = propagate(&sys, &drive, &SpinState::spin_up(), &cfg.propagator)?;

    let mut meta = run.meta();
    meta.extend(system_meta(&sys));
    let rows = traj.times.iter().zip(&traj.states).map(|(t, s)| {
        let [p_up, p_down] = s.populations();
        vec![*t, p_up, p_down, s.up.re, s.up.im, s.down.re, s.down.im]
    });
    let file = run.create("trajectory.csv")?;
    spinpulse::io::write_csv(
        file,
        &meta,
        &["t", "p_up", "p_down", "re_up", "im_up", "re_down", "im_down"],
        rows,
    )?;

    let final_state = *traj
        .final_state()
        .ok_or_else(|| Error::Contract("empty trajectory".into()))?;
    let max_norm_error = traj.states.iter().map(|s| (s.norm() - 1.0).abs()).fold(0.0, f64::max);
    run.json(
        "summary.json",
        SimulateSummary {
            system: sys,
            pulse: spec,
            final_fidelity: traj.final_fidelity,
            infidelity: 1.0 - traj.final_fidelity,
            final_state,
            steps: traj.steps,
            max_norm_error,
        },
    )
}

#[derive(Serialize)]
struct LandscapeEntry {
    omega_d: f64,
    theta_d: f64,
    csv: String,
    matrix: String,
    best_infidelity: f64,
    report: OptimumReport,
}

#[derive(Serialize)]
struct LandscapeReport {
    entries: Vec<LandscapeEntry>,
}

pub fn landscape(run: &mut Run, cfg: &LandscapeConfig) -> Result<()> {
    cfg.validate()?;
    let base = cfg.system.base()?;
    let amplitudes = cfg.system.amplitudes(LandscapeConfig::default_amplitudes())?;
    let mut entries = Vec::new();
    for (i, &w) in amplitudes.iter().enumerate() {
        let sys = base.with_amplitude(w)?;
        let (grid, report) = optimize(&sys, &cfg.scan, &cfg.propagator)?;
        let csv = format!("landscape_{i}.csv");
        let matrix = format!("landscape_{i}.dat");
        let meta = run.meta();
        grid.write_csv(run.create(&csv)?, &meta)?;
        grid.write_gnuplot_matrix(run.create(&matrix)?)?;
        entries.push(LandscapeEntry {
            omega_d: sys.omega_d,
            theta_d: sys.theta_d,
            csv,
            matrix,
            best_infidelity: 1.0 - report.best_fidelity,
            report,
        });
    }
    run.json("landscape_report.json", LandscapeReport { entries })
}

/// Writes the suite table and waveforms. Returns a warning per failed row.
pub fn oct(run: &mut Run, cfg: &OctConfig) -> Result<Vec<String>> {
    cfg.propagator.validate()?;
    let base = cfg.system.base()?;
    let amplitudes = cfg.system.amplitudes(OctConfig::default_amplitudes())?;
    let table = compare_suite(&amplitudes, &base, &cfg.oct, &cfg.propagator)?;

    let meta = run.meta();
    table.write_csv(run.create("oct_table.csv")?, &meta)?;
    for (i, waves) in table.waveforms.iter().enumerate() {
        for (kind, w) in [
            ("oct", &waves.oct),
            ("fit", &waves.fit),
            ("offset_sine", &waves.offset_sine),
        ] {
            if let Some(w) = w {
                let mut meta = run.meta();
                meta.push(("omega_d".to_string(), format!("{}", table.rows[i].omega_d)));
                w.write_csv(run.create(&format!("{kind}_{i}.csv"))?, &meta)?;
            }
        }
    }
    let warnings = table
        .rows
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            r.errors
                .iter()
                .map(move |e| format!("row {i} (omega_d = {}): {e}", r.omega_d))
        })
        .collect();
    run.json("oct_table.json", &table)?;
    Ok(warnings)
}

#[derive(Serialize)]
struct SpiralReport {
    geometry: SpiralGeometry,
    sample_point: [f64; 3],
    /// G/A.
    b_per_current: [f64; 3],
    b_magnitude_per_current: f64,
    tilt_from_normal_deg: f64,
    segments_per_turn: usize,
    map_segments_per_turn: usize,
    nv_axis: [f64; 3],
    theta_d_deg: f64,
    projection: NvProjection,
    map_csv: String,
    map_points: usize,
}

pub fn spiral(run: &mut Run, cfg: &SpiralConfig) -> Result<()> {
    cfg.validate()?;
    let g = cfg.geometry;
    let (sample, n) = converged_field(&g, g.sample_point(), cfg.segment_tol)?;
    let frame = match &cfg.nv {
        Some(nv) => nv.frame()?,
        None => Default::default(),
    };
    let projection = project_to_nv(&sample, &frame)?;
    let (_, map_n) = converged_field(&g, g.sample_point(), cfg.map_segment_tol)?;
    let map = field_map(&g, &cfg.map, map_n)?;
    let meta = run.meta();
    write_field_csv(run.create("field_map.csv")?, &meta, &map)?;
    run.json(
        "spiral_report.json",
        SpiralReport {
            geometry: g,
            sample_point: sample.position.into(),
            b_per_current: sample.b_per_current.into(),
            b_magnitude_per_current: sample.magnitude(),
            tilt_from_normal_deg: sample.tilt_from_normal().to_degrees(),
            segments_per_turn: n,
            map_segments_per_turn: map_n,
            nv_axis: frame.axis().into(),
            theta_d_deg: projection.theta_d.to_degrees(),
            projection,
            map_csv: "field_map.csv".to_string(),
            map_points: map.len(),
        },
    )
}

#[derive(Serialize)]
struct TraceFit {
    input: String,
    current: f64,
    fit: RabiFit,
}

#[derive(Serialize)]
struct RabiReport {
    species: Species,
    fits: Vec<TraceFit>,
    /// Present with at least two distinct currents.
    line: Option<RabiLine>,
    /// Transverse field per current in G/A, from the line's slope.
    field_per_current: Option<f64>,
}

#[derive(Serialize)]
struct OdmrReport {
    input: String,
    points: usize,
    fit: OdmrFit,
    field_per_current: f64,
    tilt_deg: f64,
    tilt_stderr_deg: f64,
}

pub fn fit(run: &mut Run, cfg: &FitConfig) -> Result<()> {
    cfg.validate()?;
    if let Some(rabi) = &cfg.rabi {
        let mut fits = Vec::new();
        for input in &rabi.inputs {
            let (path, text) = run.input(input)?;
            let trace = in_file(&path, read_rabi_csv(&text))?;
            let fit = fit_decaying_sine(&trace).map_err(|e| Error::Fit(format!("{}: {e}", path.display())))?;
            fits.push(TraceFit {
                input: input.display().to_string(),
                current: trace.current,
                fit,
            });
        }
        let pairs: Vec<(f64, RabiFit)> = fits.iter().map(|f| (f.current, f.fit)).collect();
        let distinct = {
            let mut c: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            c.sort_by(f64::total_cmp);
            c.dedup();
            c.len()
        };
        let line = if distinct >= 2 {
            Some(rabi_vs_current(&pairs)?)
        } else {
            None
        };
        let field_per_current = line.map(|l| rabi_to_field(l.slope, rabi.species)).transpose()?;
        run.json(
            "rabi_fit.json",
            RabiReport {
                species: rabi.species,
                fits,
                line,
                field_per_current,
            },
        )?;
    }
    if let Some(odmr) = &cfg.odmr {
        let (path, text) = run.input(&odmr.input)?;
        let data = in_file(&path, read_odmr_csv(&text))?;
        let fit = fit_odmr_series(&data, &odmr.init.model()?)?;
        run.json(
            "odmr_fit.json",
            OdmrReport {
                input: odmr.input.display().to_string(),
                points: data.len(),
                field_per_current: fit.model.field_per_current,
                tilt_deg: fit.tilt.to_degrees(),
                tilt_stderr_deg: fit.tilt_stderr.to_degrees(),
                fit,
            },
        )?;
    }
    Ok(())
}
