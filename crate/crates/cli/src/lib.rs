//! Command implementations behind the `cavimag` binary.
//!
//! Every command reads one JSON run config, writes its outputs atomically into the
//! `--out` directory and maps failures onto stable exit codes (see [`ExitCode`]).

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use cavimag::circuit::{s21_circuit_sweep, TwoModeCircuit};
use cavimag::fit::{
    add_magnitude_noise, add_map_noise, fit_circuit_joint, fit_hybrid, BranchResidual, CircuitDataset, FitResult,
    Provenance, Spectrum,
};
use cavimag::hybrid::{field_sweep, FieldSweepMap, MagnitudeScale, ModeParams};
use cavimag::io::config::{CircuitBlock, DataFormat, HybridBlock, ModeBlock, PolarizationBlock};
use cavimag::io::{
    load_grid, write_atomic, write_grid, write_spectrum_csv, DataFileDescriptor, GridFile, RunConfig,
};
use cavimag::polarization::{
    critical_angles, gamma_of_angle, is_extrapolated, mode_cooperativities, order_parameter, transition_map,
};
use cavimag::units::{db_magnitude, Angle, Frequency};
use cavimag::Error;
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "cavimag", version, about = "Cavity-magnonic transmission models and fits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Measured or synthetic data file; repeat for joint fits.
    #[arg(long, global = true)]
    pub data: Vec<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for sweeps and Jacobians (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for synthetic noise; only used with a `noise` block.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Two-resonator circuit S21 over `f_grid`.
    SimulateCircuit,
    /// Three-mode |S21| map over `h_grid` × `f_grid`.
    SimulateHybrid,
    /// Fit circuit parameters to one or more spectra.
    FitCircuit,
    /// Fit couplings to a field-sweep grid file.
    FitHybrid,
    /// Angular damping, order parameter, critical angles and transition map.
    PolarizationReport,
}

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    /// Output could not be written.
    Output = 1,
    Config = 2,
    Parse = 3,
    Numerical = 4,
    NotConverged = 5,
}

#[derive(Debug)]
pub struct Failure {
    pub code: ExitCode,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl std::error::Error for Failure {}

#[derive(Debug, Clone, Copy)]
enum Stage {
    Config,
    Data,
    Compute,
}

fn fail(stage: Stage, err: Error) -> Failure {
    let code = match (&err, stage) {
        (Error::InvalidParameter { .. } | Error::PhaseRequired, _) => ExitCode::Config,
        (Error::Parse(_) | Error::Io(_), Stage::Config) => ExitCode::Config,
        (Error::Parse(_) | Error::Io(_), _) => ExitCode::Parse,
        (Error::Singular { .. } | Error::EigenSolver { .. } | Error::Undefined(_) | Error::NoDipTrajectory { .. }, _) => {
            ExitCode::Numerical
        }
    };
    Failure {
        code,
        error: err.into(),
    }
}

/// I/O errors carry no path of their own.
fn fail_reading(stage: Stage, err: Error, path: &Path) -> Failure {
    let io = matches!(err, Error::Io(_));
    let mut f = fail(stage, err);
    if io {
        f.error = f.error.context(format!("reading {}", path.display()));
    }
    f
}

fn config_error(msg: impl fmt::Display) -> Failure {
    Failure {
        code: ExitCode::Config,
        error: anyhow::anyhow!("{msg}"),
    }
}

fn output_error(err: anyhow::Error) -> Failure {
    Failure {
        code: ExitCode::Output,
        error: err,
    }
}

/// What a successful command produced.
#[derive(Debug)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    /// False only for fits that stopped on the iteration cap.
    pub converged: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> ExitCode {
        if self.converged {
            ExitCode::Success
        } else {
            ExitCode::NotConverged
        }
    }
}

struct RunState {
    cfg: RunConfig,
    base_dir: PathBuf,
    out: PathBuf,
    data: Vec<PathBuf>,
    seed: Option<u64>,
    written: Vec<PathBuf>,
}

impl RunState {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.out.join(name);
        write_atomic(&path, bytes)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(output_error)?;
        self.written.push(path);
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value)
            .context("serializing result")
            .map_err(output_error)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// `--data` files first, then the config's `data` list (relative to the config).
    fn descriptors(&self) -> Vec<(DataFileDescriptor, PathBuf)> {
        let cwd = PathBuf::from(".");
        self.data
            .iter()
            .map(|p| (DataFileDescriptor::from_path(p), cwd.clone()))
            .chain(self.cfg.data.iter().map(|d| (d.clone(), self.base_dir.clone())))
            .collect()
    }

    /// Noise settings, requiring `--seed` whenever a noise block is present.
    fn noise(&self) -> Result<Option<(f64, u64)>, Failure> {
        match (&self.cfg.noise, self.seed) {
            (None, _) => Ok(None),
            (Some(n), Some(seed)) => Ok(Some((n.sigma, seed))),
            (Some(_), None) => Err(config_error("config has a noise block; pass --seed to make it reproducible")),
        }
    }
}

/// Run one command. Fits that do not converge still write their results.
pub fn run(cli: &Cli) -> Result<Outcome, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config_error("--threads must be at least 1"));
        }
        // A second call in the same process (tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let path = cli.config.as_ref().ok_or_else(|| config_error("--config is required"))?;
    let cfg = RunConfig::load(path).map_err(|e| fail_reading(Stage::Config, e, path))?;
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating {}", cli.out.display()))
        .map_err(output_error)?;
    let mut ctx = RunState {
        cfg,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        out: cli.out.clone(),
        data: cli.data.clone(),
        seed: cli.seed,
        written: Vec::new(),
    };
    let converged = match cli.command {
        Command::SimulateCircuit => simulate_circuit(&mut ctx)?,
        Command::SimulateHybrid => simulate_hybrid(&mut ctx)?,
        Command::FitCircuit => cmd_fit_circuit(&mut ctx)?,
        Command::FitHybrid => cmd_fit_hybrid(&mut ctx)?,
        Command::PolarizationReport => polarization_report(&mut ctx)?,
    };
    Ok(Outcome {
        written: ctx.written,
        converged,
    })
}

fn simulate_circuit(ctx: &mut RunState) -> Result<bool, Failure> {
    let circuit = ctx.cfg.circuit().map_err(|e| fail(Stage::Config, e))?;
    let f_hz = ctx.cfg.frequencies().map_err(|e| fail(Stage::Config, e))?;
    let grid = f_hz
        .iter()
        .map(|&f| Frequency::from_hz(f))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| fail(Stage::Config, e))?;
    let s21 = s21_circuit_sweep(&circuit, &grid).map_err(|e| fail(Stage::Compute, e))?;
    let mut spec = Spectrum::new(grid, s21)
        .map_err(|e| fail(Stage::Compute, e))?
        .with_provenance(Provenance {
            theta_deg: ctx.cfg.theta_deg,
            source: Some("simulate-circuit".into()),
            z0: Some(circuit.line.z0()),
            ..Provenance::default()
        });
    let mut params = json!({ "circuit": CircuitBlock::from_circuit(&circuit) });
    if let Some((sigma, seed)) = ctx.noise()? {
        spec = add_magnitude_noise(&spec, sigma, seed).map_err(|e| fail(Stage::Config, e))?;
        params["noise"] = json!({ "sigma": sigma, "seed": seed });
    }
    let text = write_spectrum_csv(&spec, Some(&params));
    ctx.write("spectrum.csv", text.as_bytes())?;
    Ok(true)
}

fn simulate_hybrid(ctx: &mut RunState) -> Result<bool, Failure> {
    let params = ctx.cfg.hybrid().map_err(|e| fail(Stage::Config, e))?;
    let h = ctx.cfg.fields().map_err(|e| fail(Stage::Config, e))?;
    let f = ctx.cfg.frequencies().map_err(|e| fail(Stage::Config, e))?;
    if f[0] <= 0.0 {
        return Err(config_error("f_grid must be positive"));
    }
    let mut map = field_sweep(&params, &h, &f).map_err(|e| fail(Stage::Compute, e))?;
    let mut meta = json!({ "hybrid": HybridBlock::from_params(&params) });
    if let Some((sigma, seed)) = ctx.noise()? {
        map = add_map_noise(&map, sigma, seed).map_err(|e| fail(Stage::Config, e))?;
        meta["noise"] = json!({ "sigma": sigma, "seed": seed });
    }
    let mut map = to_db_map(&map)?;
    map.metadata.theta_deg = ctx.cfg.theta_deg;
    map.metadata.source = Some("simulate-hybrid".into());
    map.metadata.parameters = Some(meta);
    ctx.write("field_sweep.grid", write_grid(&GridFile::from_field_sweep(&map)).as_bytes())?;
    Ok(true)
}

/// Noise can push linear cells to zero or below, which have no dB value.
fn to_db_map(map: &FieldSweepMap) -> Result<FieldSweepMap, Failure> {
    if let Some(v) = map.values().iter().find(|v| **v <= 0.0) {
        return Err(fail(
            Stage::Compute,
            Error::Undefined(format!("|S21| = {v} has no dB value; lower the noise sigma")),
        ));
    }
    Ok(map.to_scale(MagnitudeScale::Db))
}

#[derive(Serialize)]
struct PhotonModes {
    photon1: ModeBlock,
    photon2: ModeBlock,
}

#[derive(Serialize)]
struct CircuitReport<'a> {
    schema_version: u32,
    command: &'static str,
    data: Vec<String>,
    shared: Vec<String>,
    converged: bool,
    result: &'a FitResult,
    circuits: Vec<CircuitBlock>,
    /// Intrinsic and radiative rates implied by each fitted circuit.
    hybrid_photon_modes: Vec<PhotonModes>,
}

fn photon_modes(c: &TwoModeCircuit) -> Result<PhotonModes, Error> {
    let z0 = c.line.z0();
    Ok(PhotonModes {
        photon1: ModeBlock::from_mode(&ModeParams::from_resonator(&c.mode1, z0)?),
        photon2: ModeBlock::from_mode(&ModeParams::from_resonator(&c.mode2, z0)?),
    })
}

fn cmd_fit_circuit(ctx: &mut RunState) -> Result<bool, Failure> {
    let base = ctx.cfg.circuit().map_err(|e| fail(Stage::Config, e))?;
    let block = ctx
        .cfg
        .fit_circuit
        .clone()
        .ok_or_else(|| config_error("fit-circuit needs a `fit_circuit` block"))?;
    let descriptors = ctx.descriptors();
    if descriptors.is_empty() {
        return Err(config_error("no data: pass --data or list files under `data`"));
    }
    let mut data = Vec::new();
    let mut names = Vec::new();
    for (desc, dir) in &descriptors {
        if desc.resolved_format() == Some(DataFormat::Grid) {
            return Err(config_error(format!("{} is a grid file; fit-circuit reads spectra", desc.path.display())));
        }
        let spectrum = desc
            .load_spectrum(dir)
            .map_err(|e| fail_reading(Stage::Data, e, &dir.join(&desc.path)))?;
        names.push(desc.path.display().to_string());
        data.push(CircuitDataset { spectrum, base });
    }
    let fit = fit_circuit_joint(&data, &block.shared, &block.config).map_err(|e| fail(Stage::Compute, e))?;
    let modes = fit
        .circuits
        .iter()
        .map(photon_modes)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| fail(Stage::Compute, e))?;
    let report = CircuitReport {
        schema_version: cavimag::SCHEMA_VERSION,
        command: "fit-circuit",
        data: names.clone(),
        shared: block.shared.iter().map(|p| p.name().to_string()).collect(),
        converged: fit.result.converged,
        result: &fit.result,
        circuits: fit.circuits.iter().map(CircuitBlock::from_circuit).collect(),
        hybrid_photon_modes: modes,
    };
    ctx.write_json("fit_circuit.json", &report)?;
    for (k, (d, circuit)) in data.iter().zip(&fit.circuits).enumerate() {
        let name = if data.len() == 1 {
            "overlay.csv".to_string()
        } else {
            format!("overlay_{k}.csv")
        };
        let text = overlay_csv(&d.spectrum, circuit, &names[k])?;
        ctx.write(&name, text.as_bytes())?;
    }
    Ok(fit.result.converged)
}

/// Data and fitted-model magnitudes on the data grid.
fn overlay_csv(spec: &Spectrum, circuit: &TwoModeCircuit, source: &str) -> Result<String, Failure> {
    let model = s21_circuit_sweep(circuit, spec.f_grid()).map_err(|e| fail(Stage::Compute, e))?;
    let header = json!({
        "schema_version": cavimag::SCHEMA_VERSION,
        "kind": "overlay",
        "data": source,
        "parameters": { "circuit": CircuitBlock::from_circuit(circuit) },
    });
    let mut out = format!("# {header}\nfreq_hz,data_mag_s21,model_mag_s21,model_mag_db,residual\n");
    for ((f, y), m) in spec.f_grid().iter().zip(spec.magnitudes()).zip(&model) {
        let mag = m.magnitude();
        out.push_str(&format!("{},{},{},{},{}\n", f.hz(), y, mag, db_magnitude(*m), mag - y));
    }
    Ok(out)
}

#[derive(Serialize)]
struct Couplings {
    g12_hz: f64,
    g23_hz: f64,
    g31_hz: f64,
}

#[derive(Serialize)]
struct Cooperativities {
    c1: f64,
    c2: f64,
}

#[derive(Serialize)]
struct HybridReport<'a> {
    schema_version: u32,
    command: &'static str,
    data: String,
    theta_deg: Option<f64>,
    converged: bool,
    couplings: Couplings,
    cooperativities: Cooperativities,
    /// Fitted parameters that ended on a bound.
    at_bound: Vec<String>,
    branch_residuals: &'a [BranchResidual],
    ridges: usize,
    result: &'a FitResult,
    parameters: HybridBlock,
}

fn cmd_fit_hybrid(ctx: &mut RunState) -> Result<bool, Failure> {
    let fixed = ctx.cfg.hybrid().map_err(|e| fail(Stage::Config, e))?;
    let cfg = ctx
        .cfg
        .fit_hybrid
        .clone()
        .ok_or_else(|| config_error("fit-hybrid needs a `fit_hybrid` block"))?;
    let descriptors = ctx.descriptors();
    let [(desc, dir)] = descriptors.as_slice() else {
        return Err(config_error(format!("fit-hybrid takes exactly one grid file, got {}", descriptors.len())));
    };
    if !matches!(desc.resolved_format(), Some(DataFormat::Grid) | None) {
        return Err(config_error(format!("{} is not a grid file", desc.path.display())));
    }
    let path = dir.join(&desc.path);
    let map = load_grid(&path)
        .and_then(|g| g.to_field_sweep())
        .map_err(|e| fail_reading(Stage::Data, e, &path))?;
    let fit = fit_hybrid(&map, &fixed, &cfg).map_err(|e| fail(Stage::Compute, e))?;
    let (c1, c2) = mode_cooperativities(&fit.params).map_err(|e| fail(Stage::Compute, e))?;
    let c = &fit.params.couplings;
    let report = HybridReport {
        schema_version: cavimag::SCHEMA_VERSION,
        command: "fit-hybrid",
        data: path.display().to_string(),
        theta_deg: desc.theta_deg.or(map.metadata.theta_deg).or(ctx.cfg.theta_deg),
        converged: fit.result.converged,
        couplings: Couplings {
            g12_hz: c.g12(),
            g23_hz: c.g23(),
            g31_hz: c.g31(),
        },
        cooperativities: Cooperativities { c1, c2 },
        at_bound: fit
            .result
            .parameters
            .iter()
            .filter(|p| p.free && p.at_bound)
            .map(|p| p.name.clone())
            .collect(),
        branch_residuals: &fit.branch_residuals,
        ridges: fit.ridges.len(),
        result: &fit.result,
        parameters: HybridBlock::from_params(&fit.params),
    };
    ctx.write_json("fit_hybrid.json", &report)?;
    Ok(fit.result.converged)
}

#[derive(Serialize)]
struct AngleRow {
    theta_deg: f64,
    gamma1_hz: f64,
    gamma2_hz: f64,
    order_parameter: f64,
    /// Outside the measured 0°..90° range.
    extrapolated: bool,
}

fn angle_row(block: &PolarizationBlock, theta_deg: f64) -> Result<AngleRow, Error> {
    let model = block.model()?;
    let theta = Angle::from_degrees(theta_deg);
    let (g1, g2) = gamma_of_angle(&model, theta);
    Ok(AngleRow {
        theta_deg,
        gamma1_hz: g1.hz(),
        gamma2_hz: g2.hz(),
        order_parameter: order_parameter(&model, theta)?,
        extrapolated: is_extrapolated(theta),
    })
}

fn polarization_report(ctx: &mut RunState) -> Result<bool, Failure> {
    let block = ctx.cfg.polarization().map_err(|e| fail(Stage::Config, e))?.clone();
    let model = block.model().map_err(|e| fail(Stage::Config, e))?;
    let delta = model.delta().ok_or_else(|| {
        fail(
            Stage::Compute,
            Error::Undefined("damping ratio δ = γ2max/γ1max needs γ1max > 0".into()),
        )
    })?;
    let (c1, c2) = critical_angles(delta).map_err(|e| fail(Stage::Compute, e))?;
    let thetas = block.theta_grid().map_err(|e| fail(Stage::Config, e))?;
    let deltas = block.delta_grid().map_err(|e| fail(Stage::Config, e))?;
    let rows = |angles: &[f64]| {
        angles
            .iter()
            .map(|&t| angle_row(&block, t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| fail(Stage::Compute, e))
    };
    let curves = rows(&thetas)?;
    let tabulated = rows(&block.report_angles())?;
    let map = transition_map(&thetas, &deltas).map_err(|e| fail(Stage::Compute, e))?;
    let params = serde_json::to_value(&block).expect("block serializes");
    let report = json!({
        "schema_version": cavimag::SCHEMA_VERSION,
        "command": "polarization-report",
        "parameters": params,
        "delta": delta,
        "critical_angles_deg": [c1.degrees(), c2.degrees()],
        "tabulated": tabulated,
        "curves": curves,
        "zero_contour": map.zero_contour.iter().map(|(t, d)| json!({"theta_deg": t, "delta": d})).collect::<Vec<_>>(),
    });
    ctx.write_json("polarization_report.json", &report)?;
    ctx.write(
        "transition_map.grid",
        write_grid(&GridFile::from_transition_map(&map, Some(params))).as_bytes(),
    )?;
    Ok(true)
}
