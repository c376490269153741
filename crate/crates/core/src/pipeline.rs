//! End-to-end runs: fiber structure, solve, artifacts and manifest.
//!
//! Output directory layout:
//!
//! | file           | content                                   |
//! |----------------|-------------------------------------------|
//! | `fibers.json`  | generated fiber structure                 |
//! | `phi.ivf`      | solid field                               |
//! | `sigma.ivf`    | ink field                                 |
//! | `*.vtk`        | the same fields, when `vtk` is requested  |
//! | `trace.csv`    | energy per inner iteration                |
//! | `profile.csv`  | saturation per layer                      |
//! | `manifest.json`| inputs, seeds, versions, diagnostics      |

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    fiber_adjacency_fraction, free_fill_fraction, saturation_profile, volume_error, SaturationProfile,
};
use crate::config::{FieldFormat, Resolved, RunConfig, SolverKind};
use crate::energy::{energy_direct, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::fibergen::{generate, porosity, voxelize, FiberStructure, RNG_ALGORITHM};
use crate::formats::{save_ivf, save_vtk, write_profile_csv, write_trace_csv};
use crate::gasolver::{EnergyTrace, FitnessRecord, GaSolver, TraceRow};
use crate::lattice::BinaryField;
use crate::mincut::solve_infinite_with;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    NotConverged,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::NotConverged => 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub fibergen: f64,
    pub solve: f64,
    pub write: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub rng: String,
    pub seed: u64,
    pub solver: SolverKind,
    pub gravity_sign: i32,
    pub config: RunConfig,
    pub resolved: Resolved,
    /// Solid field read from this file instead of being generated.
    pub phi_source: Option<String>,
    pub status: RunStatus,
    pub converged: bool,
    pub outer_iterations: usize,
    pub volume_error: usize,
    pub dispensed_volume: Option<usize>,
    pub energy: EnergyBreakdown,
    pub porosity: f64,
    pub fill_fraction: f64,
    pub fiber_adjacency_fraction: f64,
    pub warnings: Vec<String>,
    pub wall_seconds: WallTimes,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub sigma: BinaryField,
    pub energy: EnergyBreakdown,
    pub trace: EnergyTrace,
    pub fitness: Vec<FitnessRecord>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub dispensed_volume: Option<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub status: RunStatus,
    pub manifest: Manifest,
    pub phi: BinaryField,
    pub sigma: BinaryField,
    pub profile: SaturationProfile,
    pub directory: PathBuf,
}

pub fn build_structure(r: &Resolved) -> Result<(FiberStructure, BinaryField)> {
    let structure = generate(&r.fiber)?;
    let phi = voxelize(&structure, &r.grid);
    Ok((structure, phi))
}

/// Run the configured solver on a given solid field.
pub fn solve(r: &Resolved, phi: &BinaryField) -> Result<SolveOutcome> {
    phi.check_grid(&r.grid, "solid")?;
    match r.solver {
        SolverKind::Mincut => {
            let started = Instant::now();
            let pinned = r.pin_solid.then_some(phi);
            let (sigma, energy) = solve_infinite_with(phi, &r.energy, &r.grid, pinned)?;
            let row = TraceRow {
                outer: 1,
                inner: 1,
                e_t: energy.e_t,
                e_g: energy.e_g,
                e_c: energy.e_c,
                e_a: energy.e_a,
                e_v: energy.e_v,
                v_fluid: energy.v_fluid,
                seconds: started.elapsed().as_secs_f64(),
            };
            Ok(SolveOutcome {
                sigma,
                energy,
                trace: EnergyTrace { rows: vec![row] },
                fitness: Vec::new(),
                converged: true,
                outer_iterations: 1,
                dispensed_volume: None,
                warnings: Vec::new(),
            })
        }
        SolverKind::Ga => {
            let res = GaSolver::new(&r.grid, phi, &r.energy, &r.reservoir, &r.ga)?.run();
            let energy = energy_direct(&res.sigma, phi, &r.energy, &r.grid)?;
            Ok(SolveOutcome {
                sigma: res.sigma,
                energy,
                trace: res.trace,
                fitness: res.fitness,
                converged: res.converged,
                outer_iterations: res.outer_iterations,
                dispensed_volume: Some(res.dispensed_volume),
                warnings: res.warnings,
            })
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Write `name.ivf` and/or `name.vtk`; returns the file names.
pub fn write_field(dir: &Path, name: &str, field: &BinaryField, formats: &[FieldFormat]) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for format in formats {
        let file = match format {
            FieldFormat::Ivf => {
                let file = format!("{name}.ivf");
                save_ivf(&dir.join(&file), field, name)?;
                file
            }
            FieldFormat::Vtk => {
                let file = format!("{name}.vtk");
                save_vtk(&dir.join(&file), field, name)?;
                file
            }
        };
        if !files.contains(&file) {
            files.push(file);
        }
    }
    Ok(files)
}

/// Generate the fiber structure and write `fibers.json` and the solid field.
pub fn write_structure(cfg: &RunConfig) -> Result<(FiberStructure, BinaryField, Vec<String>)> {
    let r = cfg.resolve()?;
    let dir = &cfg.output.directory;
    fs::create_dir_all(dir)?;
    let (structure, phi) = build_structure(&r)?;
    serde_json::to_writer_pretty(create(&dir.join("fibers.json"))?, &structure)
        .map_err(|e| Error::Io(e.into()))?;
    let mut files = vec!["fibers.json".to_string()];
    files.extend(write_field(dir, "phi", &phi, &cfg.output.formats)?);
    Ok((structure, phi, files))
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutcome> {
    run_pipeline_with(cfg, None)
}

/// Full run. With `phi` given (field plus a description of its origin) the
/// structure is not generated. Artifacts are written even when the solver
/// does not converge; the status says so.
pub fn run_pipeline_with(cfg: &RunConfig, phi: Option<(BinaryField, String)>) -> Result<PipelineOutcome> {
    let total = Instant::now();
    let r = cfg.resolve()?;
    let dir = cfg.output.directory.clone();
    fs::create_dir_all(&dir)?;
    let mut wall = WallTimes::default();
    let mut files = Vec::new();

    let started = Instant::now();
    let (phi, phi_source) = match phi {
        Some((field, source)) => {
            field.check_grid(&r.grid, "solid")?;
            (field, Some(source))
        }
        None => {
            let (structure, field) = build_structure(&r)?;
            serde_json::to_writer_pretty(create(&dir.join("fibers.json"))?, &structure)
                .map_err(|e| Error::Io(e.into()))?;
            files.push("fibers.json".to_string());
            (field, None)
        }
    };
    wall.fibergen = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let out = solve(&r, &phi)?;
    wall.solve = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let profile = saturation_profile(&out.sigma, &phi, &r.grid)?;
    files.extend(write_field(&dir, "phi", &phi, &cfg.output.formats)?);
    files.extend(write_field(&dir, "sigma", &out.sigma, &cfg.output.formats)?);
    write_trace_csv(create(&dir.join("trace.csv"))?, &out.trace)?;
    write_profile_csv(create(&dir.join("profile.csv"))?, &profile)?;
    files.extend(["trace.csv".to_string(), "profile.csv".to_string(), "manifest.json".to_string()]);
    wall.write = started.elapsed().as_secs_f64();

    let status = if out.converged {
        RunStatus::Ok
    } else {
        RunStatus::NotConverged
    };
    let mut manifest = Manifest {
        version: VERSION.to_string(),
        rng: RNG_ALGORITHM.to_string(),
        seed: r.seed,
        solver: r.solver,
        gravity_sign: r.gravity_sign,
        config: cfg.clone(),
        phi_source,
        status,
        converged: out.converged,
        outer_iterations: out.outer_iterations,
        volume_error: volume_error(&out.sigma, &r.energy),
        dispensed_volume: out.dispensed_volume,
        energy: out.energy,
        porosity: porosity(&phi, &r.grid)?,
        fill_fraction: free_fill_fraction(&out.sigma, &phi),
        fiber_adjacency_fraction: fiber_adjacency_fraction(&out.sigma, &phi, &r.grid)?,
        warnings: out.warnings,
        wall_seconds: wall,
        files,
        resolved: r,
    };
    manifest.wall_seconds.total = total.elapsed().as_secs_f64();
    serde_json::to_writer_pretty(create(&dir.join("manifest.json"))?, &manifest)
        .map_err(|e| Error::Io(e.into()))?;

    Ok(PipelineOutcome {
        status,
        manifest,
        phi,
        sigma: out.sigma,
        profile,
        directory: dir,
    })
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)?;
    let mut m: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    m.resolved.ga.seed = m.resolved.seed;
    Ok(m)
}
