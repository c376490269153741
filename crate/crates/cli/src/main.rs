//! `seepage`: generate fiber structures, solve for the ink field, report and
//! export.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 solver did not converge,
//! 4 I/O or file format error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use seepage::analysis::{fiber_adjacency_fraction, free_fill_fraction, saturation_profile};
use seepage::config::config_from_str;
use seepage::formats::{load_ivf, save_vtk, write_profile_csv};
use seepage::pipeline::{read_manifest, run_pipeline_with, write_structure, RunStatus};
use seepage::{Error, Result, RunConfig};

#[derive(Parser)]
#[command(name = "seepage", version, about = "Finite-volume ink seepage into fiber structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a fiber structure and its solid field.
    Fibergen(ConfigArgs),
    /// Solve for the ink field and write all run artifacts.
    Solve(SolveArgs),
    /// Volume error, saturation profile and fiber confinement of a result.
    Report(ReportArgs),
    /// Convert an IVF1 field to legacy VTK.
    Export(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Ga,
    Mincut,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Ivf,
    Vtk,
}

/// Flags named after config keys; each overrides the file.
#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Generic override, `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    nz_paper: Option<usize>,
    #[arg(long)]
    nz_reservoir: Option<usize>,
    #[arg(long)]
    cell_size: Option<f64>,
    #[arg(long)]
    fiber_count: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    v_fluid0: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    gravity_sign: Option<i32>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Field formats to write; repeatable.
    #[arg(long = "format", value_enum)]
    formats: Vec<FormatArg>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Use this solid field instead of generating one.
    #[arg(long)]
    phi: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory holding sigma.ivf, phi.ivf and manifest.json.
    #[arg(long, conflicts_with_all = ["sigma", "phi"])]
    dir: Option<PathBuf>,
    #[arg(long, requires = "phi")]
    sigma: Option<PathBuf>,
    #[arg(long, requires = "sigma")]
    phi: Option<PathBuf>,
    /// Target volume; read from the manifest when reporting a run directory.
    #[arg(long)]
    v_fluid0: Option<usize>,
    /// Write the saturation profile here instead of standard output.
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    input: PathBuf,
    output: PathBuf,
}

fn quoted(path: &Path) -> String {
    format!("{:?}", path.display().to_string())
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                out.push(format!("{key}={v}"));
            }
        };
        push("seed", self.seed.map(|v| v.to_string()));
        push("grid.nx", self.nx.map(|v| v.to_string()));
        push("grid.ny", self.ny.map(|v| v.to_string()));
        push("grid.nz_paper", self.nz_paper.map(|v| v.to_string()));
        push("grid.nz_reservoir", self.nz_reservoir.map(|v| v.to_string()));
        push("grid.cell_size", self.cell_size.map(|v| format!("{v:?}")));
        push("fiber.fiber_count", self.fiber_count.map(|v| v.to_string()));
        push("energy.lambda", self.lambda.map(|v| format!("{v:?}")));
        push("energy.v_fluid0", self.v_fluid0.map(|v| v.to_string()));
        push("energy.gravity_sign", self.gravity_sign.map(|v| v.to_string()));
        push("output.directory", self.out.as_deref().map(quoted));
        if !self.formats.is_empty() {
            let names: Vec<&str> = self
                .formats
                .iter()
                .map(|f| match f {
                    FormatArg::Ivf => "\"ivf\"",
                    FormatArg::Vtk => "\"vtk\"",
                })
                .collect();
            out.push(format!("output.formats=[{}]", names.join(",")));
        }
        out.extend(self.set.iter().cloned());
        out
    }

    fn load(&self, extra: &[String]) -> Result<RunConfig> {
        let text = match &self.config {
            Some(path) => std::fs::read_to_string(path)?,
            None => String::new(),
        };
        let mut overrides = self.overrides();
        overrides.extend(extra.iter().cloned());
        config_from_str(&text, &overrides)
    }
}

fn fibergen(args: &ConfigArgs) -> Result<i32> {
    let cfg = args.load(&[])?;
    let (structure, phi, files) = write_structure(&cfg)?;
    println!(
        "{} fibers, {} solid cells, wrote {} to {}",
        structure.fibers.len(),
        phi.count_ones(),
        files.join(", "),
        cfg.output.directory.display()
    );
    Ok(0)
}

fn solve(args: &SolveArgs) -> Result<i32> {
    let mut extra = Vec::new();
    if let Some(kind) = args.solver {
        let name = match kind {
            SolverArg::Ga => "ga",
            SolverArg::Mincut => "mincut",
        };
        extra.push(format!("solver.kind={name}"));
    }
    let cfg = args.config.load(&extra)?;
    let phi = match &args.phi {
        Some(path) => Some((load_ivf(path)?.0, path.display().to_string())),
        None => None,
    };
    let out = run_pipeline_with(&cfg, phi)?;
    let m = &out.manifest;
    println!(
        "solver={} converged={} outer_iterations={} volume_error={} E_t={} fill_fraction={:.6}",
        m.solver.name(),
        m.converged,
        m.outer_iterations,
        m.volume_error,
        m.energy.e_t,
        m.fill_fraction
    );
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    if out.status == RunStatus::NotConverged {
        eprintln!("solver did not converge; artifacts written to {}", out.directory.display());
    }
    Ok(out.status.exit_code())
}

fn report(args: &ReportArgs) -> Result<i32> {
    let (sigma_path, phi_path, target) = match &args.dir {
        Some(dir) => {
            let target = match args.v_fluid0 {
                Some(v) => Some(v),
                None => Some(read_manifest(&dir.join("manifest.json"))?.resolved.energy.v_fluid0),
            };
            (dir.join("sigma.ivf"), dir.join("phi.ivf"), target)
        }
        None => match (&args.sigma, &args.phi) {
            (Some(s), Some(p)) => (s.clone(), p.clone(), args.v_fluid0),
            _ => return Err(Error::Config("give --dir or both --sigma and --phi".into())),
        },
    };
    let (sigma, _) = load_ivf(&sigma_path)?;
    let (phi, _) = load_ivf(&phi_path)?;
    let grid = sigma.grid();
    let profile = saturation_profile(&sigma, &phi, &grid)?;
    let ink = sigma.count_ones();
    print!("ink_cells={ink}");
    if let Some(v) = target {
        print!(" volume_error={}", ink.abs_diff(v));
    }
    println!(
        " fill_fraction={:.6} fiber_adjacency_fraction={:.6}",
        free_fill_fraction(&sigma, &phi),
        fiber_adjacency_fraction(&sigma, &phi, &grid)?
    );
    match &args.profile {
        Some(path) => write_profile_csv(BufWriter::new(File::create(path)?), &profile)?,
        None => write_profile_csv(io::stdout().lock(), &profile)?,
    }
    Ok(0)
}

fn export(args: &ExportArgs) -> Result<i32> {
    let (field, name) = load_ivf(&args.input)?;
    save_vtk(&args.output, &field, &name)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fibergen(a) => fibergen(a),
        Command::Solve(a) => solve(a),
        Command::Report(a) => report(a),
        Command::Export(a) => export(a),
    };
    let _ = io::stdout().flush();
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
