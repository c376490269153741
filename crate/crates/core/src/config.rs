//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//!
//! [grid]
//! nx = 20
//! ny = 20
//! nz_paper = 10
//! nz_reservoir = 2
//! cell_size = 1.0
//!
//! [fiber]
//! fiber_count = 30
//!
//! [energy]
//! v_fluid0 = 200        # omitted coefficients take the reference values
//! gravity_sign = 1
//!
//! [solver]
//! kind = "ga"           # or "mincut"
//! [solver.ga]
//! population_size = 32
//! [solver.reservoir]
//! depth_layers = 2
//! policy = "conserve"   # or "budget"
//!
//! [output]
//! directory = "out"
//! formats = ["ivf", "vtk"]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::fibergen::FiberParams;
use crate::gasolver::{GaConfig, RefillPolicy, ReservoirSpec};
use crate::lattice::Grid;

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz_paper: usize,
    #[serde(default)]
    pub nz_reservoir: usize,
    #[serde(default = "one")]
    pub cell_size: f64,
}

/// Fiber generation; omitted keys follow the grid (see
/// [`FiberParams::for_grid`]).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberConfig {
    #[serde(default)]
    pub fiber_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks_per_fiber: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_height: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_turn_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_bend_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent_y: Option<f64>,
    /// Defaults to the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Energy coefficients; omitted ones are derived from c1 and the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a2: Option<f64>,
    /// Explicit gravity constant; overrides `gravity_sign`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub v_fluid0: usize,
    /// +1: ink is pulled towards the reservoir side; -1: away from it.
    #[serde(default = "plus")]
    pub gravity_sign: i32,
}

fn plus() -> i32 {
    1
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            c1: None,
            c2: None,
            a0: None,
            a1: None,
            a2: None,
            gg: None,
            lambda: None,
            v_fluid0: 0,
            gravity_sign: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Ga,
    Mincut,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Ga => "ga",
            SolverKind::Mincut => "mincut",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirConfig {
    /// Defaults to every reservoir layer of the grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_layers: Option<usize>,
    #[serde(default = "yes")]
    pub refill_enabled: bool,
    #[serde(default)]
    pub policy: RefillPolicy,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            depth_layers: None,
            refill_enabled: true,
            policy: RefillPolicy::Conserve,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MincutConfig {
    /// Hold solid cells empty instead of optimising them.
    #[serde(default)]
    pub pin_solid: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub kind: SolverKind,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub reservoir: ReservoirConfig,
    #[serde(default)]
    pub mincut: MincutConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldFormat {
    Ivf,
    Vtk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<FieldFormat>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<FieldFormat> {
    vec![FieldFormat::Ivf]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_dir(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    #[serde(default)]
    pub fiber: FiberConfig,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Everything a run needs, with defaults applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub seed: u64,
    pub grid: Grid,
    pub fiber: FiberParams,
    pub energy: EnergyParams,
    pub solver: SolverKind,
    pub ga: GaConfig,
    pub reservoir: ReservoirSpec,
    pub pin_solid: bool,
    pub gravity_sign: i32,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Apply defaults and check cross-section invariants.
    pub fn resolve(&self) -> Result<Resolved> {
        let g = &self.grid;
        let grid = Grid::new(g.nx, g.ny, g.nz_paper, g.nz_reservoir, g.cell_size)
            .map_err(|e| Error::Config(format!("grid: {e}")))?;

        let f = &self.fiber;
        let base = FiberParams::for_grid(&grid, f.fiber_count, f.seed.unwrap_or(self.seed));
        let fiber = FiberParams {
            blocks_per_fiber: f.blocks_per_fiber.unwrap_or(base.blocks_per_fiber),
            block_length: f.block_length.unwrap_or(base.block_length),
            block_width: f.block_width.unwrap_or(base.block_width),
            block_height: f.block_height.unwrap_or(base.block_height),
            max_turn_deg: f.max_turn_deg.unwrap_or(base.max_turn_deg),
            max_bend_deg: f.max_bend_deg.unwrap_or(base.max_bend_deg),
            extent_x: f.extent_x.unwrap_or(base.extent_x),
            extent_y: f.extent_y.unwrap_or(base.extent_y),
            ..base
        };
        fiber.validate().map_err(|e| Error::Config(format!("fiber: {e}")))?;

        let e = &self.energy;
        if e.gravity_sign != 1 && e.gravity_sign != -1 {
            return config_err(format!(
                "energy.gravity_sign must be 1 or -1, got {}",
                e.gravity_sign
            ));
        }
        let base = EnergyParams::defaults(&grid, 0).map_err(|e| Error::Config(format!("energy: {e}")))?;
        let c1 = e.c1.unwrap_or(base.c1);
        let a0 = e.a0.unwrap_or(c1 / 2.0);
        let a1 = e.a1.unwrap_or(2.0 / 3.0 * a0);
        let energy = EnergyParams {
            c1,
            c2: e.c2.unwrap_or(c1 / 8.0),
            a0,
            a1,
            a2: e.a2.unwrap_or(a1 / 2.0),
            gg: e.gg.unwrap_or(e.gravity_sign as f64 * c1 / base.z_max),
            lambda: e.lambda.unwrap_or(base.lambda),
            v_fluid0: e.v_fluid0,
            ..base
        };
        energy.validate().map_err(|e| Error::Config(format!("energy: {e}")))?;

        let kind = self.solver.kind;
        if kind == SolverKind::Mincut && energy.lambda != 0.0 {
            return config_err(format!(
                "solver.kind = \"mincut\" requires energy.lambda = 0, got {}",
                energy.lambda
            ));
        }
        let mut ga = self.solver.ga.clone();
        ga.seed = self.seed;
        ga.validate().map_err(|e| Error::Config(format!("solver.ga: {e}")))?;
        let r = &self.solver.reservoir;
        let reservoir = ReservoirSpec {
            depth_layers: r.depth_layers.unwrap_or(grid.nz_reservoir),
            refill_enabled: r.refill_enabled,
            policy: r.policy,
        };
        reservoir
            .validate(&grid)
            .map_err(|e| Error::Config(format!("solver.reservoir: {e}")))?;
        if kind == SolverKind::Ga && reservoir.depth_layers == 0 && energy.v_fluid0 > 0 {
            return config_err("solver.kind = \"ga\" with ink needs at least one reservoir layer");
        }
        Ok(Resolved {
            seed: self.seed,
            grid,
            fiber,
            energy,
            solver: kind,
            ga,
            reservoir,
            pin_solid: self.solver.mincut.pin_solid,
            gravity_sign: e.gravity_sign,
        })
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(e.message().to_string()))
}

/// Parse `section.key=value`. The value is read as a TOML literal and falls
/// back to a plain string.
pub fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value)> {
    let Some((path, raw)) = spec.split_once('=') else {
        return config_err(format!("override {spec:?} is not key=value"));
    };
    let keys: Vec<String> = path.trim().split('.').map(|k| k.trim().to_string()).collect();
    if keys.iter().any(String::is_empty) {
        return config_err(format!("override {spec:?} has an empty key"));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((keys, value))
}

fn apply_override(table: &mut toml::Table, keys: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = keys.split_last().expect("non-empty key path");
    let mut node = table;
    for k in parents {
        let entry = node
            .entry(k.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = match entry {
            toml::Value::Table(t) => t,
            _ => return config_err(format!("override path {} crosses a value", keys.join("."))),
        };
    }
    node.insert(last.clone(), value);
    Ok(())
}

/// Parse a config document and apply `section.key=value` overrides on top.
pub fn config_from_str(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut table = parse_table(text)?;
    for spec in overrides {
        let (keys, value) = parse_override(spec)?;
        apply_override(&mut table, &keys, value)?;
    }
    RunConfig::from_table(table)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    load_config_with(path, &[])
}

pub fn load_config_with(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    config_from_str(&text, overrides)
}
