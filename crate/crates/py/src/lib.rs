//! Python module `seepage`.

use pyo3::exceptions::{PyIndexError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use seepage::analysis;
use seepage::config::config_from_str;
use seepage::energy::{energy_direct, energy_pairwise, pairwise_model};
use seepage::fibergen::{generate, voxelize, FiberParams};
use seepage::formats::{load_ivf, save_ivf, save_vtk};
use seepage::gasolver::{GaConfig, GaSolver, RefillPolicy, ReservoirSpec};
use seepage::lattice::{n1_neighbors, n2_neighbors};
use seepage::mincut::solve_infinite;
use seepage::pipeline::run_pipeline;
use seepage::{EnergyBreakdown, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "Grid", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PyGrid {
    inner: seepage::Grid,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (nx, ny, nz_paper, nz_reservoir = 0, cell_size = 1.0))]
    fn new(nx: usize, ny: usize, nz_paper: usize, nz_reservoir: usize, cell_size: f64) -> PyResult<Self> {
        let inner = seepage::Grid::new(nx, ny, nz_paper, nz_reservoir, cell_size).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.nx, self.inner.ny, self.inner.nz())
    }

    #[getter]
    fn nz_reservoir(&self) -> usize {
        self.inner.nz_reservoir
    }

    #[getter]
    fn cell_size(&self) -> f64 {
        self.inner.cell_size
    }

    #[getter]
    fn z_max(&self) -> f64 {
        self.inner.z_max()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn index(&self, ix: usize, iy: usize, iz: usize) -> PyResult<usize> {
        let g = &self.inner;
        if ix >= g.nx || iy >= g.ny || iz >= g.nz() {
            return Err(PyIndexError::new_err(format!("({ix}, {iy}, {iz}) outside the grid")));
        }
        Ok(g.index(ix, iy, iz))
    }

    fn coords(&self, i: usize) -> PyResult<(usize, usize, usize)> {
        self.inner.check_index(i).map_err(|e| PyIndexError::new_err(e.to_string()))?;
        Ok(self.inner.coords(i))
    }

    fn z_of(&self, i: usize) -> PyResult<f64> {
        self.inner.check_index(i).map_err(|e| PyIndexError::new_err(e.to_string()))?;
        Ok(self.inner.z_of(i))
    }

    fn n1_neighbors(&self, i: usize) -> PyResult<Vec<usize>> {
        n1_neighbors(&self.inner, i).map_err(|e| PyIndexError::new_err(e.to_string()))
    }

    fn n2_neighbors(&self, i: usize) -> PyResult<Vec<usize>> {
        n2_neighbors(&self.inner, i).map_err(|e| PyIndexError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        let g = &self.inner;
        format!(
            "Grid(nx={}, ny={}, nz_paper={}, nz_reservoir={}, cell_size={})",
            g.nx, g.ny, g.nz_paper, g.nz_reservoir, g.cell_size
        )
    }
}

/// One bit per cell: a solid or ink field.
#[pyclass(name = "Field", eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PyField {
    inner: seepage::BinaryField,
}

impl PyField {
    fn check(&self, i: usize) -> PyResult<()> {
        if i >= self.inner.len() {
            return Err(PyIndexError::new_err(format!("cell {i} outside a field of {}", self.inner.len())));
        }
        Ok(())
    }
}

#[pymethods]
impl PyField {
    #[staticmethod]
    fn zeros(grid: &PyGrid) -> Self {
        Self {
            inner: seepage::BinaryField::zeros(&grid.inner),
        }
    }

    #[staticmethod]
    fn from_list(grid: &PyGrid, bits: Vec<bool>) -> PyResult<Self> {
        let inner = seepage::BinaryField::from_bits(&grid.inner, bits).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<(Self, String)> {
        let (inner, name) = load_ivf(path.as_ref()).map_err(py_err)?;
        Ok((Self { inner }, name))
    }

    fn save(&self, path: &str, name: &str) -> PyResult<()> {
        save_ivf(path.as_ref(), &self.inner, name).map_err(py_err)
    }

    fn save_vtk(&self, path: &str, name: &str) -> PyResult<()> {
        save_vtk(path.as_ref(), &self.inner, name).map_err(py_err)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid {
            inner: self.inner.grid(),
        }
    }

    fn to_list(&self) -> Vec<bool> {
        self.inner.bits().to_vec()
    }

    fn count(&self) -> usize {
        self.inner.count_ones()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __getitem__(&self, i: usize) -> PyResult<bool> {
        self.check(i)?;
        Ok(self.inner.get(i))
    }

    fn __setitem__(&mut self, i: usize, value: bool) -> PyResult<()> {
        self.check(i)?;
        self.inner.set(i, value);
        Ok(())
    }
}

#[pyclass(name = "EnergyParams", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PyEnergyParams {
    c1: f64,
    c2: f64,
    a0: f64,
    a1: f64,
    a2: f64,
    gg: f64,
    lambda_: f64,
    v_fluid0: usize,
    v0: usize,
    z_max: f64,
}

impl PyEnergyParams {
    fn to_core(&self) -> seepage::EnergyParams {
        seepage::EnergyParams {
            c1: self.c1,
            c2: self.c2,
            a0: self.a0,
            a1: self.a1,
            a2: self.a2,
            gg: self.gg,
            lambda: self.lambda_,
            v_fluid0: self.v_fluid0,
            v0: self.v0,
            z_max: self.z_max,
        }
    }
}

#[pymethods]
impl PyEnergyParams {
    /// Reference coefficients for `grid` and target volume `v_fluid0`.
    #[staticmethod]
    #[pyo3(signature = (grid, v_fluid0 = 0))]
    fn defaults(grid: &PyGrid, v_fluid0: usize) -> PyResult<Self> {
        let p = seepage::EnergyParams::defaults(&grid.inner, v_fluid0).map_err(py_err)?;
        Ok(Self {
            c1: p.c1,
            c2: p.c2,
            a0: p.a0,
            a1: p.a1,
            a2: p.a2,
            gg: p.gg,
            lambda_: p.lambda,
            v_fluid0: p.v_fluid0,
            v0: p.v0,
            z_max: p.z_max,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "EnergyParams(c1={}, c2={}, a0={}, a1={}, a2={}, gg={}, lambda_={}, v_fluid0={}, v0={})",
            self.c1, self.c2, self.a0, self.a1, self.a2, self.gg, self.lambda_, self.v_fluid0, self.v0
        )
    }
}

fn breakdown<'py>(py: Python<'py>, e: &EnergyBreakdown) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("E_t", e.e_t)?;
    d.set_item("E_g", e.e_g)?;
    d.set_item("E_c", e.e_c)?;
    d.set_item("E_a", e.e_a)?;
    d.set_item("E_V", e.e_v)?;
    d.set_item("V_fluid", e.v_fluid)?;
    Ok(d)
}

/// Random fiber structure voxelized on `grid`; returns the solid field.
#[pyfunction]
#[pyo3(signature = (grid, fiber_count, seed = 0))]
fn generate_fibers(grid: &PyGrid, fiber_count: usize, seed: u64) -> PyResult<PyField> {
    let params = FiberParams::for_grid(&grid.inner, fiber_count, seed);
    let structure = generate(&params).map_err(py_err)?;
    Ok(PyField {
        inner: voxelize(&structure, &grid.inner),
    })
}

/// Term-by-term energy of an ink field.
#[pyfunction]
fn energy<'py>(
    py: Python<'py>,
    sigma: &PyField,
    phi: &PyField,
    params: &PyEnergyParams,
) -> PyResult<Bound<'py, PyDict>> {
    let g = sigma.inner.grid();
    let e = energy_direct(&sigma.inner, &phi.inner, &params.to_core(), &g).map_err(py_err)?;
    breakdown(py, &e)
}

/// Energy in the pairwise 0/1 form; differs from `energy()["E_t"]` by a
/// constant that depends only on the solid field and parameters.
#[pyfunction]
fn energy_pairwise_form(sigma: &PyField, phi: &PyField, params: &PyEnergyParams) -> PyResult<f64> {
    let g = sigma.inner.grid();
    let model = pairwise_model(&phi.inner, &params.to_core(), &g).map_err(py_err)?;
    energy_pairwise(&sigma.inner, &model).map_err(py_err)
}

/// Exact minimiser for unlimited ink (requires `lambda_ == 0`).
#[pyfunction]
fn solve_mincut<'py>(
    py: Python<'py>,
    phi: &PyField,
    params: &PyEnergyParams,
) -> PyResult<(PyField, Bound<'py, PyDict>)> {
    let g = phi.inner.grid();
    let (sigma, e) = solve_infinite(&phi.inner, &params.to_core(), &g).map_err(py_err)?;
    Ok((PyField { inner: sigma }, breakdown(py, &e)?))
}

/// Finite-volume genetic solver with a refilled reservoir.
#[pyfunction]
#[pyo3(signature = (
    phi, params, seed = 0, population_size = 32, generations_per_inner_iteration = 20,
    inner_iterations_per_epoch = 100, max_outer_iterations = 50, convergence_rel_tol = 1e-3,
    depth_layers = None, refill_policy = "conserve", exclude_solid = true,
))]
#[allow(clippy::too_many_arguments)]
fn solve_ga<'py>(
    py: Python<'py>,
    phi: &PyField,
    params: &PyEnergyParams,
    seed: u64,
    population_size: usize,
    generations_per_inner_iteration: usize,
    inner_iterations_per_epoch: usize,
    max_outer_iterations: usize,
    convergence_rel_tol: f64,
    depth_layers: Option<usize>,
    refill_policy: &str,
    exclude_solid: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let g = phi.inner.grid();
    let policy = match refill_policy {
        "conserve" => RefillPolicy::Conserve,
        "budget" => RefillPolicy::Budget,
        other => return Err(PyValueError::new_err(format!("unknown refill policy {other:?}"))),
    };
    let reservoir = ReservoirSpec {
        depth_layers: depth_layers.unwrap_or(g.nz_reservoir),
        refill_enabled: true,
        policy,
    };
    let cfg = GaConfig {
        population_size,
        generations_per_inner_iteration,
        inner_iterations_per_epoch,
        max_outer_iterations,
        convergence_rel_tol,
        seed,
        exclude_solid,
        ..GaConfig::default()
    };
    let p = params.to_core();
    let res = GaSolver::new(&g, &phi.inner, &p, &reservoir, &cfg).map_err(py_err)?.run();
    let out = PyDict::new(py);
    out.set_item("converged", res.converged)?;
    out.set_item("outer_iterations", res.outer_iterations)?;
    out.set_item("volume_error", res.volume_error)?;
    out.set_item("dispensed_volume", res.dispensed_volume)?;
    out.set_item("warnings", res.warnings)?;
    let trace = res
        .trace
        .rows
        .iter()
        .map(|r| (r.outer, r.inner, r.e_t, r.e_g, r.e_c, r.e_a, r.e_v, r.v_fluid, r.seconds))
        .collect::<Vec<_>>();
    out.set_item("trace", trace)?;
    out.set_item("sigma", PyField { inner: res.sigma }.into_pyobject(py)?)?;
    Ok(out)
}

#[pyfunction]
fn volume_error(sigma: &PyField, params: &PyEnergyParams) -> usize {
    analysis::volume_error(&sigma.inner, &params.to_core())
}

type ProfileTuple = (usize, f64, usize, usize, f64);

/// Rows of (layer, z, free_cells, ink_cells, saturation), bottom to top.
#[pyfunction]
fn saturation_profile(sigma: &PyField, phi: &PyField) -> PyResult<Vec<ProfileTuple>> {
    let g = sigma.inner.grid();
    let prof = analysis::saturation_profile(&sigma.inner, &phi.inner, &g).map_err(py_err)?;
    Ok(prof
        .rows
        .iter()
        .map(|r| (r.layer, r.z, r.free_cells, r.ink_cells, r.saturation))
        .collect())
}

#[pyfunction]
fn fiber_adjacency_fraction(sigma: &PyField, phi: &PyField) -> PyResult<f64> {
    let g = sigma.inner.grid();
    analysis::fiber_adjacency_fraction(&sigma.inner, &phi.inner, &g).map_err(py_err)
}

/// Run a TOML configuration end to end; returns the manifest as JSON text.
#[pyfunction]
#[pyo3(signature = (config_toml, overrides = Vec::new()))]
fn run(config_toml: &str, overrides: Vec<String>) -> PyResult<String> {
    let cfg = config_from_str(config_toml, &overrides).map_err(py_err)?;
    let out = run_pipeline(&cfg).map_err(py_err)?;
    serde_json::to_string(&out.manifest).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "seepage")]
fn seepage_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyEnergyParams>()?;
    m.add_function(wrap_pyfunction!(generate_fibers, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(energy_pairwise_form, m)?)?;
    m.add_function(wrap_pyfunction!(solve_mincut, m)?)?;
    m.add_function(wrap_pyfunction!(solve_ga, m)?)?;
    m.add_function(wrap_pyfunction!(volume_error, m)?)?;
    m.add_function(wrap_pyfunction!(saturation_profile, m)?)?;
    m.add_function(wrap_pyfunction!(fiber_adjacency_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
