//! Finite-volume solver: a genetic algorithm over the ink/air interface with
//! the nonlinear neighbor sums frozen for an epoch of inner iterations, and a
//! reservoir below the paper that is refilled from an external source.
//!
//! Within an epoch every cell carries a fixed linear coefficient
//!
//! ```text
//! g_i = 2 (Gg z_i − A0 φ_i − A1 F1_i − A2 F2_i − 2 c1 S̄1_i − 2 c2 S̄2_i)
//! ```
//!
//! where S̄ are the spin sums at the start of the epoch. `g_i` is the exact
//! energy change of filling cell `i` alone from that snapshot. The frozen
//! fitness of a field is `Σ g_i σ_i + E_V(Σσ)`, with the volume term always
//! evaluated exactly.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{energy_from_cache, EnergyBreakdown, EnergyParams, SumCache};
use crate::error::{invalid, Result};
use crate::lattice::{BinaryField, Grid, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RefillPolicy {
    /// Top the reservoir up whenever the ink count drops below the target.
    #[default]
    Conserve,
    /// Never draw more than the target volume from the source in total.
    Budget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirSpec {
    /// Layers directly below the paper that form the finite-volume boundary.
    pub depth_layers: usize,
    #[serde(default = "yes")]
    pub refill_enabled: bool,
    #[serde(default)]
    pub policy: RefillPolicy,
}

fn yes() -> bool {
    true
}

impl ReservoirSpec {
    pub fn for_grid(grid: &Grid) -> Self {
        Self {
            depth_layers: grid.nz_reservoir,
            refill_enabled: true,
            policy: RefillPolicy::Conserve,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.depth_layers > grid.nz_reservoir {
            return invalid(format!(
                "reservoir depth {} exceeds the {} reservoir layers of the grid",
                self.depth_layers, grid.nz_reservoir
            ));
        }
        Ok(())
    }

    /// Reservoir cells, lowest layer first, ascending within a layer.
    pub fn cells(&self, grid: &Grid) -> std::ops::Range<usize> {
        let first = grid.nz_reservoir - self.depth_layers;
        first * grid.layer_len()..grid.nz_reservoir * grid.layer_len()
    }

    pub fn capacity(&self, grid: &Grid) -> usize {
        self.depth_layers * grid.layer_len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MutationRate {
    PerGene(f64),
    Named(MutationSentinel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationSentinel {
    /// One expected flip per chromosome.
    InverseLength,
}

impl MutationRate {
    pub fn per_gene(&self, len: usize) -> f64 {
        match *self {
            MutationRate::PerGene(p) => p,
            MutationRate::Named(MutationSentinel::InverseLength) => 1.0 / len.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations_per_inner_iteration: usize,
    pub crossover_rate: f64,
    pub mutation_rate: MutationRate,
    pub tournament_size: usize,
    pub elitism_count: usize,
    pub inner_iterations_per_epoch: usize,
    pub convergence_rel_tol: f64,
    pub max_outer_iterations: usize,
    /// Supplied by the run, not by configuration files.
    #[serde(skip)]
    pub seed: u64,
    /// Keep ink out of solid cells.
    pub exclude_solid: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 32,
            generations_per_inner_iteration: 20,
            crossover_rate: 0.9,
            mutation_rate: MutationRate::Named(MutationSentinel::InverseLength),
            tournament_size: 3,
            elitism_count: 1,
            inner_iterations_per_epoch: 100,
            convergence_rel_tol: 1e-3,
            max_outer_iterations: 50,
            seed: 0,
            exclude_solid: true,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return invalid("population_size must be at least 1");
        }
        if self.elitism_count == 0 || self.elitism_count > self.population_size {
            return invalid(format!(
                "elitism_count must lie in 1..={}, got {}",
                self.population_size, self.elitism_count
            ));
        }
        if self.tournament_size == 0 {
            return invalid("tournament_size must be at least 1");
        }
        if self.inner_iterations_per_epoch == 0 {
            return invalid("inner_iterations_per_epoch must be at least 1");
        }
        if self.max_outer_iterations == 0 {
            return invalid("max_outer_iterations must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return invalid(format!("crossover_rate {} outside [0, 1]", self.crossover_rate));
        }
        if let MutationRate::PerGene(p) = self.mutation_rate {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("mutation_rate {p} outside [0, 1]"));
            }
        }
        if self.convergence_rel_tol.is_nan() || self.convergence_rel_tol < 0.0 {
            return invalid("convergence_rel_tol must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer: usize,
    pub inner: usize,
    pub e_t: f64,
    pub e_g: f64,
    pub e_c: f64,
    pub e_a: f64,
    pub e_v: f64,
    pub v_fluid: usize,
    pub seconds: f64,
}

impl TraceRow {
    fn new(outer: usize, inner: usize, e: &EnergyBreakdown, seconds: f64) -> Self {
        Self {
            outer,
            inner,
            e_t: e.e_t,
            e_g: e.e_g,
            e_c: e.e_c,
            e_a: e.e_a,
            e_v: e.e_v,
            v_fluid: e.v_fluid,
            seconds,
        }
    }

    /// Row without the wall-clock column, for reproducibility checks.
    pub fn same_values(&self, other: &TraceRow) -> bool {
        let mut a = self.clone();
        a.seconds = other.seconds;
        a == *other
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub rows: Vec<TraceRow>,
}

/// Frozen fitness of the incumbent around one inner iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub outer: usize,
    pub inner: usize,
    pub before: f64,
    pub after_ga: f64,
    pub after_refill: f64,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub sigma: BinaryField,
    /// Live neighbor sums, kept consistent with `sigma`.
    pub cache: SumCache,
    /// Spin sums frozen at the start of the epoch.
    pub frozen_s1: Vec<i32>,
    pub frozen_s2: Vec<i32>,
    pub dispensed_volume: usize,
    pub outer_iteration: usize,
    pub inner_iteration: usize,
    pub trace: EnergyTrace,
    pub warnings: Vec<String>,
}

/// Paper layers empty, the reservoir filled lowest-first up to the target
/// volume, sums initialised.
pub fn init_state(
    grid: &Grid,
    phi: &BinaryField,
    reservoir: &ReservoirSpec,
    params: &EnergyParams,
    topo: &Topology,
) -> Result<SolverState> {
    phi.check_grid(grid, "solid")?;
    params.check_grid(grid)?;
    reservoir.validate(grid)?;
    let mut sigma = BinaryField::zeros(grid);
    let capacity = reservoir.capacity(grid);
    let fill = capacity.min(params.v_fluid0);
    for i in reservoir.cells(grid).take(fill) {
        sigma.set(i, true);
    }
    let mut warnings = Vec::new();
    if params.v_fluid0 > capacity && !reservoir.refill_enabled {
        warnings.push(format!(
            "target volume {} exceeds reservoir capacity {} and refilling is disabled",
            params.v_fluid0, capacity
        ));
    }
    let cache = SumCache::new(topo, phi, &sigma);
    Ok(SolverState {
        frozen_s1: cache.s1.clone(),
        frozen_s2: cache.s2.clone(),
        sigma,
        cache,
        dispensed_volume: fill,
        outer_iteration: 0,
        inner_iteration: 0,
        trace: EnergyTrace::default(),
        warnings,
    })
}

/// Cells on the ink/air boundary: ink cells with an empty neighbor and empty
/// cells with an ink neighbor, first-layer neighborhood, ascending. With
/// `exclude_solid`, solid cells are neither candidates nor counted as empty
/// neighbors.
pub fn extract_interface(
    sigma: &BinaryField,
    phi: &BinaryField,
    topo: &Topology,
    exclude_solid: bool,
) -> Vec<usize> {
    let open = |i: usize| !(exclude_solid && phi.get(i));
    (0..sigma.len())
        .filter(|&i| open(i))
        .filter(|&i| {
            let ink = sigma.get(i);
            topo.n1.of(i).any(|j| open(j) && sigma.get(j) != ink)
        })
        .collect()
}

/// Linear-plus-volume objective over a chromosome.
#[derive(Debug, Clone)]
pub struct ChromosomeProblem {
    pub coeffs: Vec<f64>,
    /// Ink cells outside the chromosome.
    pub base_count: usize,
    pub params: EnergyParams,
}

impl ChromosomeProblem {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn fitness(&self, genes: &[bool]) -> f64 {
        let mut lin = 0.0;
        let mut n = self.base_count;
        for (c, &g) in self.coeffs.iter().zip(genes) {
            if g {
                lin += c;
                n += 1;
            }
        }
        lin + self.params.volume_energy(n)
    }
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub genes: Vec<bool>,
    pub fitness: f64,
    pub incumbent_fitness: f64,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent generator for one (seed, coordinates) tuple.
fn stream(seed: u64, coords: &[u64]) -> ChaCha8Rng {
    let key = coords
        .iter()
        .fold(splitmix(seed), |acc, &c| splitmix(acc ^ splitmix(c)));
    ChaCha8Rng::seed_from_u64(key)
}

fn tournament(scores: &[f64], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut best = rng.gen_range(0..scores.len());
    for _ in 1..size {
        let c = rng.gen_range(0..scores.len());
        if scores[c] < scores[best] || (scores[c] == scores[best] && c < best) {
            best = c;
        }
    }
    best
}

fn rank(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

/// Minimise `problem` starting from `incumbent`. The incumbent is individual
/// zero of the first generation and elitism keeps the best found so far, so
/// the returned fitness never exceeds the incumbent's. `key` identifies the
/// call for the random streams.
pub fn ga_minimize(
    problem: &ChromosomeProblem,
    incumbent: &[bool],
    cfg: &GaConfig,
    key: &[u64],
) -> GaOutcome {
    let len = problem.len();
    let incumbent_fitness = problem.fitness(incumbent);
    if len == 0 {
        return GaOutcome {
            genes: Vec::new(),
            fitness: incumbent_fitness,
            incumbent_fitness,
        };
    }
    let pop_size = cfg.population_size;
    let mutation = cfg.mutation_rate.per_gene(len);
    let individual_key = |generation: u64, idx: u64| -> Vec<u64> {
        let mut k = key.to_vec();
        k.extend([generation, idx]);
        k
    };

    let mut population: Vec<Vec<bool>> = Vec::with_capacity(pop_size);
    population.push(incumbent.to_vec());
    let init_flip = mutation.max(0.05);
    for idx in 1..pop_size {
        let mut rng = stream(cfg.seed, &individual_key(0, idx as u64));
        let genes = if idx % 2 == 1 {
            incumbent.iter().map(|&g| g ^ rng.gen_bool(init_flip)).collect()
        } else {
            (0..len).map(|_| rng.gen_bool(0.5)).collect()
        };
        population.push(genes);
    }
    let mut scores: Vec<f64> = population.iter().map(|g| problem.fitness(g)).collect();

    for generation in 1..=cfg.generations_per_inner_iteration as u64 {
        let order = rank(&scores);
        let mut next: Vec<Vec<bool>> = order[..cfg.elitism_count]
            .iter()
            .map(|&i| population[i].clone())
            .collect();
        for idx in cfg.elitism_count..pop_size {
            let mut rng = stream(cfg.seed, &individual_key(generation, idx as u64));
            let a = tournament(&scores, cfg.tournament_size, &mut rng);
            let mut child = if rng.gen_bool(cfg.crossover_rate) {
                let b = tournament(&scores, cfg.tournament_size, &mut rng);
                population[a]
                    .iter()
                    .zip(&population[b])
                    .map(|(&x, &y)| if rng.gen_bool(0.5) { x } else { y })
                    .collect()
            } else {
                population[a].clone()
            };
            if mutation > 0.0 {
                for g in child.iter_mut() {
                    if rng.gen_bool(mutation) {
                        *g = !*g;
                    }
                }
            }
            next.push(child);
        }
        population = next;
        scores = population.iter().map(|g| problem.fitness(g)).collect();
    }

    let best = rank(&scores)[0];
    GaOutcome {
        fitness: scores[best],
        genes: std::mem::take(&mut population[best]),
        incumbent_fitness,
    }
}

/// Top the reservoir up towards the target volume. Returns the number of
/// cells added.
pub fn refill(
    state: &mut SolverState,
    reservoir: &ReservoirSpec,
    params: &EnergyParams,
    grid: &Grid,
    topo: &Topology,
) -> usize {
    if !reservoir.refill_enabled {
        return 0;
    }
    let ink = state.cache.ink;
    let target = params.v_fluid0;
    if ink >= target {
        return 0;
    }
    let mut want = target - ink;
    if reservoir.policy == RefillPolicy::Budget {
        want = want.min(target.saturating_sub(state.dispensed_volume));
    }
    let mut added = 0;
    for i in reservoir.cells(grid) {
        if added == want {
            break;
        }
        if !state.sigma.get(i) {
            state.sigma.set(i, true);
            state.cache.apply_flip(topo, i, true);
            added += 1;
        }
    }
    state.dispensed_volume += added;
    added
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub sigma: BinaryField,
    pub trace: EnergyTrace,
    pub fitness: Vec<FitnessRecord>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub volume_error: usize,
    pub dispensed_volume: usize,
    pub warnings: Vec<String>,
}

pub struct GaSolver {
    grid: Grid,
    phi: BinaryField,
    params: EnergyParams,
    reservoir: ReservoirSpec,
    cfg: GaConfig,
    topo: Arc<Topology>,
    /// Frozen part of the linear coefficients: Gg z − A0 φ − A1 F1 − A2 F2.
    field: Vec<f64>,
    coeffs: Vec<f64>,
    state: SolverState,
    fitness: Vec<FitnessRecord>,
    started: Instant,
}

impl GaSolver {
    pub fn new(
        grid: &Grid,
        phi: &BinaryField,
        params: &EnergyParams,
        reservoir: &ReservoirSpec,
        cfg: &GaConfig,
    ) -> Result<Self> {
        Self::with_topology(Arc::new(Topology::new(grid)), grid, phi, params, reservoir, cfg)
    }

    pub fn with_topology(
        topo: Arc<Topology>,
        grid: &Grid,
        phi: &BinaryField,
        params: &EnergyParams,
        reservoir: &ReservoirSpec,
        cfg: &GaConfig,
    ) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let state = init_state(grid, phi, reservoir, params, &topo)?;
        let field = (0..grid.len())
            .map(|i| {
                params.gg * grid.z_of(i)
                    - params.a0 * phi.value(i) as f64
                    - params.a1 * state.cache.f1[i] as f64
                    - params.a2 * state.cache.f2[i] as f64
            })
            .collect();
        let mut solver = Self {
            grid: *grid,
            phi: phi.clone(),
            params: params.clone(),
            reservoir: *reservoir,
            cfg: cfg.clone(),
            topo,
            field,
            coeffs: Vec::new(),
            state,
            fitness: Vec::new(),
            started: Instant::now(),
        };
        solver.freeze();
        let e = solver.energy();
        solver.state.trace.rows.push(TraceRow::new(0, 0, &e, 0.0));
        Ok(solver)
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn fitness_records(&self) -> &[FitnessRecord] {
        &self.fitness
    }

    /// Snapshot the live spin sums and rebuild the linear coefficients.
    fn freeze(&mut self) {
        self.state.frozen_s1.clone_from(&self.state.cache.s1);
        self.state.frozen_s2.clone_from(&self.state.cache.s2);
        let p = &self.params;
        self.coeffs = (0..self.grid.len())
            .map(|i| {
                2.0 * (self.field[i]
                    - 2.0 * p.c1 * self.state.frozen_s1[i] as f64
                    - 2.0 * p.c2 * self.state.frozen_s2[i] as f64)
            })
            .collect();
    }

    pub fn energy(&self) -> EnergyBreakdown {
        energy_from_cache(
            &self.state.sigma,
            &self.phi,
            &self.state.cache,
            &self.params,
            &self.grid,
        )
    }

    /// Frozen fitness of the current field.
    pub fn frozen_fitness(&self) -> f64 {
        let lin: f64 = self.state.sigma.iter_ones().map(|i| self.coeffs[i]).sum();
        lin + self.params.volume_energy(self.state.cache.ink)
    }

    fn set_cell(&mut self, i: usize, value: bool) {
        if self.state.sigma.get(i) != value {
            self.state.sigma.set(i, value);
            self.state.cache.apply_flip(&self.topo, i, value);
        }
    }

    /// One pass: interface, GA on the frozen objective, apply if not worse,
    /// refill. Returns whether the field changed.
    pub fn inner_iteration(&mut self) -> bool {
        self.state.inner_iteration += 1;
        let (outer, inner) = (self.state.outer_iteration, self.state.inner_iteration);
        let before = self.frozen_fitness();
        let cells = extract_interface(&self.state.sigma, &self.phi, &self.topo, self.cfg.exclude_solid);
        let mut changed = false;
        if !cells.is_empty() {
            let incumbent: Vec<bool> = cells.iter().map(|&i| self.state.sigma.get(i)).collect();
            let inside = incumbent.iter().filter(|&&b| b).count();
            let problem = ChromosomeProblem {
                coeffs: cells.iter().map(|&i| self.coeffs[i]).collect(),
                base_count: self.state.cache.ink - inside,
                params: self.params.clone(),
            };
            let out = ga_minimize(&problem, &incumbent, &self.cfg, &[outer as u64, inner as u64]);
            if out.fitness < out.incumbent_fitness {
                for (&i, &g) in cells.iter().zip(&out.genes) {
                    self.set_cell(i, g);
                }
                changed = true;
            }
        }
        let after_ga = self.frozen_fitness();
        let topo = Arc::clone(&self.topo);
        let added = refill(&mut self.state, &self.reservoir, &self.params, &self.grid, &topo);
        let after_refill = self.frozen_fitness();
        self.fitness.push(FitnessRecord {
            outer,
            inner,
            before,
            after_ga,
            after_refill,
        });
        let e = self.energy();
        let seconds = self.started.elapsed().as_secs_f64();
        self.state.trace.rows.push(TraceRow::new(outer, inner, &e, seconds));
        changed || added > 0
    }

    /// A full epoch followed by refreezing the sums. Returns the energy at
    /// the epoch boundary.
    pub fn epoch(&mut self) -> EnergyBreakdown {
        self.state.outer_iteration += 1;
        self.state.inner_iteration = 0;
        for _ in 0..self.cfg.inner_iterations_per_epoch {
            let changed = self.inner_iteration();
            // Nothing left on the interface: later passes are identical.
            if !changed && self.state.trace.rows.last().is_some_and(|r| r.v_fluid == 0) {
                break;
            }
        }
        self.freeze();
        self.energy()
    }

    pub fn run(mut self) -> RunResult {
        let mut previous = self.energy().e_t;
        let mut converged = false;
        while self.state.outer_iteration < self.cfg.max_outer_iterations {
            let e = self.epoch().e_t;
            let change = (e - previous).abs();
            let rel = if previous != 0.0 {
                change / previous.abs()
            } else if change == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            previous = e;
            if rel < self.cfg.convergence_rel_tol || (change == 0.0 && self.cfg.convergence_rel_tol == 0.0) {
                converged = true;
                break;
            }
        }
        let ink = self.state.cache.ink;
        let volume_error = ink.abs_diff(self.params.v_fluid0);
        if volume_error > 0 {
            self.state.warnings.push(format!(
                "final ink volume {ink} differs from the target {} ({} dispensed)",
                self.params.v_fluid0, self.state.dispensed_volume
            ));
        }
        RunResult {
            volume_error,
            converged,
            outer_iterations: self.state.outer_iteration,
            dispensed_volume: self.state.dispensed_volume,
            warnings: self.state.warnings,
            trace: self.state.trace,
            fitness: self.fitness,
            sigma: self.state.sigma,
        }
    }
}

/// Convenience wrapper: build a solver and run it to convergence.
pub fn run(
    phi: &BinaryField,
    params: &EnergyParams,
    reservoir: &ReservoirSpec,
    cfg: &GaConfig,
    grid: &Grid,
) -> Result<RunResult> {
    Ok(GaSolver::new(grid, phi, params, reservoir, cfg)?.run())
}
