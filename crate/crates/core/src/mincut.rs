//! Exact minimisation of the pairwise energy when the volume coupling is
//! switched off (λ = 0), by reduction to a minimum s-t cut.
//!
//! Label convention: a cell on the sink side of the cut holds ink. Unary
//! coefficients become terminal arcs and every neighbor coupling `w σ_i σ_j`
//! with `w ≤ 0` is rewritten as `w σ_j + |w| σ_j (1 − σ_i)`, i.e. a unary
//! shift plus an arc `i → j` of capacity `|w|`. Capacities are integers in
//! units of [`FlowNetwork::quantum`], a power of two times c1 chosen so the
//! total capacity fits in 61 bits; the cut is exact for the rounded
//! coefficients and reproducible.

use std::collections::VecDeque;

use crate::energy::{energy_direct_with, pairwise_model, EnergyBreakdown, EnergyParams, PairwiseModel};
use crate::error::{Error, Result};
use crate::lattice::{BinaryField, Grid};

/// Finest capacity unit relative to the cohesion coefficient, 2^-40.
pub const QUANTUM_PER_C1: f64 = 1.0 / (1u64 << 40) as f64;

/// Largest total capacity allowed in integer units.
const CAPACITY_BUDGET: f64 = (1u64 << 61) as f64;

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    cap: i64,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    grid: Grid,
    cells: usize,
    arcs: Vec<Arc>,
    adjacency: Vec<Vec<usize>>,
    /// Energy of a labeling is `cut * quantum + constant`.
    pub constant: f64,
    pub quantum: f64,
    terminal_arcs: usize,
    pair_arcs: usize,
}

impl FlowNetwork {
    #[inline]
    pub fn source(&self) -> usize {
        self.cells
    }

    #[inline]
    pub fn sink(&self) -> usize {
        self.cells + 1
    }

    pub fn terminal_arc_count(&self) -> usize {
        self.terminal_arcs
    }

    pub fn pair_arc_count(&self) -> usize {
        self.pair_arcs
    }

    fn add_arc(&mut self, from: usize, to: usize, cap: i64) {
        debug_assert!(cap >= 0);
        let id = self.arcs.len();
        self.arcs.push(Arc { to, cap });
        self.arcs.push(Arc { to: from, cap: 0 });
        self.adjacency[from].push(id);
        self.adjacency[to].push(id + 1);
    }

    pub fn capacities_nonnegative(&self) -> bool {
        self.arcs.iter().all(|a| a.cap >= 0)
    }
}

/// Build the cut network for `model`. Cells set in `pinned` are held at
/// σ = 0 and take no part in the network.
pub fn build_network(model: &PairwiseModel, pinned: Option<&BinaryField>) -> Result<FlowNetwork> {
    if model.v3 != 0.0 || model.lambda != 0.0 {
        return Err(Error::UnsupportedModel(format!(
            "volume coupling λ = {} couples every pair of cells; set λ = 0 to use the min-cut solver",
            model.lambda
        )));
    }
    let grid = *model.grid();
    if let Some(p) = pinned {
        p.check_grid(&grid, "pinned")?;
    }
    let topo = model.topology();
    for (layer, w) in [(&topo.n1, model.v1), (&topo.n2, model.v2)] {
        if w > 0.0 {
            if let Some((i, j)) = layer.directed_pairs().next() {
                return Err(Error::NonSubmodular { i, j, weight: w });
            }
        }
    }

    let scale = if model.v1 != 0.0 { model.v1.abs() / 4.0 } else { 1.0 };
    let n = grid.len();
    // Every unary term plus each coupling counted twice (arc and unary shift).
    let bound: f64 = model.d1.iter().map(|d| d.abs()).sum::<f64>()
        + 4.0 * (model.v1.abs() * topo.n1.pair_count() as f64
            + model.v2.abs() * topo.n2.pair_count() as f64);
    let mut quantum = QUANTUM_PER_C1 * scale;
    while bound / quantum > CAPACITY_BUDGET {
        quantum *= 2.0;
    }
    let to_q = |v: f64| -> i64 { (v / quantum).round() as i64 };

    let free = |i: usize| pinned.is_none_or(|p| !p.get(i));
    let mut unary: Vec<i64> = model.d1.iter().map(|&d| to_q(d)).collect();
    let mut net = FlowNetwork {
        grid,
        cells: n,
        arcs: Vec::new(),
        adjacency: vec![Vec::new(); n + 2],
        constant: 0.0,
        quantum,
        terminal_arcs: 0,
        pair_arcs: 0,
    };

    // Both directed copies of an unordered pair fold into one coupling 2w.
    for (layer, w) in [(&topo.n1, model.v1), (&topo.n2, model.v2)] {
        let cap = to_q(2.0 * w.abs());
        if cap == 0 {
            continue;
        }
        for i in (0..n).filter(|&i| free(i)) {
            for j in layer.of(i).filter(|&j| j > i && free(j)) {
                unary[j] -= cap;
                net.add_arc(i, j, cap);
                net.pair_arcs += 1;
            }
        }
    }

    let (s, t) = (net.source(), net.sink());
    let mut constant: i64 = 0;
    for i in (0..n).filter(|&i| free(i)) {
        let d = unary[i];
        if d > 0 {
            net.add_arc(s, i, d);
            net.terminal_arcs += 1;
        } else if d < 0 {
            constant += d;
            net.add_arc(i, t, -d);
            net.terminal_arcs += 1;
        }
    }
    net.constant = constant as f64 * quantum;
    Ok(net)
}

struct Dinic<'a> {
    net: &'a FlowNetwork,
    cap: Vec<i64>,
    level: Vec<i32>,
    next: Vec<usize>,
}

impl<'a> Dinic<'a> {
    fn new(net: &'a FlowNetwork) -> Self {
        let nodes = net.adjacency.len();
        Self {
            net,
            cap: net.arcs.iter().map(|a| a.cap).collect(),
            level: vec![-1; nodes],
            next: vec![0; nodes],
        }
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.fill(-1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.net.adjacency[u] {
                let v = self.net.arcs[e].to;
                if self.cap[e] > 0 && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        self.level[t] >= 0
    }

    /// Blocking flow on the current level graph, iterative.
    fn blocking_flow(&mut self, s: usize, t: usize) -> i64 {
        self.next.fill(0);
        let mut total = 0;
        let mut path: Vec<usize> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let push = path.iter().map(|&e| self.cap[e]).min().unwrap_or(0);
                for &e in &path {
                    self.cap[e] -= push;
                    self.cap[e ^ 1] += push;
                }
                total += push;
                // Retreat to the tail of the first saturated arc.
                let cut = path.iter().position(|&e| self.cap[e] == 0).unwrap_or(0);
                path.truncate(cut);
                u = match path.last() {
                    Some(&e) => self.net.arcs[e].to,
                    None => s,
                };
                continue;
            }
            let adj = &self.net.adjacency[u];
            let mut advanced = false;
            while self.next[u] < adj.len() {
                let e = adj[self.next[u]];
                let v = self.net.arcs[e].to;
                if self.cap[e] > 0 && self.level[v] == self.level[u] + 1 {
                    path.push(e);
                    u = v;
                    advanced = true;
                    break;
                }
                self.next[u] += 1;
            }
            if advanced {
                continue;
            }
            // Dead end.
            self.level[u] = -1;
            match path.pop() {
                Some(e) => {
                    u = self.net.arcs[e ^ 1].to;
                    self.next[u] += 1;
                }
                None => return total,
            }
        }
    }

    fn run(&mut self) -> i64 {
        let (s, t) = (self.net.source(), self.net.sink());
        let mut flow = 0;
        while self.bfs(s, t) {
            flow += self.blocking_flow(s, t);
        }
        flow
    }

    /// Nodes that can still reach the sink in the residual graph.
    fn sink_side(&self) -> Vec<bool> {
        let t = self.net.sink();
        let mut reach = vec![false; self.net.adjacency.len()];
        reach[t] = true;
        let mut queue = VecDeque::from([t]);
        while let Some(v) = queue.pop_front() {
            // u -> v has residual capacity iff the paired arc stored at v
            // (pointing to u) has its reverse with capacity.
            for &e in &self.net.adjacency[v] {
                let u = self.net.arcs[e].to;
                if !reach[u] && self.cap[e ^ 1] > 0 {
                    reach[u] = true;
                    queue.push_back(u);
                }
            }
        }
        reach
    }
}

/// Maximum flow and the corresponding minimum-cut labeling. Among all
/// minimum cuts the one with the fewest ink cells is returned.
pub fn max_flow(network: &FlowNetwork) -> (f64, BinaryField) {
    let mut dinic = Dinic::new(network);
    let flow = dinic.run();
    let reach = dinic.sink_side();
    let mut sigma = BinaryField::zeros(&network.grid);
    for (i, &r) in reach.iter().take(network.cells).enumerate() {
        if r {
            sigma.set(i, true);
        }
    }
    (flow as f64 * network.quantum, sigma)
}

/// Global minimiser of the interaction energy for unlimited ink.
pub fn solve_infinite(
    phi: &BinaryField,
    params: &EnergyParams,
    grid: &Grid,
) -> Result<(BinaryField, EnergyBreakdown)> {
    solve_infinite_with(phi, params, grid, None)
}

/// As [`solve_infinite`], optionally holding the `pinned` cells empty.
pub fn solve_infinite_with(
    phi: &BinaryField,
    params: &EnergyParams,
    grid: &Grid,
    pinned: Option<&BinaryField>,
) -> Result<(BinaryField, EnergyBreakdown)> {
    if params.lambda != 0.0 {
        return Err(Error::UnsupportedModel(format!(
            "volume coupling λ = {} couples every pair of cells; set λ = 0 to use the min-cut solver",
            params.lambda
        )));
    }
    let model = pairwise_model(phi, params, grid)?;
    let net = build_network(&model, pinned)?;
    let (_, sigma) = max_flow(&net);
    let breakdown = energy_direct_with(model.topology(), &sigma, phi, params, grid)?;
    Ok((sigma, breakdown))
}
