//! The Ising-type energy of an ink field inside a fixed solid field.
//!
//! Spins are σ̂ = 2σ − 1. Per cell,
//!
//! ```text
//! E_g = Gg σ̂ z
//! E_c = −(c1 σ̂ S1 + c2 σ̂ S2)          S = Σ σ̂ over the neighbor layer
//! E_a = −(A0 σ̂ φ + A1 σ̂ F1 + A2 σ̂ F2)  F = Σ φ over the neighbor layer
//! ```
//!
//! and the whole field carries the volume penalty
//! `E_V = λ (Σ(σ̂ + 1) − 2 V_fluid0)² / (4 V0)`.
//!
//! [`PairwiseModel`] rewrites the same energy in 0/1 variables as unary
//! coefficients plus directed-pair couplings, up to a constant that is kept so
//! the two forms can be checked against each other.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{BinaryField, Grid, Topology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub c1: f64,
    pub c2: f64,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    /// Gravity constant. Positive values penalise ink at large z.
    pub gg: f64,
    pub lambda: f64,
    /// Target ink volume, in cells.
    pub v_fluid0: usize,
    /// Total cell count of the grid.
    pub v0: usize,
    pub z_max: f64,
}

impl EnergyParams {
    /// Reference parameter set: c1 = 1, c2 = c1/8, Gg = c1/z_max,
    /// A0 = c1/2, A1 = 2/3 A0, A2 = 1/2 A1, λ = 100.
    pub fn defaults(grid: &Grid, v_fluid0: usize) -> Result<Self> {
        let z_max = grid.z_max();
        if z_max <= 0.0 {
            return invalid(format!(
                "z_max must be positive to set the gravity constant, got {z_max}"
            ));
        }
        let c1 = 1.0;
        let a0 = c1 / 2.0;
        let a1 = 2.0 / 3.0 * a0;
        let p = Self {
            c1,
            c2: c1 / 8.0,
            a0,
            a1,
            a2: a1 / 2.0,
            gg: c1 / z_max,
            lambda: 100.0,
            v_fluid0,
            v0: grid.len(),
            z_max,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c1.is_nan() || self.c1 <= 0.0 {
            return invalid(format!("c1 must be positive, got {}", self.c1));
        }
        for (name, v) in [
            ("c2", self.c2),
            ("a0", self.a0),
            ("a1", self.a1),
            ("a2", self.a2),
            ("lambda", self.lambda),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !self.gg.is_finite() {
            return invalid("gg must be finite");
        }
        if self.v0 == 0 {
            return invalid("v0 must be positive");
        }
        if self.v_fluid0 > self.v0 {
            return invalid(format!(
                "v_fluid0 = {} exceeds the grid volume {}",
                self.v_fluid0, self.v0
            ));
        }
        Ok(())
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.v0 != grid.len() {
            return invalid(format!(
                "params were built for V0 = {}, grid has {} cells",
                self.v0,
                grid.len()
            ));
        }
        Ok(())
    }

    /// Closed-form volume energy for an ink count `n`.
    #[inline]
    pub fn volume_energy(&self, n: usize) -> f64 {
        let d = n as f64 - self.v_fluid0 as f64;
        self.lambda * d * d / self.v0 as f64
    }
}

/// Neighbor sums of the solid and ink fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SumCache {
    pub f1: Vec<i32>,
    pub f2: Vec<i32>,
    pub s1: Vec<i32>,
    pub s2: Vec<i32>,
    /// Σσ.
    pub ink: usize,
}

fn layer_sums(topo: &Topology, value: impl Fn(usize) -> i32, n: usize) -> (Vec<i32>, Vec<i32>) {
    let sum = |nb: &crate::lattice::Neighborhood| -> Vec<i32> {
        (0..n).map(|i| nb.of(i).map(&value).sum()).collect()
    };
    (sum(&topo.n1), sum(&topo.n2))
}

/// F1, F2: counts of solid cells in each neighbor layer.
pub fn solid_sums(phi: &BinaryField, grid: &Grid) -> Result<(Vec<i32>, Vec<i32>)> {
    phi.check_grid(grid, "solid")?;
    Ok(layer_sums(&Topology::new(grid), |j| phi.value(j), grid.len()))
}

/// S1, S2: spin sums over each neighbor layer.
pub fn ink_sums(sigma: &BinaryField, grid: &Grid) -> Result<(Vec<i32>, Vec<i32>)> {
    sigma.check_grid(grid, "ink")?;
    Ok(layer_sums(&Topology::new(grid), |j| sigma.spin(j), grid.len()))
}

impl SumCache {
    pub fn new(topo: &Topology, phi: &BinaryField, sigma: &BinaryField) -> Self {
        let n = phi.len();
        let (f1, f2) = layer_sums(topo, |j| phi.value(j), n);
        let (s1, s2) = layer_sums(topo, |j| sigma.spin(j), n);
        Self {
            f1,
            f2,
            s1,
            s2,
            ink: sigma.count_ones(),
        }
    }

    /// Record that cell `i` now holds `value`; only the ink sums change.
    pub fn apply_flip(&mut self, topo: &Topology, i: usize, value: bool) {
        let d = if value { 2 } else { -2 };
        for j in topo.n1.of(i) {
            self.s1[j] += d;
        }
        for j in topo.n2.of(i) {
            self.s2[j] += d;
        }
        if value {
            self.ink += 1;
        } else {
            self.ink -= 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_g: f64,
    pub e_c: f64,
    pub e_a: f64,
    pub e_v: f64,
    pub e_t: f64,
    pub v_fluid: usize,
}

impl EnergyBreakdown {
    /// Interaction energy without the volume term.
    pub fn interaction(&self) -> f64 {
        self.e_g + self.e_c + self.e_a
    }
}

/// Term-by-term energy from cached neighbor sums.
pub fn energy_from_cache(
    sigma: &BinaryField,
    phi: &BinaryField,
    cache: &SumCache,
    params: &EnergyParams,
    grid: &Grid,
) -> EnergyBreakdown {
    let (mut e_g, mut e_c, mut e_a) = (0.0, 0.0, 0.0);
    for i in 0..grid.len() {
        let s = sigma.spin(i) as f64;
        e_g += params.gg * s * grid.z_of(i);
        e_c -= s * (params.c1 * cache.s1[i] as f64 + params.c2 * cache.s2[i] as f64);
        e_a -= s
            * (params.a0 * phi.value(i) as f64
                + params.a1 * cache.f1[i] as f64
                + params.a2 * cache.f2[i] as f64);
    }
    let n = sigma.count_ones();
    let e_v = params.volume_energy(n);
    EnergyBreakdown {
        e_g,
        e_c,
        e_a,
        e_v,
        e_t: e_g + e_c + e_a + e_v,
        v_fluid: n,
    }
}

pub fn energy_direct_with(
    topo: &Topology,
    sigma: &BinaryField,
    phi: &BinaryField,
    params: &EnergyParams,
    grid: &Grid,
) -> Result<EnergyBreakdown> {
    sigma.check_grid(grid, "ink")?;
    phi.check_grid(grid, "solid")?;
    params.check_grid(grid)?;
    let cache = SumCache::new(topo, phi, sigma);
    Ok(energy_from_cache(sigma, phi, &cache, params, grid))
}

pub fn energy_direct(
    sigma: &BinaryField,
    phi: &BinaryField,
    params: &EnergyParams,
    grid: &Grid,
) -> Result<EnergyBreakdown> {
    energy_direct_with(&Topology::new(grid), sigma, phi, params, grid)
}

/// Energy in 0/1 variables:
///
/// ```text
/// E = Σ D1_i σ_i + Σ_{(i,j)∈N1} V1 σ_i σ_j + Σ_{(i,j)∈N2} V2 σ_i σ_j + V3 (n² − n)
/// ```
///
/// with pairs directed (every unordered pair appears twice) and `n = Σσ`.
/// `direct − pairwise == constant_offset` for every σ.
#[derive(Debug, Clone)]
pub struct PairwiseModel {
    grid: Grid,
    topo: Arc<Topology>,
    pub d1: Vec<f64>,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub lambda: f64,
    pub constant_offset: f64,
}

impl PairwiseModel {
    pub fn build(
        topo: Arc<Topology>,
        phi: &BinaryField,
        params: &EnergyParams,
        grid: &Grid,
    ) -> Result<Self> {
        phi.check_grid(grid, "solid")?;
        params.validate()?;
        params.check_grid(grid)?;
        let n = grid.len();
        let (f1, f2) = layer_sums(&topo, |j| phi.value(j), n);
        let v0 = params.v0 as f64;
        let vf = params.v_fluid0 as f64;
        let volume_linear = params.lambda * (1.0 - 2.0 * vf) / v0;

        let mut d1 = Vec::with_capacity(n);
        let mut field_sum = 0.0;
        for i in 0..n {
            let field = params.gg * grid.z_of(i)
                - params.a0 * phi.value(i) as f64
                - params.a1 * f1[i] as f64
                - params.a2 * f2[i] as f64;
            field_sum += field;
            let coupling = params.c1 * topo.n1.count(i) as f64 + params.c2 * topo.n2.count(i) as f64;
            d1.push(2.0 * (field + 2.0 * coupling) + volume_linear);
        }
        let constant_offset = -field_sum
            - params.c1 * topo.n1.pair_count() as f64
            - params.c2 * topo.n2.pair_count() as f64
            + params.lambda * vf * vf / v0;

        Ok(Self {
            grid: *grid,
            topo,
            d1,
            v1: -4.0 * params.c1,
            v2: -4.0 * params.c2,
            v3: params.lambda / v0,
            lambda: params.lambda,
            constant_offset,
        })
    }

    /// Model with explicit coefficients. No relation to an [`EnergyParams`]
    /// set is implied, so `lambda` is inferred as `v3 * V0`.
    pub fn from_parts(grid: &Grid, d1: Vec<f64>, v1: f64, v2: f64, v3: f64) -> Result<Self> {
        if d1.len() != grid.len() {
            return invalid(format!(
                "{} unary coefficients for {} cells",
                d1.len(),
                grid.len()
            ));
        }
        Ok(Self {
            grid: *grid,
            topo: Arc::new(Topology::new(grid)),
            d1,
            v1,
            v2,
            v3,
            lambda: v3 * grid.len() as f64,
            constant_offset: 0.0,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn shared_topology(&self) -> Arc<Topology> {
        Arc::clone(&self.topo)
    }

    pub fn n1_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.v1;
        self.topo.n1.directed_pairs().map(move |(i, j)| (i, j, w))
    }

    pub fn n2_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.v2;
        self.topo.n2.directed_pairs().map(move |(i, j)| (i, j, w))
    }
}

pub fn pairwise_model(phi: &BinaryField, params: &EnergyParams, grid: &Grid) -> Result<PairwiseModel> {
    PairwiseModel::build(Arc::new(Topology::new(grid)), phi, params, grid)
}

pub fn energy_pairwise(sigma: &BinaryField, model: &PairwiseModel) -> Result<f64> {
    sigma.check_grid(&model.grid, "ink")?;
    let topo = &model.topo;
    let mut unary = 0.0;
    let mut k1 = 0usize;
    let mut k2 = 0usize;
    for i in sigma.iter_ones() {
        unary += model.d1[i];
        k1 += topo.n1.of(i).filter(|&j| sigma.get(j)).count();
        k2 += topo.n2.of(i).filter(|&j| sigma.get(j)).count();
    }
    let n = sigma.count_ones() as f64;
    Ok(unary + model.v1 * k1 as f64 + model.v2 * k2 as f64 + model.v3 * (n * n - n))
}

/// Change of the pairwise energy when cell `i` is flipped, from the cached
/// spin sums. The cache must describe `sigma`.
pub fn flip_delta(sigma: &BinaryField, i: usize, cache: &SumCache, model: &PairwiseModel) -> f64 {
    let topo = &model.topo;
    let ink_n1 = ((cache.s1[i] + topo.n1.count(i) as i32) / 2) as f64;
    let ink_n2 = ((cache.s2[i] + topo.n2.count(i) as i32) / 2) as f64;
    let n = cache.ink as f64;
    let local = model.d1[i] + 2.0 * model.v1 * ink_n1 + 2.0 * model.v2 * ink_n2;
    if sigma.get(i) {
        -(local + 2.0 * model.v3 * (n - 1.0))
    } else {
        local + 2.0 * model.v3 * n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &Grid, density: f64, rng: &mut ChaCha8Rng) -> BinaryField {
        let bits = (0..grid.len()).map(|_| rng.gen_bool(density)).collect();
        BinaryField::from_bits(grid, bits).unwrap()
    }

    fn chebyshev(g: &Grid, i: usize, j: usize) -> usize {
        let (a, b, c) = g.coords(i);
        let (x, y, z) = g.coords(j);
        a.abs_diff(x).max(b.abs_diff(y)).max(c.abs_diff(z))
    }

    /// Naive all-pairs evaluation, independent of the neighbor tables.
    fn oracle_energy(sigma: &BinaryField, phi: &BinaryField, p: &EnergyParams, g: &Grid) -> f64 {
        let n = g.len();
        let mut e = 0.0;
        for i in 0..n {
            let si = sigma.spin(i) as f64;
            let (mut s1, mut s2, mut f1, mut f2) = (0.0, 0.0, 0.0, 0.0);
            for j in 0..n {
                match chebyshev(g, i, j) {
                    1 => {
                        s1 += sigma.spin(j) as f64;
                        f1 += phi.value(j) as f64;
                    }
                    2 => {
                        s2 += sigma.spin(j) as f64;
                        f2 += phi.value(j) as f64;
                    }
                    _ => {}
                }
            }
            e += p.gg * si * g.z_of(i);
            e -= p.c1 * si * s1 + p.c2 * si * s2;
            e -= p.a0 * si * phi.value(i) as f64 + p.a1 * si * f1 + p.a2 * si * f2;
        }
        let total: f64 = (0..n).map(|i| sigma.spin(i) as f64 + 1.0).sum();
        let d = total - 2.0 * p.v_fluid0 as f64;
        e + p.lambda * d * d / (4.0 * p.v0 as f64)
    }

    #[test]
    fn default_params_values() {
        let g = Grid::new(4, 4, 10, 0, 1.0).unwrap();
        // Cell-centre convention puts the top layer at 9.5.
        let p = EnergyParams::defaults(&g, 3).unwrap();
        assert_eq!(p.c1, 1.0);
        assert_eq!(p.c2, 0.125);
        assert_eq!(p.gg, 1.0 / 9.5);
        assert_eq!(p.a0, 0.5);
        assert!((p.a1 - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.a2 - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(p.lambda, 100.0);
        assert_eq!(p.c2 / p.c1, 1.0 / 8.0);
        assert_eq!(p.v0, 160);

        let h = Grid::new(9, 2, 10, 0, 1.0).unwrap();
        let q = EnergyParams::defaults(&h, 3).unwrap();
        assert_eq!((p.gg, p.a0, p.a1, p.a2, p.c2), (q.gg, q.a0, q.a1, q.a2, q.c2));
    }

    #[test]
    fn gravity_constant_for_z_max_ten() {
        // Ten layers whose top centre lands on z = 10.
        let g = Grid::new(2, 2, 10, 0, 20.0 / 19.0).unwrap();
        assert!((g.z_max() - 10.0).abs() < 1e-12);
        let p = EnergyParams::defaults(&g, 0).unwrap();
        assert!((p.gg - 0.1).abs() < 1e-12);
    }

    #[test]
    fn defaults_reject_volume_above_grid() {
        let g = Grid::new(2, 2, 1, 0, 1.0).unwrap();
        assert!(EnergyParams::defaults(&g, 5).is_err());
        assert!(EnergyParams::defaults(&g, 4).is_ok());
    }

    #[test]
    fn solid_sums_examples() {
        let g = Grid::new(7, 7, 7, 0, 1.0).unwrap();
        let (f1, f2) = solid_sums(&BinaryField::zeros(&g), &g).unwrap();
        assert!(f1.iter().chain(&f2).all(|&v| v == 0));

        let mut phi = BinaryField::zeros(&g);
        phi.set(g.index(3, 3, 3), true);
        let (f1, f2) = solid_sums(&phi, &g).unwrap();
        assert_eq!(f1.iter().filter(|&&v| v == 1).count(), 26);
        assert_eq!(f2.iter().filter(|&&v| v == 1).count(), 98);

        let (f1, f2) = solid_sums(&BinaryField::ones(&g), &g).unwrap();
        assert_eq!(f1[g.index(3, 3, 3)], 26);
        assert_eq!(f2[g.index(3, 3, 3)], 98);
    }

    #[test]
    fn ink_sums_examples() {
        let g = Grid::new(7, 7, 7, 0, 1.0).unwrap();
        let c = g.index(3, 3, 3);
        let (s1, s2) = ink_sums(&BinaryField::zeros(&g), &g).unwrap();
        assert_eq!((s1[c], s2[c]), (-26, -98));
        let (s1, s2) = ink_sums(&BinaryField::ones(&g), &g).unwrap();
        assert_eq!((s1[c], s2[c]), (26, 98));

        let mut sigma = BinaryField::zeros(&g);
        for j in crate::lattice::n1_neighbors(&g, c).unwrap().into_iter().take(13) {
            sigma.set(j, true);
        }
        let (s1, _) = ink_sums(&sigma, &g).unwrap();
        assert_eq!(s1[c], 0);
    }

    #[test]
    fn volume_energy_examples() {
        let g = Grid::new(4, 4, 4, 0, 1.0).unwrap();
        let mut p = EnergyParams::defaults(&g, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = random_field(&g, 0.3, &mut rng);
        let e = energy_direct(&BinaryField::zeros(&g), &phi, &p, &g).unwrap();
        assert_eq!(e.e_v, 39.0625);

        let mut sigma = BinaryField::zeros(&g);
        for i in 0..5 {
            sigma.set(i * 7, true);
        }
        let e = energy_direct(&sigma, &phi, &p, &g).unwrap();
        assert_eq!(e.e_v, 0.0);
        assert_eq!(e.v_fluid, 5);

        p.v_fluid0 = 64;
        assert_eq!(p.volume_energy(64), 0.0);
    }

    #[test]
    fn direct_energy_matches_naive_oracle() {
        let g = Grid::new(3, 3, 3, 0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let phi = random_field(&g, 0.3, &mut rng);
            let sigma = random_field(&g, 0.5, &mut rng);
            let p = EnergyParams::defaults(&g, rng.gen_range(0..=27)).unwrap();
            let e = energy_direct(&sigma, &phi, &p, &g).unwrap();
            let want = oracle_energy(&sigma, &phi, &p, &g);
            assert!((e.e_t - want).abs() <= 1e-9 * want.abs().max(1.0));
            let sum = e.e_g + e.e_c + e.e_a + e.e_v;
            assert!((e.e_t - sum).abs() <= 1e-9 * sum.abs().max(1.0));
        }
    }

    #[test]
    fn direct_energy_rejects_mismatched_grids() {
        let g = Grid::new(3, 3, 3, 0, 1.0).unwrap();
        let h = Grid::new(3, 3, 2, 1, 1.0).unwrap();
        let p = EnergyParams::defaults(&g, 0).unwrap();
        assert!(energy_direct(&BinaryField::zeros(&h), &BinaryField::zeros(&g), &p, &g).is_err());
        assert!(energy_direct(&BinaryField::zeros(&g), &BinaryField::zeros(&h), &p, &g).is_err());
        let q = EnergyParams::defaults(&Grid::new(3, 3, 4, 0, 1.0).unwrap(), 0).unwrap();
        assert!(energy_direct(&BinaryField::zeros(&g), &BinaryField::zeros(&g), &q, &g).is_err());
    }

    #[test]
    fn interior_unary_constant() {
        // Interior cell of a 5-cube at z = 0 needs a grid whose centre layer
        // sits at zero; use gg = 0 instead, which removes the same term.
        let g = Grid::new(5, 5, 5, 0, 1.0).unwrap();
        let mut p = EnergyParams::defaults(&g, 0).unwrap();
        p.lambda = 0.0;
        p.gg = 0.0;
        let m = pairwise_model(&BinaryField::zeros(&g), &p, &g).unwrap();
        assert_eq!(m.d1[g.index(2, 2, 2)], 153.0);
        assert!(m.n1_pairs().all(|(_, _, w)| w == -4.0));
        assert!(m.n2_pairs().all(|(_, _, w)| w == -0.5));
    }

    #[test]
    fn zero_lambda_removes_volume_term_from_unary() {
        let g = Grid::new(4, 4, 3, 1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = random_field(&g, 0.3, &mut rng);
        let mut p = EnergyParams::defaults(&g, 10).unwrap();
        let with = pairwise_model(&phi, &p, &g).unwrap();
        p.lambda = 0.0;
        let without = pairwise_model(&phi, &p, &g).unwrap();
        let shift = 100.0 * (1.0 - 20.0) / g.len() as f64;
        for (a, b) in with.d1.iter().zip(&without.d1) {
            assert!((a - b - shift).abs() < 1e-12);
        }
        assert_eq!(without.v3, 0.0);
    }

    #[test]
    fn pairwise_examples() {
        let g = Grid::new(3, 3, 3, 0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phi = random_field(&g, 0.3, &mut rng);
        let p = EnergyParams::defaults(&g, 6).unwrap();
        let m = pairwise_model(&phi, &p, &g).unwrap();
        assert_eq!(energy_pairwise(&BinaryField::zeros(&g), &m).unwrap(), 0.0);

        let e0 = energy_direct(&BinaryField::zeros(&g), &phi, &p, &g).unwrap();
        assert!((e0.e_t - m.constant_offset).abs() < 1e-9 * e0.e_t.abs().max(1.0));

        for _ in 0..50 {
            let sigma = random_field(&g, 0.5, &mut rng);
            let d = energy_direct(&sigma, &phi, &p, &g).unwrap().e_t;
            let w = energy_pairwise(&sigma, &m).unwrap();
            assert!((d - w - m.constant_offset).abs() <= 1e-9 * d.abs().max(1.0));
        }
    }

    #[test]
    fn two_adjacent_ink_cells() {
        let g = Grid::new(4, 4, 4, 0, 1.0).unwrap();
        let mut p = EnergyParams::defaults(&g, 0).unwrap();
        p.c2 = 0.0;
        p.lambda = 0.0;
        let m = pairwise_model(&BinaryField::zeros(&g), &p, &g).unwrap();
        let (i, j) = (g.index(1, 1, 1), g.index(2, 1, 1));
        let mut sigma = BinaryField::zeros(&g);
        sigma.set(i, true);
        sigma.set(j, true);
        let e = energy_pairwise(&sigma, &m).unwrap();
        assert_eq!(e, m.d1[i] + m.d1[j] - 8.0);
    }

    #[test]
    fn flip_delta_examples() {
        let g = Grid::new(1, 1, 1, 0, 1.0).unwrap();
        let mut p = EnergyParams::defaults(&g, 0).unwrap();
        p.lambda = 0.0;
        let phi = BinaryField::zeros(&g);
        let m = pairwise_model(&phi, &p, &g).unwrap();
        let topo = Topology::new(&g);
        let mut sigma = BinaryField::zeros(&g);
        let mut cache = SumCache::new(&topo, &phi, &sigma);
        let up = flip_delta(&sigma, 0, &cache, &m);
        assert_eq!(up, m.d1[0]);
        sigma.flip(0);
        cache.apply_flip(&topo, 0, true);
        let down = flip_delta(&sigma, 0, &cache, &m);
        assert_eq!(down, -m.d1[0]);
        assert_eq!(up + down, 0.0);
    }

    #[test]
    fn flip_delta_matches_reevaluation() {
        let g = Grid::new(4, 3, 3, 1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let phi = random_field(&g, 0.3, &mut rng);
        let p = EnergyParams::defaults(&g, 12).unwrap();
        let m = pairwise_model(&phi, &p, &g).unwrap();
        let topo = Topology::new(&g);
        let mut sigma = random_field(&g, 0.4, &mut rng);
        let mut cache = SumCache::new(&topo, &phi, &sigma);
        for _ in 0..200 {
            let i = rng.gen_range(0..g.len());
            let before = energy_pairwise(&sigma, &m).unwrap();
            let delta = flip_delta(&sigma, i, &cache, &m);
            sigma.flip(i);
            cache.apply_flip(&topo, i, sigma.get(i));
            let after = energy_pairwise(&sigma, &m).unwrap();
            assert!((after - before - delta).abs() <= 1e-9 * before.abs().max(1.0));
        }
        assert_eq!(cache, SumCache::new(&topo, &phi, &sigma));
    }

    #[test]
    fn from_parts_checks_length() {
        let g = Grid::new(2, 1, 1, 0, 1.0).unwrap();
        assert!(PairwiseModel::from_parts(&g, vec![1.0], -4.0, 0.0, 0.0).is_err());
        let m = PairwiseModel::from_parts(&g, vec![1.0, -1.0], -4.0, 0.0, 0.0).unwrap();
        assert_eq!(m.n1_pairs().count(), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::{any, prop_assert, prop_assert_eq, prop_oneof, proptest, Just, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn direct_minus_pairwise_is_constant(
                seed in any::<u64>(),
                dims in (1usize..4, 1usize..4, 1usize..4, 0usize..2),
                lambda in prop_oneof![Just(0.0), Just(100.0)],
                flip_gravity in any::<bool>(),
            ) {
                let g = Grid::new(dims.0, dims.1, dims.2, dims.3, 1.0).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let phi = random_field(&g, 0.3, &mut rng);
                let mut p = EnergyParams::defaults(&g, rng.gen_range(0..=g.len())).unwrap();
                p.lambda = lambda;
                if flip_gravity { p.gg = -p.gg; }
                let m = pairwise_model(&phi, &p, &g).unwrap();
                for _ in 0..10 {
                    let density: f64 = rng.gen();
                    let sigma = random_field(&g, density, &mut rng);
                    let d = energy_direct(&sigma, &phi, &p, &g).unwrap().e_t;
                    let w = energy_pairwise(&sigma, &m).unwrap();
                    prop_assert!((d - w - m.constant_offset).abs() <= 1e-9 * d.abs().max(1.0));
                }
            }

            #[test]
            fn volume_energy_nonnegative(n in 0usize..500, v in 0usize..500, lambda in 0.0f64..1e3) {
                let g = Grid::new(10, 10, 5, 0, 1.0).unwrap();
                let mut p = EnergyParams::defaults(&g, v).unwrap();
                p.lambda = lambda;
                let e = p.volume_energy(n);
                prop_assert!(e >= 0.0);
                if lambda > 0.0 {
                    prop_assert_eq!(e == 0.0, n == v);
                }
            }

            #[test]
            fn couplings_are_submodular(c1 in 1e-3f64..10.0, c2 in 0.0f64..10.0) {
                let g = Grid::new(3, 3, 3, 0, 1.0).unwrap();
                let mut p = EnergyParams::defaults(&g, 0).unwrap();
                p.c1 = c1;
                p.c2 = c2;
                let m = pairwise_model(&BinaryField::zeros(&g), &p, &g).unwrap();
                prop_assert!(m.v1 <= 0.0 && m.v2 <= 0.0 && m.v3 >= 0.0);
            }
        }
    }
}
