//! Discretized computational space: paper layers stacked on top of optional
//! reservoir layers, with the 26-cell first-layer and 98-cell second-layer
//! neighborhoods.
//!
//! Cells are indexed x-fastest, then y, then z ascending. Layer `iz` has its
//! cell centre at `z = (iz - nz_reservoir + 0.5) * cell_size`, so reservoir
//! layers sit at negative z and the first paper layer at `cell_size / 2`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nz_paper: usize,
    pub nz_reservoir: usize,
    pub cell_size: f64,
}

impl Grid {
    pub fn new(
        nx: usize,
        ny: usize,
        nz_paper: usize,
        nz_reservoir: usize,
        cell_size: f64,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 || nz_paper == 0 {
            return invalid(format!(
                "grid dimensions must be positive, got {nx}x{ny}x{nz_paper}"
            ));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return invalid(format!("cell_size must be positive, got {cell_size}"));
        }
        Ok(Self {
            nx,
            ny,
            nz_paper,
            nz_reservoir,
            cell_size,
        })
    }

    /// Number of layers, reservoir included.
    #[inline]
    pub fn nz(&self) -> usize {
        self.nz_paper + self.nz_reservoir
    }

    /// Total cell count V0.
    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn layer_len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.nx * (iy + self.ny * iz)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        let ix = i % self.nx;
        let rest = i / self.nx;
        (ix, rest % self.ny, rest / self.ny)
    }

    #[inline]
    pub fn layer_of(&self, i: usize) -> usize {
        i / self.layer_len()
    }

    #[inline]
    pub fn z_of_layer(&self, iz: usize) -> f64 {
        (iz as f64 - self.nz_reservoir as f64 + 0.5) * self.cell_size
    }

    #[inline]
    pub fn z_of(&self, i: usize) -> f64 {
        self.z_of_layer(self.layer_of(i))
    }

    /// Cell-centre position.
    pub fn center(&self, i: usize) -> [f64; 3] {
        let (ix, iy, iz) = self.coords(i);
        [
            (ix as f64 + 0.5) * self.cell_size,
            (iy as f64 + 0.5) * self.cell_size,
            self.z_of_layer(iz),
        ]
    }

    pub fn z_max(&self) -> f64 {
        self.z_of_layer(self.nz() - 1)
    }

    #[inline]
    pub fn is_reservoir_layer(&self, iz: usize) -> bool {
        iz < self.nz_reservoir
    }

    #[inline]
    pub fn is_reservoir(&self, i: usize) -> bool {
        self.is_reservoir_layer(self.layer_of(i))
    }

    /// Cells with z >= 0.
    pub fn paper_cells(&self) -> std::ops::Range<usize> {
        self.nz_reservoir * self.layer_len()..self.len()
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return invalid(format!("cell index {i} out of range 0..{}", self.len()));
        }
        Ok(())
    }

    fn shell(&self, i: usize, radius: isize, out: &mut Vec<usize>) {
        let (ix, iy, iz) = self.coords(i);
        let (ix, iy, iz) = (ix as isize, iy as isize, iz as isize);
        let (nx, ny, nz) = (self.nx as isize, self.ny as isize, self.nz() as isize);
        // dz outer, dx inner keeps the output ascending.
        for dz in -radius..=radius {
            let z = iz + dz;
            if z < 0 || z >= nz {
                continue;
            }
            for dy in -radius..=radius {
                let y = iy + dy;
                if y < 0 || y >= ny {
                    continue;
                }
                for dx in -radius..=radius {
                    let x = ix + dx;
                    if x < 0 || x >= nx {
                        continue;
                    }
                    if dx.abs().max(dy.abs()).max(dz.abs()) != radius {
                        continue;
                    }
                    out.push(self.index(x as usize, y as usize, z as usize));
                }
            }
        }
    }
}

/// Cells at Chebyshev distance exactly 1, clipped at the box, ascending.
pub fn n1_neighbors(grid: &Grid, i: usize) -> Result<Vec<usize>> {
    grid.check_index(i)?;
    let mut out = Vec::with_capacity(26);
    grid.shell(i, 1, &mut out);
    Ok(out)
}

/// Cells at Chebyshev distance exactly 2, clipped at the box, ascending.
pub fn n2_neighbors(grid: &Grid, i: usize) -> Result<Vec<usize>> {
    grid.check_index(i)?;
    let mut out = Vec::with_capacity(98);
    grid.shell(i, 2, &mut out);
    Ok(out)
}

/// Precomputed adjacency for one neighbor layer in compressed-row form.
/// Row `i` lists every `j` with `(i, j)` a directed neighbor pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Neighborhood {
    fn build(grid: &Grid, radius: isize) -> Self {
        let n = grid.len();
        assert!(n <= u32::MAX as usize, "grid too large for u32 cell ids");
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut buf = Vec::new();
        offsets.push(0);
        for i in 0..n {
            buf.clear();
            grid.shell(i, radius, &mut buf);
            targets.extend(buf.iter().map(|&j| j as u32));
            offsets.push(targets.len());
        }
        Self { offsets, targets }
    }

    pub fn first_layer(grid: &Grid) -> Self {
        Self::build(grid, 1)
    }

    pub fn second_layer(grid: &Grid) -> Self {
        Self::build(grid, 2)
    }

    #[inline]
    pub fn of(&self, i: usize) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.targets[self.offsets[i]..self.offsets[i + 1]]
            .iter()
            .map(|&j| j as usize)
    }

    #[inline]
    pub fn count(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Number of directed pairs.
    pub fn pair_count(&self) -> usize {
        self.targets.len()
    }

    pub fn cells(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn directed_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.cells()).flat_map(move |i| self.of(i).map(move |j| (i, j)))
    }
}

/// Both neighbor layers of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub n1: Neighborhood,
    pub n2: Neighborhood,
}

impl Topology {
    pub fn new(grid: &Grid) -> Self {
        Self {
            n1: Neighborhood::first_layer(grid),
            n2: Neighborhood::second_layer(grid),
        }
    }
}

/// One bit per cell of a grid. Used for both the fiber field and the ink field.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryField {
    grid: GridKey,
    bits: Vec<bool>,
}

// Grid holds an f64, so equality/hash on fields goes through the bit pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct GridKey {
    nx: usize,
    ny: usize,
    nz_paper: usize,
    nz_reservoir: usize,
    cell_size_bits: u64,
}

impl From<&Grid> for GridKey {
    fn from(g: &Grid) -> Self {
        Self {
            nx: g.nx,
            ny: g.ny,
            nz_paper: g.nz_paper,
            nz_reservoir: g.nz_reservoir,
            cell_size_bits: g.cell_size.to_bits(),
        }
    }
}

impl BinaryField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: grid.into(),
            bits: vec![false; grid.len()],
        }
    }

    pub fn ones(grid: &Grid) -> Self {
        Self {
            grid: grid.into(),
            bits: vec![true; grid.len()],
        }
    }

    pub fn from_bits(grid: &Grid, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.len() {
            return invalid(format!(
                "field has {} cells, grid has {}",
                bits.len(),
                grid.len()
            ));
        }
        Ok(Self {
            grid: grid.into(),
            bits,
        })
    }

    pub fn grid(&self) -> Grid {
        Grid {
            nx: self.grid.nx,
            ny: self.grid.ny,
            nz_paper: self.grid.nz_paper,
            nz_reservoir: self.grid.nz_reservoir,
            cell_size: f64::from_bits(self.grid.cell_size_bits),
        }
    }

    pub fn is_on(&self, grid: &Grid) -> bool {
        self.grid == GridKey::from(grid)
    }

    pub fn check_grid(&self, grid: &Grid, what: &str) -> Result<()> {
        if !self.is_on(grid) {
            return invalid(format!("{what} field is defined on a different grid"));
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        self.bits[i] = v;
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
    }

    #[inline]
    pub fn value(&self, i: usize) -> i32 {
        self.bits[i] as i32
    }

    /// The ±1 spin form, 2σ − 1.
    #[inline]
    pub fn spin(&self, i: usize) -> i32 {
        2 * self.bits[i] as i32 - 1
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }
}
