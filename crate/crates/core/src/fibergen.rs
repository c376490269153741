//! Random fiber structures built from chains of rectangular blocks, deposited
//! one fiber at a time onto the surface z = 0, and their voxelization into the
//! solid field.
//!
//! Each block is an oriented box: rotated in the x-y plane by its heading but
//! kept level in z. A tilted block is represented by translating the box in z
//! (stair-step bending); the tilt is carried by the block's guide line, which
//! runs along the centre of the bottom face from `start` to `end`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{BinaryField, Grid};

/// Identifier of the random generator recorded in run manifests.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng/rand_chacha-0.3/seed_from_u64";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberParams {
    pub fiber_count: usize,
    pub blocks_per_fiber: usize,
    pub block_length: f64,
    pub block_width: f64,
    pub block_height: f64,
    /// Largest in-plane rotation between consecutive blocks, degrees.
    pub max_turn_deg: f64,
    /// Largest out-of-plane tilt of a block when piling, degrees.
    pub max_bend_deg: f64,
    /// Lateral extent of the deposition surface; fiber starts are drawn
    /// uniformly over `[0, extent_x) x [0, extent_y)`.
    pub extent_x: f64,
    pub extent_y: f64,
    pub seed: u64,
}

impl FiberParams {
    /// Parameters sized to cover the lateral extent of `grid`.
    pub fn for_grid(grid: &Grid, fiber_count: usize, seed: u64) -> Self {
        Self {
            fiber_count,
            blocks_per_fiber: 10,
            block_length: 3.0 * grid.cell_size,
            block_width: grid.cell_size,
            block_height: grid.cell_size,
            max_turn_deg: 15.0,
            max_bend_deg: 30.0,
            extent_x: grid.nx as f64 * grid.cell_size,
            extent_y: grid.ny as f64 * grid.cell_size,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks_per_fiber == 0 {
            return invalid("blocks_per_fiber must be at least 1");
        }
        for (name, v) in [
            ("block_length", self.block_length),
            ("block_width", self.block_width),
            ("block_height", self.block_height),
            ("extent_x", self.extent_x),
            ("extent_y", self.extent_y),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("max_turn_deg", self.max_turn_deg),
            ("max_bend_deg", self.max_bend_deg),
        ] {
            if !(0.0..=90.0).contains(&v) {
                return invalid(format!("{name} must lie in [0, 90], got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub start: [f64; 3],
    pub end: [f64; 3],
    /// In-plane heading, degrees.
    pub angle_deg: f64,
    /// Slope of the guide line, degrees.
    pub tilt_deg: f64,
    /// Length, width, height.
    pub dims: [f64; 3],
}

impl Block {
    /// Block whose guide line starts at `start`, heads along `angle_deg` in
    /// the plane and rises by `dz` over its length.
    pub fn new(start: [f64; 3], angle_deg: f64, dz: f64, dims: [f64; 3]) -> Self {
        let (s, c) = angle_deg.to_radians().sin_cos();
        let end = [
            start[0] + dims[0] * c,
            start[1] + dims[0] * s,
            start[2] + dz,
        ];
        Self {
            start,
            end,
            angle_deg,
            tilt_deg: (dz / dims[0]).atan().to_degrees(),
            dims,
        }
    }

    /// Bottom of the stair-stepped box.
    pub fn base(&self) -> f64 {
        self.start[2].max(self.end[2])
    }

    pub fn top(&self) -> f64 {
        self.base() + self.dims[2]
    }

    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.start[0] + self.end[0]),
            0.5 * (self.start[1] + self.end[1]),
            self.base() + 0.5 * self.dims[2],
        ]
    }

    fn footprint(&self) -> Footprint {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let ctr = self.center();
        Footprint {
            center: [ctr[0], ctr[1]],
            u: [c, s],
            half: [0.5 * self.dims[0], 0.5 * self.dims[1]],
        }
    }

    /// Centre-in-box test, half-open on every axis.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let base = self.base();
        if p[2] < base || p[2] >= base + self.dims[2] {
            return false;
        }
        self.footprint().contains([p[0], p[1]])
    }
}

#[derive(Debug, Clone, Copy)]
struct Footprint {
    center: [f64; 2],
    u: [f64; 2],
    half: [f64; 2],
}

impl Footprint {
    fn v(&self) -> [f64; 2] {
        [-self.u[1], self.u[0]]
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let a = d[0] * self.u[0] + d[1] * self.u[1];
        let b = d[0] * self.v()[0] + d[1] * self.v()[1];
        -self.half[0] <= a && a < self.half[0] && -self.half[1] <= b && b < self.half[1]
    }

    fn radius_along(&self, axis: [f64; 2]) -> f64 {
        let v = self.v();
        self.half[0] * (self.u[0] * axis[0] + self.u[1] * axis[1]).abs()
            + self.half[1] * (v[0] * axis[0] + v[1] * axis[1]).abs()
    }

    /// Separating-axis test; rectangles that only touch do not overlap.
    fn overlaps(&self, other: &Footprint) -> bool {
        const EPS: f64 = 1e-9;
        let d = [
            other.center[0] - self.center[0],
            other.center[1] - self.center[1],
        ];
        [self.u, self.v(), other.u, other.v()].iter().all(|&axis| {
            let dist = (d[0] * axis[0] + d[1] * axis[1]).abs();
            dist + EPS < self.radius_along(axis) + other.radius_along(axis)
        })
    }

    fn aabb(&self) -> [f64; 4] {
        let rx = self.radius_along([1.0, 0.0]);
        let ry = self.radius_along([0.0, 1.0]);
        [
            self.center[0] - rx,
            self.center[1] - ry,
            self.center[0] + rx,
            self.center[1] + ry,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fiber {
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberStructure {
    pub fibers: Vec<Fiber>,
    pub params: FiberParams,
}

impl FiberStructure {
    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.fibers.iter().flat_map(|f| f.blocks.iter())
    }
}

/// Uniform x-y bins over deposited blocks for support queries.
struct Deposit {
    bin: f64,
    bins: HashMap<(i64, i64), Vec<usize>>,
    blocks: Vec<(Footprint, f64)>,
}

impl Deposit {
    fn new(bin: f64) -> Self {
        Self {
            bin,
            bins: HashMap::new(),
            blocks: Vec::new(),
        }
    }

    fn bin_range(&self, fp: &Footprint) -> (i64, i64, i64, i64) {
        let [x0, y0, x1, y1] = fp.aabb();
        (
            (x0 / self.bin).floor() as i64,
            (y0 / self.bin).floor() as i64,
            (x1 / self.bin).floor() as i64,
            (y1 / self.bin).floor() as i64,
        )
    }

    /// Highest top among deposited blocks under `fp`, ignoring block `skip`.
    fn support(&self, fp: &Footprint, skip: Option<usize>) -> f64 {
        let (bx0, by0, bx1, by1) = self.bin_range(fp);
        let mut z: f64 = 0.0;
        for bx in bx0..=bx1 {
            for by in by0..=by1 {
                let Some(ids) = self.bins.get(&(bx, by)) else {
                    continue;
                };
                for &id in ids {
                    if Some(id) == skip {
                        continue;
                    }
                    let (other, top) = &self.blocks[id];
                    if *top > z && fp.overlaps(other) {
                        z = *top;
                    }
                }
            }
        }
        z
    }

    fn push(&mut self, fp: Footprint, top: f64) -> usize {
        let id = self.blocks.len();
        let (bx0, by0, bx1, by1) = self.bin_range(&fp);
        for bx in bx0..=bx1 {
            for by in by0..=by1 {
                self.bins.entry((bx, by)).or_default().push(id);
            }
        }
        self.blocks.push((fp, top));
        id
    }
}

/// Deposit `params.fiber_count` fibers one by one. Each block drops until it
/// rests on the surface or on earlier material; the rise or fall relative to
/// the previous block is limited by `max_bend_deg`.
pub fn generate(params: &FiberParams) -> Result<FiberStructure> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let dims = [params.block_length, params.block_width, params.block_height];
    let max_rise = if params.max_bend_deg >= 90.0 {
        f64::INFINITY
    } else {
        params.block_length * params.max_bend_deg.to_radians().tan()
    };
    let mut deposit = Deposit::new(params.block_length.max(params.block_width));
    let mut fibers = Vec::with_capacity(params.fiber_count);

    for _ in 0..params.fiber_count {
        let x = rng.gen::<f64>() * params.extent_x;
        let y = rng.gen::<f64>() * params.extent_y;
        let mut heading = rng.gen::<f64>() * 360.0;
        let mut blocks: Vec<Block> = Vec::with_capacity(params.blocks_per_fiber);
        let mut prev_id = None;

        for k in 0..params.blocks_per_fiber {
            if k > 0 && params.max_turn_deg > 0.0 {
                heading += rng.gen_range(-params.max_turn_deg..=params.max_turn_deg);
            }
            let start = match blocks.last() {
                Some(b) => b.end,
                None => [x, y, 0.0],
            };
            let probe = Block::new([start[0], start[1], 0.0], heading, 0.0, dims);
            let rest = deposit.support(&probe.footprint(), prev_id);
            let block = if k == 0 {
                Block::new([start[0], start[1], rest], heading, 0.0, dims)
            } else {
                let dz = (rest - start[2]).clamp(-max_rise, max_rise);
                Block::new(start, heading, dz, dims)
            };
            prev_id = Some(deposit.push(block.footprint(), block.top()));
            blocks.push(block);
        }
        fibers.push(Fiber { blocks });
    }

    Ok(FiberStructure {
        fibers,
        params: params.clone(),
    })
}

fn mark_block(block: &Block, grid: &Grid, phi: &mut BinaryField) {
    let cs = grid.cell_size;
    let [x0, y0, x1, y1] = block.footprint().aabb();
    let base = block.base();
    let top = block.top();
    let to_cell = |v: f64, n: usize| -> usize { ((v / cs - 0.5).max(0.0) as usize).min(n) };
    let ix0 = to_cell(x0, grid.nx);
    let iy0 = to_cell(y0, grid.ny);
    let ix1 = (((x1 / cs).ceil().max(0.0)) as usize).min(grid.nx);
    let iy1 = (((y1 / cs).ceil().max(0.0)) as usize).min(grid.ny);
    for iz in grid.nz_reservoir..grid.nz() {
        let z = grid.z_of_layer(iz);
        if z < base || z >= top {
            continue;
        }
        for iy in iy0..iy1 {
            for ix in ix0..ix1 {
                let i = grid.index(ix, iy, iz);
                if !phi.get(i) && block.contains(grid.center(i)) {
                    phi.set(i, true);
                }
            }
        }
    }
}

/// Solid field: a cell is solid iff its centre lies inside some block.
/// Reservoir layers are never solid; material outside the grid is clipped.
pub fn voxelize(structure: &FiberStructure, grid: &Grid) -> BinaryField {
    let mut phi = BinaryField::zeros(grid);
    for block in structure.blocks() {
        mark_block(block, grid, &mut phi);
    }
    phi
}

/// Void fraction of the paper layers.
pub fn porosity(phi: &BinaryField, grid: &Grid) -> Result<f64> {
    phi.check_grid(grid, "solid")?;
    let cells = grid.paper_cells();
    let total = cells.len();
    let solid = cells.filter(|&i| phi.get(i)).count();
    Ok(1.0 - solid as f64 / total as f64)
}
