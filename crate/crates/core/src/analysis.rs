//! Post-solve diagnostics.

use serde::{Deserialize, Serialize};

use crate::energy::EnergyParams;
use crate::error::Result;
use crate::lattice::{BinaryField, Grid};

pub fn volume_error(sigma: &BinaryField, params: &EnergyParams) -> usize {
    sigma.count_ones().abs_diff(params.v_fluid0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub layer: usize,
    pub z: f64,
    pub free_cells: usize,
    pub ink_cells: usize,
    pub saturation: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SaturationProfile {
    pub rows: Vec<ProfileRow>,
}

/// Ink share of the non-solid cells of each layer, bottom to top. Ink that
/// sits in solid cells is counted but cannot raise saturation above one.
pub fn saturation_profile(
    sigma: &BinaryField,
    phi: &BinaryField,
    grid: &Grid,
) -> Result<SaturationProfile> {
    sigma.check_grid(grid, "ink")?;
    phi.check_grid(grid, "solid")?;
    let per_layer = grid.layer_len();
    let rows = (0..grid.nz())
        .map(|layer| {
            let (mut free_cells, mut ink_cells, mut filled_free) = (0, 0, 0);
            for i in layer * per_layer..(layer + 1) * per_layer {
                let (ink, solid) = (sigma.get(i), phi.get(i));
                free_cells += usize::from(!solid);
                ink_cells += usize::from(ink);
                filled_free += usize::from(ink && !solid);
            }
            let saturation = if free_cells == 0 {
                0.0
            } else {
                filled_free as f64 / free_cells as f64
            };
            ProfileRow {
                layer,
                z: grid.z_of_layer(layer),
                free_cells,
                ink_cells,
                saturation,
            }
        })
        .collect();
    Ok(SaturationProfile { rows })
}

/// Share of ink cells that are solid or touch a solid cell.
pub fn fiber_adjacency_fraction(
    sigma: &BinaryField,
    phi: &BinaryField,
    grid: &Grid,
) -> Result<f64> {
    sigma.check_grid(grid, "ink")?;
    phi.check_grid(grid, "solid")?;
    let ink = sigma.count_ones();
    if ink == 0 {
        return Ok(0.0);
    }
    let mut near = 0usize;
    for i in sigma.iter_ones() {
        if phi.get(i) || crate::lattice::n1_neighbors(grid, i)?.into_iter().any(|j| phi.get(j)) {
            near += 1;
        }
    }
    Ok(near as f64 / ink as f64)
}

/// Fraction of non-solid cells holding ink.
pub fn free_fill_fraction(sigma: &BinaryField, phi: &BinaryField) -> f64 {
    let free = phi.len() - phi.count_ones();
    if free == 0 {
        return 0.0;
    }
    let filled = (0..sigma.len()).filter(|&i| sigma.get(i) && !phi.get(i)).count();
    filled as f64 / free as f64
}
