//! Finite-volume ink seepage into voxelized fiber structures.
//!
//! The crate builds a random fiber network ([`fibergen`]), discretizes it on
//! a [`lattice::Grid`], and finds the ink distribution minimising an
//! Ising-type energy ([`energy`]) either exactly for unlimited ink
//! ([`mincut`]) or under a fixed ink budget with a reservoir below the paper
//! ([`gasolver`]).

pub mod analysis;
pub mod config;
pub mod energy;
pub mod error;
pub mod fibergen;
pub mod formats;
pub mod gasolver;
pub mod lattice;
pub mod mincut;
pub mod pipeline;

pub use config::RunConfig;
pub use energy::{EnergyBreakdown, EnergyParams, PairwiseModel, SumCache};
pub use error::{Error, Result};
pub use fibergen::{FiberParams, FiberStructure};
pub use lattice::{BinaryField, Grid, Topology};
