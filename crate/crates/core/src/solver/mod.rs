//! Green-kernel discretization: grids, the QSD by power iteration, the
//! limit function η, absorption-time moments and the sticky closed form.

mod grid;
mod kernel;
mod qsd;
mod sticky;

pub use grid::{build_grid, build_grid_with, Grid, GridOptions, KernelKind, Partition, Spacing};
pub use kernel::{apply_kernel, kernel};
pub use qsd::{
    absorption_moments, eta_from_alpha, markov_bound, qsd_power_iteration, DiscreteMeasure, QsdSolution,
    SolutionHeader,
};
pub use sticky::{sticky_gamma, sticky_oracle, StickyOracle};
