//! Noise-sweep experiments, diagnostics and report tables.

mod diagnostics;
mod grid;
mod metrics;
mod report;

pub use diagnostics::{diagnostics, spectral_trend, Diagnostics, SpectralTrend};
pub use grid::{
    dataset_path, read_rows, run_cell, run_grid, Cell, CellSeeds, ExperimentGrid, ResultRow,
    DESK_SCALE_LIMIT,
};
pub use metrics::{error_rate, mean_edge_weight_proportion, residual_noise};
pub use report::{CellSummary, Report};
