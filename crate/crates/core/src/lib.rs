//! Robust binary classification under noisy labels with learned metric
//! graphs and graph-Laplacian-regularized label denoising.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataio`]: CSV ingestion, stratified splits, label-noise injection.
//! - [`metricnet`]: dense embedding networks, triplet losses, Adam training.
//! - [`graph`]: KNN construction, auto-sigma edge weights, Laplacians, the
//!   degree-budget graph update and graph Fourier spectra.
//! - [`glr`]: Laplacian-regularized restoration as a conditioned SPD solve.
//! - [`pipeline`]: the staged G-Net / W-Net / U-Net classifier.
//! - [`experiment`]: noise sweeps, diagnostics and report tables.

pub mod dataio;
pub mod error;
pub mod experiment;
pub mod glr;
pub mod graph;
pub mod metricnet;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod signal;

pub use error::{Error, Result};
pub use signal::LabelSignal;
