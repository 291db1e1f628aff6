use serde::{Deserialize, Serialize};

use super::metrics::{mean_edge_weight_proportion, residual_noise};
use crate::dataio::{Dataset, Split};
use crate::error::Result;
use crate::par::Exec;
use crate::graph::{build_laplacian, gft_spectrum, low_band_energy_fraction, Graph};
use crate::pipeline::{build_batches, diagnostic_pass, labeled_subsample, BatchConfig, Pipeline};
use crate::rng;
use crate::signal::LabelSignal;

/// Graph diagnostics pooled over batch-scale graphs that cover every
/// training node once. Each graph holds training nodes with their noisy
/// labels and validation nodes unlabeled, as during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub graphs: usize,
    /// Training nodes whose sign after the first GLR pass disagrees with the clean label.
    pub residual_noise_r1: f64,
    /// Mean edge weight proportion of the first weighted graph, averaged over graphs.
    pub rho_before_update: Option<f64>,
    /// The same after the graph update, when a second W-Net exists.
    pub rho_after_update: Option<f64>,
    /// Fraction of training nodes gated off after the first pass.
    pub flagged_r1: f64,
    /// Mean edge weight proportion of the unweighted initial graph.
    pub rho_initial: f64,
    /// The same for the unweighted updated graph.
    pub rho_updated_unweighted: Option<f64>,
}

struct GraphStats {
    denoised: Vec<f64>,
    clean: Vec<i8>,
    n_labeled: usize,
    flagged: usize,
    rho_before: Option<f64>,
    rho_after: Option<f64>,
    rho_initial: f64,
    rho_updated: Option<f64>,
}

fn mean(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = xs.collect();
    v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn diagnostics(pipe: &Pipeline, ds: &Dataset, exec: Exec) -> Result<Diagnostics> {
    let train = ds.indices(Split::Train);
    let val = ds.indices(Split::Val);
    let cfg = &pipe.config;
    let batch_cfg = BatchConfig {
        graphs_per_epoch: train.len().div_ceil(cfg.batch.labeled_per_graph.max(1)),
        ..cfg.batch
    };
    let seed = rng::derive(cfg.seed, &[rng::tag("diagnostics")]);
    let batches = build_batches(&train, &val, &batch_cfg, seed);
    let depth = pipe.model.depth();
    let stats = exec
        .map_slice(&batches, |b| -> Result<GraphStats> {
            let pass = diagnostic_pass(&pipe.model, ds, &pipe.inputs, &b.nodes, depth, cfg)?;
            let clean: Vec<i8> = b.nodes.iter().map(|&i| ds.clean_labels[i]).collect();
            Ok(GraphStats {
                rho_before: pipe
                    .model
                    .wnet1
                    .as_ref()
                    .map(|_| mean_edge_weight_proportion(&pass.r1.graph, &clean)),
                rho_after: pass
                    .r2
                    .as_ref()
                    .filter(|_| pipe.model.wnet2.is_some())
                    .map(|r2| mean_edge_weight_proportion(&r2.graph, &clean)),
                rho_initial: mean_edge_weight_proportion(&pass.e0, &clean),
                rho_updated: pass.update.as_ref().map(|u| mean_edge_weight_proportion(&u.graph, &clean)),
                flagged: pass.r1.gates[..b.n_labeled].iter().filter(|g| **g == 0.0).count(),
                denoised: pass.r1.y.0,
                n_labeled: b.n_labeled,
                clean,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut denoised = Vec::new();
    let mut clean = Vec::new();
    let mut mask = Vec::new();
    for s in &stats {
        denoised.extend_from_slice(&s.denoised);
        clean.extend_from_slice(&s.clean);
        mask.extend((0..s.clean.len()).map(|k| k < s.n_labeled));
    }
    let labeled: usize = stats.iter().map(|s| s.n_labeled).sum();
    Ok(Diagnostics {
        graphs: stats.len(),
        residual_noise_r1: residual_noise(&LabelSignal(denoised), &clean, &mask),
        rho_before_update: mean(stats.iter().map(|s| s.rho_before)),
        rho_after_update: mean(stats.iter().map(|s| s.rho_after)),
        rho_initial: stats.iter().map(|s| s.rho_initial).sum::<f64>() / stats.len().max(1) as f64,
        rho_updated_unweighted: mean(stats.iter().map(|s| s.rho_updated)),
        flagged_r1: stats.iter().map(|s| s.flagged).sum::<usize>() as f64 / labeled.max(1) as f64,
    })
}

/// Share of clean-label energy in the lowest `fraction` of graph frequencies
/// for each graph of one pass over a labeled subsample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralTrend {
    pub nodes: usize,
    /// The unweighted G-Net graph.
    pub initial: f64,
    /// The first weighted graph.
    pub first: Option<f64>,
    /// The weighted graph after the update.
    pub updated: Option<f64>,
}

pub fn spectral_trend(pipe: &Pipeline, ds: &Dataset, max_nodes: usize, fraction: f64) -> Result<SpectralTrend> {
    let nodes = labeled_subsample(ds, max_nodes, pipe.config.seed);
    let pass = diagnostic_pass(&pipe.model, ds, &pipe.inputs, &nodes, pipe.model.depth(), &pipe.config)?;
    let clean = LabelSignal(nodes.iter().map(|&i| ds.clean_labels[i] as f64).collect());
    let band = |g: &Graph| -> Result<f64> {
        Ok(low_band_energy_fraction(&gft_spectrum(&build_laplacian(g), &clean)?, fraction))
    };
    Ok(SpectralTrend {
        nodes: nodes.len(),
        initial: band(&pass.e0)?,
        first: match pipe.model.wnet1 {
            Some(_) => Some(band(&pass.r1.graph)?),
            None => None,
        },
        updated: match (&pass.r2, &pipe.model.wnet2) {
            (Some(r2), Some(_)) => Some(band(&r2.graph)?),
            _ => None,
        },
    })
}
