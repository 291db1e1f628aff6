use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::{Ladder, PipelineConfig};
use super::passes::{run_pass, Iteration, Model, Pass, PassInput};
use crate::dataio::{Dataset, Split};
use crate::error::Result;
use crate::graph::{AutoSigma, Graph, GraphUpdate};
use crate::signal::LabelSignal;

/// Artifacts of iteration `r`: the embeddings that weighted the graph, the
/// graph itself, the signal `Y^r` and the per-node attention gates that
/// define `Pi^r` (pair attention is the minimum of the two gates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationState {
    pub r: usize,
    pub embeddings: Array2<f64>,
    pub graph: Graph,
    pub signal: LabelSignal,
    pub gates: Vec<f64>,
    pub sigma: Option<AutoSigma>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    /// Dataset indices of the state's nodes, in row order.
    pub nodes: Vec<usize>,
    pub iterations: Vec<IterationState>,
    pub update: Option<GraphUpdate>,
}

fn iteration_state(r: usize, it: &Iteration) -> IterationState {
    IterationState {
        r,
        embeddings: it.embeddings.clone(),
        graph: it.graph.clone(),
        signal: it.y.clone(),
        gates: it.gates.clone(),
        sigma: it.sigma,
    }
}

impl PipelineState {
    pub fn from_pass(nodes: Vec<usize>, pass: &Pass) -> Self {
        let mut iterations = vec![IterationState {
            r: 0,
            embeddings: pass.z_d.clone(),
            graph: pass.e0.clone(),
            signal: pass.y0.clone(),
            gates: vec![1.0; pass.y0.len()],
            sigma: None,
        }];
        iterations.push(iteration_state(1, &pass.r1));
        if let Some(r2) = &pass.r2 {
            iterations.push(iteration_state(2, r2));
        }
        PipelineState {
            nodes,
            iterations,
            update: pass.update.clone(),
        }
    }

    pub fn iteration(&self, r: usize) -> Option<&IterationState> {
        self.iterations.get(r)
    }

    pub fn last(&self) -> &IterationState {
        self.iterations.last().expect("state has iteration 0")
    }

    /// Positions (rows) of training nodes inside the state.
    pub fn train_rows(&self, ds: &Dataset) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&k| ds.split[self.nodes[k]] == Split::Train)
            .collect()
    }
}

/// The training/validation graph used for diagnostics: training nodes carry
/// their noisy labels, validation nodes enter unlabeled, exactly as in the
/// batch graphs.
pub fn diagnostic_pass(
    model: &Model,
    ds: &Dataset,
    inputs: &PassInput,
    nodes: &[usize],
    depth: Ladder,
    cfg: &PipelineConfig,
) -> Result<Pass> {
    let y0 = LabelSignal(
        nodes
            .iter()
            .map(|&i| if ds.split[i] == Split::Train { ds.noisy_labels[i] as f64 } else { 0.0 })
            .collect(),
    );
    run_pass(model, &inputs.select(nodes), &y0, depth, cfg)
}

pub fn diagnostic_state(
    model: &Model,
    ds: &Dataset,
    inputs: &PassInput,
    nodes: &[usize],
    depth: Ladder,
    cfg: &PipelineConfig,
) -> Result<PipelineState> {
    let pass = diagnostic_pass(model, ds, inputs, nodes, depth, cfg)?;
    Ok(PipelineState::from_pass(nodes.to_vec(), &pass))
}

/// Training and validation nodes in index order.
pub fn labeled_nodes(ds: &Dataset) -> Vec<usize> {
    (0..ds.n_nodes()).filter(|&i| ds.split[i] != Split::Test).collect()
}

/// A stratified (by noisy label) subset of `k` labeled nodes in index order,
/// or all of them when there are fewer.
pub fn labeled_subsample(ds: &Dataset, k: usize, seed: u64) -> Vec<usize> {
    let nodes = labeled_nodes(ds);
    if nodes.len() <= k {
        return nodes;
    }
    let mut r = crate::rng::rng(seed, &[crate::rng::tag("labeled-subsample")]);
    let mut picked = super::predict::stratified_pick(&nodes, &ds.noisy_labels, k, &mut r);
    picked.sort_unstable();
    picked
}
