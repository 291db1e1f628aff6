//! One forward sweep of the trained stages over a node subset.
//!
//! Training, prediction and diagnostics all run the same sequence on
//! different node sets: batch graphs while training, reference-plus-test
//! graphs at prediction time, and the whole train/validation set for the
//! diagnostic state.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::attention::node_gates;
use super::config::{Ladder, PipelineConfig};
use crate::error::{Error, Result};
use crate::glr;
use crate::graph::{
    assign_weights, auto_sigma_detailed, build_laplacian, graph_update, knn_edges, AutoSigma, EdgePartition,
    Graph, GraphUpdate, LaplacianSystem, SigmaSource,
};
use crate::metricnet::MetricNet;
use crate::signal::LabelSignal;

/// The trained stages. Later stages are optional so that partially trained
/// pipelines can run the prefix they support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub gnet: MetricNet,
    pub gamma0: usize,
    pub wnet1: Option<MetricNet>,
    pub unet: Option<MetricNet>,
    pub wnet2: Option<MetricNet>,
}

impl Model {
    pub fn depth(&self) -> Ladder {
        match (&self.wnet1, &self.unet, &self.wnet2) {
            (Some(_), Some(_), Some(_)) => Ladder::G12312,
            (Some(_), Some(_), None) => Ladder::G1232,
            (Some(_), None, _) => Ladder::G12,
            _ => Ladder::G2,
        }
    }

    pub fn supports(&self, ladder: Ladder) -> bool {
        ladder <= self.depth()
    }
}

fn need<'a>(net: &'a Option<MetricNet>, name: &str) -> Result<&'a MetricNet> {
    net.as_ref()
        .ok_or_else(|| Error::Usage(format!("stage {name} has not been trained")))
}

/// Signal plus graph produced by one GLR pass.
#[derive(Debug, Clone)]
pub struct Iteration {
    /// Embeddings that weighted the graph.
    pub embeddings: Array2<f64>,
    pub graph: Graph,
    pub laplacian: LaplacianSystem,
    pub sigma: Option<AutoSigma>,
    pub y_prev: LabelSignal,
    pub y: LabelSignal,
    /// Per-node attention gates from `y_prev -> y`.
    pub gates: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Pass {
    pub y0: LabelSignal,
    pub z_d: Array2<f64>,
    pub e0: Graph,
    pub r1: Iteration,
    pub unet_input: Option<Array2<f64>>,
    pub hu: Option<Array2<f64>>,
    pub update: Option<GraphUpdate>,
    pub r2: Option<Iteration>,
}

impl Pass {
    pub fn final_iteration(&self) -> &Iteration {
        self.r2.as_ref().unwrap_or(&self.r1)
    }

    pub fn final_signal(&self) -> &LabelSignal {
        &self.final_iteration().y
    }
}

pub fn concat_cols(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a, b]).expect("row counts agree")
}

/// KNN graph with the same budget on every node.
pub fn initial_graph(z_d: ArrayView2<'_, f64>, gamma0: usize) -> Result<Graph> {
    knn_edges(z_d, &vec![gamma0; z_d.nrows()])
}

/// Auto-sigma Gaussian weights on the fixed edge set of `e`.
pub fn weight_graph(e: &Graph, emb: ArrayView2<'_, f64>, labels: &LabelSignal) -> Result<(Graph, AutoSigma)> {
    let part = EdgePartition::new(e, labels);
    let sigma = auto_sigma_detailed(emb, &part);
    Ok((assign_weights(e, emb, sigma.sigma)?, sigma))
}

/// True when the edge partition under `labels` has both P and Q edges.
pub fn has_both_edge_classes(sigma: &AutoSigma) -> bool {
    sigma.source != SigmaSource::MissingClass
}

fn glr_iteration(
    embeddings: Array2<f64>,
    graph: Graph,
    sigma: Option<AutoSigma>,
    y_prev: &LabelSignal,
    eps: f64,
    cfg: &PipelineConfig,
) -> Result<Iteration> {
    let laplacian = build_laplacian(&graph);
    let y = glr::denoise(&laplacian, y_prev, &cfg.glr)?;
    let gates = node_gates(y_prev, &y, eps);
    Ok(Iteration {
        embeddings,
        graph,
        laplacian,
        sigma,
        y_prev: y_prev.clone(),
        y,
        gates,
    })
}

/// `sign(y)` on nodes labeled in `mask`, 0 elsewhere.
pub fn masked_signs(y: &LabelSignal, mask: &LabelSignal) -> LabelSignal {
    LabelSignal(
        (0..y.len())
            .map(|i| if mask.0[i] != 0.0 { y.sign(i) as f64 } else { 0.0 })
            .collect(),
    )
}

/// Two-slot label encoding: positive values in the first slot, others in the second.
pub fn encode_label(y: f64) -> [f64; 2] {
    if y > 0.0 {
        [y, 0.0]
    } else {
        [0.0, y]
    }
}

/// The `k` strongest neighbours of `i` (weight descending, index ascending),
/// padded by repeating the strongest when fewer exist.
pub fn strongest_neighbors(g: &Graph, i: usize, k: usize) -> Vec<usize> {
    let mut nb: Vec<(usize, f64)> = g.neighbors(i).to_vec();
    nb.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out: Vec<usize> = nb.iter().take(k).map(|&(j, _)| j).collect();
    let fill = out.first().copied().unwrap_or(i);
    out.resize(k, fill);
    out
}

/// U-Net input rows: `[x_i, enc(y_i), enc(y_u) - enc(y_i) for each neighbour u]`.
pub fn unet_inputs(x: ArrayView2<'_, f64>, graph: &Graph, y: &LabelSignal, k: usize) -> Array2<f64> {
    let n = x.nrows();
    let d = x.ncols();
    let mut out = Array2::zeros((n, d + 2 + 2 * k));
    let mut padded = 0;
    for i in 0..n {
        out.row_mut(i).slice_mut(ndarray::s![..d]).assign(&x.row(i));
        let own = encode_label(y.0[i]);
        out[[i, d]] = own[0];
        out[[i, d + 1]] = own[1];
        if graph.degree(i) < k {
            padded += 1;
        }
        for (slot, u) in strongest_neighbors(graph, i, k).into_iter().enumerate() {
            let e = encode_label(y.0[u]);
            out[[i, d + 2 + 2 * slot]] = e[0] - own[0];
            out[[i, d + 3 + 2 * slot]] = e[1] - own[1];
        }
    }
    if padded > 0 {
        log::debug!("{padded} of {n} nodes had fewer than {k} neighbours; padded");
    }
    out
}

/// Inputs shared by every pass over the same nodes: raw features and the
/// G-Net outputs.
#[derive(Debug, Clone)]
pub struct PassInput {
    pub x: Array2<f64>,
    pub z_d: Array2<f64>,
    /// `[x, shallow G-Net features]`, the W-Net(1) input.
    pub f1: Array2<f64>,
}

impl PassInput {
    pub fn new(gnet: &MetricNet, x: Array2<f64>) -> Result<Self> {
        let acts = gnet.forward_batch(x.view())?;
        let z_d = acts.embeddings().to_owned();
        let f1 = concat_cols(x.view(), acts.shallow());
        Ok(PassInput { x, z_d, f1 })
    }

    /// Rows `nodes` of precomputed full-data inputs.
    pub fn select(&self, nodes: &[usize]) -> PassInput {
        PassInput {
            x: self.x.select(Axis(0), nodes),
            z_d: self.z_d.select(Axis(0), nodes),
            f1: self.f1.select(Axis(0), nodes),
        }
    }
}

/// Runs `depth` over one node subset with starting signal `y0`.
pub fn run_pass(model: &Model, input: &PassInput, y0: &LabelSignal, depth: Ladder, cfg: &PipelineConfig) -> Result<Pass> {
    if depth == Ladder::DmlKnn {
        return Err(Error::Usage("the KNN baseline has no graph pass".into()));
    }
    let e0 = initial_graph(input.z_d.view(), model.gamma0)?;
    let r1 = if depth == Ladder::G2 {
        glr_iteration(input.z_d.clone(), e0.clone(), None, y0, cfg.eps1, cfg)?
    } else {
        let c1 = need(&model.wnet1, "W-Net(1)")?;
        let emb = c1.embed(input.f1.view())?;
        let (w1, sigma) = weight_graph(&e0, emb.view(), y0)?;
        glr_iteration(emb, w1, Some(sigma), y0, cfg.eps1, cfg)?
    };
    let mut pass = Pass {
        y0: y0.clone(),
        z_d: input.z_d.clone(),
        e0,
        r1,
        unet_input: None,
        hu: None,
        update: None,
        r2: None,
    };
    if depth < Ladder::G1232 {
        return Ok(pass);
    }
    let hu_net = need(&model.unet, "U-Net")?;
    let g_in = unet_inputs(input.x.view(), &pass.r1.graph, &pass.r1.y, cfg.unet_neighbors);
    let acts = hu_net.forward_batch(g_in.view())?;
    let hu = acts.embeddings().to_owned();
    let up = graph_update(&pass.r1.graph, &pass.r1.laplacian, &pass.r1.y, hu.view(), cfg.beta)?;
    let y1 = pass.r1.y.clone();
    let r2 = if depth == Ladder::G1232 {
        glr_iteration(hu.clone(), up.graph.unweighted(), None, &y1, cfg.eps2, cfg)?
    } else {
        let c2 = need(&model.wnet2, "W-Net(2)")?;
        let f2 = concat_cols(input.x.view(), acts.shallow());
        let emb = c2.embed(f2.view())?;
        let labels = masked_signs(&y1, y0);
        let (w2, sigma) = weight_graph(&up.graph, emb.view(), &labels)?;
        glr_iteration(emb, w2, Some(sigma), &y1, cfg.eps2, cfg)?
    };
    pass.unet_input = Some(g_in);
    pass.hu = Some(hu);
    pass.update = Some(up);
    pass.r2 = Some(r2);
    Ok(pass)
}
