//! Training of the four stages on batch graphs.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::attention::pair_attention;
use super::batches::{build_batches, Batch};
use super::config::{BatchConfig, Ladder, PipelineConfig};
use super::passes::{
    concat_cols, has_both_edge_classes, masked_signs, run_pass, unet_inputs, weight_graph, Model, PassInput,
};
use crate::dataio::{Dataset, Split};
use crate::error::{Error, Result};
use crate::glr;
use crate::graph::{build_laplacian, knn_edges, partition_edges, Graph};
use crate::metricnet::{
    sample_triplets_with, train, triplet_loss_w, Adam, Gradients, MetricNet, NetConfig, TrainReport, Triplet,
};
use crate::par::Exec;
use crate::rng;
use crate::signal::LabelSignal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub epoch_losses: Vec<f64>,
    pub skipped_batches: usize,
    /// Seed of the stage's sampling stream.
    pub seed: u64,
    #[serde(skip)]
    pub net_config: Option<NetConfig>,
    #[serde(skip)]
    pub optimizer: Option<Adam>,
}

/// Working label signal of a batch: noisy labels on the labeled prefix,
/// zero on the validation suffix.
pub fn batch_labels(ds: &Dataset, batch: &Batch) -> LabelSignal {
    LabelSignal(
        batch
            .nodes
            .iter()
            .enumerate()
            .map(|(k, &i)| if k < batch.n_labeled { ds.noisy_labels[i] as f64 } else { 0.0 })
            .collect(),
    )
}

fn stage_seed(cfg: &PipelineConfig, stage: &str, epoch: usize) -> u64 {
    rng::derive(cfg.seed, &[rng::tag(stage), epoch as u64])
}

fn epoch_batches(ds: &Dataset, cfg: &PipelineConfig, stage: &str, epoch: usize) -> Vec<Batch> {
    let train = ds.indices(Split::Train);
    let val = ds.indices(Split::Val);
    build_batches(&train, &val, &cfg.batch, stage_seed(cfg, stage, epoch))
}

fn triplets_for(labels: &LabelSignal, cfg: &PipelineConfig, stage: &str, epoch: usize, b: usize) -> Option<Vec<Triplet>> {
    let count = cfg.stage(stage).and_then(|s| s.triplets).unwrap_or(cfg.batch.triplets_per_graph);
    let mut r = rng::rng(stage_seed(cfg, stage, epoch), &[rng::tag("triplets"), b as u64]);
    sample_triplets_with(labels, count, &mut r).ok()
}

/// Replacement draws per batch slot whose graph lacks P or Q edges.
const RESAMPLE_ATTEMPTS: u64 = 4;

/// Builds the W-Net batch for slot `b`, drawing replacement batches while
/// the graph has no edge of one class. A slot that never gets both classes
/// is kept and skipped by the loss.
fn w_batch_with_resampling(
    ds: &Dataset,
    cfg: &PipelineConfig,
    stage: &str,
    epoch: usize,
    b: usize,
    first: &Batch,
    make: impl Fn(&Batch) -> Result<WBatch>,
) -> Result<WBatch> {
    let one = BatchConfig {
        graphs_per_epoch: 1,
        ..cfg.batch
    };
    let (train, val) = (ds.indices(Split::Train), ds.indices(Split::Val));
    let mut wb = make(first)?;
    for attempt in 0..RESAMPLE_ATTEMPTS {
        let part = partition_edges(&wb.graph, &wb.pq_labels);
        if !part.p.is_empty() && !part.q.is_empty() {
            break;
        }
        let seed = rng::derive(stage_seed(cfg, stage, epoch), &[rng::tag("resample"), b as u64, attempt]);
        let batch = build_batches(&train, &val, &one, seed).remove(0);
        wb = make(&batch)?;
    }
    Ok(wb)
}

fn report(stage: &str, cfg: &PipelineConfig, ncfg: &NetConfig, r: TrainReport) -> StageReport {
    StageReport {
        stage: stage.to_string(),
        epoch_losses: r.epoch_losses,
        skipped_batches: r.skipped_batches,
        seed: stage_seed(cfg, stage, 0),
        net_config: Some(ncfg.clone()),
        optimizer: Some(r.optimizer),
    }
}

/// G-Net: plain triplet loss on the noisy training labels of each batch.
pub fn train_gnet(ds: &Dataset, cfg: &PipelineConfig, exec: Exec) -> Result<(MetricNet, StageReport)> {
    let ncfg = cfg.gnet.net(ds.n_features(), cfg.embedding_dim);
    let mut net = MetricNet::new(&ncfg, stage_seed(cfg, "gnet-init", 0))?;
    struct B {
        x: Array2<f64>,
        triplets: Option<Vec<Triplet>>,
    }
    let rep = train(
        &mut net,
        &ncfg,
        exec,
        |epoch| {
            Ok(epoch_batches(ds, cfg, "gnet", epoch)
                .iter()
                .enumerate()
                .map(|(b, batch)| B {
                    x: ds.features.select(ndarray::Axis(0), &batch.nodes),
                    triplets: triplets_for(&batch_labels(ds, batch), cfg, "gnet", epoch, b),
                })
                .collect())
        },
        |net, b: &B| match &b.triplets {
            Some(t) => net.triplet_loss_e(b.x.view(), t, cfg.margin_e).map(Some),
            None => Ok(None),
        },
    )?;
    Ok((net, report("gnet", cfg, &ncfg, rep)))
}

/// KNN majority vote of `queries` among `voters` in embedding space, for each
/// budget in `gammas`. Vote ties go to the nearest voter.
pub fn knn_vote(
    emb: &Array2<f64>,
    voters: &[usize],
    voter_labels: &[i8],
    queries: &[usize],
    gammas: &[usize],
    exec: Exec,
) -> Vec<Vec<i8>> {
    let kmax = gammas.iter().copied().max().unwrap_or(1).min(voters.len());
    let ranked: Vec<Vec<usize>> = exec.map_slice(queries, |&q| {
        let mut d: Vec<(f64, usize)> = voters
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let dist: f64 = emb
                    .row(q)
                    .iter()
                    .zip(emb.row(v).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (dist, k)
            })
            .collect();
        if kmax < d.len() {
            d.select_nth_unstable_by(kmax, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(kmax);
        }
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.into_iter().map(|(_, k)| k).collect()
    });
    gammas
        .iter()
        .map(|&g| {
            ranked
                .iter()
                .map(|r| {
                    let votes: i64 = r.iter().take(g).map(|&k| voter_labels[k] as i64).sum();
                    match votes.signum() {
                        0 => voter_labels[r[0]],
                        s => s as i8,
                    }
                })
                .collect()
        })
        .collect()
}

/// Budget maximizing KNN accuracy of validation nodes (voted by training
/// nodes) against their noisy labels; ties go to the smaller budget.
pub fn grid_search_gamma(ds: &Dataset, z_d: &Array2<f64>, candidates: &[usize], exec: Exec) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Config("no gamma candidates".into()));
    }
    let mut cands = candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();
    let train = ds.indices(Split::Train);
    let val = ds.indices(Split::Val);
    if train.is_empty() || val.is_empty() {
        return Err(Error::Validation("gamma search needs training and validation nodes".into()));
    }
    let labels: Vec<i8> = train.iter().map(|&i| ds.noisy_labels[i]).collect();
    let preds = knn_vote(z_d, &train, &labels, &val, &cands, exec);
    let mut best = (cands[0], -1.0);
    for (g, p) in cands.iter().zip(&preds) {
        let hits = val.iter().zip(p).filter(|(&i, &y)| ds.noisy_labels[i] == y).count();
        let acc = hits as f64 / val.len() as f64;
        log::debug!("gamma {g}: validation accuracy {acc:.4}");
        if acc > best.1 {
            best = (*g, acc);
        }
    }
    Ok(best.0)
}

struct WBatch {
    input: Array2<f64>,
    graph: Graph,
    y_prev: LabelSignal,
    pq_labels: LabelSignal,
    triplets: Option<Vec<Triplet>>,
}

/// Attention-weighted triplet loss where the attention is refreshed from a
/// GLR pass on the graph weighted by the net's current embeddings.
fn refreshed_w_loss(net: &MetricNet, b: &WBatch, eps: f64, cfg: &PipelineConfig) -> Result<Option<(f64, Gradients)>> {
    let Some(triplets) = &b.triplets else {
        return Ok(None);
    };
    let acts = net.forward_batch(b.input.view())?;
    let emb = acts.embeddings();
    let (w, sigma) = weight_graph(&b.graph, emb, &b.pq_labels)?;
    if !has_both_edge_classes(&sigma) {
        return Ok(None);
    }
    let y = glr::denoise(&build_laplacian(&w), &b.y_prev, &cfg.glr)?;
    let gates = super::attention::node_gates(&b.y_prev, &y, eps);
    let out = triplet_loss_w(emb, triplets, cfg.margin_w, &pair_attention(&gates));
    Ok(Some((out.loss, net.backward(&acts, out.grad.view()))))
}

/// W-Net(1): input `[x, Z_D(x)]`, graph mask `E^0`, signal `Y^0`.
pub fn train_wnet1(
    ds: &Dataset,
    cfg: &PipelineConfig,
    gamma0: usize,
    inputs: &PassInput,
    exec: Exec,
) -> Result<(MetricNet, StageReport)> {
    let ncfg = cfg.wnet1.net(inputs.f1.ncols(), cfg.embedding_dim);
    let mut net = MetricNet::new(&ncfg, stage_seed(cfg, "wnet1-init", 0))?;
    let rep = train(
        &mut net,
        &ncfg,
        exec,
        |epoch| {
            let batches = epoch_batches(ds, cfg, "wnet1", epoch);
            let prepared: Vec<Result<WBatch>> = exec.map_range(batches.len(), |b| {
                w_batch_with_resampling(ds, cfg, "wnet1", epoch, b, &batches[b], |batch| {
                    let sub = inputs.select(&batch.nodes);
                    let y0 = batch_labels(ds, batch);
                    Ok(WBatch {
                        graph: knn_edges(sub.z_d.view(), &vec![gamma0; batch.len()])?,
                        input: sub.f1,
                        triplets: triplets_for(&y0, cfg, "wnet1", epoch, b),
                        pq_labels: y0.clone(),
                        y_prev: y0,
                    })
                })
            });
            prepared.into_iter().collect()
        },
        |net, b| refreshed_w_loss(net, b, cfg.eps1, cfg),
    )?;
    Ok((net, report("wnet1", cfg, &ncfg, rep)))
}

/// U-Net: input `g(x)` built from the W-Net(1) graph and `Y^1`; triplets on
/// the signs of `Y^1` with the first-iteration attention.
pub fn train_unet(ds: &Dataset, cfg: &PipelineConfig, model: &Model, inputs: &PassInput, exec: Exec) -> Result<(MetricNet, StageReport)> {
    let ncfg = cfg.unet.net(cfg.unet_input_dim(ds.n_features()), cfg.embedding_dim);
    let mut net = MetricNet::new(&ncfg, stage_seed(cfg, "unet-init", 0))?;
    struct UBatch {
        input: Array2<f64>,
        gates: Vec<f64>,
        triplets: Option<Vec<Triplet>>,
    }
    let rep = train(
        &mut net,
        &ncfg,
        exec,
        |epoch| {
            let batches = epoch_batches(ds, cfg, "unet", epoch);
            let prepared: Vec<Result<UBatch>> = exec.map_range(batches.len(), |b| {
                let batch = &batches[b];
                let y0 = batch_labels(ds, batch);
                let sub = inputs.select(&batch.nodes);
                let pass = run_pass(model, &sub, &y0, Ladder::G12, cfg)?;
                let labels = masked_signs(&pass.r1.y, &y0);
                Ok(UBatch {
                    input: unet_inputs(sub.x.view(), &pass.r1.graph, &pass.r1.y, cfg.unet_neighbors),
                    gates: pass.r1.gates.clone(),
                    triplets: triplets_for(&labels, cfg, "unet", epoch, b),
                })
            });
            prepared.into_iter().collect()
        },
        |net, b: &UBatch| {
            let Some(t) = &b.triplets else { return Ok(None) };
            net.triplet_loss_w(b.input.view(), t, cfg.margin_w, &pair_attention(&b.gates)).map(Some)
        },
    )?;
    Ok((net, report("unet", cfg, &ncfg, rep)))
}

/// W-Net(2): input `[x, Z_HU(g(x))]`, graph mask from the U-Net update,
/// signal `Y^1`.
pub fn train_wnet2(ds: &Dataset, cfg: &PipelineConfig, model: &Model, inputs: &PassInput, exec: Exec) -> Result<(MetricNet, StageReport)> {
    let hu_net = model
        .unet
        .as_ref()
        .ok_or_else(|| Error::Usage("W-Net(2) needs a trained U-Net".into()))?;
    let ncfg = cfg.wnet2.net(ds.n_features() + hu_net.shallow_dim(), cfg.embedding_dim);
    let mut net = MetricNet::new(&ncfg, stage_seed(cfg, "wnet2-init", 0))?;
    let rep = train(
        &mut net,
        &ncfg,
        exec,
        |epoch| {
            let batches = epoch_batches(ds, cfg, "wnet2", epoch);
            let prepared: Vec<Result<WBatch>> = exec.map_range(batches.len(), |b| {
                w_batch_with_resampling(ds, cfg, "wnet2", epoch, b, &batches[b], |batch| {
                    let y0 = batch_labels(ds, batch);
                    let sub = inputs.select(&batch.nodes);
                    let pass = run_pass(model, &sub, &y0, Ladder::G1232, cfg)?;
                    let g_in = pass.unet_input.as_ref().expect("U-Net pass");
                    let shallow = hu_net.forward_batch(g_in.view())?.shallow().to_owned();
                    let labels = masked_signs(&pass.r1.y, &y0);
                    Ok(WBatch {
                        input: concat_cols(sub.x.view(), shallow.view()),
                        graph: pass.update.expect("U-Net pass").graph,
                        triplets: triplets_for(&labels, cfg, "wnet2", epoch, b),
                        pq_labels: labels,
                        y_prev: pass.r1.y,
                    })
                })
            });
            prepared.into_iter().collect()
        },
        |net, b| refreshed_w_loss(net, b, cfg.eps2, cfg),
    )?;
    Ok((net, report("wnet2", cfg, &ncfg, rep)))
}

/// Trains every stage needed by `depth`. Each stage draws from its own seed
/// stream, so a shallower variant trained alone gets bitwise the same
/// stages as the prefix of a deeper one.
pub fn fit(ds: &Dataset, cfg: &PipelineConfig, depth: Ladder, exec: Exec) -> Result<(Model, Vec<StageReport>)> {
    cfg.validate()?;
    let mut reports = Vec::new();
    let (gnet, r) = train_gnet(ds, cfg, exec)?;
    reports.push(r);
    let inputs = PassInput::new(&gnet, ds.features.clone())?;
    let gamma0 = grid_search_gamma(ds, &inputs.z_d, &cfg.gamma_candidates, exec)?;
    log::info!("selected gamma0 = {gamma0}");
    let mut model = Model {
        gnet,
        gamma0,
        wnet1: None,
        unet: None,
        wnet2: None,
    };
    if depth.needs_wnet1() {
        let (net, r) = train_wnet1(ds, cfg, gamma0, &inputs, exec)?;
        model.wnet1 = Some(net);
        reports.push(r);
    }
    if depth.needs_unet() {
        let (net, r) = train_unet(ds, cfg, &model, &inputs, exec)?;
        model.unet = Some(net);
        reports.push(r);
    }
    if depth.needs_wnet2() {
        let (net, r) = train_wnet2(ds, cfg, &model, &inputs, exec)?;
        model.wnet2 = Some(net);
        reports.push(r);
    }
    Ok((model, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn vote_ties_go_to_nearest() {
        let emb = array![[0.0], [1.0], [-1.5], [0.1]];
        let preds = knn_vote(&emb, &[0, 1, 2], &[1, 1, -1], &[3], &[1, 2, 3], Exec::Sequential);
        assert_eq!(preds, vec![vec![1], vec![1], vec![1]]);
        let preds = knn_vote(&emb, &[0, 2], &[1, -1], &[3], &[2], Exec::Sequential);
        assert_eq!(preds, vec![vec![1]]);
    }
}
