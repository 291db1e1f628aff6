//! Transductive prediction: test nodes join reference training nodes in a
//! graph and take the sign of the final denoised signal.

use rand::seq::SliceRandom;

use super::config::{Ladder, PipelineConfig, Variant};
use super::passes::{run_pass, Model, PassInput};
use super::stages::knn_vote;
use crate::dataio::{Dataset, Split};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::par::Exec;
use crate::rng::{self, Rng};
use crate::signal::LabelSignal;

/// Picks `k` nodes of `pool` keeping the class proportions of `labels`.
pub fn stratified_pick(pool: &[usize], labels: &[i8], k: usize, rng: &mut Rng) -> Vec<usize> {
    let k = k.min(pool.len());
    let mut pos: Vec<usize> = pool.iter().copied().filter(|&i| labels[i] > 0).collect();
    let mut neg: Vec<usize> = pool.iter().copied().filter(|&i| labels[i] <= 0).collect();
    pos.shuffle(rng);
    neg.shuffle(rng);
    let want_pos = ((k as f64) * pos.len() as f64 / pool.len().max(1) as f64).round() as usize;
    let take_pos = want_pos.min(pos.len()).max(k.saturating_sub(neg.len()));
    let mut out: Vec<usize> = pos[..take_pos].to_vec();
    out.extend_from_slice(&neg[..k - take_pos]);
    out
}

/// Splits `refs` into `parts` class-balanced groups of equal size.
pub fn stratified_groups(refs: &[usize], labels: &[i8], parts: usize) -> Vec<Vec<usize>> {
    let mut ordered: Vec<usize> = refs.iter().copied().filter(|&i| labels[i] > 0).collect();
    ordered.extend(refs.iter().copied().filter(|&i| labels[i] <= 0));
    let mut groups = vec![Vec::new(); parts];
    for (k, i) in ordered.into_iter().enumerate() {
        groups[k % parts].push(i);
    }
    groups
}

/// Sign with zero ties broken by the weighted vote of `i`'s neighbours, then `+1`.
pub fn resolve_sign(y: &LabelSignal, i: usize, graph: &Graph) -> i8 {
    match y.sign(i) {
        0 => {
            let vote: f64 = graph.neighbors(i).iter().map(|&(j, w)| w * y.sign(j) as f64).sum();
            if vote < 0.0 {
                -1
            } else {
                1
            }
        }
        s => s,
    }
}

/// Mean final signal of the `chunk` nodes over the reference sets.
pub fn transduce(
    model: &Model,
    ds: &Dataset,
    inputs: &PassInput,
    chunk: &[usize],
    ref_sets: &[Vec<usize>],
    depth: Ladder,
    cfg: &PipelineConfig,
) -> Result<Vec<i8>> {
    let mut mean = vec![0.0; chunk.len()];
    let mut tie_graph = None;
    for refs in ref_sets {
        let nodes: Vec<usize> = refs.iter().chain(chunk).copied().collect();
        let mut y0 = vec![0.0; nodes.len()];
        for (k, &i) in refs.iter().enumerate() {
            y0[k] = ds.noisy_labels[i] as f64;
        }
        let pass = run_pass(model, &inputs.select(&nodes), &LabelSignal(y0), depth, cfg)?;
        let y = pass.final_signal();
        for (k, m) in mean.iter_mut().enumerate() {
            *m += y.0[refs.len() + k] / ref_sets.len() as f64;
        }
        if tie_graph.is_none() {
            let fin = pass.final_iteration();
            tie_graph = Some((fin.graph.clone(), fin.y.clone(), refs.len()));
        }
    }
    let (graph, y_first, offset) = tie_graph.ok_or_else(|| Error::Usage("no reference sets".into()))?;
    Ok(mean
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            if m > 0.0 {
                1
            } else if m < 0.0 {
                -1
            } else {
                resolve_sign(&y_first, offset + k, &graph)
            }
        })
        .collect())
}

/// Predicted labels for `test` nodes. `ranked` holds rank-sampled reference
/// nodes and is required by sampling variants.
#[allow(clippy::too_many_arguments)]
pub fn predict(
    model: &Model,
    ds: &Dataset,
    inputs: &PassInput,
    test: &[usize],
    variant: Variant,
    ranked: Option<&[usize]>,
    cfg: &PipelineConfig,
    exec: Exec,
) -> Result<Vec<i8>> {
    let train = ds.indices(Split::Train);
    if variant.ladder == Ladder::DmlKnn {
        let labels: Vec<i8> = train.iter().map(|&i| ds.noisy_labels[i]).collect();
        let mut v = knn_vote(&inputs.z_d, &train, &labels, test, &[model.gamma0], exec);
        return Ok(v.pop().unwrap_or_default());
    }
    if !model.supports(variant.ladder) {
        return Err(Error::Usage(format!("model is not trained for variant {variant}")));
    }
    let groups = match (variant.sampling, ranked) {
        (true, Some(r)) => Some(stratified_groups(r, &ds.noisy_labels, cfg.rank_sample_batches)),
        (true, None) => return Err(Error::Usage(format!("variant {variant} needs rank-sampled references"))),
        (false, _) => None,
    };
    let chunks: Vec<&[usize]> = test.chunks(cfg.predict_chunk).collect();
    let per_chunk = exec.map_range(chunks.len(), |c| {
        let sets = match &groups {
            Some(g) => g.clone(),
            None => {
                let mut r = rng::rng(cfg.seed, &[rng::tag("predict-refs"), c as u64]);
                vec![stratified_pick(&train, &ds.noisy_labels, cfg.batch.labeled_per_graph, &mut r)]
            }
        };
        transduce(model, ds, inputs, chunks[c], &sets, variant.ladder, cfg)
    });
    let mut out = Vec::with_capacity(test.len());
    for p in per_chunk {
        out.extend(p?);
    }
    Ok(out)
}
