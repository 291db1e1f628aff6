//! Rank sampling of trusted reference nodes.

use rand::seq::SliceRandom;

use super::config::{Ladder, PipelineConfig};
use super::passes::{run_pass, Model, PassInput};
use crate::dataio::{Dataset, Split};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::rng;
use crate::signal::LabelSignal;

/// Indices of the `k` largest scores, ties to the smaller index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Rank position (0 = best) of each score, descending.
fn ranks(scores: &[f64]) -> Vec<usize> {
    let order = top_k(scores, scores.len());
    let mut r = vec![0; scores.len()];
    for (pos, i) in order.into_iter().enumerate() {
        r[i] = pos;
    }
    r
}

/// Effective sample size: `k` itself when it fits, otherwise the largest
/// multiple of `batches` not above 60% of the training set.
pub fn clamp_k(k: usize, m_train: usize, batches: usize) -> usize {
    if k <= m_train {
        return k;
    }
    let cap = (0.6 * m_train as f64).floor() as usize;
    let clamped = cap / batches * batches;
    log::info!("rank-sample size {k} exceeds {m_train} training nodes; using {clamped}");
    clamped
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankScores {
    pub nodes: Vec<usize>,
    pub accuracy: Vec<f64>,
    pub stability: Vec<f64>,
    pub selected: Vec<usize>,
}

/// Scores every training node by (a) the validation accuracy of random
/// reference sets containing it and (b) the negated total change of its
/// signal across the GLR passes, then keeps the top `k` by the sum of the
/// two ranks.
pub fn rank_sampling(
    model: &Model,
    ds: &Dataset,
    inputs: &PassInput,
    depth: Ladder,
    k: usize,
    cfg: &PipelineConfig,
    exec: Exec,
) -> Result<RankScores> {
    if depth == Ladder::DmlKnn {
        return Err(Error::Usage("rank sampling needs a graph variant".into()));
    }
    let train = ds.indices(Split::Train);
    let val = ds.indices(Split::Val);
    if val.is_empty() || train.is_empty() {
        return Err(Error::Validation("rank sampling needs training and validation nodes".into()));
    }
    let k = clamp_k(k, train.len(), cfg.rank_sample_batches);
    let per = cfg.batch.labeled_per_graph.max(1);
    let mut jobs: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut r = rng::rng(cfg.seed, &[rng::tag("rank-sampling")]);
    let mut val_order = val.clone();
    let mut vpos = 0;
    for _ in 0..cfg.rank_sample_rounds.max(1) {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut r);
        for refs in order.chunks(per) {
            let mut q = Vec::with_capacity(cfg.batch.unlabeled_per_graph);
            while q.len() < cfg.batch.unlabeled_per_graph.min(val.len()) {
                if vpos == 0 {
                    val_order.shuffle(&mut r);
                }
                q.push(val_order[vpos]);
                vpos = (vpos + 1) % val_order.len();
            }
            jobs.push((refs.to_vec(), q));
        }
    }
    let results = exec.map_slice(&jobs, |(refs, q)| -> Result<(f64, Vec<f64>)> {
        let nodes: Vec<usize> = refs.iter().map(|&t| train[t]).chain(q.iter().copied()).collect();
        let mut y0 = vec![0.0; nodes.len()];
        for (slot, &t) in refs.iter().enumerate() {
            y0[slot] = ds.noisy_labels[train[t]] as f64;
        }
        let pass = run_pass(model, &inputs.select(&nodes), &LabelSignal(y0), depth, cfg)?;
        let y = pass.final_signal();
        let hits = q
            .iter()
            .enumerate()
            .filter(|&(s, &v)| y.sign(refs.len() + s) == ds.noisy_labels[v])
            .count();
        let mut change: Vec<f64> = (0..refs.len())
            .map(|s| (pass.r1.y.0[s] - pass.r1.y_prev.0[s]).abs())
            .collect();
        if let Some(r2) = &pass.r2 {
            for (s, c) in change.iter_mut().enumerate() {
                *c += (r2.y.0[s] - r2.y_prev.0[s]).abs();
            }
        }
        Ok((hits as f64 / q.len().max(1) as f64, change))
    });
    let mut acc = vec![0.0; train.len()];
    let mut stab = vec![0.0; train.len()];
    let mut seen = vec![0usize; train.len()];
    for ((refs, _), res) in jobs.iter().zip(results) {
        let (a, change) = res?;
        for (s, &t) in refs.iter().enumerate() {
            acc[t] += a;
            stab[t] -= change[s];
            seen[t] += 1;
        }
    }
    for t in 0..train.len() {
        let n = seen[t].max(1) as f64;
        acc[t] /= n;
        stab[t] /= n;
    }
    let (ra, rs) = (ranks(&acc), ranks(&stab));
    let fused: Vec<f64> = (0..train.len()).map(|t| -((ra[t] + rs[t]) as f64)).collect();
    let selected = top_k(&fused, k).into_iter().map(|t| train[t]).collect();
    Ok(RankScores {
        nodes: train,
        accuracy: acc,
        stability: stab,
        selected,
    })
}
