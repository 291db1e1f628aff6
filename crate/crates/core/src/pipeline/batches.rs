use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::BatchConfig;
use crate::rng::{self, Rng};

/// Node set of one batch graph: labeled training nodes first, then the
/// validation nodes that enter with label 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub nodes: Vec<usize>,
    pub n_labeled: usize,
}

impl Batch {
    pub fn labeled(&self) -> &[usize] {
        &self.nodes[..self.n_labeled]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Draws nodes without replacement from a pool, reshuffling once exhausted.
struct Pool<'a> {
    items: &'a [usize],
    order: Vec<usize>,
    pos: usize,
    wrapped: bool,
}

impl<'a> Pool<'a> {
    fn new(items: &'a [usize], rng: &mut Rng) -> Self {
        let mut order = items.to_vec();
        order.shuffle(rng);
        Pool {
            items,
            order,
            pos: 0,
            wrapped: false,
        }
    }

    /// `k` distinct nodes when the pool is large enough.
    fn take(&mut self, k: usize, rng: &mut Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k.min(self.items.len()) {
            if self.pos == self.order.len() {
                self.order = self.items.to_vec();
                self.order.shuffle(rng);
                self.pos = 0;
                self.wrapped = true;
            }
            let v = self.order[self.pos];
            self.pos += 1;
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }
}

/// The batch graphs of one epoch. Batches are disjoint unless a pool runs
/// out, in which case nodes repeat across (never within) batches.
pub fn build_batches(train: &[usize], val: &[usize], cfg: &BatchConfig, seed: u64) -> Vec<Batch> {
    let mut rng = rng::rng(seed, &[rng::tag("batches")]);
    let mut tp = Pool::new(train, &mut rng);
    let mut vp = Pool::new(val, &mut rng);
    let batches: Vec<Batch> = (0..cfg.graphs_per_epoch)
        .map(|_| {
            let mut nodes = tp.take(cfg.labeled_per_graph, &mut rng);
            let n_labeled = nodes.len();
            nodes.extend(vp.take(cfg.unlabeled_per_graph, &mut rng));
            Batch { nodes, n_labeled }
        })
        .collect();
    if tp.wrapped || vp.wrapped {
        log::debug!(
            "batch pools exhausted (train {}, val {}); nodes repeat across batches",
            train.len(),
            val.len()
        );
    }
    batches
}
