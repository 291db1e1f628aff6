//! Hinge-margin triplet losses over a batch of embeddings.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::net::{Gradients, MetricNet};
use crate::error::Result;

/// Row indices into the batch. Labels satisfy `y_a = y_p != y_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Loss value and its gradient with respect to each embedding row.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Array2<f64>,
    /// Triplets whose hinge was open.
    pub active: usize,
    /// Triplets that entered the sum (all of them for the plain loss).
    pub counted: usize,
}

/// Edge attention looked up per node pair.
pub trait PairAttention {
    fn pi(&self, i: usize, j: usize) -> f64;
}

/// Attention 1 on every pair.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullAttention;

impl PairAttention for FullAttention {
    fn pi(&self, _: usize, _: usize) -> f64 {
        1.0
    }
}

impl<F: Fn(usize, usize) -> f64> PairAttention for F {
    fn pi(&self, i: usize, j: usize) -> f64 {
        self(i, j)
    }
}

fn sq_dist(emb: &ArrayView2<'_, f64>, i: usize, j: usize) -> f64 {
    emb.row(i)
        .iter()
        .zip(emb.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn hinge<A: PairAttention + ?Sized>(
    emb: ArrayView2<'_, f64>,
    triplets: &[Triplet],
    margin: f64,
    attention: &A,
    drop_unattended: bool,
) -> LossOutput {
    let mut grad = Array2::zeros(emb.raw_dim());
    let mut loss = 0.0;
    let mut active = 0;
    let mut counted = 0;
    for t in triplets {
        let pi_p = attention.pi(t.anchor, t.positive);
        let pi_n = attention.pi(t.anchor, t.negative);
        if drop_unattended && pi_p == 0.0 && pi_n == 0.0 {
            continue;
        }
        counted += 1;
        let d_p = sq_dist(&emb, t.anchor, t.positive);
        let d_n = sq_dist(&emb, t.anchor, t.negative);
        let h = margin - d_n * pi_n + d_p * pi_p;
        if h <= 0.0 {
            continue;
        }
        loss += h;
        active += 1;
        for k in 0..emb.ncols() {
            let ap = 2.0 * (emb[[t.anchor, k]] - emb[[t.positive, k]]) * pi_p;
            let an = 2.0 * (emb[[t.anchor, k]] - emb[[t.negative, k]]) * pi_n;
            grad[[t.anchor, k]] += ap - an;
            grad[[t.positive, k]] -= ap;
            grad[[t.negative, k]] += an;
        }
    }
    LossOutput {
        loss,
        grad,
        active,
        counted,
    }
}

/// `sum [margin - d(a,n) + d(a,p)]_+` with squared Euclidean `d`.
pub fn triplet_loss_e(emb: ArrayView2<'_, f64>, triplets: &[Triplet], margin: f64) -> LossOutput {
    hinge(emb, triplets, margin, &FullAttention, false)
}

/// Attention-weighted variant: `sum [margin - d(a,n) pi(a,n) + d(a,p) pi(a,p)]_+`.
/// Triplets with both attentions zero are dropped.
pub fn triplet_loss_w<A: PairAttention + ?Sized>(
    emb: ArrayView2<'_, f64>,
    triplets: &[Triplet],
    margin: f64,
    attention: &A,
) -> LossOutput {
    hinge(emb, triplets, margin, attention, true)
}

impl MetricNet {
    /// Runs `x` through the net, applies `loss` to the embeddings and
    /// backpropagates. Returns the loss and parameter gradients.
    pub fn loss_and_gradients<L>(&self, x: ArrayView2<'_, f64>, loss: L) -> Result<(f64, Gradients)>
    where
        L: FnOnce(ArrayView2<'_, f64>) -> LossOutput,
    {
        let acts = self.forward_batch(x)?;
        let out = loss(acts.embeddings());
        Ok((out.loss, self.backward(&acts, out.grad.view())))
    }

    pub fn triplet_loss_e(
        &self,
        x: ArrayView2<'_, f64>,
        triplets: &[Triplet],
        margin: f64,
    ) -> Result<(f64, Gradients)> {
        self.loss_and_gradients(x, |e| triplet_loss_e(e, triplets, margin))
    }

    pub fn triplet_loss_w<A: PairAttention + ?Sized>(
        &self,
        x: ArrayView2<'_, f64>,
        triplets: &[Triplet],
        margin: f64,
        attention: &A,
    ) -> Result<(f64, Gradients)> {
        self.loss_and_gradients(x, |e| triplet_loss_w(e, triplets, margin, attention))
    }
}
