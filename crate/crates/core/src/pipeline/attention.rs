//! Binary edge attention from the change of the label signal across a GLR pass.

use crate::signal::LabelSignal;

/// `1` when a node's label moved by at most `eps`.
pub fn phi(prev: f64, cur: f64, eps: f64) -> f64 {
    if (prev - cur).abs() <= eps {
        1.0
    } else {
        0.0
    }
}

/// Edge attention: the smaller of the two endpoint gates.
pub fn attention(prev_i: f64, cur_i: f64, prev_j: f64, cur_j: f64, eps: f64) -> f64 {
    phi(prev_i, cur_i, eps).min(phi(prev_j, cur_j, eps))
}

/// Per-node gates for a whole signal.
pub fn node_gates(prev: &LabelSignal, cur: &LabelSignal, eps: f64) -> Vec<f64> {
    prev.values()
        .iter()
        .zip(cur.values())
        .map(|(&p, &c)| phi(p, c, eps))
        .collect()
}

/// Pair attention over node gates, usable directly as a loss attention.
pub fn pair_attention(gates: &[f64]) -> impl Fn(usize, usize) -> f64 + '_ {
    move |i, j| gates[i].min(gates[j])
}
