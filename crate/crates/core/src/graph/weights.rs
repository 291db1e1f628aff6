use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::signal::LabelSignal;

/// Split of the undirected edges by endpoint labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgePartition {
    /// Same-sign endpoints.
    pub p: Vec<(usize, usize)>,
    /// Opposite-sign endpoints.
    pub q: Vec<(usize, usize)>,
    /// At least one endpoint unlabeled.
    pub unclassified: Vec<(usize, usize)>,
}

impl EdgePartition {
    pub fn new(g: &Graph, labels: &LabelSignal) -> Self {
        let mut part = EdgePartition::default();
        for (i, j) in g.edges() {
            match (labels.sign(i), labels.sign(j)) {
                (0, _) | (_, 0) => part.unclassified.push((i, j)),
                (a, b) if a == b => part.p.push((i, j)),
                _ => part.q.push((i, j)),
            }
        }
        part
    }
}

pub fn partition_edges(g: &Graph, labels: &LabelSignal) -> EdgePartition {
    EdgePartition::new(g, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigmaSource {
    /// Closed-form maximizer of the P/Q weight margin.
    ClosedForm,
    /// `omega_Q <= omega_P`: no separating scale, `sigma = omega_P`.
    NoSeparation,
    /// P or Q empty: mean distance over all edges.
    MissingClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoSigma {
    pub sigma: f64,
    pub omega_p: f64,
    pub omega_q: f64,
    pub source: SigmaSource,
}

/// `exp(-wp^2 / 2 s^2) - exp(-wq^2 / 2 s^2)`.
pub fn sigma_margin(sigma: f64, omega_p: f64, omega_q: f64) -> f64 {
    let s2 = 2.0 * sigma * sigma;
    (-omega_p * omega_p / s2).exp() - (-omega_q * omega_q / s2).exp()
}

fn dist(emb: &ArrayView2<'_, f64>, i: usize, j: usize) -> f64 {
    emb.row(i)
        .iter()
        .zip(emb.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn mean_dist(emb: &ArrayView2<'_, f64>, edges: &[(usize, usize)]) -> f64 {
    edges.iter().map(|&(i, j)| dist(emb, i, j)).sum::<f64>() / edges.len() as f64
}

/// Gaussian scale from the mean Euclidean P-edge and Q-edge distances.
pub fn auto_sigma(embeddings: ArrayView2<'_, f64>, part: &EdgePartition) -> f64 {
    auto_sigma_detailed(embeddings, part).sigma
}

pub fn auto_sigma_detailed(embeddings: ArrayView2<'_, f64>, part: &EdgePartition) -> AutoSigma {
    let positive = |s: f64| if s.is_finite() && s > 0.0 { s } else { 1.0 };
    if part.p.is_empty() || part.q.is_empty() {
        let all: Vec<(usize, usize)> = part
            .p
            .iter()
            .chain(&part.q)
            .chain(&part.unclassified)
            .copied()
            .collect();
        let sigma = if all.is_empty() { 1.0 } else { positive(mean_dist(&embeddings, &all)) };
        log::debug!(
            "auto-sigma fallback: |P| = {}, |Q| = {}, sigma = {sigma}",
            part.p.len(),
            part.q.len()
        );
        return AutoSigma {
            sigma,
            omega_p: f64::NAN,
            omega_q: f64::NAN,
            source: SigmaSource::MissingClass,
        };
    }
    let omega_p = mean_dist(&embeddings, &part.p);
    let omega_q = mean_dist(&embeddings, &part.q);
    from_omegas(omega_p, omega_q, positive)
}

fn from_omegas(omega_p: f64, omega_q: f64, positive: impl Fn(f64) -> f64) -> AutoSigma {
    if omega_q > omega_p && omega_p > 0.0 {
        let (p2, q2) = (omega_p * omega_p, omega_q * omega_q);
        let sigma = ((q2 - p2) / (2.0 * (q2 / p2).ln())).sqrt();
        AutoSigma {
            sigma: positive(sigma),
            omega_p,
            omega_q,
            source: SigmaSource::ClosedForm,
        }
    } else {
        AutoSigma {
            sigma: positive(omega_p),
            omega_p,
            omega_q,
            source: SigmaSource::NoSeparation,
        }
    }
}

/// `w_ij = exp(-|e_i - e_j|^2 / 2 sigma^2)` on the existing edges only.
pub fn assign_weights(g: &Graph, embeddings: ArrayView2<'_, f64>, sigma: f64) -> Result<Graph> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Validation(format!("sigma must be positive, got {sigma}")));
    }
    if embeddings.nrows() != g.n_nodes() {
        return Err(Error::Shape {
            expected: g.n_nodes(),
            got: embeddings.nrows(),
        });
    }
    let s2 = 2.0 * sigma * sigma;
    Ok(g.map_weights(|i, j, _| {
        let d = dist(&embeddings, i, j);
        (-d * d / s2).exp()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Grid maximizer of the margin over (0, 10], step 1e-4.
    fn grid_sigma(omega_p: f64, omega_q: f64) -> (f64, f64) {
        let mut best = (0.0, f64::NEG_INFINITY);
        for k in 1..=100_000 {
            let s = k as f64 * 1e-4;
            let m = sigma_margin(s, omega_p, omega_q);
            if m > best.1 {
                best = (s, m);
            }
        }
        best
    }

    #[test]
    fn partition_by_sign() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]);
        let part = EdgePartition::new(&g, &LabelSignal(vec![1.0, 1.0, -1.0]));
        assert_eq!(part.p, vec![(0, 1)]);
        assert_eq!(part.q, vec![(1, 2)]);
        let same = EdgePartition::new(&g, &LabelSignal(vec![1.0, 1.0, 1.0]));
        assert!(same.q.is_empty());
        let partial = EdgePartition::new(&g, &LabelSignal(vec![1.0, 0.0, -1.0]));
        assert!(partial.p.is_empty() && partial.q.is_empty());
        assert_eq!(partial.unclassified.len(), 2);
    }

    #[test]
    fn closed_form_for_one_and_two() {
        let s = from_omegas(1.0, 2.0, |s| s);
        let want = (3.0 / (2.0 * 4f64.ln())).sqrt();
        assert!((s.sigma - want).abs() < 1e-12);
        assert!((s.sigma - 1.0402).abs() < 1e-4);
        let (grid_s, grid_m) = grid_sigma(1.0, 2.0);
        assert!((grid_s - s.sigma).abs() <= 1e-4);
        assert!(sigma_margin(s.sigma, 1.0, 2.0) >= grid_m - 1e-12);
    }

    #[test]
    fn no_separation_falls_back_to_omega_p() {
        let s = from_omegas(2.0, 1.5, |s| s);
        assert_eq!(s.sigma, 2.0);
        assert_eq!(s.source, SigmaSource::NoSeparation);
    }

    #[test]
    fn empty_class_uses_mean_edge_distance() {
        let emb = array![[0.0], [1.0], [3.0]];
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]);
        let part = EdgePartition::new(&g, &LabelSignal(vec![1.0, 1.0, 1.0]));
        let s = auto_sigma_detailed(emb.view(), &part);
        assert_eq!(s.source, SigmaSource::MissingClass);
        assert!((s.sigma - 1.5).abs() < 1e-12);
    }

    #[test]
    fn weights_follow_kernel() {
        let sigma = 0.7;
        let d = (2.0f64).sqrt() * sigma;
        let emb = array![[0.0], [0.0], [d], [2.0 * d]];
        let g = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]);
        let w = assign_weights(&g, emb.view(), sigma).unwrap();
        assert_eq!(w.weight(0, 1), Some(1.0));
        assert!((w.weight(0, 2).unwrap() - (-1f64).exp()).abs() < 1e-12);
        assert!(w.weight(0, 3).unwrap() < w.weight(0, 2).unwrap());
        assert_eq!(w.weight(1, 2), None);
    }
}
