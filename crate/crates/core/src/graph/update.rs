use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{knn_edges, Graph, LaplacianSystem};
use crate::error::{Error, Result};
use crate::signal::LabelSignal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphUpdate {
    /// Rebuilt KNN graph (unweighted) in the refined embedding space.
    pub graph: Graph,
    /// New per-node degree budgets.
    pub gamma: Vec<usize>,
    /// Edges that counted toward the budgets.
    pub surviving: Vec<(usize, usize)>,
    /// Nodes whose budget was raised from 0 to 1.
    pub clamped: Vec<usize>,
}

/// Edges kept by the update rule: endpoints with the same nonzero sign of
/// the denoised signal and adjacency strictly above `beta`. Opposite-sign
/// edges, weak edges and edges touching an exact zero are all dropped.
pub fn surviving_edges(
    g: &Graph,
    lap: &LaplacianSystem,
    denoised: &LabelSignal,
    beta: f64,
) -> Vec<(usize, usize)> {
    g.edges()
        .filter(|&(i, j)| {
            let (a, b) = (denoised.sign(i), denoised.sign(j));
            a != 0 && a == b && lap.adjacency(i, j) > beta
        })
        .collect()
}

/// Recounts each node's degree budget from its surviving edges (minimum 1)
/// and rebuilds the KNN structure on `embeddings` with those budgets.
pub fn graph_update(
    g: &Graph,
    lap: &LaplacianSystem,
    denoised: &LabelSignal,
    embeddings: ArrayView2<'_, f64>,
    beta: f64,
) -> Result<GraphUpdate> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Config(format!("beta must lie in (0, 1), got {beta}")));
    }
    let n = g.n_nodes();
    if denoised.len() != n || embeddings.nrows() != n {
        return Err(Error::Shape {
            expected: n,
            got: denoised.len().min(embeddings.nrows()),
        });
    }
    let surviving = surviving_edges(g, lap, denoised, beta);
    let mut gamma = vec![0usize; n];
    for &(i, j) in &surviving {
        gamma[i] += 1;
        gamma[j] += 1;
    }
    let mut clamped = Vec::new();
    for (i, budget) in gamma.iter_mut().enumerate() {
        if *budget == 0 {
            *budget = 1;
            clamped.push(i);
        }
    }
    if !clamped.is_empty() {
        log::debug!("graph update: {} nodes clamped to budget 1", clamped.len());
    }
    let graph = knn_edges(embeddings, &gamma)?;
    Ok(GraphUpdate {
        graph,
        gamma,
        surviving,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_laplacian;
    use ndarray::array;

    #[test]
    fn opposite_weak_edge_removed_and_strong_same_kept() {
        let g = Graph::from_weighted_edges(3, &[(0, 1, 0.05), (1, 2, 0.9)]);
        let lap = build_laplacian(&g);
        let y = LabelSignal(vec![0.4, -0.3, -0.8]);
        let kept = surviving_edges(&g, &lap, &y, 0.1);
        assert_eq!(kept, vec![(1, 2)]);
    }

    #[test]
    fn undefined_cases_are_removed() {
        // same sign but weak; opposite sign but strong
        let g = Graph::from_weighted_edges(3, &[(0, 1, 0.05), (1, 2, 0.9)]);
        let lap = build_laplacian(&g);
        let y = LabelSignal(vec![0.4, 0.3, -0.8]);
        assert!(surviving_edges(&g, &lap, &y, 0.1).is_empty());
    }

    #[test]
    fn all_reliable_edges_keep_budgets() {
        // Hand trace: path 0-1-2-3 on a line, all same sign, all weights 0.5.
        // Surviving counts = degrees = [1, 2, 2, 1]; rebuilding on the same
        // line coordinates with those budgets gives back the path plus the
        // OR-rule edges each interior node picks.
        let pts = array![[0.0], [1.0], [2.1], [3.3]];
        let g0 = knn_edges(pts.view(), &[1, 1, 1, 1]).unwrap();
        assert_eq!(g0.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 3)]);
        let g = g0.map_weights(|_, _, _| 0.5);
        let lap = build_laplacian(&g);
        let y = LabelSignal(vec![0.9; 4]);
        let up = graph_update(&g, &lap, &y, pts.view(), 0.1).unwrap();
        assert_eq!(up.gamma, vec![1, 2, 2, 1]);
        assert!(up.clamped.is_empty());
        // 1 picks {0, 2}; 2 picks {1, 0}? no: distances from 2 are 1.1 (to 1), 1.2 (to 3).
        assert_eq!(up.graph.selections(1), &[0, 2]);
        assert_eq!(up.graph.selections(2), &[1, 3]);
        assert_eq!(up.graph.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn isolated_budget_clamped() {
        let pts = array![[0.0], [1.0], [5.0]];
        let g = Graph::from_weighted_edges(3, &[(0, 1, 0.9), (1, 2, 0.9)]);
        let lap = build_laplacian(&g);
        let y = LabelSignal(vec![1.0, 1.0, -1.0]);
        let up = graph_update(&g, &lap, &y, pts.view(), 0.1).unwrap();
        assert_eq!(up.clamped, vec![2]);
        assert_eq!(up.gamma, vec![1, 1, 1]);
    }

    #[test]
    fn zero_signal_edges_excluded() {
        let g = Graph::from_weighted_edges(2, &[(0, 1, 0.9)]);
        let lap = build_laplacian(&g);
        assert!(surviving_edges(&g, &lap, &LabelSignal(vec![0.0, 0.5]), 0.1).is_empty());
    }

    #[test]
    fn bad_beta() {
        let pts = array![[0.0], [1.0]];
        let g = Graph::from_edges(2, &[(0, 1)]);
        let lap = build_laplacian(&g);
        let y = LabelSignal(vec![1.0, 1.0]);
        assert!(graph_update(&g, &lap, &y, pts.view(), 1.0).is_err());
    }
}
