//! Sparse undirected graphs over embedded nodes: KNN construction, P/Q edge
//! partitioning, auto-sigma Gaussian weights, Laplacian assembly, the
//! degree-budget update and graph Fourier spectra.

mod dump;
mod knn;
mod laplacian;
mod spectrum;
mod update;
mod weights;

pub use dump::{write_edge_list, write_spectrum, GraphHeader};
pub use knn::{knn_edges, knn_edges_with};
pub use laplacian::{build_laplacian, LaplacianSystem};
pub use spectrum::{gft_spectrum, low_band_energy_fraction, SpectralCoefficient, DENSE_SPECTRUM_LIMIT};
pub use update::{graph_update, surviving_edges, GraphUpdate};
pub use weights::{
    assign_weights, auto_sigma, auto_sigma_detailed, partition_edges, sigma_margin, AutoSigma,
    EdgePartition,
    SigmaSource,
};

use serde::{Deserialize, Serialize};

/// Undirected graph with weights stored per directed entry.
///
/// `adj[i]` is sorted by neighbor index and holds `(j, w_ij)`; the edge
/// structure is symmetric (`j` in `adj[i]` iff `i` in `adj[j]`) and has no
/// self-loops. `selections[i]` keeps the KNN choices made by node `i` before
/// symmetrization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    adj: Vec<Vec<(usize, f64)>>,
    selections: Vec<Vec<usize>>,
    pub gamma: Vec<usize>,
}

impl Graph {
    /// Builds an unweighted (w = 1) graph from undirected edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let weighted: Vec<(usize, usize, f64)> = edges.iter().map(|&(i, j)| (i, j, 1.0)).collect();
        Self::from_weighted_edges(n, &weighted)
    }

    /// Self-loops are ignored; repeated edges keep the last weight.
    pub fn from_weighted_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i == j {
                continue;
            }
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for row in &mut adj {
            row.sort_by_key(|&(j, _)| j);
            let mut dedup: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, w) in row.iter() {
                match dedup.last_mut() {
                    Some(last) if last.0 == j => last.1 = w,
                    _ => dedup.push((j, w)),
                }
            }
            *row = dedup;
        }
        let gamma = adj.iter().map(Vec::len).collect();
        let selections = adj.iter().map(|r| r.iter().map(|&(j, _)| j).collect()).collect();
        Graph {
            adj,
            selections,
            gamma,
        }
    }

    pub(crate) fn from_selections(selections: Vec<Vec<usize>>, gamma: Vec<usize>) -> Self {
        let n = selections.len();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, sel) in selections.iter().enumerate() {
            for &j in sel {
                adj[i].push((j, 1.0));
                adj[j].push((i, 1.0));
            }
        }
        for row in &mut adj {
            row.sort_by_key(|&(j, _)| j);
            row.dedup_by_key(|e| e.0);
        }
        Graph {
            adj,
            selections,
            gamma,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    /// Directed KNN choices of node `i` (before the OR symmetrization).
    pub fn selections(&self, i: usize) -> &[usize] {
        &self.selections[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.weight(i, j).is_some()
    }

    /// `w_ij` if the edge exists.
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.adj[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .ok()
            .map(|pos| self.adj[i][pos].1)
    }

    /// Undirected edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .filter(move |&&(j, _)| j > i)
                .map(move |&(j, _)| (i, j))
        })
    }

    pub fn n_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Same structure with every weight replaced by `f(i, j, w_ij)`.
    pub fn map_weights<F: Fn(usize, usize, f64) -> f64>(&self, f: F) -> Graph {
        let adj = self
            .adj
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().map(|&(j, w)| (j, f(i, j, w))).collect())
            .collect();
        Graph {
            adj,
            selections: self.selections.clone(),
            gamma: self.gamma.clone(),
        }
    }

    /// Same structure with all weights set to 1.
    pub fn unweighted(&self) -> Graph {
        self.map_weights(|_, _, _| 1.0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.adj
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().all(|&(j, _)| j != i && self.has_edge(j, i)))
    }
}
