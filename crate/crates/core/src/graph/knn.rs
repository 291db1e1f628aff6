use std::cmp::Ordering;

use ndarray::ArrayView2;

use super::Graph;
use crate::error::{Error, Result};
use crate::par::Exec;

/// KNN edge structure: `e_ij = 1` iff `j` is among the `gamma[i]` nearest
/// nodes to `i` (squared Euclidean) or `i` is among `j`'s. Distance ties go
/// to the smaller node index. Budgets above `N - 1` are clamped.
pub fn knn_edges(embeddings: ArrayView2<'_, f64>, gamma: &[usize]) -> Result<Graph> {
    knn_edges_with(embeddings, gamma, Exec::default())
}

pub fn knn_edges_with(embeddings: ArrayView2<'_, f64>, gamma: &[usize], exec: Exec) -> Result<Graph> {
    let n = embeddings.nrows();
    if n < 2 {
        return Err(Error::Validation(format!("KNN graph needs at least 2 nodes, got {n}")));
    }
    if gamma.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: gamma.len(),
        });
    }
    if let Some(i) = gamma.iter().position(|&g| g == 0) {
        return Err(Error::Config(format!("degree budget of node {i} is zero")));
    }
    let selections = exec.map_range(n, |i| {
        let xi = embeddings.row(i);
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d: f64 = xi
                    .iter()
                    .zip(embeddings.row(j).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d, j)
            })
            .collect();
        let k = gamma[i].min(n - 1);
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
        };
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, cmp);
            cand.truncate(k);
        }
        cand.sort_by(cmp);
        cand.into_iter().map(|(_, j)| j).collect::<Vec<_>>()
    });
    Ok(Graph::from_selections(selections, gamma.to_vec()))
}
