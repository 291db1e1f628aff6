use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Graph;

/// Symmetric adjacency `a_ij = max(w_ij e_ij, w_ji e_ji)` in CSR form with
/// degrees `d_i = sum_j a_ij` and the combinatorial Laplacian `L = D - A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianSystem {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    pub degree: Vec<f64>,
    pub d_max: f64,
}

pub fn build_laplacian(g: &Graph) -> LaplacianSystem {
    let n = g.n_nodes();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut degree = Vec::with_capacity(n);
    row_ptr.push(0);
    for i in 0..n {
        let mut d = 0.0;
        for &(j, w_ij) in g.neighbors(i) {
            let w_ji = g.weight(j, i).unwrap_or(0.0);
            let a = w_ij.max(w_ji);
            cols.push(j);
            vals.push(a);
            d += a;
        }
        degree.push(d);
        row_ptr.push(cols.len());
    }
    let d_max = degree.iter().copied().fold(0.0, f64::max);
    LaplacianSystem {
        row_ptr,
        cols,
        vals,
        degree,
        d_max,
    }
}

impl LaplacianSystem {
    pub fn n_nodes(&self) -> usize {
        self.degree.len()
    }

    /// `(j, a_ij)` for the nonzero entries of row `i`, ascending `j`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn adjacency(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// `out = L x`
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n_nodes() {
            let mut acc = self.degree[i] * x[i];
            for (j, a) in self.row(i) {
                acc -= a * x[j];
            }
            out[i] = acc;
        }
    }

    /// `out = (I + mu L) x`
    pub fn apply_regularized(&self, mu: f64, x: &[f64], out: &mut [f64]) {
        self.apply(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + mu * *o;
        }
    }

    /// `x^T L x`
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut lx = vec![0.0; x.len()];
        self.apply(x, &mut lx);
        x.iter().zip(&lx).map(|(a, b)| a * b).sum()
    }

    pub fn laplacian_dense(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            l[(i, i)] = self.degree[i];
            for (j, a) in self.row(i) {
                l[(i, j)] -= a;
            }
        }
        l
    }
}
