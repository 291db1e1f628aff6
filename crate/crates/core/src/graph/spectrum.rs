use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::LaplacianSystem;
use crate::error::{Error, Result};
use crate::signal::LabelSignal;

/// Largest graph handled by the dense eigendecomposition.
pub const DENSE_SPECTRUM_LIMIT: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralCoefficient {
    pub lambda: f64,
    pub magnitude: f64,
}

/// Graph Fourier transform: `|u_l^T s|` for each orthonormal Laplacian
/// eigenvector `u_l`, sorted by ascending eigenvalue.
pub fn gft_spectrum(lap: &LaplacianSystem, signal: &LabelSignal) -> Result<Vec<SpectralCoefficient>> {
    let n = lap.n_nodes();
    if n > DENSE_SPECTRUM_LIMIT {
        return Err(Error::TooLarge {
            nodes: n,
            limit: DENSE_SPECTRUM_LIMIT,
        });
    }
    if signal.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: signal.len(),
        });
    }
    let eig = SymmetricEigen::new(lap.laplacian_dense());
    let s = DVector::from_column_slice(signal.values());
    let mut out: Vec<SpectralCoefficient> = (0..n)
        .map(|l| SpectralCoefficient {
            lambda: eig.eigenvalues[l],
            magnitude: eig.eigenvectors.column(l).dot(&s).abs(),
        })
        .collect();
    out.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(out)
}

/// Share of the signal energy carried by the lowest `fraction` of the
/// eigenvalues (by rank).
pub fn low_band_energy_fraction(spectrum: &[SpectralCoefficient], fraction: f64) -> f64 {
    let k = ((spectrum.len() as f64) * fraction).round() as usize;
    let total: f64 = spectrum.iter().map(|c| c.magnitude * c.magnitude).sum();
    if total == 0.0 {
        return 0.0;
    }
    spectrum[..k].iter().map(|c| c.magnitude * c.magnitude).sum::<f64>() / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_laplacian, Graph};
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn constant_signal_sits_at_zero() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
        let spec = gft_spectrum(&build_laplacian(&g), &LabelSignal(vec![0.5; 4])).unwrap();
        assert!(spec[0].lambda.abs() < 1e-12);
        assert!((spec[0].magnitude - 1.0).abs() < 1e-12);
        assert!(spec[1..].iter().all(|c| c.magnitude < 1e-12));
    }

    #[test]
    fn two_node_alternating_signal() {
        let w = 0.3;
        let g = Graph::from_weighted_edges(2, &[(0, 1, w)]);
        let spec = gft_spectrum(&build_laplacian(&g), &LabelSignal(vec![1.0, -1.0])).unwrap();
        assert!(spec[0].magnitude < 1e-12);
        assert!((spec[1].lambda - 2.0 * w).abs() < 1e-12);
        assert!((spec[1].magnitude - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn parseval() {
        let mut r = rng::rng(3, &[]);
        for _ in 0..10 {
            let n = 30;
            let edges: Vec<(usize, usize, f64)> = (0..90)
                .map(|_| (r.gen_range(0..n), r.gen_range(0..n), r.gen_range(0.0..1.0)))
                .collect();
            let lap = build_laplacian(&Graph::from_weighted_edges(n, &edges));
            let s = LabelSignal((0..n).map(|_| r.gen_range(-1.0..1.0)).collect());
            let spec = gft_spectrum(&lap, &s).unwrap();
            let energy: f64 = spec.iter().map(|c| c.magnitude * c.magnitude).sum();
            assert!((energy - s.norm_sq()).abs() < 1e-6);
        }
    }

    #[test]
    fn refuses_large_graphs() {
        let lap = build_laplacian(&Graph::from_edges(DENSE_SPECTRUM_LIMIT + 1, &[]));
        let s = LabelSignal::zeros(DENSE_SPECTRUM_LIMIT + 1);
        assert!(matches!(gft_spectrum(&lap, &s), Err(Error::TooLarge { .. })));
    }
}
