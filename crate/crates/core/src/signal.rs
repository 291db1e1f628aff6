use serde::{Deserialize, Serialize};

/// A real value per node in `[-1, 1]`. Zero means "unknown"; the sign is the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSignal(pub Vec<f64>);

impl LabelSignal {
    pub fn zeros(n: usize) -> Self {
        LabelSignal(vec![0.0; n])
    }

    pub fn from_labels(labels: &[i8]) -> Self {
        LabelSignal(labels.iter().map(|&l| l as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Sign of node `i`: `-1`, `0` (unknown or exactly zero) or `+1`.
    pub fn sign(&self, i: usize) -> i8 {
        sign_of(self.0[i])
    }

    pub fn signs(&self) -> Vec<i8> {
        self.0.iter().map(|&v| sign_of(v)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Restriction to the listed nodes, in the listed order.
    pub fn select(&self, nodes: &[usize]) -> LabelSignal {
        LabelSignal(nodes.iter().map(|&i| self.0[i]).collect())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

pub fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}
