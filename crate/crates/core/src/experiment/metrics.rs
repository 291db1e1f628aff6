use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::signal::LabelSignal;

/// Percentage of mismatched labels.
pub fn error_rate(pred: &[i8], truth: &[i8]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Validation("error rate of an empty set".into()));
    }
    let wrong = pred.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(100.0 * wrong as f64 / truth.len() as f64)
}

/// Total weight on opposite-label edges over the number of positive-weight
/// edges. Each undirected edge counts once.
pub fn mean_edge_weight_proportion(g: &Graph, labels: &[i8]) -> f64 {
    let mut opposite = 0.0;
    let mut support = 0usize;
    for (i, j) in g.edges() {
        let w = g.weight(i, j).unwrap_or(0.0);
        if w > 0.0 {
            support += 1;
            if labels[i] != labels[j] {
                opposite += w;
            }
        }
    }
    if support == 0 {
        0.0
    } else {
        opposite / support as f64
    }
}

/// Fraction of masked nodes whose denoised sign disagrees with the clean
/// label; zeros count as wrong.
pub fn residual_noise(denoised: &LabelSignal, clean: &[i8], mask: &[bool]) -> f64 {
    let mut total = 0usize;
    let mut wrong = 0usize;
    for i in 0..clean.len() {
        if mask[i] {
            total += 1;
            if denoised.sign(i) != clean[i] {
                wrong += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        wrong as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_rates() {
        assert_eq!(error_rate(&[1, -1], &[1, -1]).unwrap(), 0.0);
        assert_eq!(error_rate(&[-1, 1], &[1, -1]).unwrap(), 100.0);
        assert_eq!(error_rate(&[1, 1, 1, -1], &[1, 1, 1, 1]).unwrap(), 25.0);
        assert!(error_rate(&[1], &[1, 1]).is_err());
    }

    #[test]
    fn edge_weight_proportion() {
        let g = Graph::from_weighted_edges(3, &[(0, 1, 0.5), (1, 2, 0.8)]);
        assert!((mean_edge_weight_proportion(&g, &[1, 1, -1]) - 0.4).abs() < 1e-12);
        assert_eq!(mean_edge_weight_proportion(&g, &[1, 1, 1]), 0.0);
        let scaled = g.map_weights(|_, _, w| 0.5 * w);
        let a = mean_edge_weight_proportion(&scaled, &[1, 1, -1]);
        assert!((a - 0.5 * 0.4).abs() < 1e-12);
    }

    #[test]
    fn complete_same_label_graph() {
        let g = Graph::from_weighted_edges(3, &[(0, 1, 0.3), (1, 2, 0.6), (0, 2, 0.9)]);
        assert_eq!(mean_edge_weight_proportion(&g, &[-1, -1, -1]), 0.0);
    }

    #[test]
    fn residuals() {
        let clean = vec![1i8; 10];
        let mask = vec![true; 10];
        assert_eq!(residual_noise(&LabelSignal(vec![0.4; 10]), &clean, &mask), 0.0);
        let mut y = vec![0.4; 10];
        y[3] = -0.1;
        assert!((residual_noise(&LabelSignal(y.clone()), &clean, &mask) - 0.1).abs() < 1e-12);
        y[4] = 0.0;
        assert!((residual_noise(&LabelSignal(y), &clean, &mask) - 0.2).abs() < 1e-12);
        let mut flipped = vec![1.0; 100];
        for v in flipped.iter_mut().take(25) {
            *v = -1.0;
        }
        assert_eq!(residual_noise(&LabelSignal(flipped), &vec![1; 100], &vec![true; 100]), 0.25);
    }
}
