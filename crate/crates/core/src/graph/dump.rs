use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Graph, SpectralCoefficient};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphHeader {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub gamma_min: usize,
    pub gamma_mean: f64,
    pub gamma_max: usize,
}

impl GraphHeader {
    pub fn of(g: &Graph) -> Self {
        let n = g.gamma.len().max(1);
        GraphHeader {
            n_nodes: g.n_nodes(),
            n_edges: g.n_edges(),
            gamma_min: g.gamma.iter().copied().min().unwrap_or(0),
            gamma_mean: g.gamma.iter().sum::<usize>() as f64 / n as f64,
            gamma_max: g.gamma.iter().copied().max().unwrap_or(0),
        }
    }
}

/// Writes `<stem>.csv` with `i,j,w` rows (one per undirected edge, `i < j`)
/// and `<stem>.json` with the header.
pub fn write_edge_list(g: &Graph, dir: &Path, stem: &str) -> Result<()> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["i", "j", "w"])?;
    for (i, j) in g.edges() {
        let wt = g.weight(i, j).unwrap_or(0.0);
        w.write_record([i.to_string(), j.to_string(), format!("{wt:.17e}")])?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let json_path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&GraphHeader::of(g))?;
    std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))
}

/// `lambda,abs_coef` rows in ascending eigenvalue order.
pub fn write_spectrum<W: Write>(spectrum: &[SpectralCoefficient], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "abs_coef"])?;
    for c in spectrum {
        w.write_record([format!("{:.12e}", c.lambda), format!("{:.12e}", c.magnitude)])?;
    }
    w.flush().map_err(|e| Error::io("<spectrum>", e))
}
