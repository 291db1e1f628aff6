use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::grid::{ExperimentGrid, ResultRow};
use crate::pipeline::{Ladder, Variant};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub dataset: String,
    pub variant: Variant,
    pub noise: f64,
    pub mean_error: f64,
    pub std_error: f64,
    pub repeats: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ResultRow>,
    pub summaries: Vec<CellSummary>,
    pub total_train_seconds: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn variant_rank(v: &Variant) -> (usize, bool) {
    (Ladder::ALL.iter().position(|l| *l == v.ladder).unwrap_or(0), v.sampling)
}

impl Report {
    /// Aggregates rows per (dataset, variant, noise). Datasets keep grid
    /// order when a grid is given; variants follow the ablation ladder.
    pub fn from_rows(rows: Vec<ResultRow>, grid: Option<&ExperimentGrid>) -> Self {
        let mut datasets: Vec<String> = grid.map(|g| g.datasets.clone()).unwrap_or_default();
        for r in &rows {
            if !datasets.contains(&r.dataset) {
                datasets.push(r.dataset.clone());
            }
        }
        let mut groups: BTreeMap<(usize, (usize, bool), u64), (Variant, f64, Vec<f64>, usize)> = BTreeMap::new();
        let mut seconds: BTreeMap<(String, u64, usize), f64> = BTreeMap::new();
        for r in &rows {
            let d = datasets.iter().position(|x| *x == r.dataset).unwrap_or(0);
            // noise keys sort numerically because nonnegative f64 bit patterns are monotone
            let e = groups
                .entry((d, variant_rank(&r.variant), r.noise.to_bits()))
                .or_insert((r.variant, r.noise, Vec::new(), 0));
            match r.error_rate {
                Some(err) if r.is_ok() => e.2.push(err),
                _ => e.3 += 1,
            }
            seconds.insert((r.dataset.clone(), r.noise.to_bits(), r.repeat), r.train_seconds);
        }
        let summaries = groups
            .into_iter()
            .map(|((d, _, _), (variant, noise, errs, failures))| {
                let (mean, std) = if errs.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&errs) };
                CellSummary {
                    dataset: datasets[d].clone(),
                    variant,
                    noise,
                    mean_error: mean,
                    std_error: std,
                    repeats: errs.len(),
                    failures,
                }
            })
            .collect();
        Report {
            rows,
            summaries,
            total_train_seconds: seconds.values().sum(),
        }
    }

    pub fn summary(&self, dataset: &str, variant: Variant, noise: f64) -> Option<&CellSummary> {
        self.summaries
            .iter()
            .find(|s| s.dataset == dataset && s.variant == variant && s.noise.to_bits() == noise.to_bits())
    }

    /// One table per dataset: variants as rows, noise levels as columns.
    pub fn error_table_markdown(&self) -> String {
        let mut out = String::new();
        let mut datasets: Vec<&str> = Vec::new();
        for s in &self.summaries {
            if !datasets.contains(&s.dataset.as_str()) {
                datasets.push(&s.dataset);
            }
        }
        for d in datasets {
            let cells: Vec<&CellSummary> = self.summaries.iter().filter(|s| s.dataset == d).collect();
            let mut noises: Vec<f64> = cells.iter().map(|s| s.noise).collect();
            noises.sort_by(f64::total_cmp);
            noises.dedup();
            let mut variants: Vec<Variant> = cells.iter().map(|s| s.variant).collect();
            variants.sort_by_key(variant_rank);
            variants.dedup();
            let _ = writeln!(out, "### {d}: classification error rate (%)\n");
            let header: Vec<String> = noises.iter().map(|n| format!("{:.0}%", n * 100.0)).collect();
            let _ = writeln!(out, "| variant | {} |", header.join(" | "));
            let _ = writeln!(out, "|---|{}", "---|".repeat(noises.len()));
            for v in variants {
                let vals: Vec<String> = noises
                    .iter()
                    .map(|n| match self.summary(d, v, *n) {
                        Some(s) if s.repeats > 0 => format!("{:.2} ± {:.2}", s.mean_error, s.std_error),
                        Some(_) => "failed".into(),
                        None => "-".into(),
                    })
                    .collect();
                let _ = writeln!(out, "| {v} | {} |", vals.join(" | "));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = self.error_table_markdown();
        let _ = writeln!(out, "Total training time: {:.1} s over {} result rows.", self.total_train_seconds, self.rows.len());
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.summaries {
            w.serialize(s).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(variant: &str, noise: f64, repeat: usize, err: f64) -> ResultRow {
        ResultRow {
            dataset: "toy".into(),
            noise,
            repeat,
            variant: variant.parse().unwrap(),
            error_rate: Some(err),
            n_test: 10,
            gamma0: Some(4),
            residual_noise_r1: None,
            rho_before_update: None,
            rho_after_update: None,
            train_seconds: 1.0,
            status: "ok".into(),
        }
    }

    #[test]
    fn aggregates_in_ladder_order() {
        let rows = vec![
            row("G-12", 0.0, 0, 10.0),
            row("G-12", 0.0, 1, 20.0),
            row("DML-KNN", 0.0, 0, 30.0),
            row("DML-KNN", 0.25, 0, 40.0),
        ];
        let rep = Report::from_rows(rows, None);
        assert_eq!(rep.summaries[0].variant, Variant::DML_KNN);
        let s = rep.summary("toy", Variant::G12, 0.0).unwrap();
        assert_eq!(s.mean_error, 15.0);
        assert!((s.std_error - 50f64.sqrt()).abs() < 1e-12);
        let md = rep.error_table_markdown();
        assert!(md.find("DML-KNN").unwrap() < md.find("G-12").unwrap());
        assert!(md.contains("| G-12 | 15.00 ± 7.07 | - |"));
        assert!(rep.to_csv().starts_with("dataset,variant,noise,mean_error"));
    }
}
