//! Tabular binary-class datasets: CSV ingestion, deduplication,
//! standardization, stratified splitting and symmetric label noise.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub rate: f64,
    pub seed: u64,
}

/// Default 40/20/40 train/validation/test fractions.
pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.4, 0.2, 0.4);

#[derive(Debug, Clone)]
pub struct Dataset {
    /// Standardized features, one row per node.
    pub features: Array2<f64>,
    /// Ground truth in `{-1, +1}`. Only diagnostics read this.
    pub clean_labels: Vec<i8>,
    /// Working labels in `{-1, 0, +1}`; test nodes carry `0` once split.
    pub noisy_labels: Vec<i8>,
    pub split: Vec<Split>,
    raw: Array2<f64>,
    source: String,
    duplicates_removed: usize,
    dropped_columns: Vec<usize>,
    split_seed: Option<u64>,
    noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: String,
    pub n_nodes: usize,
    pub n_features: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub duplicates_removed: usize,
    pub dropped_columns: Vec<usize>,
    pub split_seed: Option<u64>,
    pub noise: Option<NoiseSpec>,
}

impl Dataset {
    /// Builds a dataset from raw rows and `{-1,+1}` labels. Duplicate rows are
    /// dropped (first occurrence kept), constant columns removed, and features
    /// standardized over all rows, which are tagged as training data until
    /// [`stratified_split`] is applied.
    pub fn from_rows(source: &str, rows: Vec<Vec<f64>>, labels: Vec<i8>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Shape {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        let n_raw = rows.len();
        let width = rows.first().map(Vec::len).unwrap_or(0);
        let mut seen = HashSet::new();
        let mut kept_rows = Vec::new();
        let mut kept_labels = Vec::new();
        for (row, label) in rows.into_iter().zip(labels) {
            if row.len() != width {
                return Err(Error::Shape {
                    expected: width,
                    got: row.len(),
                });
            }
            let key: Vec<u64> = row.iter().map(|v| canonical_bits(*v)).collect();
            if seen.insert(key) {
                kept_rows.push(row);
                kept_labels.push(label);
            }
        }
        let n = kept_rows.len();
        validate_two_classes(&kept_labels)?;

        let mut dropped = Vec::new();
        let mut keep_cols = Vec::new();
        for c in 0..width {
            let first = kept_rows[0][c];
            if kept_rows.iter().all(|r| r[c] == first) {
                dropped.push(c);
            } else {
                keep_cols.push(c);
            }
        }
        if keep_cols.is_empty() {
            return Err(Error::Validation("every feature column is constant".into()));
        }
        let mut raw = Array2::zeros((n, keep_cols.len()));
        for (i, row) in kept_rows.iter().enumerate() {
            for (k, &c) in keep_cols.iter().enumerate() {
                raw[[i, k]] = row[c];
            }
        }
        let mut ds = Dataset {
            features: raw.clone(),
            noisy_labels: kept_labels.clone(),
            clean_labels: kept_labels,
            split: vec![Split::Train; n],
            raw,
            source: source.to_string(),
            duplicates_removed: n_raw - n,
            dropped_columns: dropped,
            split_seed: None,
            noise: None,
        };
        ds.standardize();
        Ok(ds)
    }

    pub fn n_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn duplicates_removed(&self) -> usize {
        self.duplicates_removed
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            source: self.source.clone(),
            n_nodes: self.n_nodes(),
            n_features: self.n_features(),
            train: self.indices(Split::Train).len(),
            val: self.indices(Split::Val).len(),
            test: self.indices(Split::Test).len(),
            duplicates_removed: self.duplicates_removed,
            dropped_columns: self.dropped_columns.clone(),
            split_seed: self.split_seed,
            noise: self.noise,
        }
    }

    /// Writes the deduplicated, unstandardized rows with `{0,1}` labels.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.raw.ncols()).map(|c| format!("f{c}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (row, &label) in self.raw.rows().into_iter().zip(&self.clean_labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(if label > 0 { "1".into() } else { "0".into() });
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Keeps only the listed nodes (in the given order), re-standardizing.
    pub fn subset(&self, nodes: &[usize]) -> Result<Dataset> {
        let labels: Vec<i8> = nodes.iter().map(|&i| self.clean_labels[i]).collect();
        validate_two_classes(&labels)?;
        let mut ds = Dataset {
            features: self.raw.select(Axis(0), nodes),
            raw: self.raw.select(Axis(0), nodes),
            noisy_labels: nodes.iter().map(|&i| self.noisy_labels[i]).collect(),
            clean_labels: labels,
            split: nodes.iter().map(|&i| self.split[i]).collect(),
            source: self.source.clone(),
            duplicates_removed: self.duplicates_removed,
            dropped_columns: self.dropped_columns.clone(),
            split_seed: self.split_seed,
            noise: self.noise,
        };
        ds.standardize();
        Ok(ds)
    }

    /// Stratified random subsample of at most `max_nodes` nodes.
    pub fn stratified_subsample(&self, max_nodes: usize, seed: u64) -> Result<Dataset> {
        if max_nodes >= self.n_nodes() {
            return Ok(self.clone());
        }
        let frac = max_nodes as f64 / self.n_nodes() as f64;
        let mut rng = rng::rng(seed, &[rng::tag("subsample")]);
        let mut chosen = Vec::new();
        for class in [-1i8, 1] {
            let mut idx: Vec<usize> = (0..self.n_nodes())
                .filter(|&i| self.clean_labels[i] == class)
                .collect();
            idx.shuffle(&mut rng);
            let take = ((idx.len() as f64) * frac).round() as usize;
            chosen.extend_from_slice(&idx[..take.min(idx.len())]);
        }
        chosen.sort_unstable();
        self.subset(&chosen)
    }

    /// Per-column zero mean / unit variance with statistics from training nodes.
    fn standardize(&mut self) {
        let train: Vec<usize> = self.indices(Split::Train);
        let stats_rows = if train.len() >= 2 {
            self.raw.select(Axis(0), &train)
        } else {
            self.raw.clone()
        };
        let m = stats_rows.nrows() as f64;
        let mut features = self.raw.clone();
        for c in 0..self.raw.ncols() {
            let col = stats_rows.column(c);
            let mean = col.sum() / m;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            let std = var.sqrt();
            let scale = if std > 1e-12 { 1.0 / std } else { 1.0 };
            features.column_mut(c).mapv_inplace(|v| (v - mean) * scale);
        }
        self.features = features;
    }
}

fn canonical_bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

fn validate_two_classes(labels: &[i8]) -> Result<()> {
    let pos = labels.iter().any(|&l| l > 0);
    let neg = labels.iter().any(|&l| l < 0);
    if pos && neg {
        Ok(())
    } else {
        Err(Error::Validation(
            "labels must contain both classes".to_string(),
        ))
    }
}

/// Reads a comma-separated file whose last column is the label.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&path.display().to_string(), &text)
}

/// Parses CSV text with a header row. Labels may be `{0,1}` or `{-1,+1}`.
/// KEEL-style `@relation`/`@attribute`/`@data` headers are tolerated: the
/// attribute names become the header.
pub fn parse_csv(source: &str, text: &str) -> Result<Dataset> {
    let (body, line_offset) = strip_keel_header(text);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let header_len = reader.headers()?.len();
    if header_len < 2 {
        return Err(Error::Parse {
            line: line_offset + 1,
            message: "need at least one feature column and a label column".into(),
        });
    }
    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(0)
            + line_offset;
        if record.len() != header_len {
            return Err(Error::Parse {
                line,
                message: format!("expected {header_len} fields, found {}", record.len()),
            });
        }
        let mut row = Vec::with_capacity(header_len - 1);
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("field {} is not a number: {field:?}", k + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("field {} is not finite", k + 1),
                });
            }
            row.push(v);
        }
        let label = row.pop().expect("header_len >= 2");
        rows.push(row);
        raw_labels.push((line, label));
    }
    if rows.is_empty() {
        return Err(Error::Validation("no data rows".into()));
    }
    let zero_one = raw_labels.iter().all(|(_, l)| *l == 0.0 || *l == 1.0);
    let mut labels = Vec::with_capacity(raw_labels.len());
    for (line, l) in raw_labels {
        let mapped = if zero_one {
            if l == 0.0 { -1 } else { 1 }
        } else if l == -1.0 || l == 1.0 {
            l as i8
        } else {
            return Err(Error::Parse {
                line,
                message: format!("label {l} is not in {{0,1}} or {{-1,+1}}"),
            });
        };
        labels.push(mapped);
    }
    Dataset::from_rows(source, rows, labels)
}

/// Counts data rows without deduplication (header and KEEL lines excluded).
pub fn count_raw_rows(text: &str) -> usize {
    let (body, _) = strip_keel_header(text);
    body.lines().skip(1).filter(|l| !l.trim().is_empty()).count()
}

fn strip_keel_header(text: &str) -> (String, usize) {
    if !text.trim_start().starts_with('@') {
        return (text.to_string(), 0);
    }
    let mut names = Vec::new();
    let mut consumed = 0;
    for line in text.lines() {
        consumed += 1;
        let t = line.trim();
        let lower = t.to_ascii_lowercase();
        if lower.starts_with("@attribute") {
            if let Some(name) = t.split_whitespace().nth(1) {
                names.push(name.to_string());
            }
        } else if lower.starts_with("@data") {
            break;
        }
    }
    let mut body = names.join(",");
    body.push('\n');
    for line in text.lines().skip(consumed) {
        body.push_str(line);
        body.push('\n');
    }
    // The synthesized header stands in for the last `@` line.
    (body, consumed.saturating_sub(1))
}

/// Reassigns split membership with per-class proportions given by `fractions`.
/// Features are re-standardized with training-split statistics, and working
/// labels reset to the clean labels on train/val and `0` on test.
pub fn stratified_split(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(0.0..=1.0).contains(f)) || (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be nonnegative and sum to 1"
        )));
    }
    validate_two_classes(&ds.clean_labels)?;
    let mut out = ds.clone();
    let mut rng = rng::rng(seed, &[rng::tag("split")]);
    for class in [-1i8, 1] {
        let mut idx: Vec<usize> = (0..ds.n_nodes())
            .filter(|&i| ds.clean_labels[i] == class)
            .collect();
        idx.shuffle(&mut rng);
        let m = idx.len() as f64;
        let n_train = (m * ft).round() as usize;
        let n_val = ((m * fv).round() as usize).min(idx.len() - n_train);
        for (k, &i) in idx.iter().enumerate() {
            out.split[i] = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    for i in 0..out.n_nodes() {
        out.noisy_labels[i] = match out.split[i] {
            Split::Test => 0,
            _ => out.clean_labels[i],
        };
    }
    out.split_seed = Some(seed);
    out.noise = None;
    out.standardize();
    Ok(out)
}

/// Flips the sign of exactly `round(rate * |split|)` uniformly chosen working
/// labels in each of the train and validation splits. Test labels are zeroed.
pub fn inject_label_noise(ds: &Dataset, spec: NoiseSpec) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&spec.rate) || !spec.rate.is_finite() {
        return Err(Error::Config(format!(
            "noise rate {} outside [0, 1]",
            spec.rate
        )));
    }
    let mut out = ds.clone();
    for (k, split) in [Split::Train, Split::Val].into_iter().enumerate() {
        let mut idx = ds.indices(split);
        let flips = (spec.rate * idx.len() as f64).round() as usize;
        let mut rng = rng::rng(spec.seed, &[rng::tag("noise"), k as u64]);
        let (chosen, _) = idx.partial_shuffle(&mut rng, flips);
        for &i in chosen.iter() {
            out.noisy_labels[i] = -out.noisy_labels[i];
        }
    }
    for i in 0..out.n_nodes() {
        if out.split[i] == Split::Test {
            out.noisy_labels[i] = 0;
        }
    }
    out.noise = Some(spec);
    Ok(out)
}


/// Seeds of the data preparation steps, so a run can rebuild its exact split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepSeeds {
    pub subsample: u64,
    pub split: u64,
    pub noise: u64,
}

/// Optional stratified subsample, default split, then label noise.
pub fn prepare(raw: &Dataset, max_nodes: Option<usize>, seeds: PrepSeeds, noise_rate: f64) -> Result<Dataset> {
    let base = match max_nodes {
        Some(m) if m < raw.n_nodes() => raw.stratified_subsample(m, seeds.subsample)?,
        _ => raw.clone(),
    };
    let split = stratified_split(&base, DEFAULT_FRACTIONS, seeds.split)?;
    inject_label_noise(
        &split,
        NoiseSpec {
            rate: noise_rate,
            seed: seeds.noise,
        },
    )
}
