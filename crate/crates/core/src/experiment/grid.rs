use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::diagnostics::diagnostics;
use super::metrics::error_rate;
use super::report::Report;
use crate::dataio::{load_csv, prepare, Dataset, PrepSeeds};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::pipeline::{Ladder, Pipeline, PipelineConfig, Variant};
use crate::rng;

/// Instances kept from oversized datasets unless `full_size` is set.
pub const DESK_SCALE_LIMIT: usize = 6000;

fn default_noise() -> Vec<f64> {
    vec![0.0, 0.05, 0.10, 0.15, 0.20, 0.25]
}

fn default_repeats() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub datasets: Vec<String>,
    #[serde(default = "default_noise")]
    pub noise_levels: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub base_seed: u64,
    /// Run oversized datasets at full size instead of subsampling them.
    #[serde(default)]
    pub full_size: bool,
    /// Divide every stage's epoch count by this factor.
    #[serde(default)]
    pub epoch_divisor: Option<usize>,
    /// Also record residual noise and edge-weight proportions per cell.
    #[serde(default)]
    pub diagnostics: bool,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() || self.variants.is_empty() || self.noise_levels.is_empty() || self.repeats == 0 {
            return Err(Error::Config("grid needs datasets, variants, noise levels and repeats".into()));
        }
        if self.noise_levels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("noise levels must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let g: ExperimentGrid = serde_json::from_str(&text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for (d, name) in self.datasets.iter().enumerate() {
            for (k, &noise) in self.noise_levels.iter().enumerate() {
                for repeat in 0..self.repeats {
                    out.push(Cell {
                        dataset: name.clone(),
                        dataset_index: d,
                        noise_index: k,
                        noise,
                        repeat,
                    });
                }
            }
        }
        out
    }

    fn deepest(&self) -> Ladder {
        self.variants.iter().map(|v| v.ladder).max().unwrap_or(Ladder::G2).max(Ladder::G2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub dataset: String,
    pub dataset_index: usize,
    pub noise_index: usize,
    pub noise: f64,
    pub repeat: usize,
}

/// Seeds of one cell. Every variant of a cell sees the same split, the same
/// flipped labels and the same trained stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSeeds {
    pub subsample: u64,
    pub split: u64,
    pub noise: u64,
    pub pipeline: u64,
}

impl CellSeeds {
    pub fn new(base: u64, dataset: &str, noise: f64, repeat: usize) -> Self {
        let d = rng::tag(dataset);
        let r = repeat as u64;
        CellSeeds {
            subsample: rng::derive(base, &[d, rng::tag("subsample")]),
            split: rng::derive(base, &[d, r, rng::tag("split")]),
            noise: rng::derive(base, &[d, r, noise.to_bits(), rng::tag("noise")]),
            pipeline: rng::derive(base, &[d, r, noise.to_bits(), rng::tag("pipeline")]),
        }
    }
}

impl CellSeeds {
    pub fn prep(&self) -> PrepSeeds {
        PrepSeeds {
            subsample: self.subsample,
            split: self.split,
            noise: self.noise,
        }
    }
}

/// `dir/<id>.csv`.
pub fn dataset_path(data_dir: &Path, id: &str) -> PathBuf {
    data_dir.join(format!("{id}.csv"))
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub noise: f64,
    pub repeat: usize,
    pub variant: Variant,
    pub error_rate: Option<f64>,
    pub n_test: usize,
    pub gamma0: Option<usize>,
    pub residual_noise_r1: Option<f64>,
    pub rho_before_update: Option<f64>,
    pub rho_after_update: Option<f64>,
    pub train_seconds: f64,
    pub status: String,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn key(&self) -> (String, u64, usize, Variant) {
        (self.dataset.clone(), self.noise.to_bits(), self.repeat, self.variant)
    }
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Appends rows as cells finish; a single writer behind a lock.
struct RowSink {
    writer: Mutex<csv::Writer<std::fs::File>>,
    path: PathBuf,
}

impl RowSink {
    fn open(path: &Path) -> Result<Self> {
        let exists = path.exists() && std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let writer = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
        Ok(RowSink {
            writer: Mutex::new(writer),
            path: path.to_path_buf(),
        })
    }

    fn push(&self, rows: &[ResultRow]) -> Result<()> {
        let mut w = self.writer.lock().expect("row writer poisoned");
        for row in rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Trains the cell once at its deepest variant and evaluates every variant.
pub fn run_cell(grid: &ExperimentGrid, raw: &Dataset, cell: &Cell, exec: Exec) -> Vec<ResultRow> {
    let start = Instant::now();
    let row = |variant: Variant| ResultRow {
        dataset: cell.dataset.clone(),
        noise: cell.noise,
        repeat: cell.repeat,
        variant,
        error_rate: None,
        n_test: 0,
        gamma0: None,
        residual_noise_r1: None,
        rho_before_update: None,
        rho_after_update: None,
        train_seconds: 0.0,
        status: "ok".into(),
    };
    let result = (|| -> Result<Vec<ResultRow>> {
        let seeds = CellSeeds::new(grid.base_seed, &cell.dataset, cell.noise, cell.repeat);
        let cap = (!grid.full_size).then_some(DESK_SCALE_LIMIT);
        let ds = prepare(raw, cap, seeds.prep(), cell.noise)?;
        let mut cfg = PipelineConfig::preset(&cell.dataset)
            .with_seed(seeds.pipeline)
            .with_variant(Variant::new(grid.deepest(), false));
        if let Some(f) = grid.epoch_divisor {
            cfg = cfg.scaled_epochs(f);
        }
        let pipe = Pipeline::fit(&ds, &cfg, exec)?;
        let diag = if grid.diagnostics { Some(diagnostics(&pipe, &ds, exec)?) } else { None };
        let secs = start.elapsed().as_secs_f64();
        let mut rows = Vec::new();
        for &v in &grid.variants {
            let (test, pred) = pipe.predict_test(&ds, v, exec)?;
            let truth: Vec<i8> = test.iter().map(|&i| ds.clean_labels[i]).collect();
            let mut r = row(v);
            r.error_rate = Some(error_rate(&pred, &truth)?);
            r.n_test = test.len();
            r.gamma0 = Some(pipe.model.gamma0);
            r.train_seconds = secs;
            if let Some(d) = &diag {
                r.residual_noise_r1 = Some(d.residual_noise_r1);
                r.rho_before_update = d.rho_before_update;
                r.rho_after_update = d.rho_after_update;
            }
            rows.push(r);
        }
        Ok(rows)
    })();
    match result {
        Ok(rows) => rows,
        Err(e) => {
            log::error!("cell {} noise {} repeat {} failed: {e}", cell.dataset, cell.noise, cell.repeat);
            grid.variants
                .iter()
                .map(|&v| ResultRow {
                    status: format!("error: {e}"),
                    ..row(v)
                })
                .collect()
        }
    }
}

fn sort_key(grid: &ExperimentGrid, r: &ResultRow) -> (usize, usize, usize, usize) {
    let d = grid.datasets.iter().position(|x| *x == r.dataset).unwrap_or(usize::MAX);
    let n = grid
        .noise_levels
        .iter()
        .position(|x| x.to_bits() == r.noise.to_bits())
        .unwrap_or(usize::MAX);
    let v = grid.variants.iter().position(|x| *x == r.variant).unwrap_or(usize::MAX);
    (d, n, r.repeat, v)
}

/// Runs every cell not already completed in `out` and returns the report.
/// Rows are appended as cells finish; on completion the file is rewritten
/// in grid order with one row per key, so identical grids give identical
/// files.
pub fn run_grid(grid: &ExperimentGrid, data_dir: &Path, out: &Path, exec: Exec) -> Result<Report> {
    grid.validate()?;
    let previous = if out.exists() { read_rows(out)? } else { Vec::new() };
    let done: HashMap<_, _> = previous
        .iter()
        .filter(|r| r.is_ok())
        .map(|r| (r.key(), ()))
        .collect();
    let pending: Vec<Cell> = grid
        .cells()
        .into_iter()
        .filter(|c| {
            grid.variants.iter().any(|&v| {
                !done.contains_key(&(c.dataset.clone(), c.noise.to_bits(), c.repeat, v))
            })
        })
        .collect();
    log::info!("{} of {} cells pending", pending.len(), grid.cells().len());

    let mut raw: BTreeMap<String, Dataset> = BTreeMap::new();
    for id in &grid.datasets {
        if !raw.contains_key(id) && pending.iter().any(|c| &c.dataset == id) {
            raw.insert(id.clone(), load_csv(dataset_path(data_dir, id))?);
        }
    }
    let sink = RowSink::open(out)?;
    let results = exec.map_slice(&pending, |cell| -> Result<()> {
        let rows = run_cell(grid, &raw[&cell.dataset], cell, exec);
        sink.push(&rows)
    });
    drop(sink);
    for r in results {
        r?;
    }

    let mut latest: BTreeMap<(usize, usize, usize, usize), ResultRow> = BTreeMap::new();
    for row in read_rows(out)? {
        let key = sort_key(grid, &row);
        match latest.get(&key) {
            Some(old) if old.is_ok() && !row.is_ok() => {}
            _ => {
                latest.insert(key, row);
            }
        }
    }
    let rows: Vec<ResultRow> = latest.into_values().collect();
    write_rows(out, &rows)?;
    Ok(Report::from_rows(rows, Some(grid)))
}
