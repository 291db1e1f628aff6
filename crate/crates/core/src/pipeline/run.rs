use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{PipelineConfig, Variant};
use super::passes::{Model, PassInput};
use super::predict::predict;
use super::rank::rank_sampling;
use super::stages::{fit, StageReport};
use super::state::{diagnostic_state, labeled_nodes, PipelineState};
use crate::dataio::{load_csv, prepare, Dataset, PrepSeeds, Split};
use crate::error::{Error, Result};
use crate::metricnet::{Checkpoint, MetricNet, CHECKPOINT_VERSION};
use crate::par::Exec;

/// A trained pipeline with its cached G-Net features.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub model: Model,
    pub inputs: PassInput,
    pub reports: Vec<StageReport>,
}

impl Pipeline {
    /// Trains every stage required by `config.variant`.
    pub fn fit(ds: &Dataset, config: &PipelineConfig, exec: Exec) -> Result<Self> {
        let (model, reports) = fit(ds, config, config.variant.ladder.max(super::Ladder::G2), exec)?;
        Self::from_model(ds, config.clone(), model, reports)
    }

    pub fn from_model(ds: &Dataset, config: PipelineConfig, model: Model, reports: Vec<StageReport>) -> Result<Self> {
        let inputs = PassInput::new(&model.gnet, ds.features.clone())?;
        Ok(Pipeline {
            config,
            model,
            inputs,
            reports,
        })
    }

    /// Rank-sampled references for `variant` (empty for non-sampling variants).
    pub fn references(&self, ds: &Dataset, variant: Variant, exec: Exec) -> Result<Option<Vec<usize>>> {
        if !variant.sampling {
            return Ok(None);
        }
        let scores = rank_sampling(&self.model, ds, &self.inputs, variant.ladder, self.config.rank_sample_k, &self.config, exec)?;
        Ok(Some(scores.selected))
    }

    pub fn predict(&self, ds: &Dataset, nodes: &[usize], variant: Variant, exec: Exec) -> Result<Vec<i8>> {
        let refs = self.references(ds, variant, exec)?;
        predict(&self.model, ds, &self.inputs, nodes, variant, refs.as_deref(), &self.config, exec)
    }

    pub fn predict_test(&self, ds: &Dataset, variant: Variant, exec: Exec) -> Result<(Vec<usize>, Vec<i8>)> {
        let test = ds.indices(Split::Test);
        let pred = self.predict(ds, &test, variant, exec)?;
        Ok((test, pred))
    }

    /// State of the deepest trained variant on the training/validation graph.
    pub fn state(&self, ds: &Dataset) -> Result<PipelineState> {
        diagnostic_state(&self.model, ds, &self.inputs, &labeled_nodes(ds), self.model.depth(), &self.config)
    }
}

pub const RUN_MANIFEST_VERSION: u32 = 1;

/// Everything needed to rebuild a trained run and its dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub dataset: String,
    pub data_path: PathBuf,
    pub max_nodes: Option<usize>,
    pub seeds: PrepSeeds,
    pub noise_rate: f64,
    pub config: PipelineConfig,
    pub gamma0: usize,
    pub stages: Vec<StageReport>,
    /// Stage name to checkpoint file, relative to the manifest.
    pub checkpoints: BTreeMap<String, String>,
    pub state_snapshots: Vec<String>,
    pub test_error: Option<f64>,
}

fn stage_net<'a>(model: &'a Model, stage: &str) -> Option<&'a MetricNet> {
    match stage {
        "gnet" => Some(&model.gnet),
        "wnet1" => model.wnet1.as_ref(),
        "unet" => model.unet.as_ref(),
        "wnet2" => model.wnet2.as_ref(),
        _ => None,
    }
}

impl RunManifest {
    /// Writes checkpoints (and optionally state snapshots) into `dir` and
    /// the manifest as `dir/manifest.json`.
    pub fn write(mut self, dir: &Path, pipeline: &Pipeline, state: Option<&PipelineState>) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.checkpoints.clear();
        for rep in &pipeline.reports {
            let Some(net) = stage_net(&pipeline.model, &rep.stage) else { continue };
            let file = format!("{}.ckpt.json", rep.stage);
            let ck = Checkpoint {
                version: CHECKPOINT_VERSION,
                config: rep.net_config.clone().ok_or_else(|| Error::Usage("stage report lacks its net config".into()))?,
                net: net.clone(),
                optimizer: rep.optimizer.clone(),
                rng_seed: rep.seed,
                epochs_done: rep.epoch_losses.len(),
            };
            ck.save(&dir.join(&file))?;
            self.checkpoints.insert(rep.stage.clone(), file);
        }
        self.state_snapshots.clear();
        if let Some(state) = state {
            for it in &state.iterations {
                let file = format!("state_r{}.json", it.r);
                let path = dir.join(&file);
                let text = serde_json::to_string(it)?;
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
                self.state_snapshots.push(file);
            }
        }
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text)?;
        if m.version != RUN_MANIFEST_VERSION {
            return Err(Error::Validation(format!("run manifest version {} unsupported", m.version)));
        }
        Ok(m)
    }

    /// Rebuilds the run's dataset (subsample, split and flipped labels).
    pub fn dataset(&self) -> Result<Dataset> {
        prepare(&load_csv(&self.data_path)?, self.max_nodes, self.seeds, self.noise_rate)
    }

    /// Reassembles the trained model from the checkpoints next to `path`.
    pub fn load_model(&self, path: &Path) -> Result<Model> {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let load = |stage: &str| -> Result<Option<MetricNet>> {
            match self.checkpoints.get(stage) {
                Some(f) => Ok(Some(Checkpoint::load(&dir.join(f))?.net)),
                None => Ok(None),
            }
        };
        Ok(Model {
            gnet: load("gnet")?.ok_or_else(|| Error::Validation("run has no G-Net checkpoint".into()))?,
            gamma0: self.gamma0,
            wnet1: load("wnet1")?,
            unet: load("unet")?,
            wnet2: load("wnet2")?,
        })
    }
}
