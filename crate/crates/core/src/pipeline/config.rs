use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glr::GlrParams;
use crate::metricnet::NetConfig;

/// Stage sequence of a pipeline variant, in ablation-ladder order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ladder {
    /// KNN vote on G-Net embeddings; no graph filtering.
    DmlKnn,
    /// G-Net graph, unweighted, one GLR pass.
    G2,
    /// G-Net graph weighted by W-Net(1), one GLR pass.
    G12,
    /// As `G12`, then U-Net graph update and a GLR pass on the unweighted update.
    G1232,
    /// Full two-iteration pipeline with W-Net(2) weights on the updated graph.
    G12312,
}

impl Ladder {
    pub const ALL: [Ladder; 5] = [Ladder::DmlKnn, Ladder::G2, Ladder::G12, Ladder::G1232, Ladder::G12312];

    pub fn needs_wnet1(self) -> bool {
        self >= Ladder::G12
    }

    pub fn needs_unet(self) -> bool {
        self >= Ladder::G1232
    }

    pub fn needs_wnet2(self) -> bool {
        self == Ladder::G12312
    }

    /// Number of GLR passes executed by the variant.
    pub fn glr_passes(self) -> usize {
        match self {
            Ladder::DmlKnn => 0,
            Ladder::G2 | Ladder::G12 => 1,
            Ladder::G1232 | Ladder::G12312 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variant {
    pub ladder: Ladder,
    /// Rank-sampled reference sets at prediction time.
    pub sampling: bool,
}

impl Variant {
    pub const fn new(ladder: Ladder, sampling: bool) -> Self {
        Variant { ladder, sampling }
    }

    pub const DML_KNN: Variant = Variant::new(Ladder::DmlKnn, false);
    pub const G12: Variant = Variant::new(Ladder::G12, false);
    pub const FULL: Variant = Variant::new(Ladder::G12312, false);
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.ladder {
            Ladder::DmlKnn => "DML-KNN",
            Ladder::G2 => "G-2",
            Ladder::G12 => "G-12",
            Ladder::G1232 => "G-1232",
            Ladder::G12312 => "G-12312",
        };
        f.write_str(base)?;
        if self.sampling {
            f.write_str("s")?;
        }
        Ok(())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let t = t.strip_prefix("DYNGLR-").unwrap_or(&t);
        if t == "DML-KNN" || t == "DMLKNN" {
            return Ok(Variant::DML_KNN);
        }
        let (body, sampling) = match t.strip_suffix('S') {
            Some(b) => (b, true),
            None => (t, false),
        };
        let ladder = match body.strip_prefix("G-").or_else(|| body.strip_prefix('G')) {
            Some("2") => Ladder::G2,
            Some("12") => Ladder::G12,
            Some("1232") => Ladder::G1232,
            Some("12312") => Ladder::G12312,
            _ => return Err(Error::Config(format!("unknown variant '{s}'"))),
        };
        Ok(Variant { ladder, sampling })
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Width and schedule of one trained stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub hidden: Vec<usize>,
    pub lr_start: f64,
    pub lr_end: f64,
    pub epochs: usize,
    #[serde(default)]
    pub skip: bool,
    #[serde(default)]
    pub weight_decay: f64,
    /// Overrides `BatchConfig::triplets_per_graph` for this stage.
    #[serde(default)]
    pub triplets: Option<usize>,
}

impl StageConfig {
    pub fn net(&self, input_dim: usize, embedding_dim: usize) -> NetConfig {
        NetConfig::new(input_dim, self.hidden.clone(), embedding_dim)
            .with_schedule(self.lr_start, self.lr_end, self.epochs)
            .with_skip(self.skip)
            .with_weight_decay(self.weight_decay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub graphs_per_epoch: usize,
    pub labeled_per_graph: usize,
    pub unlabeled_per_graph: usize,
    pub triplets_per_graph: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            graphs_per_epoch: 16,
            labeled_per_graph: 80,
            unlabeled_per_graph: 20,
            triplets_per_graph: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub margin_e: f64,
    pub margin_w: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub beta: f64,
    pub glr: GlrParams,
    pub batch: BatchConfig,
    pub embedding_dim: usize,
    pub unet_neighbors: usize,
    pub rank_sample_k: usize,
    pub rank_sample_batches: usize,
    /// Shuffled passes over the training set when scoring nodes for rank sampling.
    pub rank_sample_rounds: usize,
    pub gamma_candidates: Vec<usize>,
    /// Test nodes inserted per prediction graph.
    pub predict_chunk: usize,
    pub gnet: StageConfig,
    pub wnet1: StageConfig,
    pub unet: StageConfig,
    pub wnet2: StageConfig,
    pub seed: u64,
}

fn stage(hidden: &[usize], lr: (f64, f64), epochs: usize) -> StageConfig {
    StageConfig {
        hidden: hidden.to_vec(),
        lr_start: lr.0,
        lr_end: lr.1,
        epochs,
        skip: false,
        weight_decay: 0.0,
        triplets: None,
    }
}

impl PipelineConfig {
    /// Shared defaults with the given stage widths `rho` and schedules.
    fn with_stages(rho: [usize; 5], stages: [((f64, f64), usize); 4]) -> Self {
        let gw = [rho[1], rho[2]];
        let u = [rho[3], (rho[3] / 2).max(1)];
        PipelineConfig {
            variant: Variant::FULL,
            margin_e: 10.0,
            margin_w: 10.0,
            eps1: 0.6,
            eps2: 0.15,
            beta: 0.1,
            glr: GlrParams::default(),
            batch: BatchConfig::default(),
            embedding_dim: 16,
            unet_neighbors: 6,
            rank_sample_k: 480,
            rank_sample_batches: 6,
            rank_sample_rounds: 4,
            gamma_candidates: (1..=10).map(|k| 2 * k).collect(),
            predict_chunk: 20,
            gnet: StageConfig {
                triplets: Some(20),
                ..stage(&gw, stages[0].0, stages[0].1)
            },
            wnet1: StageConfig {
                skip: false,
                ..stage(&gw, stages[1].0, stages[1].1)
            },
            unet: stage(&u, stages[2].0, stages[2].1),
            wnet2: StageConfig {
                skip: true,
                ..stage(&gw, stages[3].0, stages[3].1)
            },
            seed: 0,
        }
    }

    pub fn phoneme() -> Self {
        Self::with_stages(
            [1, 256, 64, 256, 6],
            [((0.02, 0.01), 160), ((0.02, 0.01), 320), ((0.002, 0.001), 120), ((0.01, 0.002), 60)],
        )
    }

    pub fn magic() -> Self {
        Self::with_stages(
            [1, 128, 32, 128, 4],
            [((0.02, 0.01), 160), ((0.02, 0.01), 320), ((0.002, 0.001), 180), ((0.01, 0.002), 40)],
        )
    }

    pub fn spambase() -> Self {
        Self::with_stages(
            [2, 32, 32, 64, 6],
            [((0.02, 0.01), 60), ((0.02, 0.012), 80), ((0.002, 0.001), 100), ((0.02, 0.01), 40)],
        )
    }

    /// Preset by dataset id; unknown ids get the Spambase widths, which are
    /// the smallest.
    pub fn preset(dataset: &str) -> Self {
        match dataset.to_ascii_lowercase().as_str() {
            "phoneme" => Self::phoneme(),
            "magic" => Self::magic(),
            _ => Self::spambase(),
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Divides every stage's epoch count by `factor` (minimum 2 epochs).
    pub fn scaled_epochs(mut self, factor: usize) -> Self {
        for s in [&mut self.gnet, &mut self.wnet1, &mut self.unet, &mut self.wnet2] {
            s.epochs = (s.epochs / factor.max(1)).max(2);
        }
        self
    }

    pub fn stage(&self, name: &str) -> Option<&StageConfig> {
        match name {
            "gnet" => Some(&self.gnet),
            "wnet1" => Some(&self.wnet1),
            "unet" => Some(&self.unet),
            "wnet2" => Some(&self.wnet2),
            _ => None,
        }
    }

    pub fn nodes_per_graph(&self) -> usize {
        self.batch.labeled_per_graph + self.batch.unlabeled_per_graph
    }

    /// Input width of the U-Net: features, own encoded label and the label
    /// differences to each neighbour.
    pub fn unet_input_dim(&self, n_features: usize) -> usize {
        n_features + 2 + 2 * self.unet_neighbors
    }

    pub fn validate(&self) -> Result<()> {
        self.glr.validate()?;
        let positive = [self.margin_e, self.margin_w];
        if positive.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::Config("margins must be positive".into()));
        }
        if !(self.eps1 >= 0.0 && self.eps2 >= 0.0) {
            return Err(Error::Config("attention thresholds must be nonnegative".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        let b = &self.batch;
        if b.graphs_per_epoch == 0 || b.labeled_per_graph < 2 || b.triplets_per_graph == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if self.rank_sample_batches == 0 || self.rank_sample_k % self.rank_sample_batches != 0 {
            return Err(Error::Config(format!(
                "rank_sample_k ({}) must be a multiple of rank_sample_batches ({})",
                self.rank_sample_k, self.rank_sample_batches
            )));
        }
        if self.gamma_candidates.is_empty() || self.gamma_candidates.contains(&0) {
            return Err(Error::Config("gamma candidates must be nonempty and positive".into()));
        }
        if self.embedding_dim == 0 || self.unet_neighbors == 0 || self.predict_chunk == 0 {
            return Err(Error::Config("embedding_dim, unet_neighbors and predict_chunk must be positive".into()));
        }
        for (name, s) in [("gnet", &self.gnet), ("wnet1", &self.wnet1), ("unet", &self.unet), ("wnet2", &self.wnet2)] {
            s.net(4, self.embedding_dim)
                .validate()
                .map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        Ok(())
    }
}
