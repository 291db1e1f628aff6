use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{MetricNet, NetConfig};
use super::optim::Adam;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON checkpoint of one trained network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: NetConfig,
    pub net: MetricNet,
    pub optimizer: Option<Adam>,
    /// Seed of the stage stream plus epochs consumed; replaying the stage from
    /// these reproduces the sampling sequence.
    pub rng_seed: u64,
    pub epochs_done: usize,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_and_load() {
        let cfg = NetConfig::new(4, vec![6, 5], 3).with_skip(true);
        let net = MetricNet::new(&cfg, 2).unwrap();
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            optimizer: Some(Adam::new(&net, 0.0)),
            config: cfg,
            net,
            rng_seed: 17,
            epochs_done: 3,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.net, ck.net);
        assert_eq!(back.rng_seed, 17);
    }
}
