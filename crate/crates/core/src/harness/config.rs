//! TOML experiment file. Every section is optional; missing keys take their
//! defaults. Unknown keys are rejected so typos surface as errors.
//!
//! ```toml
//! seed = 7                      # run seed; every stream below derives from it
//!
//! [data]                        # gen-data, tradeoff
//! classes = ["sphere", "box", "cone", "stairs"]
//! points_per_cloud = 512
//! train_count = 100             # per class
//! test_count = 60               # per class
//! noise_sigma = 0.005
//! format = "text"               # or "binary"
//! # seed = 3                    # set to pin the dataset independently of the run seed
//!
//! [train]                       # train, tradeoff
//! epochs = 20
//! batch_size = 16
//! learning_rate = 0.05
//! point_widths = [32, 64]
//! head_widths = [32]
//! augment = true
//! p_rotation = 0.0
//! # manifest = "out/data/manifest.json"
//! # checkpoint = "out/model.ckpt"
//!
//! [attack_tsi]
//! samples = [1, 2, 10]
//! ranges = ["pi", "pi/8", "pi/64"]  # half-widths of [-e, e]
//! divisions = 4
//! family = "rotation"           # or "reflection"
//! n_clouds = 200
//! budget_mode = "nested"        # or "independent"
//!
//! [attack_ctri]
//! k_values = [7, 50, 1000]
//! ranges = ["pi"]
//! max_samples = 50              # warm-start budget
//! eta = 0.0005
//! lambda = 0.001
//! kappa = 0.0
//! target = "second_logit"       # or { fixed = 2 }
//! n_clouds = 200
//!
//! [transfer]
//! checkpoints = ["out/a.ckpt", "out/b.ckpt"]
//! baseline_samples = 1
//! [transfer.attack]
//! k_values = [50]
//! ranges = ["pi"]
//! lambda = 1.0
//!
//! [tradeoff]
//! repeats = 3
//! tsi_samples = 10
//! [tradeoff.attack]
//! k_values = [50]
//! ranges = ["pi"]
//!
//! [heatmap]
//! # input = "out/tsi/bandit/pi.json"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CtriEvalConfig, HarnessError, TradeoffConfig, TransferConfig, TsiEvalConfig};
use crate::model::TrainConfig;
use crate::pointcloud::{CloudFormat, ShapeDatasetSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    #[serde(flatten)]
    pub spec: ShapeDatasetSpec,
    pub format: CloudFormat,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            spec: ShapeDatasetSpec::default(),
            format: CloudFormat::Text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(flatten)]
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TsiSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(flatten)]
    pub eval: TsiEvalConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CtriSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(flatten)]
    pub eval: CtriEvalConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    #[serde(flatten)]
    pub eval: TransferConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TradeoffSection {
    #[serde(flatten)]
    pub eval: TradeoffConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub data: DataSection,
    pub train: TrainSection,
    pub attack_tsi: TsiSection,
    pub attack_ctri: CtriSection,
    pub transfer: TransferSection,
    pub tradeoff: TradeoffSection,
    pub heatmap: HeatmapSection,
    /// Whether `[data]` and `[train]` pinned their own seeds.
    #[serde(skip)]
    pub explicit_data_seed: bool,
    #[serde(skip)]
    pub explicit_train_seed: bool,
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, HarnessError> {
        let raw: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| HarnessError::Config(format!("{origin}: {e}")))?;
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(format!("{origin}: {e}")))?;
        let echoed = toml::Table::try_from(&cfg).map_err(|e| HarnessError::Config(format!("{origin}: {e}")))?;
        if let Some(key) = unknown_key(&raw, &echoed, "") {
            return Err(HarnessError::Config(format!("{origin}: unknown key '{key}'")));
        }
        let has_seed = |section: &str| {
            raw.get(section)
                .and_then(|v| v.as_table())
                .is_some_and(|t| t.contains_key("seed"))
        };
        cfg.explicit_data_seed = has_seed("data");
        cfg.explicit_train_seed = has_seed("train");
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// First key present in `raw` but absent from the re-serialized config.
fn unknown_key(raw: &toml::Table, known: &toml::Table, prefix: &str) -> Option<String> {
    for (k, v) in raw {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match known.get(k) {
            None => return Some(path),
            Some(toml::Value::Table(kt)) => {
                if let toml::Value::Table(rt) = v {
                    if let Some(bad) = unknown_key(rt, kt, &path) {
                        return Some(bad);
                    }
                }
            }
            Some(_) => {}
        }
    }
    None
}
