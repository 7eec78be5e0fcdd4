use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cam::LayerMode;
use crate::evaluate::DEFAULT_THRESHOLD;
use crate::selection::{DEFAULT_RESTARTS, RANK_A, RANK_B};
use crate::{Error, Result};

pub const DEFAULT_NUM_CLUSTERS: usize = 4;
pub const DEFAULT_MIN_CLUSTER_SIZE: usize = 4;

/// How comparison classes are chosen for each target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    Random,
    RankA,
    RankB,
    /// Custom `rank_positions`.
    Rank,
    #[default]
    Cluster,
}

impl std::str::FromStr for SelectionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "random" => Ok(SelectionMode::Random),
            "rank-a" => Ok(SelectionMode::RankA),
            "rank-b" => Ok(SelectionMode::RankB),
            "rank" => Ok(SelectionMode::Rank),
            "cluster" => Ok(SelectionMode::Cluster),
            other => Err(format!(
                "unknown mode {other:?} (random | rank-a | rank-b | rank | cluster)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(default)]
    pub probabilities: String,
    #[serde(default)]
    pub dumps: String,
    #[serde(default)]
    pub groundtruth: String,
    #[serde(default)]
    pub out: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub class_names: Vec<String>,
    #[serde(default = "defaults::num_clusters")]
    pub num_clusters: usize,
    #[serde(default = "defaults::min_cluster_size")]
    pub min_cluster_size: usize,
    #[serde(default = "defaults::cluster_k")]
    pub cluster_k: usize,
    #[serde(default)]
    pub rank_positions: Option<Vec<usize>>,
    #[serde(default)]
    pub selection_mode: SelectionMode,
    #[serde(default = "defaults::threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub layer_mode: LayerMode,
    #[serde(default)]
    pub paths: PathsConfig,
}

mod defaults {
    pub fn num_clusters() -> usize {
        super::DEFAULT_NUM_CLUSTERS
    }
    pub fn min_cluster_size() -> usize {
        super::DEFAULT_MIN_CLUSTER_SIZE
    }
    pub fn cluster_k() -> usize {
        1
    }
    pub fn threshold() -> f64 {
        super::DEFAULT_THRESHOLD
    }
    pub fn restarts() -> usize {
        super::DEFAULT_RESTARTS
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub mode: Option<SelectionMode>,
    pub k: Option<usize>,
    pub layer_mode: Option<LayerMode>,
    pub out: Option<String>,
}

impl PipelineConfig {
    pub fn new(class_names: Vec<String>) -> Self {
        PipelineConfig {
            class_names,
            num_clusters: DEFAULT_NUM_CLUSTERS,
            min_cluster_size: DEFAULT_MIN_CLUSTER_SIZE,
            cluster_k: 1,
            rank_positions: None,
            selection_mode: SelectionMode::default(),
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            restarts: DEFAULT_RESTARTS,
            layer_mode: LayerMode::default(),
            paths: PathsConfig::default(),
        }
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::from_json(&text, path)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.threshold {
            self.threshold = v;
        }
        if let Some(v) = o.mode {
            self.selection_mode = v;
        }
        if let Some(v) = o.k {
            self.cluster_k = v;
        }
        if let Some(v) = o.layer_mode {
            self.layer_mode = v;
        }
        if let Some(v) = &o.out {
            self.paths.out = v.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.class_names.len() < 2 {
            return bad("need at least two classes".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if !(1..=4).contains(&self.cluster_k) {
            return bad(format!("cluster_k {} outside 1..=4", self.cluster_k));
        }
        if self.num_clusters == 0 {
            return bad("num_clusters must be positive".into());
        }
        if self.selection_mode == SelectionMode::Rank && self.rank_positions.is_none() {
            return bad("mode rank needs rank_positions".into());
        }
        Ok(())
    }

    /// Positions used by the rank modes.
    pub fn positions(&self) -> Vec<usize> {
        match self.selection_mode {
            SelectionMode::RankA => RANK_A.to_vec(),
            SelectionMode::RankB => RANK_B.to_vec(),
            _ => self.rank_positions.clone().unwrap_or_default(),
        }
    }

    /// Number of comparison classes fused per target.
    pub fn representatives(&self) -> usize {
        match self.selection_mode {
            SelectionMode::Random | SelectionMode::Cluster => self.num_clusters,
            _ => self.positions().len(),
        }
    }

    /// Ablation row label, e.g. `S-1+A+F` or `Rank-a+F`.
    pub fn method_label(&self) -> String {
        let select = match self.selection_mode {
            SelectionMode::Random => "Random".to_string(),
            SelectionMode::RankA => "Rank-a".to_string(),
            SelectionMode::RankB => "Rank-b".to_string(),
            SelectionMode::Rank => "Rank".to_string(),
            SelectionMode::Cluster => format!("S-{}", self.cluster_k),
        };
        match self.layer_mode {
            LayerMode::Multi => format!("{select}+A+F"),
            LayerMode::Final => format!("{select}+F"),
        }
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

/// Resolves `p` against the directory holding the config file.
pub fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
