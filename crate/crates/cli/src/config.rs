use std::fs;
use std::path::{Path, PathBuf};

use pdmc_core::compress::{CodecConfig, Quantization};
use pdmc_core::descriptor::{NetConfig, TrainConfig};
use pdmc_core::refine::RefineConfig;
use pdmc_core::render::RigConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: DatasetConfig,
    pub rig: RigConfig,
    pub segmentation: SegmentationConfig,
    pub descriptor: DescriptorConfig,
    pub refine: RefineConfig,
    pub codec: CompressConfig,
    pub evaluate: EvaluateConfig,
    pub seeds: Seeds,
    /// Working directory shared by all stages.
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            rig: RigConfig {
                width: 64,
                height: 64,
                ..RigConfig::default()
            },
            segmentation: SegmentationConfig::default(),
            descriptor: DescriptorConfig::default(),
            refine: RefineConfig::default(),
            codec: CompressConfig::default(),
            evaluate: EvaluateConfig::default(),
            seeds: Seeds::default(),
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Directory of per-frame OBJ/PLY meshes, ordered by file name.
    pub sequence: PathBuf,
    /// Directory of labeled training meshes sharing one vertex order. Empty
    /// means train on the sequence frames themselves.
    pub training: Option<PathBuf>,
    pub fps: f64,
    /// Sequence frames share vertex order, so vertex `i` of every frame is
    /// the true correspondent of reference vertex `i`.
    pub ground_truth: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            sequence: PathBuf::from("sequence"),
            training: None,
            fps: 25.0,
            ground_truth: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    /// Number of random segmentations M (one classifier head each).
    pub count: usize,
    /// Labels per segmentation K.
    pub labels: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self { count: 1, labels: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DescriptorConfig {
    pub net: NetConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecKind {
    Autoencoder,
    Pca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressConfig {
    pub kind: CodecKind,
    pub autoencoder: CodecConfig,
    /// PCA rank when `kind` is `pca`.
    pub rank: usize,
    pub quantization: Quantization,
}

impl Default for CompressConfig {
    fn default() -> Self {
        Self {
            kind: CodecKind::Autoencoder,
            autoencoder: CodecConfig::default(),
            rank: 8,
            quantization: Quantization::Fixed16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Largest error-curve threshold as a fraction of the reference
    /// bounding radius.
    pub max_threshold: f64,
    pub thresholds: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            max_threshold: 0.5,
            thresholds: 51,
        }
    }
}

/// Every random choice in the pipeline draws from one of these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub segmentation: u64,
    pub network: u64,
    pub training: u64,
    pub codec: u64,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Self {
            segmentation: seed,
            network: seed,
            training: seed,
            codec: seed,
        }
    }
}

impl PipelineConfig {
    /// Parses a JSON config. Relative dataset paths and `out` are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let mut config: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.dataset.sequence = base.join(&config.dataset.sequence);
        config.dataset.training = config.dataset.training.map(|t| base.join(t));
        config.out = base.join(&config.out);
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.rig.width == 0 || self.rig.height == 0 {
            return bad("rig resolution must be positive".into());
        }
        let cells = 1usize << self.descriptor.net.levels;
        if self.rig.width % cells != 0 || self.rig.height % cells != 0 {
            return bad(format!(
                "rig resolution {}x{} is not divisible by 2^{} network levels",
                self.rig.width, self.rig.height, self.descriptor.net.levels
            ));
        }
        if self.segmentation.count == 0 || self.segmentation.labels < 2 {
            return bad("need at least one segmentation with two or more labels".into());
        }
        if !(self.dataset.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.dataset.fps));
        }
        if self.evaluate.thresholds == 0 || !(self.evaluate.max_threshold > 0.0) {
            return bad("evaluation thresholds must be positive".into());
        }
        self.refine.validate().map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn pdm_dir(&self) -> PathBuf {
        self.out.join("pdm")
    }

    pub fn train_pdm_dir(&self) -> PathBuf {
        self.out.join("pdm_train")
    }

    pub fn segmentation_dir(&self) -> PathBuf {
        self.out.join("segmentations")
    }

    pub fn weights_path(&self) -> PathBuf {
        self.out.join("descriptor.pdmw")
    }

    pub fn corres_dir(&self) -> PathBuf {
        self.out.join("corres")
    }

    pub fn trajectory_path(&self) -> PathBuf {
        self.out.join("trajectory.pdmt")
    }

    pub fn clip_path(&self) -> PathBuf {
        self.out.join("clip.pdmc")
    }

    pub fn decoded_dir(&self) -> PathBuf {
        self.out.join("decoded")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out.join("report")
    }
}
