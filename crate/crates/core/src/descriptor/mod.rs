//! Per-pixel descriptor network over PDM depth images, its softmax
//! classification and label-separation losses, and training.

pub mod io;
mod layers;
mod loss;
mod net;
mod tensor;
mod train;

pub use layers::{BatchNorm, Conv2d, Param, ParamList};
pub use loss::{loss_data, loss_data_grad, loss_reg, loss_reg_grad, softmax, TrainSample, REG_PAIR_CAP};
pub use net::{ClassifierHeads, DescriptorNet, NetConfig};
pub use tensor::Tensor;
pub use train::{accumulate_gradients, batch_input, pixel_accuracy, predict_labels, train, LossPoint, TrainConfig};

use thiserror::Error;

use crate::render::PdmImage;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("batch has no valid pixels")]
    EmptyBatch,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at step {step}: loss is not finite")]
    Divergence { step: usize },
    #[error("non-finite gradient for {param} at step {step}")]
    NonFiniteGradient { param: String, step: usize },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DescriptorError> = std::result::Result<T, E>;

/// Descriptors of the valid pixels of one PDM view.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureField {
    pub view: usize,
    pub dim: usize,
    /// Row-major pixel index of each descriptor, ascending.
    pub pixels: Vec<usize>,
    /// `pixels.len() x dim`, row-major.
    pub features: Vec<f64>,
}

impl FeatureField {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

/// Network input for a PDM: depth scaled by `1 / 2R`, zero on invalid pixels.
pub fn pdm_input(pdm: &PdmImage) -> Tensor {
    Tensor::from_vec(1, 1, pdm.height(), pdm.width(), pdm.normalized_depth())
}

/// Training sample from a labeled PDM.
pub fn pdm_sample(pdm: &PdmImage, segmentation: usize) -> Result<TrainSample> {
    let labels = pdm
        .labels
        .clone()
        .ok_or_else(|| DescriptorError::Shape("PDM has no label map".into()))?;
    Ok(TrainSample {
        width: pdm.width(),
        height: pdm.height(),
        depth: pdm.normalized_depth(),
        labels,
        valid: pdm.valid_mask(),
        segmentation,
    })
}

/// Runs the network on `pdm` and keeps the descriptors of valid pixels.
pub fn feature_field(net: &DescriptorNet, pdm: &PdmImage, view: usize) -> Result<FeatureField> {
    let f = net.infer(&pdm_input(pdm))?;
    let pixels = pdm.valid_pixels();
    let mut features = Vec::with_capacity(pixels.len() * f.c);
    for &p in &pixels {
        features.extend(f.pixel(0, p));
    }
    if !features.iter().all(|v| v.is_finite()) {
        return Err(DescriptorError::Shape(format!("view {view}: non-finite descriptor")));
    }
    Ok(FeatureField {
        view,
        dim: f.c,
        pixels,
        features,
    })
}
