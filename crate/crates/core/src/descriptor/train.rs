use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_data_grad, loss_reg_grad, TrainSample};
use super::net::{ClassifierHeads, DescriptorNet};
use super::tensor::Tensor;
use super::{DescriptorError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Weight of the regularizer in `L_data + lambda * L_reg`.
    pub lambda: f64,
    pub batch_size: usize,
    /// The learning rate is multiplied by `lr_decay` at 50% and 75% of the steps.
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 2000,
            learning_rate: 2e-5,
            momentum: 0.9,
            lambda: 1e-3,
            batch_size: 4,
            lr_decay: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub data: f64,
    pub reg: f64,
}

/// Stacks the depth images of `batch` into an `n x 1 x h x w` tensor.
pub fn batch_input(batch: &[&TrainSample]) -> Tensor {
    let (h, w) = (batch[0].height, batch[0].width);
    let mut data = Vec::with_capacity(batch.len() * h * w);
    for s in batch {
        data.extend_from_slice(&s.depth);
    }
    Tensor::from_vec(batch.len(), 1, h, w, data)
}

/// Forward and backward pass of `L_data + lambda * L_reg` in training mode.
/// Gradients are accumulated into the parameters (callers zero them first).
/// Returns `(L_data, L_reg)`.
pub fn accumulate_gradients(
    net: &mut DescriptorNet,
    heads: &mut ClassifierHeads,
    batch: &[&TrainSample],
    lambda: f64,
) -> Result<(f64, f64)> {
    let x = batch_input(batch);
    let f = net.forward(&x)?;
    let (ld, mut df, dtheta) = loss_data_grad(&f, heads, batch)?;
    let (lr, dfr) = loss_reg_grad(&f, batch)?;
    for (a, b) in df.data.iter_mut().zip(&dfr.data) {
        *a += lambda * b;
    }
    for (g, d) in heads.theta.grad.iter_mut().zip(&dtheta) {
        *g += d;
    }
    net.backward(&df);
    Ok((ld, lr))
}

/// Momentum gradient descent on the shared descriptor and all heads.
/// Batches are drawn from per-epoch permutations of `data` seeded by
/// `config.seed`; identical inputs give identical curves.
pub fn train(
    net: &mut DescriptorNet,
    heads: &mut ClassifierHeads,
    data: &[TrainSample],
    config: &TrainConfig,
) -> Result<Vec<LossPoint>> {
    if data.is_empty() {
        return Err(DescriptorError::Config("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(DescriptorError::Config("batch size must be positive".into()));
    }
    if let Some(s) = data.iter().find(|s| s.width != data[0].width || s.height != data[0].height) {
        return Err(DescriptorError::Shape(format!(
            "mixed image sizes {}x{} and {}x{}",
            data[0].width, data[0].height, s.width, s.height
        )));
    }
    let batch_size = config.batch_size.min(data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut velocity: Vec<Vec<f64>> = net.params().iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
    let mut head_velocity = vec![0.0; heads.theta.value.len()];
    let mut curve = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let mut batch = Vec::with_capacity(batch_size);
        while batch.len() < batch_size {
            if cursor == order.len() {
                order = (0..data.len()).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&data[order[cursor]]);
            cursor += 1;
        }
        net.zero_grad();
        heads.theta.zero_grad();
        let (ld, lr) = accumulate_gradients(net, heads, &batch, config.lambda)?;
        if !(ld.is_finite() && lr.is_finite()) {
            return Err(DescriptorError::Divergence { step });
        }
        let rate = config.learning_rate
            * if step >= config.steps * 3 / 4 {
                config.lr_decay * config.lr_decay
            } else if step >= config.steps / 2 {
                config.lr_decay
            } else {
                1.0
            };
        for ((name, p), v) in net.params().into_iter().zip(velocity.iter_mut()) {
            step_param(&name, &mut p.value, &p.grad, v, rate, config.momentum, step)?;
        }
        step_param("theta", &mut heads.theta.value, &heads.theta.grad, &mut head_velocity, rate, config.momentum, step)?;
        curve.push(LossPoint { step, data: ld, reg: lr });
        if step % 100 == 0 {
            log::debug!("step {step}: L_data {ld:.4} L_reg {lr:.4}");
        }
    }
    Ok(curve)
}

fn step_param(
    name: &str,
    value: &mut [f64],
    grad: &[f64],
    velocity: &mut [f64],
    rate: f64,
    momentum: f64,
    step: usize,
) -> Result<()> {
    if let Some(bad) = grad.iter().position(|g| !g.is_finite()) {
        return Err(DescriptorError::NonFiniteGradient {
            param: format!("{name}[{bad}]"),
            step,
        });
    }
    for ((x, g), v) in value.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v - rate * g;
        *x += *v;
    }
    Ok(())
}

/// Most likely label of every pixel under head `m`; `None` on invalid pixels.
pub fn predict_labels(
    net: &DescriptorNet,
    heads: &ClassifierHeads,
    m: usize,
    sample: &TrainSample,
) -> Result<Vec<Option<u32>>> {
    let f = net.infer(&batch_input(&[sample]))?;
    let hw = f.plane_len();
    Ok((0..hw)
        .map(|p| {
            sample.valid[p].then(|| {
                let logits = heads.logits(m, &f.pixel(0, p));
                let mut best = 0;
                for (l, &z) in logits.iter().enumerate() {
                    if z > logits[best] {
                        best = l;
                    }
                }
                best as u32
            })
        })
        .collect())
}

/// Fraction of valid pixels over `samples` whose predicted label (under each
/// sample's own head) equals the ground truth.
pub fn pixel_accuracy(net: &DescriptorNet, heads: &ClassifierHeads, samples: &[TrainSample]) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for s in samples {
        let pred = predict_labels(net, heads, s.segmentation, s)?;
        for (p, label) in pred.iter().enumerate() {
            if let Some(l) = label {
                total += 1;
                hit += (*l == s.labels[p]) as usize;
            }
        }
    }
    if total == 0 {
        return Err(DescriptorError::EmptyBatch);
    }
    Ok(hit as f64 / total as f64)
}
