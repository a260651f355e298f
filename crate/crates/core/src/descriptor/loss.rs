use super::net::ClassifierHeads;
use super::tensor::Tensor;
use super::{DescriptorError, Result};

/// Squared distance at which a label pair stops contributing to the
/// regularizer, keeping the total loss bounded below.
pub const REG_PAIR_CAP: f64 = 100.0;

/// One training image: normalized depth, per-pixel labels of segmentation
/// `segmentation`, and the validity mask. Row-major `height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub labels: Vec<u32>,
    pub valid: Vec<bool>,
    pub segmentation: usize,
}

impl TrainSample {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// `log softmax(logits)[label]`, computed stably.
fn log_prob(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    logits[label] - lse
}

fn check_batch(features: &Tensor, heads: Option<&ClassifierHeads>, batch: &[&TrainSample]) -> Result<()> {
    if features.n != batch.len() {
        return Err(DescriptorError::Shape(format!(
            "{} feature maps for {} samples",
            features.n,
            batch.len()
        )));
    }
    for s in batch {
        if s.width != features.w || s.height != features.h {
            return Err(DescriptorError::Shape(format!(
                "sample {}x{} against features {}x{}",
                s.width, s.height, features.w, features.h
            )));
        }
        if let Some(h) = heads {
            if h.dim != features.c {
                return Err(DescriptorError::Shape(format!(
                    "heads expect d = {}, features have {}",
                    h.dim, features.c
                )));
            }
            if s.segmentation >= h.segmentations {
                return Err(DescriptorError::Shape(format!(
                    "segmentation id {} without a head",
                    s.segmentation
                )));
            }
            for (p, (&l, &v)) in s.labels.iter().zip(&s.valid).enumerate() {
                if v && l as usize >= h.labels {
                    return Err(DescriptorError::Shape(format!("label {l} at pixel {p} outside [0, {})", h.labels)));
                }
            }
        }
    }
    if batch.iter().all(|s| s.valid_count() == 0) {
        return Err(DescriptorError::EmptyBatch);
    }
    Ok(())
}

/// Data term: negative log-likelihood of the true labels summed over valid
/// pixels and averaged over the batch.
pub fn loss_data(features: &Tensor, heads: &ClassifierHeads, batch: &[&TrainSample]) -> Result<f64> {
    Ok(loss_data_grad(features, heads, batch)?.0)
}

/// Data term with its gradients with respect to the features and `theta`.
pub fn loss_data_grad(
    features: &Tensor,
    heads: &ClassifierHeads,
    batch: &[&TrainSample],
) -> Result<(f64, Tensor, Vec<f64>)> {
    check_batch(features, Some(heads), batch)?;
    let inv_n = 1.0 / batch.len() as f64;
    let hw = features.plane_len();
    let d = features.c;
    let mut dfeat = Tensor::zeros(features.n, d, features.h, features.w);
    let mut dtheta = vec![0.0; heads.theta.value.len()];
    let mut loss = 0.0;
    let mut f = vec![0.0; d];
    for (i, s) in batch.iter().enumerate() {
        let m = s.segmentation;
        let sample = features.sample(i);
        let theta = &heads.theta.value[m * heads.labels * d..(m + 1) * heads.labels * d];
        let dtheta_m = &mut dtheta[m * heads.labels * d..(m + 1) * heads.labels * d];
        let grad = dfeat.sample_mut(i);
        for p in (0..hw).filter(|&p| s.valid[p]) {
            for (k, fk) in f.iter_mut().enumerate() {
                *fk = sample[k * hw + p];
            }
            let logits: Vec<f64> = theta.chunks_exact(d).map(|row| row.iter().zip(&f).map(|(a, b)| a * b).sum()).collect();
            let label = s.labels[p] as usize;
            loss -= log_prob(&logits, label) * inv_n;
            let mut phi = softmax(&logits);
            phi[label] -= 1.0;
            for (l, &dz) in phi.iter().enumerate() {
                let dz = dz * inv_n;
                let row = &theta[l * d..(l + 1) * d];
                let drow = &mut dtheta_m[l * d..(l + 1) * d];
                for k in 0..d {
                    grad[k * hw + p] += dz * row[k];
                    drow[k] += dz * f[k];
                }
            }
        }
    }
    Ok((loss, dfeat, dtheta))
}

/// Mean descriptor of each label's valid pixels in sample `i`; `None` for absent labels.
fn label_means(features: &Tensor, i: usize, s: &TrainSample) -> Vec<Option<(Vec<f64>, usize)>> {
    let hw = features.plane_len();
    let d = features.c;
    let max_label = s
        .labels
        .iter()
        .zip(&s.valid)
        .filter(|(_, &v)| v)
        .map(|(&l, _)| l as usize)
        .max();
    let Some(max_label) = max_label else { return Vec::new() };
    let mut sums = vec![(vec![0.0; d], 0usize); max_label + 1];
    let sample = features.sample(i);
    for p in (0..hw).filter(|&p| s.valid[p]) {
        let entry = &mut sums[s.labels[p] as usize];
        for k in 0..d {
            entry.0[k] += sample[k * hw + p];
        }
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(sum, count)| (count > 0).then(|| (sum.into_iter().map(|v| v / count as f64).collect(), count)))
        .collect()
}

/// Regularizer: minus the sum, per sample and over label pairs, of squared
/// distances between label-mean descriptors (each pair capped at [`REG_PAIR_CAP`]).
pub fn loss_reg(features: &Tensor, batch: &[&TrainSample]) -> Result<f64> {
    Ok(loss_reg_grad(features, batch)?.0)
}

pub fn loss_reg_grad(features: &Tensor, batch: &[&TrainSample]) -> Result<(f64, Tensor)> {
    check_batch(features, None, batch)?;
    let hw = features.plane_len();
    let d = features.c;
    let mut dfeat = Tensor::zeros(features.n, d, features.h, features.w);
    let mut loss = 0.0;
    for (i, s) in batch.iter().enumerate() {
        let means = label_means(features, i, s);
        let present: Vec<usize> = (0..means.len()).filter(|&l| means[l].is_some()).collect();
        if present.len() < 2 {
            log::debug!("sample {i} has {} labels; regularizer skipped", present.len());
            continue;
        }
        // gradient with respect to each label mean
        let mut dmean = vec![vec![0.0; d]; means.len()];
        for (a, &mu) in present.iter().enumerate() {
            for &nu in &present[a + 1..] {
                let (fm, _) = means[mu].as_ref().unwrap();
                let (fn_, _) = means[nu].as_ref().unwrap();
                let dist2: f64 = fm.iter().zip(fn_).map(|(x, y)| (x - y) * (x - y)).sum();
                if dist2 >= REG_PAIR_CAP {
                    loss -= REG_PAIR_CAP;
                    continue;
                }
                loss -= dist2;
                for k in 0..d {
                    let g = -2.0 * (fm[k] - fn_[k]);
                    dmean[mu][k] += g;
                    dmean[nu][k] -= g;
                }
            }
        }
        let grad = dfeat.sample_mut(i);
        for p in (0..hw).filter(|&p| s.valid[p]) {
            let l = s.labels[p] as usize;
            let count = means[l].as_ref().unwrap().1 as f64;
            for k in 0..d {
                grad[k * hw + p] += dmean[l][k] / count;
            }
        }
    }
    Ok((loss, dfeat))
}
