use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CompressError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecConfig {
    /// Width c of the shared latent layer.
    pub latent: usize,
    /// Hidden widths `[h1, h2]` of every branch; `None` uses `[N/2, N/4]`.
    pub hidden: Option<[usize; 2]>,
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// The learning rate is multiplied by `lr_decay` at 50% and 75% of the steps.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            latent: 8,
            hidden: None,
            steps: 6000,
            learning_rate: 1e-3,
            batch_size: 200,
            lr_decay: 0.3,
            seed: 0,
        }
    }
}

impl CodecConfig {
    pub fn hidden_for(&self, frames: usize) -> [usize; 2] {
        self.hidden.unwrap_or([(frames / 2).max(1), (frames / 4).max(1)])
    }
}

/// Fully connected layer `y = x W^T + b` over row batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `out x in`.
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Linear {
    fn new(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let std = (2.0 / input as f64).sqrt();
        Self {
            weight: DMatrix::from_fn(output, input, |_, _| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            }),
            bias: DVector::zeros(output),
        }
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * self.weight.transpose();
        for (j, mut col) in y.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.bias[j]);
        }
        y
    }
}

fn relu(mut x: DMatrix<f64>) -> DMatrix<f64> {
    x.apply(|v| *v = v.max(0.0));
    x
}

/// Zeroes `dy` where the forward output was not positive.
fn relu_mask(dy: &mut DMatrix<f64>, y: &DMatrix<f64>) {
    dy.zip_apply(y, |d, v| {
        if v <= 0.0 {
            *d = 0.0
        }
    });
}

/// Per-coordinate affine map of positions to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Normalization {
    pub fn fit(parts: &[DMatrix<f64>; 3]) -> Self {
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for k in 0..3 {
            min[k] = parts[k].min();
            max[k] = parts[k].max();
        }
        Self { min, max }
    }

    fn scale(&self, k: usize) -> f64 {
        let s = self.max[k] - self.min[k];
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    pub fn apply(&self, parts: &[DMatrix<f64>; 3]) -> [DMatrix<f64>; 3] {
        std::array::from_fn(|k| parts[k].map(|v| (v - self.min[k]) / self.scale(k)))
    }

    pub fn invert(&self, parts: &[DMatrix<f64>; 3]) -> [DMatrix<f64>; 3] {
        std::array::from_fn(|k| parts[k].map(|v| v * self.scale(k) + self.min[k]))
    }
}

/// Three coordinate branches `N -> h1 -> h2` merged by one linear layer
/// into the latent code of width c.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub branches: [[Linear; 2]; 3],
    /// Per-branch blocks `c x h2` of the merge layer.
    pub merge: [DMatrix<f64>; 3],
    pub merge_bias: DVector<f64>,
}

/// Three coordinate branches `c -> h2 -> h1 -> N`; the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub branches: [[Linear; 3]; 3],
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderCodec {
    pub frames: usize,
    pub latent: usize,
    pub hidden: [usize; 2],
    pub encoder: Encoder,
    pub decoder: Decoder,
}

struct EncoderTrace {
    h: [[DMatrix<f64>; 2]; 3],
    code: DMatrix<f64>,
}

impl Encoder {
    fn trace(&self, x: &[DMatrix<f64>; 3]) -> EncoderTrace {
        let h: [[DMatrix<f64>; 2]; 3] = std::array::from_fn(|k| {
            let h1 = relu(self.branches[k][0].forward(&x[k]));
            let h2 = relu(self.branches[k][1].forward(&h1));
            [h1, h2]
        });
        let mut code = DMatrix::zeros(x[0].nrows(), self.merge_bias.len());
        for k in 0..3 {
            code += &h[k][1] * self.merge[k].transpose();
        }
        for (j, mut col) in code.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.merge_bias[j]);
        }
        EncoderTrace { h, code }
    }
}

impl Decoder {
    fn trace(&self, code: &DMatrix<f64>) -> [[DMatrix<f64>; 3]; 3] {
        std::array::from_fn(|k| {
            let g1 = relu(self.branches[k][0].forward(code));
            let g2 = relu(self.branches[k][1].forward(&g1));
            let y = self.branches[k][2].forward(&g2);
            [g1, g2, y]
        })
    }

    /// Normalized reconstruction of each coordinate from latent codes.
    pub fn forward_normalized(&self, code: &DMatrix<f64>) -> [DMatrix<f64>; 3] {
        self.trace(code).map(|[_, _, y]| y)
    }

    /// Positions decoded from latent codes (`V x c`).
    pub fn decode(&self, code: &DMatrix<f64>) -> [DMatrix<f64>; 3] {
        self.normalization.invert(&self.forward_normalized(code))
    }

    pub fn latent(&self) -> usize {
        self.branches[0][0].weight.ncols()
    }
}

impl AutoencoderCodec {
    pub fn new(frames: usize, config: &CodecConfig, normalization: Normalization) -> Result<Self> {
        let [h1, h2] = config.hidden_for(frames);
        let c = config.latent;
        if frames == 0 || c == 0 || h1 == 0 || h2 == 0 {
            return Err(CompressError::Config(format!(
                "layer widths must be positive (N {frames}, hidden {h1}/{h2}, latent {c})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let branches = std::array::from_fn(|_| [Linear::new(frames, h1, &mut rng), Linear::new(h1, h2, &mut rng)]);
        let merge = std::array::from_fn(|_| Linear::new(3 * h2, c, &mut rng).weight.columns(0, h2).into_owned());
        let decoder = std::array::from_fn(|_| {
            [
                Linear::new(c, h2, &mut rng),
                Linear::new(h2, h1, &mut rng),
                Linear::new(h1, frames, &mut rng),
            ]
        });
        Ok(Self {
            frames,
            latent: c,
            hidden: [h1, h2],
            encoder: Encoder {
                branches,
                merge,
                merge_bias: DVector::zeros(c),
            },
            decoder: Decoder {
                branches: decoder,
                normalization,
            },
        })
    }

    /// Latent codes (`V x c`) of raw coordinate matrices.
    pub fn encode(&self, parts: &[DMatrix<f64>; 3]) -> DMatrix<f64> {
        self.encoder.trace(&self.decoder.normalization.apply(parts)).code
    }

    /// Encode then decode without quantization.
    pub fn reconstruct(&self, parts: &[DMatrix<f64>; 3]) -> [DMatrix<f64>; 3] {
        self.decoder.decode(&self.encode(parts))
    }

    /// Mean squared error over all normalized coordinates.
    pub fn normalized_mse(&self, parts: &[DMatrix<f64>; 3]) -> f64 {
        let x = self.decoder.normalization.apply(parts);
        let y = self.decoder.forward_normalized(&self.encoder.trace(&x).code);
        mse(&x, &y)
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        let Encoder {
            branches,
            merge,
            merge_bias,
        } = &mut self.encoder;
        for b in branches.iter_mut() {
            for l in b.iter_mut() {
                out.push(l.weight.as_mut_slice());
                out.push(l.bias.as_mut_slice());
            }
        }
        for m in merge.iter_mut() {
            out.push(m.as_mut_slice());
        }
        out.push(merge_bias.as_mut_slice());
        for b in self.decoder.branches.iter_mut() {
            for l in b.iter_mut() {
                out.push(l.weight.as_mut_slice());
                out.push(l.bias.as_mut_slice());
            }
        }
        out
    }

    /// Loss on a normalized batch and its gradients, in `params_mut` order.
    fn loss_and_grad(&self, x: &[DMatrix<f64>; 3]) -> (f64, Vec<Vec<f64>>) {
        let enc = self.encoder.trace(x);
        let dec = self.decoder.trace(&enc.code);
        let count = (3 * x[0].len()) as f64;
        let mut loss = 0.0;
        let mut grads_dec: Vec<Vec<f64>> = Vec::new();
        let mut dcode = DMatrix::zeros(enc.code.nrows(), enc.code.ncols());
        for k in 0..3 {
            let [g1, g2, y] = &dec[k];
            let diff = y - &x[k];
            loss += diff.norm_squared();
            let dy = diff * (2.0 / count);
            let l = &self.decoder.branches[k];
            let (dw3, db3) = (dy.transpose() * g2, col_sums(&dy));
            let mut dg2 = &dy * &l[2].weight;
            relu_mask(&mut dg2, g2);
            let (dw2, db2) = (dg2.transpose() * g1, col_sums(&dg2));
            let mut dg1 = &dg2 * &l[1].weight;
            relu_mask(&mut dg1, g1);
            let (dw1, db1) = (dg1.transpose() * &enc.code, col_sums(&dg1));
            dcode += &dg1 * &l[0].weight;
            for g in [dw1, db1, dw2, db2, dw3, db3] {
                grads_dec.push(g.as_slice().to_vec());
            }
        }
        let mut grads: Vec<Vec<f64>> = Vec::new();
        let mut merge_grads = Vec::new();
        for k in 0..3 {
            let [h1, h2] = &enc.h[k];
            merge_grads.push(dcode.transpose() * h2);
            let mut dh2 = &dcode * &self.encoder.merge[k];
            relu_mask(&mut dh2, h2);
            let l = &self.encoder.branches[k];
            let (dw2, db2) = (dh2.transpose() * h1, col_sums(&dh2));
            let mut dh1 = &dh2 * &l[1].weight;
            relu_mask(&mut dh1, h1);
            let (dw1, db1) = (dh1.transpose() * &x[k], col_sums(&dh1));
            for g in [dw1, db1, dw2, db2] {
                grads.push(g.as_slice().to_vec());
            }
        }
        for g in merge_grads {
            grads.push(g.as_slice().to_vec());
        }
        grads.push(col_sums(&dcode).as_slice().to_vec());
        grads.extend(grads_dec);
        (loss / count, grads)
    }
}

fn col_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.ncols(), 1, |j, _| m.column(j).sum())
}

fn mse(x: &[DMatrix<f64>; 3], y: &[DMatrix<f64>; 3]) -> f64 {
    let n: usize = x.iter().map(|m| m.len()).sum();
    if n == 0 {
        return 0.0;
    }
    x.iter().zip(y).map(|(a, b)| (a - b).norm_squared()).sum::<f64>() / n as f64
}

fn rows(parts: &[DMatrix<f64>; 3], idx: &[usize]) -> [DMatrix<f64>; 3] {
    std::array::from_fn(|k| parts[k].select_rows(idx))
}

/// Trains the codec on the rows of `parts` (raw `V x N` coordinate matrices)
/// with Adam on the normalized mean squared error. Batches are drawn from
/// per-epoch permutations seeded by `config.seed`. Returns the codec and the
/// loss of every step.
pub fn train_codec(parts: &[DMatrix<f64>; 3], config: &CodecConfig) -> Result<(AutoencoderCodec, Vec<f64>)> {
    let (v, n) = parts[0].shape();
    if parts.iter().any(|p| p.shape() != (v, n)) {
        return Err(CompressError::Shape("coordinate matrices differ in shape".into()));
    }
    if v == 0 || n == 0 {
        return Err(CompressError::Shape("empty trajectory matrix".into()));
    }
    if parts.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
        return Err(CompressError::Unmatched);
    }
    if config.batch_size == 0 {
        return Err(CompressError::Config("batch size must be positive".into()));
    }
    let norm = Normalization::fit(parts);
    let x = norm.apply(parts);
    let mut codec = AutoencoderCodec::new(n, config, norm)?;
    let batch = config.batch_size.min(v);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let sizes: Vec<usize> = codec.params_mut().iter().map(|p| p.len()).collect();
    let mut m1: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    let mut m2 = m1.clone();
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut curve = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let mut idx = Vec::with_capacity(batch);
        while idx.len() < batch {
            if cursor == order.len() {
                order = (0..v).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let xb = if batch == v { x.clone() } else { rows(&x, &idx) };
        let (loss, grads) = codec.loss_and_grad(&xb);
        if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(CompressError::Divergence { step });
        }
        curve.push(loss);
        let rate = config.learning_rate
            * if step >= config.steps * 3 / 4 {
                config.lr_decay * config.lr_decay
            } else if step >= config.steps / 2 {
                config.lr_decay
            } else {
                1.0
            };
        let t = (step + 1) as i32;
        let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
        for (((p, g), m), s) in codec.params_mut().into_iter().zip(&grads).zip(&mut m1).zip(&mut m2) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                s[i] = b2 * s[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= rate * (m[i] / c1) / ((s[i] / c2).sqrt() + eps);
            }
        }
    }
    Ok((codec, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_parts(v: usize, n: usize, seed: u64) -> [DMatrix<f64>; 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        std::array::from_fn(|_| DMatrix::from_fn(v, n, |_, _| rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn gradients_match_central_differences() {
        let parts = random_parts(5, 6, 1);
        let cfg = CodecConfig { latent: 2, hidden: Some([4, 3]), ..Default::default() };
        let mut codec = AutoencoderCodec::new(6, &cfg, Normalization::fit(&parts)).unwrap();
        // push biases positive so few ReLUs sit exactly at their kink
        for p in codec.params_mut() {
            if p.len() <= 6 {
                p.iter_mut().for_each(|b| *b = 0.1);
            }
        }
        let x = codec.decoder.normalization.apply(&parts);
        let (_, grads) = codec.loss_and_grad(&x);
        let h = 1e-6;
        let count = grads.len();
        for t in 0..count {
            for e in 0..grads[t].len() {
                let orig = codec.params_mut()[t][e];
                codec.params_mut()[t][e] = orig + h;
                let up = codec.loss_and_grad(&x).0;
                codec.params_mut()[t][e] = orig - h;
                let down = codec.loss_and_grad(&x).0;
                codec.params_mut()[t][e] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = grads[t][e];
                assert!(
                    (a - numeric).abs() <= 1e-6 * a.abs().max(numeric.abs()).max(1e-2),
                    "tensor {t}[{e}]: {a} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn zero_steps_match_initial_network() {
        let parts = random_parts(30, 8, 2);
        let cfg = CodecConfig { latent: 3, steps: 0, ..Default::default() };
        let (trained, curve) = train_codec(&parts, &cfg).unwrap();
        assert!(curve.is_empty());
        let fresh = AutoencoderCodec::new(8, &cfg, Normalization::fit(&parts)).unwrap();
        assert_eq!(trained.normalized_mse(&parts), fresh.normalized_mse(&parts));
    }

    #[test]
    fn constant_trajectories_are_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let parts: [DMatrix<f64>; 3] = std::array::from_fn(|_| {
            let p: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
            DMatrix::from_fn(40, 8, |i, _| p[i])
        });
        let cfg = CodecConfig {
            latent: 3,
            hidden: Some([16, 8]),
            steps: 12000,
            learning_rate: 3e-3,
            batch_size: 40,
            seed: 1,
            ..Default::default()
        };
        let (codec, _) = train_codec(&parts, &cfg).unwrap();
        let mse = codec.normalized_mse(&parts);
        assert!(mse < 1e-6, "mse {mse}");
    }

    #[test]
    fn training_is_deterministic() {
        let parts = random_parts(20, 6, 4);
        let cfg = CodecConfig { latent: 2, steps: 30, batch_size: 7, ..Default::default() };
        let (a, ca) = train_codec(&parts, &cfg).unwrap();
        let (b, cb) = train_codec(&parts, &cfg).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut parts = random_parts(4, 3, 5);
        parts[1][(2, 1)] = f64::NAN;
        assert!(matches!(train_codec(&parts, &CodecConfig::default()), Err(CompressError::Unmatched)));
    }
}
