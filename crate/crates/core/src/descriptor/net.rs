use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::layers::{
    max_pool, max_pool_backward, relu, relu_backward, upsample, upsample_backward, BatchNorm,
    Conv2d, Param, ParamList, ResidualBlock,
};
use super::tensor::Tensor;
use super::{DescriptorError, Result};

/// Architecture of the descriptor network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Hidden channel count.
    pub channels: usize,
    /// Output descriptor dimension `d`.
    pub descriptor_dim: usize,
    /// Hourglass nesting depth (pooling levels).
    pub levels: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            descriptor_dim: 16,
            levels: 2,
        }
    }
}

#[derive(Debug, Clone)]
enum Inner {
    Hourglass(Box<Hourglass>),
    Block(ResidualBlock),
}

/// Recursive hourglass: a full-resolution residual branch plus a
/// pooled branch that is processed, upsampled and added back.
#[derive(Debug, Clone)]
pub struct Hourglass {
    up: ResidualBlock,
    low1: ResidualBlock,
    inner: Inner,
    low3: ResidualBlock,
    pool_arg: Option<Vec<usize>>,
}

impl Hourglass {
    fn new(levels: usize, c: usize, rng: &mut impl Rng) -> Self {
        let up = ResidualBlock::new(c, rng);
        let low1 = ResidualBlock::new(c, rng);
        let inner = if levels > 1 {
            Inner::Hourglass(Box::new(Hourglass::new(levels - 1, c, rng)))
        } else {
            Inner::Block(ResidualBlock::new(c, rng))
        };
        let low3 = ResidualBlock::new(c, rng);
        Self {
            up,
            low1,
            inner,
            low3,
            pool_arg: None,
        }
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let mut u = self.up.infer(x);
        let (p, _) = max_pool(x);
        let l1 = self.low1.infer(&p);
        let l2 = match &self.inner {
            Inner::Hourglass(h) => h.infer(&l1),
            Inner::Block(b) => b.infer(&l1),
        };
        let l3 = self.low3.infer(&l2);
        u.add_assign(&upsample(&l3));
        u
    }

    fn forward(&mut self, x: &Tensor) -> Tensor {
        let mut u = self.up.forward(x);
        let (p, arg) = max_pool(x);
        self.pool_arg = Some(arg);
        let l1 = self.low1.forward(&p);
        let l2 = match &mut self.inner {
            Inner::Hourglass(h) => h.forward(&l1),
            Inner::Block(b) => b.forward(&l1),
        };
        let l3 = self.low3.forward(&l2);
        u.add_assign(&upsample(&l3));
        u
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let dl3 = upsample_backward(dy);
        let dl2 = self.low3.backward(&dl3);
        let dl1 = match &mut self.inner {
            Inner::Hourglass(h) => h.backward(&dl2),
            Inner::Block(b) => b.backward(&dl2),
        };
        let dp = self.low1.backward(&dl1);
        let arg = self.pool_arg.take().expect("hourglass backward without forward");
        let mut dx = max_pool_backward(&arg, &dp);
        dx.add_assign(&self.up.backward(dy));
        dx
    }

    fn blocks<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut ResidualBlock)>) {
        out.push((format!("{prefix}.up"), &mut self.up));
        out.push((format!("{prefix}.low1"), &mut self.low1));
        match &mut self.inner {
            Inner::Hourglass(h) => h.blocks(&format!("{prefix}.inner"), out),
            Inner::Block(b) => out.push((format!("{prefix}.inner"), b)),
        }
        out.push((format!("{prefix}.low3"), &mut self.low3));
    }
}

/// Per-pixel descriptor `f: depth image -> R^d`: a 3x3 stem with batch
/// norm, a recursive hourglass, and a 1x1 output projection.
#[derive(Debug, Clone)]
pub struct DescriptorNet {
    pub config: NetConfig,
    stem: Conv2d,
    stem_bn: BatchNorm,
    hourglass: Hourglass,
    head: Conv2d,
    stem_out: Option<Tensor>,
}

impl DescriptorNet {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        if config.channels == 0 || config.descriptor_dim == 0 || config.levels == 0 {
            return Err(DescriptorError::Config(format!(
                "channels, descriptor_dim and levels must be positive: {config:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.channels;
        Ok(Self {
            config,
            stem: Conv2d::new(1, c, 3, false, &mut rng),
            stem_bn: BatchNorm::new(c),
            hourglass: Hourglass::new(config.levels, c, &mut rng),
            head: Conv2d::new(c, config.descriptor_dim, 1, true, &mut rng),
            stem_out: None,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let m = 1 << self.config.levels;
        if x.c != 1 || x.h == 0 || x.w == 0 || x.h % m != 0 || x.w % m != 0 {
            return Err(DescriptorError::Shape(format!(
                "input {}x{}x{} must be single-channel with sides divisible by {m}",
                x.c, x.h, x.w
            )));
        }
        Ok(())
    }

    /// Inference with stored batch-norm statistics. Pure.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let s = relu(&self.stem_bn.infer(&self.stem.infer(x)));
        Ok(self.head.infer(&self.hourglass.infer(&s)))
    }

    /// Training-mode forward pass: batch statistics, caches kept for [`Self::backward`].
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let s = relu(&self.stem_bn.forward(&self.stem.forward(x)));
        self.stem_out = Some(s.clone());
        let hg = self.hourglass.forward(&s);
        Ok(self.head.forward(&hg))
    }

    /// Accumulates parameter gradients for `d loss / d output = dy`.
    pub fn backward(&mut self, dy: &Tensor) {
        let dhg = self.head.backward(dy);
        let ds = self.hourglass.backward(&dhg);
        let s = self.stem_out.take().expect("net backward without forward");
        let dbn = self.stem_bn.backward(&relu_backward(&s, &ds));
        self.stem.backward(&dbn);
    }

    /// All trainable tensors with stable names, in a fixed order.
    pub fn params(&mut self) -> ParamList<'_> {
        let mut out = Vec::new();
        self.stem.params("stem", &mut out);
        self.stem_bn.params("stem_bn", &mut out);
        let mut blocks = Vec::new();
        self.hourglass.blocks("hg", &mut blocks);
        for (name, b) in blocks {
            b.params(&name, &mut out);
        }
        self.head.params("head", &mut out);
        out
    }

    /// All batch-norm layers with stable names, in a fixed order.
    pub fn batch_norms(&mut self) -> Vec<(String, &mut BatchNorm)> {
        let mut out = vec![("stem_bn".to_string(), &mut self.stem_bn)];
        let mut blocks = Vec::new();
        self.hourglass.blocks("hg", &mut blocks);
        for (name, b) in blocks {
            b.batch_norms(&name, &mut out);
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params() {
            p.zero_grad();
        }
    }

    pub fn parameter_count(&mut self) -> usize {
        self.params().iter().map(|(_, p)| p.value.len()).sum()
    }
}

/// One linear softmax classifier per segmentation: `theta[m][l] . f`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHeads {
    pub segmentations: usize,
    pub labels: usize,
    pub dim: usize,
    /// `M x K x d`, row-major.
    pub theta: Param,
}

impl ClassifierHeads {
    pub fn new(segmentations: usize, labels: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = (1.0 / dim as f64).sqrt();
        let theta = (0..segmentations * labels * dim)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            segmentations,
            labels,
            dim,
            theta: Param::new(theta),
        }
    }

    pub fn zeros(segmentations: usize, labels: usize, dim: usize) -> Self {
        Self {
            segmentations,
            labels,
            dim,
            theta: Param::new(vec![0.0; segmentations * labels * dim]),
        }
    }

    /// Weights of label `l` in head `m`.
    pub fn row(&self, m: usize, l: usize) -> &[f64] {
        let start = (m * self.labels + l) * self.dim;
        &self.theta.value[start..start + self.dim]
    }

    pub fn logits(&self, m: usize, f: &[f64]) -> Vec<f64> {
        (0..self.labels)
            .map(|l| self.row(m, l).iter().zip(f).map(|(a, b)| a * b).sum())
            .collect()
    }
}
