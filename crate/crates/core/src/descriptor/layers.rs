use rand::Rng;
use rand_distr::StandardNormal;

use super::tensor::{gemm, Tensor};

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(value: Vec<f64>) -> Self {
        let grad = vec![0.0; value.len()];
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Collects `(name, param)` pairs in a fixed order.
pub type ParamList<'a> = Vec<(String, &'a mut Param)>;

/// Stride-1 convolution with `k x k` kernels (`k` odd) and zero padding `k / 2`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    /// `cout x (cin * k * k)`.
    pub weight: Param,
    pub bias: Option<Param>,
    input: Option<Tensor>,
}

impl Conv2d {
    /// He-normal initialization; biases start at zero.
    pub fn new(cin: usize, cout: usize, k: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let fan_in = (cin * k * k) as f64;
        let std = (2.0 / fan_in).sqrt();
        let weight = (0..cout * cin * k * k).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
        Self {
            cin,
            cout,
            k,
            weight: Param::new(weight),
            bias: bias.then(|| Param::new(vec![0.0; cout])),
            input: None,
        }
    }

    fn im2col(&self, x: &[f64], h: usize, w: usize, cols: &mut [f64]) {
        let k = self.k;
        let r = (k / 2) as isize;
        let hw = h * w;
        for ci in 0..self.cin {
            let plane = &x[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * hw..][..hw];
                    let dy = ky as isize - r;
                    let dx = kx as isize - r;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        let out = &mut row[y * w..(y + 1) * w];
                        if sy < 0 || sy >= h as isize {
                            out.iter_mut().for_each(|v| *v = 0.0);
                            continue;
                        }
                        let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                        for (x, o) in out.iter_mut().enumerate() {
                            let sx = x as isize + dx;
                            *o = if sx < 0 || sx >= w as isize { 0.0 } else { src[sx as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize, dx: &mut [f64]) {
        let k = self.k;
        let r = (k / 2) as isize;
        let hw = h * w;
        for ci in 0..self.cin {
            let plane = &mut dx[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * hw..][..hw];
                    let dy = ky as isize - r;
                    let ddx = kx as isize - r;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                        for x in 0..w {
                            let sx = x as isize + ddx;
                            if sx >= 0 && sx < w as isize {
                                dst[sx as usize] += row[y * w + x];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.cin, "conv input channels");
        let (h, w) = (x.h, x.w);
        let hw = h * w;
        let kk = self.cin * self.k * self.k;
        let mut out = Tensor::zeros(x.n, self.cout, h, w);
        let mut cols = if self.k == 1 { Vec::new() } else { vec![0.0; kk * hw] };
        for i in 0..x.n {
            let src = x.sample(i);
            let cols: &[f64] = if self.k == 1 {
                src
            } else {
                self.im2col(src, h, w, &mut cols);
                &cols
            };
            let dst = out.sample_mut(i);
            gemm(self.cout, kk, hw, &self.weight.value, false, cols, false, 0.0, dst);
            if let Some(b) = &self.bias {
                for (co, &bv) in b.value.iter().enumerate() {
                    dst[co * hw..(co + 1) * hw].iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        out
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let out = self.infer(x);
        self.input = Some(x.clone());
        out
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.input.take().expect("conv backward without forward");
        let (h, w) = (x.h, x.w);
        let hw = h * w;
        let kk = self.cin * self.k * self.k;
        let mut dx = Tensor::zeros(x.n, self.cin, h, w);
        let mut cols = vec![0.0; kk * hw];
        let mut dcols = vec![0.0; kk * hw];
        for i in 0..x.n {
            let g = dy.sample(i);
            if self.k == 1 {
                cols.copy_from_slice(x.sample(i));
            } else {
                self.im2col(x.sample(i), h, w, &mut cols);
            }
            // dW += dY (cout x hw) * cols^T (hw x kk)
            gemm(self.cout, hw, kk, g, false, &cols, true, 1.0, &mut self.weight.grad);
            if let Some(b) = &mut self.bias {
                for co in 0..self.cout {
                    b.grad[co] += g[co * hw..(co + 1) * hw].iter().sum::<f64>();
                }
            }
            // dcols = W^T (kk x cout) * dY (cout x hw)
            gemm(kk, self.cout, hw, &self.weight.value, true, g, false, 0.0, &mut dcols);
            if self.k == 1 {
                dx.sample_mut(i).copy_from_slice(&dcols);
            } else {
                self.col2im(&dcols, h, w, dx.sample_mut(i));
            }
        }
        dx
    }

    pub fn params<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        if let Some(b) = &mut self.bias {
            out.push((format!("{prefix}.bias"), b));
        }
    }
}

/// Per-channel batch normalization.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<(Tensor, Vec<f64>)>,
}

impl BatchNorm {
    pub fn new(c: usize) -> Self {
        Self {
            gamma: Param::new(vec![1.0; c]),
            beta: Param::new(vec![0.0; c]),
            running_mean: vec![0.0; c],
            running_var: vec![1.0; c],
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        let hw = x.plane_len();
        let mut out = x.clone();
        for i in 0..x.n {
            let s = out.sample_mut(i);
            for ch in 0..x.c {
                let scale = self.gamma.value[ch] / (self.running_var[ch] + self.eps).sqrt();
                let shift = self.beta.value[ch] - self.running_mean[ch] * scale;
                s[ch * hw..(ch + 1) * hw].iter_mut().for_each(|v| *v = *v * scale + shift);
            }
        }
        out
    }

    /// Normalizes with the statistics of this batch and updates the running averages.
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let hw = x.plane_len();
        let m = (x.n * hw) as f64;
        let mut xhat = x.clone();
        let mut out = x.clone();
        let mut inv_std = vec![0.0; x.c];
        for ch in 0..x.c {
            let planes = || (0..x.n).map(move |i| &x.sample(i)[ch * hw..(ch + 1) * hw]);
            let mean = planes().flatten().sum::<f64>() / m;
            let var = planes().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = is;
            let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
            for i in 0..x.n {
                let xs = &mut xhat.sample_mut(i)[ch * hw..(ch + 1) * hw];
                xs.iter_mut().for_each(|v| *v = (*v - mean) * is);
                let os = &mut out.sample_mut(i)[ch * hw..(ch + 1) * hw];
                for (o, xh) in os.iter_mut().zip(xhat.sample(i)[ch * hw..(ch + 1) * hw].iter()) {
                    *o = g * xh + b;
                }
            }
            let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
            self.running_mean[ch] += self.momentum * (mean - self.running_mean[ch]);
            self.running_var[ch] += self.momentum * (unbiased - self.running_var[ch]);
        }
        self.cache = Some((xhat, inv_std));
        out
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (xhat, inv_std) = self.cache.take().expect("batch norm backward without forward");
        let hw = dy.plane_len();
        let m = (dy.n * hw) as f64;
        let mut dx = Tensor::zeros(dy.n, dy.c, dy.h, dy.w);
        for ch in 0..dy.c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for i in 0..dy.n {
                let g = &dy.sample(i)[ch * hw..(ch + 1) * hw];
                let xh = &xhat.sample(i)[ch * hw..(ch + 1) * hw];
                for (a, b) in g.iter().zip(xh) {
                    sum_dy += a;
                    sum_dy_xhat += a * b;
                }
            }
            self.gamma.grad[ch] += sum_dy_xhat;
            self.beta.grad[ch] += sum_dy;
            let k = self.gamma.value[ch] * inv_std[ch] / m;
            for i in 0..dy.n {
                let g = &dy.sample(i)[ch * hw..(ch + 1) * hw];
                let xh = &xhat.sample(i)[ch * hw..(ch + 1) * hw];
                let out = &mut dx.sample_mut(i)[ch * hw..(ch + 1) * hw];
                for ((o, a), b) in out.iter_mut().zip(g).zip(xh) {
                    *o = k * (m * a - sum_dy - b * sum_dy_xhat);
                }
            }
        }
        dx
    }

    pub fn params<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        out.push((format!("{prefix}.gamma"), &mut self.gamma));
        out.push((format!("{prefix}.beta"), &mut self.beta));
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    out.data.iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Gradient of ReLU given its output.
pub fn relu_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (g, &v) in dx.data.iter_mut().zip(&y.data) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    dx
}

/// 2x2 max pooling with stride 2; returns the pooled tensor and, per output,
/// the flat input index that won (first maximum in row-major window order).
pub fn max_pool(x: &Tensor) -> (Tensor, Vec<usize>) {
    let (h, w) = (x.h / 2, x.w / 2);
    let mut out = Tensor::zeros(x.n, x.c, h, w);
    let mut arg = vec![0; out.data.len()];
    for nc in 0..x.n * x.c {
        let base = nc * x.h * x.w;
        for y in 0..h {
            for xx in 0..w {
                let mut best = base + 2 * y * x.w + 2 * xx;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * x.w + 2 * xx + dx;
                    if x.data[idx] > x.data[best] {
                        best = idx;
                    }
                }
                let o = nc * h * w + y * w + xx;
                out.data[o] = x.data[best];
                arg[o] = best;
            }
        }
    }
    (out, arg)
}

pub fn max_pool_backward(arg: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(dy.n, dy.c, dy.h * 2, dy.w * 2);
    for (o, &i) in arg.iter().enumerate() {
        dx.data[i] += dy.data[o];
    }
    dx
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample(x: &Tensor) -> Tensor {
    let (h, w) = (x.h * 2, x.w * 2);
    let mut out = Tensor::zeros(x.n, x.c, h, w);
    for nc in 0..x.n * x.c {
        for y in 0..h {
            for xx in 0..w {
                out.data[nc * h * w + y * w + xx] = x.data[nc * x.h * x.w + (y / 2) * x.w + xx / 2];
            }
        }
    }
    out
}

pub fn upsample_backward(dy: &Tensor) -> Tensor {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut dx = Tensor::zeros(dy.n, dy.c, h, w);
    for nc in 0..dy.n * dy.c {
        for y in 0..dy.h {
            for xx in 0..dy.w {
                dx.data[nc * h * w + (y / 2) * w + xx / 2] += dy.data[nc * dy.h * dy.w + y * dy.w + xx];
            }
        }
    }
    dx
}

/// `relu(bn2(conv2(relu(bn1(conv1(x))))) + x)`.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub bn1: BatchNorm,
    pub conv2: Conv2d,
    pub bn2: BatchNorm,
    cache: Option<(Tensor, Tensor)>,
}

impl ResidualBlock {
    pub fn new(c: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv1: Conv2d::new(c, c, 3, false, rng),
            bn1: BatchNorm::new(c),
            conv2: Conv2d::new(c, c, 3, false, rng),
            bn2: BatchNorm::new(c),
            cache: None,
        }
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        let a = relu(&self.bn1.infer(&self.conv1.infer(x)));
        let mut b = self.bn2.infer(&self.conv2.infer(&a));
        b.add_assign(x);
        relu(&b)
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let c1 = self.conv1.forward(x);
        let a = relu(&self.bn1.forward(&c1));
        let c2 = self.conv2.forward(&a);
        let mut b = self.bn2.forward(&c2);
        b.add_assign(x);
        let y = relu(&b);
        self.cache = Some((a, y.clone()));
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (a, y) = self.cache.take().expect("block backward without forward");
        let db = relu_backward(&y, dy);
        let dc2 = self.bn2.backward(&db);
        let da = self.conv2.backward(&dc2);
        let dc1 = self.bn1.backward(&relu_backward(&a, &da));
        let mut dx = self.conv1.backward(&dc1);
        dx.add_assign(&db);
        dx
    }

    pub fn params<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.conv1.params(&format!("{prefix}.conv1"), out);
        self.bn1.params(&format!("{prefix}.bn1"), out);
        self.conv2.params(&format!("{prefix}.conv2"), out);
        self.bn2.params(&format!("{prefix}.bn2"), out);
    }

    pub fn batch_norms<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut BatchNorm)>) {
        out.push((format!("{prefix}.bn1"), &mut self.bn1));
        out.push((format!("{prefix}.bn2"), &mut self.bn2));
    }
}
