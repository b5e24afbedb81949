//! Layers with hand-written backward passes.
//!
//! Every layer follows the same contract: `forward` caches what `backward`
//! needs, `backward` accumulates parameter gradients and returns the gradient
//! with respect to the layer input, and `infer` is a cache-free evaluation-mode
//! pass usable through a shared reference.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::blob;
use super::param::Param;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in normalization layers; running statistics are updated.
    Train,
    /// Frozen running statistics.
    Eval,
}

fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}

fn conv_out(len: usize, k: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - k) / stride + 1
}

#[derive(Clone, Debug, Default)]
struct ConvCache {
    in_shape: [usize; 4],
    cols: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Param,
    pub bias: Param,
    #[serde(skip)]
    cache: Option<ConvCache>,
}

impl Conv2d {
    pub fn new(
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_c * kernel * kernel;
        let bound = fan_in_bound(fan_in);
        Self {
            in_c,
            out_c,
            kernel,
            stride,
            pad,
            weight: Param::uniform(out_c * fan_in, bound, rng),
            bias: Param::uniform(out_c, bound, rng),
            cache: None,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            conv_out(h, self.kernel, self.stride, self.pad),
            conv_out(w, self.kernel, self.stride, self.pad),
        )
    }

    fn im2col(&self, x: &[f64], h: usize, w: usize, oh: usize, ow: usize, cols: &mut [f64]) {
        let k = self.kernel;
        let p = oh * ow;
        for ic in 0..self.in_c {
            let plane = &x[ic * h * w..(ic + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ic * k + ky) * k + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let drow = &mut dst[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            drow.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *d = if ix < 0 || ix >= w as isize {
                                0.0
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize, oh: usize, ow: usize, dx: &mut [f64]) {
        let k = self.kernel;
        let p = oh * ow;
        for ic in 0..self.in_c {
            let plane = &mut dx[ic * h * w..(ic + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ic * k + ky) * k + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let drow = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                drow[ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    fn run(&self, x: &Tensor, keep_cols: bool) -> (Tensor, Vec<f64>) {
        assert_eq!(x.c(), self.in_c, "conv input channels");
        let [n, _, h, w] = x.shape();
        let (oh, ow) = self.out_hw(h, w);
        let p = oh * ow;
        let kk = self.in_c * self.kernel * self.kernel;
        let mut out = Tensor::zeros(n, self.out_c, oh, ow);
        let mut all_cols = if keep_cols {
            vec![0.0; n * kk * p]
        } else {
            Vec::new()
        };
        let mut scratch = if keep_cols { Vec::new() } else { vec![0.0; kk * p] };
        let wts = self.weight.value();
        let bias = self.bias.value();
        for s in 0..n {
            let cols: &mut [f64] = if keep_cols {
                &mut all_cols[s * kk * p..(s + 1) * kk * p]
            } else {
                &mut scratch
            };
            self.im2col(x.sample(s), h, w, oh, ow, cols);
            let y = out.sample_mut(s);
            for oc in 0..self.out_c {
                let yrow = &mut y[oc * p..(oc + 1) * p];
                yrow.fill(bias[oc]);
                let wrow = &wts[oc * kk..(oc + 1) * kk];
                for (r, &wv) in wrow.iter().enumerate() {
                    let crow = &cols[r * p..(r + 1) * p];
                    for (yv, &cv) in yrow.iter_mut().zip(crow) {
                        *yv += wv * cv;
                    }
                }
            }
        }
        (out, all_cols)
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let (out, cols) = self.run(x, true);
        self.cache = Some(ConvCache {
            in_shape: x.shape(),
            cols,
        });
        out
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        self.run(x, false).0
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        let cache = self.cache.take().expect("conv backward without forward");
        let [n, _, h, w] = cache.in_shape;
        let (oh, ow) = self.out_hw(h, w);
        let p = oh * ow;
        let kk = self.in_c * self.kernel * self.kernel;
        let mut dx = Tensor::zeros(n, self.in_c, h, w);
        let mut dcols = vec![0.0; kk * p];
        let wts = self.weight.value().to_vec();
        for s in 0..n {
            let cols = &cache.cols[s * kk * p..(s + 1) * kk * p];
            let g = gy.sample(s);
            {
                let db = self.bias.grad_mut();
                for oc in 0..self.out_c {
                    db[oc] += g[oc * p..(oc + 1) * p].iter().sum::<f64>();
                }
            }
            let dw = self.weight.grad_mut();
            dcols.fill(0.0);
            for oc in 0..self.out_c {
                let grow = &g[oc * p..(oc + 1) * p];
                for r in 0..kk {
                    let crow = &cols[r * p..(r + 1) * p];
                    let mut acc = 0.0;
                    for (a, b) in grow.iter().zip(crow) {
                        acc += a * b;
                    }
                    dw[oc * kk + r] += acc;
                    let wv = wts[oc * kk + r];
                    let drow = &mut dcols[r * p..(r + 1) * p];
                    for (d, &gv) in drow.iter_mut().zip(grow) {
                        *d += wv * gv;
                    }
                }
            }
            self.col2im(&dcols, h, w, oh, ow, dx.sample_mut(s));
        }
        dx
    }
}

/// Transposed convolution whose kernel equals its stride, so output windows
/// never overlap and each output pixel has exactly one input pixel per channel.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvTranspose2d {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    /// Layout `[in_c][out_c][kernel][kernel]`.
    pub weight: Param,
    pub bias: Param,
    #[serde(skip)]
    cache: Option<Tensor>,
}

impl ConvTranspose2d {
    pub fn new(in_c: usize, out_c: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        let bound = fan_in_bound(in_c);
        Self {
            in_c,
            out_c,
            kernel,
            weight: Param::uniform(in_c * out_c * kernel * kernel, bound, rng),
            bias: Param::uniform(out_c, bound, rng),
            cache: None,
        }
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.c(), self.in_c, "deconv input channels");
        let [n, _, h, w] = x.shape();
        let k = self.kernel;
        let (oh, ow) = (h * k, w * k);
        let mut out = Tensor::zeros(n, self.out_c, oh, ow);
        let wts = self.weight.value();
        let bias = self.bias.value();
        for s in 0..n {
            let xs = x.sample(s);
            let ys = out.sample_mut(s);
            for oc in 0..self.out_c {
                let plane = &mut ys[oc * oh * ow..(oc + 1) * oh * ow];
                plane.fill(bias[oc]);
                for ic in 0..self.in_c {
                    let xp = &xs[ic * h * w..(ic + 1) * h * w];
                    for a in 0..k {
                        for b in 0..k {
                            let wv = wts[((ic * self.out_c + oc) * k + a) * k + b];
                            for i in 0..h {
                                let yrow = &mut plane[(i * k + a) * ow..(i * k + a + 1) * ow];
                                let xrow = &xp[i * w..(i + 1) * w];
                                for (j, &xv) in xrow.iter().enumerate() {
                                    yrow[j * k + b] += wv * xv;
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let out = self.infer(x);
        self.cache = Some(x.clone());
        out
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        let x = self.cache.take().expect("deconv backward without forward");
        let [n, _, h, w] = x.shape();
        let k = self.kernel;
        let (oh, ow) = (h * k, w * k);
        let mut dx = Tensor::zeros(n, self.in_c, h, w);
        let wts = self.weight.value().to_vec();
        for s in 0..n {
            let xs = x.sample(s);
            let gs = gy.sample(s);
            {
                let db = self.bias.grad_mut();
                for oc in 0..self.out_c {
                    db[oc] += gs[oc * oh * ow..(oc + 1) * oh * ow].iter().sum::<f64>();
                }
            }
            let dw = self.weight.grad_mut();
            let dxs = dx.sample_mut(s);
            for ic in 0..self.in_c {
                let xp = &xs[ic * h * w..(ic + 1) * h * w];
                let dxp = &mut dxs[ic * h * w..(ic + 1) * h * w];
                for oc in 0..self.out_c {
                    let gp = &gs[oc * oh * ow..(oc + 1) * oh * ow];
                    for a in 0..k {
                        for b in 0..k {
                            let widx = ((ic * self.out_c + oc) * k + a) * k + b;
                            let wv = wts[widx];
                            let mut acc = 0.0;
                            for i in 0..h {
                                let grow = &gp[(i * k + a) * ow..(i * k + a + 1) * ow];
                                for j in 0..w {
                                    let g = grow[j * k + b];
                                    acc += xp[i * w + j] * g;
                                    dxp[i * w + j] += wv * g;
                                }
                            }
                            dw[widx] += acc;
                        }
                    }
                }
            }
        }
        dx
    }
}

#[derive(Clone, Debug)]
struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    shape: [usize; 4],
    mode: Mode,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub momentum: f64,
    pub eps: f64,
    pub gamma: Param,
    pub beta: Param,
    #[serde(with = "blob")]
    pub running_mean: Vec<f64>,
    #[serde(with = "blob")]
    pub running_var: Vec<f64>,
    #[serde(skip)]
    cache: Option<BnCache>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            momentum: 0.1,
            eps: 1e-5,
            gamma: Param::new(vec![1.0; channels]),
            beta: Param::new(vec![0.0; channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            cache: None,
        }
    }

    fn plane_iter<'a>(x: &'a Tensor, c: usize) -> impl Iterator<Item = &'a [f64]> + 'a {
        let hw = x.h() * x.w();
        (0..x.n()).map(move |s| &x.sample(s)[c * hw..(c + 1) * hw])
    }

    fn run(&self, x: &Tensor, mode: Mode) -> (Tensor, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        assert_eq!(x.c(), self.channels, "batch norm channels");
        let hw = x.h() * x.w();
        let count = (x.n() * hw) as f64;
        let mut means = vec![0.0; self.channels];
        let mut vars = vec![0.0; self.channels];
        let mut inv_std = vec![0.0; self.channels];
        for c in 0..self.channels {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = Self::plane_iter(x, c).flatten().sum::<f64>() / count;
                    let var = Self::plane_iter(x, c)
                        .flatten()
                        .map(|v| (v - mean) * (v - mean))
                        .sum::<f64>()
                        / count;
                    (mean, var)
                }
                Mode::Eval => (self.running_mean[c], self.running_var[c]),
            };
            means[c] = mean;
            vars[c] = var;
            inv_std[c] = 1.0 / (var + self.eps).sqrt();
        }
        let mut out = x.clone();
        let mut xhat = vec![0.0; x.len()];
        let gamma = self.gamma.value();
        let beta = self.beta.value();
        for s in 0..x.n() {
            let base = s * self.channels * hw;
            for c in 0..self.channels {
                let range = base + c * hw..base + (c + 1) * hw;
                for i in range {
                    let xh = (x.data()[i] - means[c]) * inv_std[c];
                    xhat[i] = xh;
                    out.data_mut()[i] = gamma[c] * xh + beta[c];
                }
            }
        }
        (out, xhat, inv_std, means, vars)
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        self.run(x, Mode::Eval).0
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let (out, xhat, inv_std, means, vars) = self.run(x, mode);
        if mode == Mode::Train {
            let count = (x.n() * x.h() * x.w()) as f64;
            let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            for c in 0..self.channels {
                self.running_mean[c] =
                    (1.0 - self.momentum) * self.running_mean[c] + self.momentum * means[c];
                self.running_var[c] =
                    (1.0 - self.momentum) * self.running_var[c] + self.momentum * vars[c] * unbias;
            }
        }
        self.cache = Some(BnCache {
            xhat,
            inv_std,
            shape: x.shape(),
            mode,
        });
        out
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        let cache = self.cache.take().expect("batch norm backward without forward");
        let [n, ch, h, w] = cache.shape;
        let hw = h * w;
        let count = (n * hw) as f64;
        let gamma = self.gamma.value().to_vec();
        let mut dx = Tensor::zeros(n, ch, h, w);
        for c in 0..ch {
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for s in 0..n {
                let base = (s * ch + c) * hw;
                for i in base..base + hw {
                    sum_g += gy.data()[i];
                    sum_gx += gy.data()[i] * cache.xhat[i];
                }
            }
            self.gamma.grad_mut()[c] += sum_gx;
            self.beta.grad_mut()[c] += sum_g;
            let scale = gamma[c] * cache.inv_std[c];
            for s in 0..n {
                let base = (s * ch + c) * hw;
                for i in base..base + hw {
                    dx.data_mut()[i] = match cache.mode {
                        Mode::Train => {
                            scale
                                * (gy.data()[i]
                                    - sum_g / count
                                    - cache.xhat[i] * sum_gx / count)
                        }
                        Mode::Eval => scale * gy.data()[i],
                    };
                }
            }
        }
        dx
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Relu {
    #[serde(skip)]
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn infer(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        out
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.mask = Some(x.data().iter().map(|&v| v > 0.0).collect());
        self.infer(x)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        let mask = self.mask.take().expect("relu backward without forward");
        let mut dx = gy.clone();
        for (d, keep) in dx.data_mut().iter_mut().zip(mask) {
            if !keep {
                *d = 0.0;
            }
        }
        dx
    }
}

/// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MaxPool2 {
    #[serde(skip)]
    cache: Option<([usize; 4], Vec<usize>)>,
}

impl MaxPool2 {
    fn run(x: &Tensor) -> (Tensor, Vec<usize>) {
        let [n, c, h, w] = x.shape();
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros(n, c, oh, ow);
        let mut arg = vec![0usize; n * c * oh * ow];
        for p in 0..n * c {
            let src = &x.data()[p * h * w..(p + 1) * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = (2 * oy) * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = (2 * oy + dy) * w + 2 * ox + dx;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    let o = p * oh * ow + oy * ow + ox;
                    out.data_mut()[o] = src[best];
                    arg[o] = p * h * w + best;
                }
            }
        }
        (out, arg)
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        Self::run(x).0
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let (out, arg) = Self::run(x);
        self.cache = Some((x.shape(), arg));
        out
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        let (shape, arg) = self.cache.take().expect("maxpool backward without forward");
        let mut dx = Tensor::zeros(shape[0], shape[1], shape[2], shape[3]);
        for (o, &src) in arg.iter().enumerate() {
            dx.data_mut()[src] += gy.data()[o];
        }
        dx
    }
}

/// Spatial mean per channel: `[n, c, h, w] -> [n, c, 1, 1]`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GlobalAvgPool {
    #[serde(skip)]
    shape: Option<[usize; 4]>,
}

impl GlobalAvgPool {
    pub fn infer(&self, x: &Tensor) -> Tensor {
        let [n, c, h, w] = x.shape();
        let hw = h * w;
        let data = x
            .data()
            .chunks_exact(hw)
            .map(|plane| plane.iter().sum::<f64>() / hw as f64)
            .collect();
        Tensor::from_vec([n, c, 1, 1], data).expect("pool shape")
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.shape = Some(x.shape());
        self.infer(x)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        let [n, c, h, w] = self.shape.take().expect("pool backward without forward");
        let hw = h * w;
        let mut dx = Tensor::zeros(n, c, h, w);
        for (plane, &g) in dx.data_mut().chunks_exact_mut(hw).zip(gy.data()) {
            plane.fill(g / hw as f64);
        }
        dx
    }
}

/// Fully connected layer over each flattened sample; output is `[n, out, 1, 1]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub in_f: usize,
    pub out_f: usize,
    /// Row-major `[out_f][in_f]`.
    pub weight: Param,
    pub bias: Param,
    #[serde(skip)]
    cache: Option<Tensor>,
}

impl Linear {
    pub fn new(in_f: usize, out_f: usize, rng: &mut impl Rng) -> Self {
        let bound = fan_in_bound(in_f);
        Self {
            in_f,
            out_f,
            weight: Param::uniform(in_f * out_f, bound, rng),
            bias: Param::uniform(out_f, bound, rng),
            cache: None,
        }
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.sample_len(), self.in_f, "linear input features");
        let n = x.n();
        let mut out = Tensor::zeros(n, self.out_f, 1, 1);
        let wts = self.weight.value();
        for s in 0..n {
            let xs = x.sample(s);
            for o in 0..self.out_f {
                let row = &wts[o * self.in_f..(o + 1) * self.in_f];
                let dot: f64 = row.iter().zip(xs).map(|(a, b)| a * b).sum();
                out.sample_mut(s)[o] = dot + self.bias.value()[o];
            }
        }
        out
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let out = self.infer(x);
        self.cache = Some(x.clone());
        out
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        let x = self.cache.take().expect("linear backward without forward");
        let mut dx = Tensor::zeros(x.n(), x.c(), x.h(), x.w());
        let wts = self.weight.value().to_vec();
        for s in 0..x.n() {
            let xs = x.sample(s);
            let gs = gy.sample(s);
            for (o, &g) in gs.iter().enumerate() {
                self.bias.grad_mut()[o] += g;
                let dw = &mut self.weight.grad_mut()[o * self.in_f..(o + 1) * self.in_f];
                for (d, &xv) in dw.iter_mut().zip(xs) {
                    *d += g * xv;
                }
                let row = &wts[o * self.in_f..(o + 1) * self.in_f];
                for (d, &wv) in dx.sample_mut(s).iter_mut().zip(row) {
                    *d += g * wv;
                }
            }
        }
        dx
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv(Conv2d),
    Deconv(ConvTranspose2d),
    BatchNorm(BatchNorm2d),
    Relu(Relu),
    MaxPool(MaxPool2),
    GlobalAvgPool(GlobalAvgPool),
    Linear(Linear),
}

impl Layer {
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        match self {
            Layer::Conv(l) => l.forward(x),
            Layer::Deconv(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Relu(l) => l.forward(x),
            Layer::MaxPool(l) => l.forward(x),
            Layer::GlobalAvgPool(l) => l.forward(x),
            Layer::Linear(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        match self {
            Layer::Conv(l) => l.backward(gy),
            Layer::Deconv(l) => l.backward(gy),
            Layer::BatchNorm(l) => l.backward(gy),
            Layer::Relu(l) => l.backward(gy),
            Layer::MaxPool(l) => l.backward(gy),
            Layer::GlobalAvgPool(l) => l.backward(gy),
            Layer::Linear(l) => l.backward(gy),
        }
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        match self {
            Layer::Conv(l) => l.infer(x),
            Layer::Deconv(l) => l.infer(x),
            Layer::BatchNorm(l) => l.infer(x),
            Layer::Relu(l) => l.infer(x),
            Layer::MaxPool(l) => l.infer(x),
            Layer::GlobalAvgPool(l) => l.infer(x),
            Layer::Linear(l) => l.infer(x),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Conv(l) => vec![&l.weight, &l.bias],
            Layer::Deconv(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Deconv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }
}

/// Layers applied in order.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, mode);
        }
        cur
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        let mut g = gy.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g);
        }
        g
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.infer(&cur);
        }
        cur
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}
