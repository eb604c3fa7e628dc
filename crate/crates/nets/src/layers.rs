//! Layers with cached forward state and hand-written backward passes.
//!
//! `forward(x, train)` caches what `backward` needs only when `train` is set;
//! calling `backward` after an inference-mode forward panics.

use rand_chacha::ChaCha8Rng;

use crate::param::{prefixed, Buffer, Module, Param};
use crate::tensor::{gemm, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn conv(c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Self {
        assert!(h + 2 * pad >= k && w + 2 * pad >= k, "input {h}x{w} smaller than kernel {k}");
        Self {
            c,
            h,
            w,
            k,
            stride,
            pad,
            ho: (h + 2 * pad - k) / stride + 1,
            wo: (w + 2 * pad - k) / stride + 1,
        }
    }

    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col(x: &[f64], g: &Geometry) -> Vec<f64> {
    let mut out = vec![0.0; g.rows() * g.cols()];
    for ci in 0..g.c {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let dst = &mut out[row * g.cols()..(row + 1) * g.cols()];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let d = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    for (ox, v) in d.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            *v = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]; accumulates into `x`.
fn col2im(cols: &[f64], g: &Geometry, x: &mut [f64]) {
    for ci in 0..g.c {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let src = &cols[row * g.cols()..(row + 1) * g.cols()];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in src[oy * g.wo..(oy + 1) * g.wo].iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

fn add_channel_bias(y: &mut [f64], bias: &[f64], plane: usize) {
    for (c, b) in bias.iter().enumerate() {
        y[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_channel_sums(dy: &[f64], grad: &mut [f64], plane: usize) {
    for (c, g) in grad.iter_mut().enumerate() {
        *g += dy[c * plane..(c + 1) * plane].iter().sum::<f64>();
    }
}

/// 2-D convolution over `[N, C, H, W]` with square kernels.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    cache: Option<(Geometry, Vec<Vec<f64>>)>,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            weight: Param::fan_in_uniform(
                prefixed(name, "weight"),
                &[out_channels, in_channels, kernel, kernel],
                fan_in,
                rng,
            ),
            bias: Param::fan_in_uniform(prefixed(name, "bias"), &[out_channels], fan_in, rng),
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            cache: None,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let g = Geometry::conv(self.in_channels, h, w, self.kernel, self.stride, self.pad);
        (g.ho, g.wo)
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.in_channels, "conv expects {} channels", self.in_channels);
        let g = Geometry::conv(c, h, w, self.kernel, self.stride, self.pad);
        let mut y = Tensor::zeros(&[n, self.out_channels, g.ho, g.wo]);
        let mut cache = Vec::with_capacity(if train { n } else { 0 });
        for i in 0..n {
            let cols = im2col(x.sample(i), &g);
            let out = y.sample_mut(i);
            gemm(self.out_channels, g.rows(), g.cols(), 1.0, &self.weight.value, false, &cols, false, 0.0, out);
            add_channel_bias(out, &self.bias.value, g.cols());
            if train {
                cache.push(cols);
            }
        }
        self.cache = train.then_some((g, cache));
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (g, cols) = self.cache.as_ref().expect("conv backward without a training forward");
        let n = dy.batch();
        let mut dx = Tensor::zeros(&[n, g.c, g.h, g.w]);
        let mut dcols = vec![0.0; g.rows() * g.cols()];
        for i in 0..n {
            let d = dy.sample(i);
            if let Some(gw) = self.weight.grad_sink() {
                gemm(self.out_channels, g.cols(), g.rows(), 1.0, d, false, &cols[i], true, 1.0, gw);
            }
            if let Some(gb) = self.bias.grad_sink() {
                accumulate_channel_sums(d, gb, g.cols());
            }
            gemm(g.rows(), self.out_channels, g.cols(), 1.0, &self.weight.value, true, d, false, 0.0, &mut dcols);
            col2im(&dcols, g, dx.sample_mut(i));
        }
        dx
    }
}

impl Module for Conv2d {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Transposed convolution, the adjoint of a strided [`Conv2d`]. Weight layout
/// `[in, out, k, k]`; output size `(h - 1) * stride - 2 * pad + k + output_pad`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: Param,
    pub bias: Param,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub output_pad: usize,
    cache: Option<(Geometry, Tensor)>,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        output_pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = out_channels * kernel * kernel;
        Self {
            weight: Param::fan_in_uniform(
                prefixed(name, "weight"),
                &[in_channels, out_channels, kernel, kernel],
                fan_in,
                rng,
            ),
            bias: Param::fan_in_uniform(prefixed(name, "bias"), &[out_channels], fan_in, rng),
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            output_pad,
            cache: None,
        }
    }

    fn geometry(&self, h: usize, w: usize) -> Geometry {
        let ho = (h - 1) * self.stride + self.kernel + self.output_pad - 2 * self.pad;
        let wo = (w - 1) * self.stride + self.kernel + self.output_pad - 2 * self.pad;
        let g = Geometry::conv(self.out_channels, ho, wo, self.kernel, self.stride, self.pad);
        assert!(g.ho == h && g.wo == w, "transposed conv geometry does not invert for {h}x{w}");
        g
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.in_channels, "transposed conv expects {} channels", self.in_channels);
        let g = self.geometry(h, w);
        let mut y = Tensor::zeros(&[n, self.out_channels, g.h, g.w]);
        let mut cols = vec![0.0; g.rows() * g.cols()];
        for i in 0..n {
            gemm(g.rows(), c, g.cols(), 1.0, &self.weight.value, true, x.sample(i), false, 0.0, &mut cols);
            let out = y.sample_mut(i);
            col2im(&cols, &g, out);
            add_channel_bias(out, &self.bias.value, g.h * g.w);
        }
        self.cache = train.then(|| (g, x.clone()));
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (g, x) = self.cache.as_ref().expect("transposed conv backward without a training forward");
        let n = dy.batch();
        let mut dx = Tensor::zeros(&[n, self.in_channels, g.ho, g.wo]);
        for i in 0..n {
            let d = dy.sample(i);
            let dcols = im2col(d, g);
            if let Some(gw) = self.weight.grad_sink() {
                gemm(self.in_channels, g.cols(), g.rows(), 1.0, x.sample(i), false, &dcols, true, 1.0, gw);
            }
            if let Some(gb) = self.bias.grad_sink() {
                accumulate_channel_sums(d, gb, g.h * g.w);
            }
            gemm(self.in_channels, g.rows(), g.cols(), 1.0, &self.weight.value, false, &dcols, false, 0.0, dx.sample_mut(i));
        }
        dx
    }
}

impl Module for ConvTranspose2d {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Per-channel batch normalization. Training mode normalizes with batch
/// statistics and updates the running estimates; inference uses the latter.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Buffer,
    pub running_var: Buffer,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<(Vec<f64>, Vec<f64>)>, // xhat, inv_std per channel
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::filled(prefixed(name, "gamma"), &[channels], 1.0),
            beta: Param::filled(prefixed(name, "beta"), &[channels], 0.0),
            running_mean: Buffer::filled(prefixed(name, "running_mean"), &[channels], 0.0),
            running_var: Buffer::filled(prefixed(name, "running_var"), &[channels], 1.0),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.channels());
        let plane = h * w;
        let count = (n * plane) as f64;
        let mut y = x.clone();
        if !train {
            for ci in 0..c {
                let scale = self.gamma.value[ci] / (self.running_var.value[ci] + self.eps).sqrt();
                let shift = self.beta.value[ci] - self.running_mean.value[ci] * scale;
                for i in 0..n {
                    let s = &mut y.sample_mut(i)[ci * plane..(ci + 1) * plane];
                    s.iter_mut().for_each(|v| *v = *v * scale + shift);
                }
            }
            self.cache = None;
            return y;
        }
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; c];
        for ci in 0..c {
            let chan = |i: usize| &x.sample(i)[ci * plane..(ci + 1) * plane];
            let mean = (0..n).map(|i| chan(i).iter().sum::<f64>()).sum::<f64>() / count;
            let var = (0..n)
                .map(|i| chan(i).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>())
                .sum::<f64>()
                / count;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[ci] = is;
            let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
            let m = self.momentum;
            self.running_mean.value[ci] = (1.0 - m) * self.running_mean.value[ci] + m * mean;
            self.running_var.value[ci] = (1.0 - m) * self.running_var.value[ci] + m * unbiased;
            let (g, b) = (self.gamma.value[ci], self.beta.value[ci]);
            for i in 0..n {
                let off = i * c * plane + ci * plane;
                for j in 0..plane {
                    let xh = (x.data()[off + j] - mean) * is;
                    xhat[off + j] = xh;
                    y.data_mut()[off + j] = g * xh + b;
                }
            }
        }
        self.cache = Some((xhat, inv_std));
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (xhat, inv_std) = self.cache.as_ref().expect("batch norm backward without a training forward");
        let (n, c, h, w) = dy.dims4();
        let plane = h * w;
        let count = (n * plane) as f64;
        let mut dx = Tensor::zeros(dy.shape());
        for ci in 0..c {
            let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
            for i in 0..n {
                let off = i * c * plane + ci * plane;
                for j in 0..plane {
                    sum_dy += dy.data()[off + j];
                    sum_dy_xhat += dy.data()[off + j] * xhat[off + j];
                }
            }
            if let Some(g) = self.gamma.grad_sink() {
                g[ci] += sum_dy_xhat;
            }
            if let Some(g) = self.beta.grad_sink() {
                g[ci] += sum_dy;
            }
            let k = self.gamma.value[ci] * inv_std[ci] / count;
            for i in 0..n {
                let off = i * c * plane + ci * plane;
                for j in 0..plane {
                    dx.data_mut()[off + j] =
                        k * (count * dy.data()[off + j] - sum_dy - xhat[off + j] * sum_dy_xhat);
                }
            }
        }
        dx
    }
}

impl Module for BatchNorm2d {
    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
    fn buffers(&self) -> Vec<&Buffer> {
        vec![&self.running_mean, &self.running_var]
    }
    fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
#[derive(Clone, Debug, Default)]
pub struct MaxPool2 {
    cache: Option<(Vec<usize>, Vec<usize>)>, // input shape, argmax per output
}

impl MaxPool2 {
    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let (n, c, h, w) = x.dims4();
        let (ho, wo) = (h / 2, w / 2);
        assert!(ho > 0 && wo > 0, "max pool on {h}x{w}");
        let mut y = Tensor::zeros(&[n, c, ho, wo]);
        let mut arg = Vec::with_capacity(if train { y.len() } else { 0 });
        let (xd, yd) = (x.data(), y.data_mut());
        for p in 0..n * c {
            let base = p * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                    yd[p * ho * wo + oy * wo + ox] = xd[best];
                    if train {
                        arg.push(best);
                    }
                }
            }
        }
        self.cache = train.then(|| (x.shape().to_vec(), arg));
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (shape, arg) = self.cache.as_ref().expect("max pool backward without a training forward");
        let mut dx = Tensor::zeros(shape);
        for (g, &i) in dy.data().iter().zip(arg) {
            dx.data_mut()[i] += g;
        }
        dx
    }
}

/// Maximum over both spatial axes: `[N, C, H, W] -> [N, C]`.
#[derive(Clone, Debug, Default)]
pub struct GlobalMaxPool {
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl GlobalMaxPool {
    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let (n, c, h, w) = x.dims4();
        let plane = h * w;
        let mut y = Tensor::zeros(&[n, c]);
        let mut arg = Vec::with_capacity(n * c);
        for p in 0..n * c {
            let s = &x.data()[p * plane..(p + 1) * plane];
            let mut best = 0;
            for (j, v) in s.iter().enumerate() {
                if *v > s[best] {
                    best = j;
                }
            }
            y.data_mut()[p] = s[best];
            arg.push(p * plane + best);
        }
        self.cache = train.then(|| (x.shape().to_vec(), arg));
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (shape, arg) = self.cache.as_ref().expect("global pool backward without a training forward");
        let mut dx = Tensor::zeros(shape);
        for (g, &i) in dy.data().iter().zip(arg) {
            dx.data_mut()[i] += g;
        }
        dx
    }
}

/// Affine map `[N, in] -> [N, out]`, weight `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    pub in_features: usize,
    pub out_features: usize,
    cache: Option<Tensor>,
}

impl Linear {
    pub fn new(name: &str, in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: Param::fan_in_uniform(prefixed(name, "weight"), &[out_features, in_features], in_features, rng),
            bias: Param::fan_in_uniform(prefixed(name, "bias"), &[out_features], in_features, rng),
            in_features,
            out_features,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let (n, d) = x.dims2();
        assert_eq!(d, self.in_features, "linear expects {} features", self.in_features);
        let mut y = Tensor::zeros(&[n, self.out_features]);
        gemm(n, d, self.out_features, 1.0, x.data(), false, &self.weight.value, true, 0.0, y.data_mut());
        for i in 0..n {
            for (v, b) in y.sample_mut(i).iter_mut().zip(&self.bias.value) {
                *v += b;
            }
        }
        self.cache = train.then(|| x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.cache.as_ref().expect("linear backward without a training forward");
        let n = dy.batch();
        if let Some(gw) = self.weight.grad_sink() {
            gemm(self.out_features, n, self.in_features, 1.0, dy.data(), true, x.data(), false, 1.0, gw);
        }
        if let Some(gb) = self.bias.grad_sink() {
            for i in 0..n {
                for (g, d) in gb.iter_mut().zip(dy.sample(i)) {
                    *g += d;
                }
            }
        }
        let mut dx = Tensor::zeros(&[n, self.in_features]);
        gemm(n, self.out_features, self.in_features, 1.0, dy.data(), false, &self.weight.value, false, 0.0, dx.data_mut());
        dx
    }
}

impl Module for Linear {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Elementwise nonlinearity with its backward pass.
#[derive(Clone, Debug)]
pub struct Act {
    pub kind: Activation,
    cache: Option<Tensor>, // input for rectifiers, output for sigmoid
}

impl Act {
    pub fn new(kind: Activation) -> Self {
        Self { kind, cache: None }
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let mut y = x.clone();
        match self.kind {
            Activation::Relu => y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::LeakyRelu(a) => y.data_mut().iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v *= a
                }
            }),
            Activation::Sigmoid => y.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v)),
        }
        self.cache = train.then(|| match self.kind {
            Activation::Sigmoid => y.clone(),
            _ => x.clone(),
        });
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let c = self.cache.as_ref().expect("activation backward without a training forward");
        let mut dx = dy.clone();
        for (d, v) in dx.data_mut().iter_mut().zip(c.data()) {
            *d *= match self.kind {
                Activation::Relu => (*v > 0.0) as u8 as f64,
                Activation::LeakyRelu(a) => {
                    if *v < 0.0 {
                        a
                    } else {
                        1.0
                    }
                }
                Activation::Sigmoid => v * (1.0 - v),
            };
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn dot(a: &Tensor, b: &Tensor) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn conv_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut conv = Conv2d::new("c", 2, 3, 3, 2, 1, &mut rng);
        let x = rand_tensor(&[2, 2, 5, 6], &mut rng);
        let y = conv.forward(&x, false);
        assert_eq!(y.shape(), &[2, 3, 3, 3]);
        let w = &conv.weight.value;
        for n in 0..2 {
            for co in 0..3 {
                for oy in 0..3 {
                    for ox in 0..3 {
                        let mut acc = conv.bias.value[co];
                        for ci in 0..2 {
                            for ki in 0..3 {
                                for kj in 0..3 {
                                    let iy = (oy * 2 + ki) as isize - 1;
                                    let ix = (ox * 2 + kj) as isize - 1;
                                    if iy >= 0 && iy < 5 && ix >= 0 && ix < 6 {
                                        acc += w[((co * 2 + ci) * 3 + ki) * 3 + kj]
                                            * x.data()[((n * 2 + ci) * 5 + iy as usize) * 6 + ix as usize];
                                    }
                                }
                            }
                        }
                        let got = y.data()[((n * 3 + co) * 3 + oy) * 3 + ox];
                        assert!((got - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn transposed_conv_is_the_adjoint_of_conv() {
        // <conv(x), y> = <x, convT(y)> for shared weights and zero bias.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut conv = Conv2d::new("c", 2, 3, 5, 2, 2, &mut rng);
        let mut convt = ConvTranspose2d::new("t", 3, 2, 5, 2, 2, 1, &mut rng);
        convt.weight.value = conv.weight.value.clone();
        conv.bias.value.iter_mut().for_each(|b| *b = 0.0);
        convt.bias.value.iter_mut().for_each(|b| *b = 0.0);
        let x = rand_tensor(&[1, 2, 8, 12], &mut rng);
        let y = rand_tensor(&[1, 3, 4, 6], &mut rng);
        let cx = conv.forward(&x, false);
        let ty = convt.forward(&y, false);
        assert_eq!(ty.shape(), x.shape());
        assert!((dot(&cx, &y) - dot(&x, &ty)).abs() < 1e-10);
    }

    #[test]
    fn batch_norm_normalizes_and_tracks_running_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut bn = BatchNorm2d::new("bn", 2);
        let mut x = rand_tensor(&[4, 2, 3, 3], &mut rng);
        x.data_mut().iter_mut().for_each(|v| *v = *v * 3.0 + 5.0);
        let y = bn.forward(&x, true);
        for c in 0..2 {
            let vals: Vec<f64> = (0..4).flat_map(|i| y.sample(i)[c * 9..(c + 1) * 9].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / 36.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 36.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
            assert!(bn.running_mean.value[c] > 0.3);
        }
        let e1 = bn.forward(&x, false);
        let e2 = bn.forward(&x, false);
        assert_eq!(e1, e2);
    }

    #[test]
    fn pools_route_gradient_to_the_maximum() {
        let x = Tensor::new(&[1, 1, 2, 4], vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, 1.0]).unwrap();
        let mut p = MaxPool2::default();
        let y = p.forward(&x, true);
        assert_eq!(y.data(), &[5.0, 9.0]);
        let dx = p.backward(&Tensor::new(&[1, 1, 1, 2], vec![1.0, 2.0]).unwrap());
        assert_eq!(dx.data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        let mut g = GlobalMaxPool::default();
        let y = g.forward(&x, true);
        assert_eq!(y.data(), &[9.0]);
        let dx = g.backward(&Tensor::new(&[1, 1], vec![3.0]).unwrap());
        assert_eq!(dx.data()[6], 3.0);
        assert_eq!(dx.data().iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn frozen_layers_accumulate_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut lin = Linear::new("l", 3, 2, &mut rng);
        lin.set_frozen(true);
        let x = rand_tensor(&[2, 3], &mut rng);
        lin.forward(&x, true);
        let dx = lin.backward(&Tensor::new(&[2, 2], vec![1.0; 4]).unwrap());
        assert!(lin.weight.grad.iter().all(|g| *g == 0.0));
        assert!(dx.data().iter().any(|g| *g != 0.0));
    }
}
