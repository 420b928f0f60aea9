//! Layer kinds: dense affine maps, valid 2-D cross-correlation, and a
//! parameter-only bias shift.
//!
//! Layers are stateless with respect to evaluation. `forward` returns the
//! pre-activation alongside the output so the caller can keep whatever it
//! needs for the backward pass.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Linear,
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative at `pre`, given the already computed `post = apply(pre)`.
    #[inline]
    pub fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - post * post,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => post * (1.0 - post),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize, len: usize) -> Vec<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-a..=a)).collect()
}

/// `y = act(W x + b)` with `W` stored `fan_out × fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Tensor,
    /// `None` for bias-free layers.
    pub bias: Option<Tensor>,
    pub activation: Activation,
}

impl Dense {
    pub fn new(weights: Tensor, bias: Option<Tensor>, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::shape(
                "Dense weights",
                "rank 2",
                weights.shape().len(),
            ));
        }
        if let Some(b) = &bias {
            if b.len() != weights.shape()[0] {
                return Err(Error::shape("Dense bias", weights.shape()[0], b.len()));
            }
        }
        Ok(Dense {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        rng: &mut R,
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        with_bias: bool,
    ) -> Self {
        let w = glorot(rng, fan_in, fan_out, fan_in * fan_out);
        Dense {
            weights: Tensor::new(vec![fan_out, fan_in], w).expect("positive dims"),
            bias: with_bias.then(|| Tensor::zeros(&[fan_out])),
            activation,
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize, activation: Activation, with_bias: bool) -> Self {
        Dense {
            weights: Tensor::zeros(&[fan_out, fan_in]),
            bias: with_bias.then(|| Tensor::zeros(&[fan_out])),
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn fan_out(&self) -> usize {
        self.weights.shape()[0]
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n_in = self.fan_in();
        let w = self.weights.as_slice();
        let mut pre: Vec<f64> = w.chunks_exact(n_in).map(|row| super::dot(row, x)).collect();
        if let Some(b) = &self.bias {
            pre.iter_mut().zip(b.as_slice()).for_each(|(p, b)| *p += b);
        }
        let out = pre.iter().map(|&p| self.activation.apply(p)).collect();
        (pre, out)
    }

    fn backward(
        &self,
        x: &[f64],
        pre: &[f64],
        out: &[f64],
        upstream: &[f64],
    ) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n_in = self.fan_in();
        let delta: Vec<f64> = upstream
            .iter()
            .zip(pre.iter().zip(out))
            .map(|(g, (&p, &o))| g * self.activation.derivative(p, o))
            .collect();
        let mut dw = vec![0.0; self.weights.len()];
        for (row, &d) in dw.chunks_exact_mut(n_in).zip(&delta) {
            if d != 0.0 {
                row.iter_mut().zip(x).for_each(|(g, xi)| *g = d * xi);
            }
        }
        let mut dx = vec![0.0; n_in];
        for (row, &d) in self.weights.as_slice().chunks_exact(n_in).zip(&delta) {
            if d != 0.0 {
                dx.iter_mut().zip(row).for_each(|(g, w)| *g += d * w);
            }
        }
        let mut grads = vec![dw];
        if self.bias.is_some() {
            grads.push(delta);
        }
        (grads, dx)
    }

    fn backward_into(
        &self,
        x: &[f64],
        pre: &[f64],
        out: &[f64],
        upstream: &[f64],
        grads: &mut [Vec<f64>],
        scale: f64,
    ) -> Vec<f64> {
        let n_in = self.fan_in();
        let delta: Vec<f64> = upstream
            .iter()
            .zip(pre.iter().zip(out))
            .map(|(g, (&p, &o))| g * self.activation.derivative(p, o))
            .collect();
        let (dw, db) = grads.split_at_mut(1);
        for (row, &d) in dw[0].chunks_exact_mut(n_in).zip(&delta) {
            if d != 0.0 {
                let c = scale * d;
                row.iter_mut().zip(x).for_each(|(g, xi)| *g += c * xi);
            }
        }
        if let Some(b) = db.first_mut() {
            b.iter_mut().zip(&delta).for_each(|(g, d)| *g += scale * d);
        }
        let mut dx = vec![0.0; n_in];
        for (row, &d) in self.weights.as_slice().chunks_exact(n_in).zip(&delta) {
            if d != 0.0 {
                dx.iter_mut().zip(row).for_each(|(g, w)| *g += d * w);
            }
        }
        dx
    }
}

/// Valid cross-correlation over a `(in_ch, height, width)` image.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `(out_ch, in_ch, kh, kw)`.
    pub kernels: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub activation: Activation,
    /// `(in_ch, height, width)` expected on input.
    pub input_shape: [usize; 3],
}

impl Conv2d {
    pub fn new(
        kernels: Tensor,
        bias: Tensor,
        stride: usize,
        activation: Activation,
        input_shape: [usize; 3],
    ) -> Result<Self> {
        let ks = kernels.shape();
        if ks.len() != 4 {
            return Err(Error::shape("Conv2d kernels", "rank 4", ks.len()));
        }
        if bias.len() != ks[0] {
            return Err(Error::shape("Conv2d bias", ks[0], bias.len()));
        }
        if ks[1] != input_shape[0] {
            return Err(Error::shape("Conv2d in_ch", ks[1], input_shape[0]));
        }
        if stride == 0 {
            return Err(Error::invalid("conv stride must be positive"));
        }
        if ks[2] > input_shape[1] || ks[3] > input_shape[2] {
            return Err(Error::invalid(format!(
                "kernel {}x{} larger than image {}x{}",
                ks[2], ks[3], input_shape[1], input_shape[2]
            )));
        }
        Ok(Conv2d {
            kernels,
            bias,
            stride,
            activation,
            input_shape,
        })
    }

    pub fn glorot<R: Rng + ?Sized>(
        rng: &mut R,
        input_shape: [usize; 3],
        out_ch: usize,
        kernel: (usize, usize),
        activation: Activation,
    ) -> Result<Self> {
        let in_ch = input_shape[0];
        let rf = kernel.0 * kernel.1;
        let len = out_ch * in_ch * rf;
        let w = glorot(rng, in_ch * rf, out_ch * rf, len);
        Conv2d::new(
            Tensor::new(vec![out_ch, in_ch, kernel.0, kernel.1], w)?,
            Tensor::zeros(&[out_ch]),
            1,
            activation,
            input_shape,
        )
    }

    /// `(out_ch, out_h, out_w)`.
    pub fn output_shape(&self) -> [usize; 3] {
        let ks = self.kernels.shape();
        [
            ks[0],
            (self.input_shape[1] - ks[2]) / self.stride + 1,
            (self.input_shape[2] - ks[3]) / self.stride + 1,
        ]
    }

    pub fn fan_in(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn fan_out(&self) -> usize {
        self.output_shape().iter().product()
    }

    fn forward(&self, img: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ks = self.kernels.shape();
        let (ic, kh, kw) = (ks[1], ks[2], ks[3]);
        let [_, h, w] = self.input_shape;
        let [oc, oh, ow] = self.output_shape();
        let k = self.kernels.as_slice();
        let s = self.stride;
        let mut pre = vec![0.0; oc * oh * ow];
        for o in 0..oc {
            let out = &mut pre[o * oh * ow..(o + 1) * oh * ow];
            out.fill(self.bias.as_slice()[o]);
            for c in 0..ic {
                let plane = &img[c * h * w..(c + 1) * h * w];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let kv = k[((o * ic + c) * kh + ky) * kw + kx];
                        for y in 0..oh {
                            let src = &plane[(y * s + ky) * w + kx..];
                            let dst = &mut out[y * ow..(y + 1) * ow];
                            for (x, d) in dst.iter_mut().enumerate() {
                                *d += kv * src[x * s];
                            }
                        }
                    }
                }
            }
        }
        let out = pre.iter().map(|&p| self.activation.apply(p)).collect();
        (pre, out)
    }

    fn backward(
        &self,
        img: &[f64],
        pre: &[f64],
        out: &[f64],
        upstream: &[f64],
    ) -> (Vec<Vec<f64>>, Vec<f64>) {
        let ks = self.kernels.shape();
        let (ic, kh, kw) = (ks[1], ks[2], ks[3]);
        let [_, h, w] = self.input_shape;
        let [oc, oh, ow] = self.output_shape();
        let k = self.kernels.as_slice();
        let s = self.stride;
        let delta: Vec<f64> = upstream
            .iter()
            .zip(pre.iter().zip(out))
            .map(|(g, (&p, &o))| g * self.activation.derivative(p, o))
            .collect();
        let mut dk = vec![0.0; k.len()];
        let mut db = vec![0.0; oc];
        let mut dx = vec![0.0; img.len()];
        for o in 0..oc {
            let d = &delta[o * oh * ow..(o + 1) * oh * ow];
            db[o] = d.iter().sum();
            for c in 0..ic {
                let plane = &img[c * h * w..(c + 1) * h * w];
                let dplane = &mut dx[c * h * w..(c + 1) * h * w];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let ki = ((o * ic + c) * kh + ky) * kw + kx;
                        let kv = k[ki];
                        let mut acc = 0.0;
                        for y in 0..oh {
                            let row = (y * s + ky) * w + kx;
                            for x in 0..ow {
                                let g = d[y * ow + x];
                                acc += g * plane[row + x * s];
                                dplane[row + x * s] += g * kv;
                            }
                        }
                        dk[ki] += acc;
                    }
                }
            }
        }
        (vec![dk, db], dx)
    }
}

/// Elementwise `y = act(x + b)`. Carries a bias without a weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasActivation {
    pub bias: Tensor,
    pub activation: Activation,
}

impl BiasActivation {
    pub fn zeros(width: usize, activation: Activation) -> Self {
        BiasActivation {
            bias: Tensor::zeros(&[width]),
            activation,
        }
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let pre: Vec<f64> = x
            .iter()
            .zip(self.bias.as_slice())
            .map(|(x, b)| x + b)
            .collect();
        let out = pre.iter().map(|&p| self.activation.apply(p)).collect();
        (pre, out)
    }

    fn backward(&self, pre: &[f64], out: &[f64], upstream: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let delta: Vec<f64> = upstream
            .iter()
            .zip(pre.iter().zip(out))
            .map(|(g, (&p, &o))| g * self.activation.derivative(p, o))
            .collect();
        (vec![delta.clone()], delta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    BiasActivation(BiasActivation),
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        match self {
            Layer::Dense(l) => l.fan_in(),
            Layer::Conv2d(l) => l.fan_in(),
            Layer::BiasActivation(l) => l.bias.len(),
        }
    }

    pub fn fan_out(&self) -> usize {
        match self {
            Layer::Dense(l) => l.fan_out(),
            Layer::Conv2d(l) => l.fan_out(),
            Layer::BiasActivation(l) => l.bias.len(),
        }
    }

    /// Returns `(pre_activation, output)`.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.fan_in() {
            return Err(Error::shape("layer input", self.fan_in(), x.len()));
        }
        Ok(match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Conv2d(l) => l.forward(x),
            Layer::BiasActivation(l) => l.forward(x),
        })
    }

    /// Returns `(parameter grads in `params()` order, input grad)`.
    pub fn backward(
        &self,
        x: &[f64],
        pre: &[f64],
        out: &[f64],
        upstream: &[f64],
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if upstream.len() != self.fan_out() {
            return Err(Error::shape(
                "layer upstream grad",
                self.fan_out(),
                upstream.len(),
            ));
        }
        Ok(match self {
            Layer::Dense(l) => l.backward(x, pre, out, upstream),
            Layer::Conv2d(l) => l.backward(x, pre, out, upstream),
            Layer::BiasActivation(l) => l.backward(pre, out, upstream),
        })
    }

    /// Adds `scale` times the parameter gradients into `grads` (one buffer
    /// per parameter tensor) and returns the input gradient.
    pub fn backward_into(
        &self,
        x: &[f64],
        pre: &[f64],
        out: &[f64],
        upstream: &[f64],
        grads: &mut [Vec<f64>],
        scale: f64,
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.fan_out() {
            return Err(Error::shape(
                "layer upstream grad",
                self.fan_out(),
                upstream.len(),
            ));
        }
        if let Layer::Dense(l) = self {
            return Ok(l.backward_into(x, pre, out, upstream, grads, scale));
        }
        let (g, dx) = self.backward(x, pre, out, upstream)?;
        for (acc, g) in grads.iter_mut().zip(&g) {
            acc.iter_mut().zip(g).for_each(|(a, g)| *a += scale * g);
        }
        Ok(dx)
    }

    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Dense(l) => {
                let mut v = vec![l.weights.as_slice()];
                if let Some(b) = &l.bias {
                    v.push(b.as_slice());
                }
                v
            }
            Layer::Conv2d(l) => vec![l.kernels.as_slice(), l.bias.as_slice()],
            Layer::BiasActivation(l) => vec![l.bias.as_slice()],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Dense(l) => {
                let mut v = vec![l.weights.as_mut_slice()];
                if let Some(b) = &mut l.bias {
                    v.push(b.as_mut_slice());
                }
                v
            }
            Layer::Conv2d(l) => vec![l.kernels.as_mut_slice(), l.bias.as_mut_slice()],
            Layer::BiasActivation(l) => vec![l.bias.as_mut_slice()],
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

impl From<Dense> for Layer {
    fn from(l: Dense) -> Self {
        Layer::Dense(l)
    }
}

impl From<Conv2d> for Layer {
    fn from(l: Conv2d) -> Self {
        Layer::Conv2d(l)
    }
}

impl From<BiasActivation> for Layer {
    fn from(l: BiasActivation) -> Self {
        Layer::BiasActivation(l)
    }
}

/// Conv forward on a tensor-shaped image, returning `(out_ch, H', W')`.
pub fn conv2d_forward(layer: &Conv2d, img: &Tensor) -> Result<Tensor> {
    let [c, h, w] = layer.input_shape;
    if img.shape() != [c, h, w] {
        return Err(Error::shape(
            "conv2d_forward image",
            format!("{:?}", [c, h, w]),
            format!("{:?}", img.shape()),
        ));
    }
    let (_, out) = layer.forward(img.as_slice());
    crate::error::ensure_finite(&out, "conv2d_forward")?;
    Tensor::new(layer.output_shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_kernel_reproduces_input() {
        let img = Tensor::new(vec![1, 3, 4], (0..12).map(|v| v as f64 * 0.5).collect()).unwrap();
        let conv = Conv2d::new(
            Tensor::filled(&[1, 1, 1, 1], 1.0),
            Tensor::zeros(&[1]),
            1,
            Activation::Linear,
            [1, 3, 4],
        )
        .unwrap();
        let out = conv2d_forward(&conv, &img).unwrap();
        assert_eq!(out.shape(), &[1, 3, 4]);
        assert_eq!(out.as_slice(), img.as_slice());
    }

    #[test]
    fn ones_kernel_on_constant_field() {
        let c = 1.75;
        let img = Tensor::filled(&[1, 6, 5], c);
        let conv = Conv2d::new(
            Tensor::filled(&[1, 1, 3, 3], 1.0),
            Tensor::zeros(&[1]),
            1,
            Activation::Linear,
            [1, 6, 5],
        )
        .unwrap();
        let out = conv2d_forward(&conv, &img).unwrap();
        assert_eq!(out.shape(), &[1, 4, 3]);
        assert!(out.as_slice().iter().all(|&v| (v - 9.0 * c).abs() < 1e-12));
    }

    #[test]
    fn kernel_larger_than_image_is_rejected() {
        let err = Conv2d::new(
            Tensor::zeros(&[1, 1, 5, 5]),
            Tensor::zeros(&[1]),
            1,
            Activation::Linear,
            [1, 4, 4],
        );
        assert!(err.is_err());
    }

    #[test]
    fn strided_conv_output_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut conv = Conv2d::glorot(&mut rng, [2, 7, 7], 3, (3, 3), Activation::Relu).unwrap();
        conv.stride = 2;
        assert_eq!(conv.output_shape(), [3, 3, 3]);
    }

    #[test]
    fn sigmoid_and_softplus_are_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
        assert!(softplus(-800.0) >= 0.0);
    }
}
