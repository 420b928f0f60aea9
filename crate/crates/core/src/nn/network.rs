use crate::error::{ensure_finite, Error, Result};
use crate::nn::{Layer, Tensor};

/// Gradients for a parameter list, one buffer per parameter tensor, in the
/// same order as the owner's `params()`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamGrads(pub Vec<Vec<f64>>);

impl ParamGrads {
    pub fn zeros_like(params: &[&[f64]]) -> Self {
        ParamGrads(params.iter().map(|p| vec![0.0; p.len()]).collect())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ParamGrads, scale: f64) {
        debug_assert_eq!(self.0.len(), other.0.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.iter_mut().zip(b).for_each(|(a, b)| *a += scale * b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().flatten().for_each(|g| *g *= s);
    }

    pub fn extend(&mut self, other: ParamGrads) {
        self.0.extend(other.0);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Sums per-sample gradient contributions over `n` samples.
///
/// Samples are split into a fixed number of contiguous chunks; each chunk
/// accumulates in index order and chunk totals are added in order, so the
/// result does not depend on the thread count. `f(b, acc)` adds sample
/// `b`'s gradient into `acc` and returns its loss.
pub fn accumulate_grads<Z, F>(n: usize, zeros: Z, f: F) -> Result<(f64, ParamGrads)>
where
    Z: Fn() -> ParamGrads + Sync,
    F: Fn(usize, &mut ParamGrads) -> Result<f64> + Sync,
{
    let chunk = n.div_ceil(GRAD_CHUNKS).max(1);
    let chunks = n.div_ceil(chunk);
    let partial = crate::par::try_map_range(chunks, |c| -> Result<(f64, ParamGrads)> {
        let mut acc = zeros();
        let mut loss = 0.0;
        for b in c * chunk..((c + 1) * chunk).min(n) {
            loss += f(b, &mut acc)?;
        }
        Ok((loss, acc))
    })?;
    let mut it = partial.into_iter();
    let (mut loss, mut total) = it.next().unwrap_or_else(|| (0.0, zeros()));
    for (l, g) in it {
        loss += l;
        total.add_scaled(&g, 1.0);
    }
    Ok((loss, total))
}

const GRAD_CHUNKS: usize = 16;

/// Index ranges of each network's buffers within a concatenated gradient
/// list, in the given order.
pub fn grad_slots(nets: &[&Network]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    nets.iter()
        .map(|n| {
            let r = start..start + n.params().len();
            start = r.end;
            r
        })
        .collect()
}

/// Stored activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace holds the input")
    }

    pub fn input(&self) -> &[f64] {
        &self.acts[0]
    }
}

/// Ordered stack of layers. An empty network is the identity map.
#[derive(Debug, Clone, Default)]
pub struct Network {
    layers: Vec<Layer>,
    cache: Option<Trace>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::shape(
                    "Network layers",
                    format!("layer {} fan_in {}", i + 1, pair[0].fan_out()),
                    pair[1].fan_in(),
                ));
            }
        }
        Ok(Network {
            layers,
            cache: None,
        })
    }

    pub fn identity() -> Self {
        Network::default()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.cache = None;
        &mut self.layers
    }

    pub fn is_identity(&self) -> bool {
        self.layers.is_empty()
    }

    /// Input width, or `None` for the identity network.
    pub fn fan_in(&self) -> Option<usize> {
        self.layers.first().map(Layer::fan_in)
    }

    pub fn fan_out(&self) -> Option<usize> {
        self.layers.last().map(Layer::fan_out)
    }

    /// Appends the layers of `other` after this network's.
    pub fn then(mut self, other: Network) -> Result<Self> {
        self.layers.extend(other.layers);
        Network::new(self.layers)
    }

    /// Evaluates the network and records the trace needed by [`Network::backprop`].
    pub fn trace(&self, x: &[f64]) -> Result<Trace> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(x.to_vec());
        for layer in &self.layers {
            let (p, a) = layer.forward(acts.last().expect("non-empty"))?;
            pre.push(p);
            acts.push(a);
        }
        let trace = Trace { acts, pre };
        ensure_finite(trace.output(), "network forward")?;
        Ok(trace)
    }

    /// Forward without keeping intermediates beyond the current layer.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.forward(&cur)?.1;
        }
        ensure_finite(&cur, "network forward")?;
        Ok(cur)
    }

    /// Reverse pass through a trace produced by this network.
    ///
    /// Returns the parameter gradients and the gradient with respect to the input.
    pub fn backprop(&self, trace: &Trace, upstream: &[f64]) -> Result<(ParamGrads, Vec<f64>)> {
        let mut grads = self.zero_grads();
        let dx = self.backprop_into(trace, upstream, &mut grads.0, 1.0)?;
        Ok((grads, dx))
    }

    /// Like [`Network::backprop`] but adds `scale` times the parameter
    /// gradients into `grads`, which holds one buffer per parameter tensor.
    pub fn backprop_into(
        &self,
        trace: &Trace,
        upstream: &[f64],
        grads: &mut [Vec<f64>],
        scale: f64,
    ) -> Result<Vec<f64>> {
        if trace.pre.len() != self.layers.len() {
            return Err(Error::shape(
                "Network::backprop trace",
                self.layers.len(),
                trace.pre.len(),
            ));
        }
        if upstream.len() != trace.output().len() {
            return Err(Error::shape(
                "Network::backprop upstream",
                trace.output().len(),
                upstream.len(),
            ));
        }
        let counts: Vec<usize> = self.layers.iter().map(|l| l.params().len()).collect();
        if grads.len() != counts.iter().sum::<usize>() {
            return Err(Error::shape(
                "Network::backprop grads",
                counts.iter().sum::<usize>(),
                grads.len(),
            ));
        }
        let mut end = grads.len();
        let mut grad = upstream.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let start = end - counts[i];
            grad = layer.backward_into(
                &trace.acts[i],
                &trace.pre[i],
                &trace.acts[i + 1],
                &grad,
                &mut grads[start..end],
                scale,
            )?;
            end = start;
        }
        Ok(grad)
    }

    /// Cached forward: stores the trace for a following [`Network::backward`].
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let trace = self.trace(x.as_slice())?;
        let out = Tensor::vector(trace.output().to_vec());
        self.cache = Some(trace);
        Ok(out)
    }

    /// Consumes the cached trace from the last [`Network::forward`].
    pub fn backward(&mut self, upstream: &Tensor) -> Result<ParamGrads> {
        let trace = self.cache.take().ok_or(Error::MissingCache)?;
        let result = self.backprop(&trace, upstream.as_slice());
        if result.is_err() {
            self.cache = Some(trace);
        }
        result.map(|(g, _)| g)
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.cache = None;
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads::zeros_like(&self.params())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }
}

/// Total weight and bias elements of `net`.
pub fn param_count(net: &Network) -> usize {
    net.param_count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};

    fn linear_identity(d: usize) -> Network {
        let mut w = Tensor::zeros(&[d, d]);
        for i in 0..d {
            w.set(&[i, i], 1.0);
        }
        Network::new(vec![Dense::new(
            w,
            Some(Tensor::zeros(&[d])),
            Activation::Linear,
        )
        .unwrap()
        .into()])
        .unwrap()
    }

    #[test]
    fn identity_layer_forward() {
        let mut net = linear_identity(2);
        let y = net.forward(&Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn zero_sigmoid_layer_gives_half() {
        let net = Network::new(vec![Dense::zeros(3, 4, Activation::Sigmoid, true).into()]).unwrap();
        let y = net.predict(&[5.0, -2.0, 0.3]).unwrap();
        assert_eq!(y, vec![0.5; 4]);
    }

    #[test]
    fn backward_requires_forward() {
        let mut net = linear_identity(2);
        assert!(matches!(
            net.backward(&Tensor::vector(vec![1.0, 1.0])),
            Err(Error::MissingCache)
        ));
        net.forward(&Tensor::vector(vec![1.0, 1.0])).unwrap();
        net.backward(&Tensor::vector(vec![1.0, 1.0])).unwrap();
        assert!(!net.has_cache());
        assert!(net.backward(&Tensor::vector(vec![1.0, 1.0])).is_err());
    }

    #[test]
    fn half_squared_norm_closed_form() {
        // loss = ½‖y‖², so upstream = y, dW = y xᵀ, db = y.
        let w = Tensor::matrix(2, 3, vec![0.5, -1.0, 0.25, 2.0, 0.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![0.1, -0.2]);
        let mut net = Network::new(vec![Dense::new(w, Some(b), Activation::Linear)
            .unwrap()
            .into()])
        .unwrap();
        let x = Tensor::vector(vec![1.0, 2.0, -1.0]);
        let y = net.forward(&x).unwrap();
        let g = net.backward(&y).unwrap();
        let y = y.as_slice();
        let expected_dw: Vec<f64> = y
            .iter()
            .flat_map(|yi| x.as_slice().iter().map(move |xj| yi * xj))
            .collect();
        assert_eq!(g.0[0], expected_dw);
        assert_eq!(g.0[1], y.to_vec());
    }

    #[test]
    fn zero_input_gives_zero_weight_grad() {
        let net = Network::new(vec![Dense::zeros(3, 2, Activation::Linear, true).into()]).unwrap();
        let trace = net.trace(&[0.0; 3]).unwrap();
        let (g, _) = net.backprop(&trace, &[0.7, -1.3]).unwrap();
        assert!(g.0[0].iter().all(|&v| v == 0.0));
        assert_eq!(g.0[1], vec![0.7, -1.3]);
    }

    #[test]
    fn mismatched_layers_rejected() {
        let r = Network::new(vec![
            Dense::zeros(3, 2, Activation::Tanh, true).into(),
            Dense::zeros(3, 1, Activation::Linear, true).into(),
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn input_shape_checked() {
        let net = linear_identity(2);
        assert!(net.predict(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn empty_network_counts_zero_and_is_identity() {
        let net = Network::identity();
        assert_eq!(param_count(&net), 0);
        assert_eq!(net.predict(&[1.0, -4.0]).unwrap(), vec![1.0, -4.0]);
    }

    #[test]
    fn non_finite_output_is_error() {
        let w = Tensor::matrix(1, 1, vec![f64::MAX]).unwrap();
        let net = Network::new(vec![Dense::new(w, None, Activation::Linear)
            .unwrap()
            .into()])
        .unwrap();
        assert!(matches!(net.predict(&[10.0]), Err(Error::NonFinite(_))));
    }
}
