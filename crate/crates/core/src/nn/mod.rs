//! Minimal dense/convolutional network kernel with hand-written backprop.

mod layer;
mod network;
mod optim;
mod tensor;

pub use layer::{
    conv2d_forward, sigmoid, softplus, Activation, BiasActivation, Conv2d, Dense, Layer,
};
pub use network::{accumulate_grads, grad_slots, param_count, Network, ParamGrads, Trace};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tensor::{dot, sq_dist, sq_norm, Tensor};

/// Something that owns trainable parameters in a fixed order.
pub trait Parameterized {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn zero_grads(&self) -> ParamGrads {
        ParamGrads::zeros_like(&self.params())
    }
}

impl Parameterized for Network {
    fn params(&self) -> Vec<&[f64]> {
        Network::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        Network::params_mut(self)
    }
}
