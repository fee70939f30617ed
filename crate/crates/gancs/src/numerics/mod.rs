//! Tensor substrate and differentiable kernels for the generator/discriminator
//! networks: convolution, batch normalization, activations and reductions,
//! each with an exact reverse-mode backward pass.
//!
//! Everything is generic over [`Real`] so that training can run in `f32`
//! while finite-difference gradient checks run the same kernels in `f64`.

mod activations;
mod conv;
mod gradcheck;
mod norm;
mod tensor;

pub use activations::{
    relu, relu_backward, sigmoid, sigmoid_backward, spatial_mean, spatial_mean_backward,
};
pub use conv::{conv2d_backward, conv2d_forward, conv_output_geometry, Padding};
pub use gradcheck::grad_check;
pub use norm::{
    apply_running_update, batchnorm_backward, batchnorm_forward, batchnorm_inference,
    batchnorm_train, BnCache, BnMode, BnState, BN_EPSILON, BN_MOMENTUM,
};
pub use tensor::{Dtype, Real, Tensor};

/// Gradients produced by one layer's backward pass: the gradient with respect
/// to the layer input plus one named gradient per parameter, shapes mirroring
/// the forward inputs exactly.
#[derive(Debug, Clone)]
pub struct LayerGradients<T> {
    pub input_grad: Tensor<T>,
    pub param_grads: Vec<(&'static str, Tensor<T>)>,
}

impl<T: Real> LayerGradients<T> {
    pub fn param_grad(&self, name: &str) -> Option<&Tensor<T>> {
        self.param_grads
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t)
    }
}
