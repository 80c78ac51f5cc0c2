//! Minimal reverse-mode differentiation over dense tensors, with the layer
//! set of a small U-Net, diagonal-Gaussian helpers and Adam.

mod adam;
mod gaussian;
pub mod gradcheck;
mod graph;
mod params;
mod scalar;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState, StepOutcome};
pub use gaussian::{
    kl_std_normal, kl_std_normal_values, reparameterize, reparameterize_with, standard_normal,
    GaussianParams, LOGVAR_MAX, LOGVAR_MIN,
};
pub use graph::{Gradients, Graph, LinearMap, Var, LEAKY_SLOPE};
pub use params::{ParamSpec, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;
