//! Sparse-view CT reconstruction with a physics-informed variational
//! autoencoder.
//!
//! The crate bundles the measurement physics ([`projector`]), classical
//! baselines ([`classical`]), a small reverse-mode differentiation engine
//! ([`diffgraph`]), the autoencoder itself ([`pvae`]), an exact posterior for
//! the two-object toy problem ([`oracle`]), image-quality metrics
//! ([`metrics`]) and the phantom generators ([`phantoms`]).

pub mod classical;
pub mod diffgraph;
pub mod error;
pub mod image;
pub mod metrics;
pub mod oracle;
pub mod phantoms;
pub mod projector;
pub mod pvae;
pub mod rng;
pub mod tensorio;

pub use error::{Error, Result};
pub use image::ImageGrid;
