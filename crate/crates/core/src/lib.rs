//! Invertible-by-design generative networks built from reversible residual
//! blocks, trainable either against a latent discriminator or by exact
//! optimal transport to learnable class-conditional Gaussians.
//!
//! All numeric code is generic over the float type ([`scalar::Scalar`]);
//! gradient checks run in f64, training runs in f32.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod discriminator;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod latent;
pub mod layers;
pub mod linalg;
pub mod losses;
pub mod memprobe;
pub mod optim;
pub mod ot;
pub mod params;
pub mod revnet;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::{Dtype, Scalar};
pub use tensor::Tensor;

/// Training-precision tensor.
pub type Tensor32 = Tensor<f32>;
/// Gradient-check-precision tensor.
pub type Tensor64 = Tensor<f64>;
