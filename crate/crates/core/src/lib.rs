//! PARF-Net: a U-shaped segmentation network whose early encoder layers
//! pick a receptive field per pixel (Conv-PARF) and whose deep layers run
//! parallel residual-convolution and window-attention branches.
//!
//! Everything runs on a small CPU tensor engine with tape-based reverse-mode
//! differentiation, so every block can be checked against finite differences.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod ops;
pub mod params;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use params::{Init, ParamId, ParamStore, Parameter};
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;
