//! Network building blocks.

pub mod attention;
pub mod basic;
pub mod hybrid;
pub mod parf;
pub mod residual;
pub mod sampling;

pub use attention::{AttentionConfig, AttentionTrace, WindowAttentionBlock};
pub use basic::{Conv2d, LayerNorm, Linear};
pub use hybrid::{HybridLayer, HybridModule, HybridModuleTrace};
pub use parf::{spatial_attention, ConvParfLayer, ParfCapture, DEFAULT_KERNELS};
pub use residual::{ResidualConvBlock, StaticConvBlock, LEAKY_SLOPE};
pub use sampling::{Downsample, SkipFuse, Upsample};
