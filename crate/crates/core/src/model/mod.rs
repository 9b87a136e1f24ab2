//! Assembling PARF-Net from a variant specification.

pub mod config;
pub mod net;
pub mod variant;

pub use config::ModelConfig;
pub use net::{argmax_classes, build_model, ActivationMaps, ForwardCapture, ParfNet, StageLayer};
pub use variant::{parse_variant, LayerKind, VariantSpec, TABLE_VARIANTS};
