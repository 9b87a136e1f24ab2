//! Sample ingestion, synthetic datasets and augmentation.

mod dataset;
mod netpbm;
mod sample;
mod synthetic;
mod transform;

pub use dataset::{load_dataset, pnm_to_tensor, sample_to_pnm, save_dataset, DataSource, DatasetSpec};
pub use netpbm::PnmImage;
pub use sample::{Mask, Sample};
pub use synthetic::{generate_synthetic, ShapeKind, SyntheticSpec};
pub use transform::{
    augment, draw_transforms, nearest_index, resize, resize_image, resize_mask, AugmentConfig, Rotation,
    Transform,
};
