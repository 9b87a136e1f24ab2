//! Eager tensor kernels. Each forward function here has a matching
//! vector-Jacobian product used by [`crate::autodiff::Tape`].

pub mod attention;
pub mod conv;
pub mod dense;
pub mod elementwise;
pub mod loss;
pub mod norm;
pub mod spatial;

pub use attention::{relative_position_index, shifted_window_mask, MASK_VALUE};
pub use conv::{conv2d, ConvGeometry};
pub use dense::{bmm, linear};
pub use elementwise::{activation, Activation};
pub use loss::{cross_entropy, dice_loss, DICE_SMOOTH};
pub use norm::{layer_norm, softmax};
pub use spatial::{
    channel_stats, concat_channels, mul_channel_broadcast, roll, slice_channels, upsample_nearest2x,
    window_partition, window_reverse,
};
