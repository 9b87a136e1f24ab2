//! Resolution changes and encoder/decoder skip fusion.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::basic::Conv2d;
use crate::nn::residual::LEAKY_SLOPE;
use crate::params::ParamStore;
use crate::scalar::Scalar;

/// Learned 2×2 stride-2 convolution halving the resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Downsample {
    pub conv: Conv2d,
}

impl Downsample {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(store, &format!("{name}.conv"), c_in, c_out, 2, 2, 0)?,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let [_, _, h, w] = tape.value(x).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::config(format!("cannot downsample odd feature map {h}x{w}")));
        }
        self.conv.forward(tape, x)
    }
}

/// Nearest-neighbour 2× upsampling followed by a 1×1 channel projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Upsample {
    pub conv: Conv2d,
}

impl Upsample {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::same(store, &format!("{name}.conv"), c_in, c_out, 1)?,
        })
    }

    /// Halving projection `c → c/2`.
    pub fn halving<T: Scalar>(store: &mut ParamStore<T>, name: &str, c_in: usize) -> Result<Self> {
        if c_in % 2 != 0 {
            return Err(Error::config(format!("cannot halve odd channel count {c_in}")));
        }
        Self::new(store, name, c_in, c_in / 2)
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let up = tape.upsample_nearest2x(x)?;
        self.conv.forward(tape, up)
    }
}

/// `lrelu(conv3×3(concat(decoder, encoder)))`, `2c → c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipFuse {
    pub conv: Conv2d,
}

impl SkipFuse {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::same(store, &format!("{name}.conv"), 2 * channels, channels, 3)?,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, decoder: Var, encoder: Var) -> Result<Var> {
        if tape.shape(decoder) != tape.shape(encoder) {
            return Err(Error::shape(format!(
                "skip fusion operands {:?} and {:?} differ",
                tape.shape(decoder),
                tape.shape(encoder)
            )));
        }
        let cat = tape.concat_channels(&[decoder, encoder])?;
        let h = self.conv.forward(tape, cat)?;
        Ok(tape.leaky_relu(h, LEAKY_SLOPE))
    }
}
