use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::nn::basic::Conv2d;
use crate::params::ParamStore;
use crate::scalar::Scalar;

pub const LEAKY_SLOPE: f64 = 0.01;

/// `x + lrelu(conv3×3(lrelu(conv3×3(x))))`, channel preserving.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualConvBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub slope: f64,
}

impl ResidualConvBlock {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            conv1: Conv2d::same(store, &format!("{name}.conv1"), channels, channels, 3)?,
            conv2: Conv2d::same(store, &format!("{name}.conv2"), channels, channels, 3)?,
            slope: LEAKY_SLOPE,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let h = self.conv1.forward(tape, x)?;
        let h = tape.leaky_relu(h, self.slope);
        let h = self.conv2.forward(tape, h)?;
        let h = tape.leaky_relu(h, self.slope);
        tape.add(x, h)
    }
}

/// Plain double 3×3 convolution with LeakyReLU; no skip connection.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticConvBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub slope: f64,
}

impl StaticConvBlock {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            conv1: Conv2d::same(store, &format!("{name}.conv1"), channels, channels, 3)?,
            conv2: Conv2d::same(store, &format!("{name}.conv2"), channels, channels, 3)?,
            slope: LEAKY_SLOPE,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let h = self.conv1.forward(tape, x)?;
        let h = tape.leaky_relu(h, self.slope);
        let h = self.conv2.forward(tape, h)?;
        Ok(tape.leaky_relu(h, self.slope))
    }
}
