//! Parameterized primitives shared by all blocks.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::params::{Init, ParamId, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    /// Odd kernel with "same" padding, stride 1, bias.
    pub fn same<T: Scalar>(store: &mut ParamStore<T>, name: &str, c_in: usize, c_out: usize, kernel: usize) -> Result<Self> {
        Self::new(store, name, c_in, c_out, kernel, 1, kernel / 2)
    }

    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let fan_in = c_in * kernel * kernel;
        let weight = store.register(format!("{name}.weight"), &[c_out, c_in, kernel, kernel], Init::FanIn(fan_in))?;
        let bias = Some(store.register(format!("{name}.bias"), &[c_out], Init::Zeros)?);
        Ok(Self {
            weight,
            bias,
            c_in,
            c_out,
            kernel,
            stride,
            padding,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let b = self.bias.map(|b| tape.param(b));
        tape.conv2d(x, w, b, self.stride, self.padding)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        std::iter::once(self.weight).chain(self.bias).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        Ok(Self {
            weight: store.register(format!("{name}.weight"), &[d_out, d_in], Init::FanIn(d_in))?,
            bias: Some(store.register(format!("{name}.bias"), &[d_out], Init::Zeros)?),
        })
    }

    pub fn without_bias<T: Scalar>(store: &mut ParamStore<T>, name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        Ok(Self {
            weight: store.register(format!("{name}.weight"), &[d_out, d_in], Init::FanIn(d_in))?,
            bias: None,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let b = self.bias.map(|b| tape.param(b));
        tape.linear(x, w, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.register(format!("{name}.gamma"), &[d], Init::Ones)?,
            beta: store.register(format!("{name}.beta"), &[d], Init::Zeros)?,
            eps: 1e-5,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let g = tape.param(self.gamma);
        let b = tape.param(self.beta);
        tape.layer_norm(x, g, b, self.eps)
    }
}
