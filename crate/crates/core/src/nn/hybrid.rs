//! Split-channel hybrid Transformer-CNN module and the two-module layer.
//!
//! One module computes
//!
//! ```text
//! x_c, x_t = split(conv1×1(x))
//! x_cl     = residual_conv(x_c)
//! x_tg     = window_attention(x_t)       (shifted in the second module)
//! y        = x + conv1×1(concat(x_cl, x_tg))
//! ```

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::attention::{AttentionConfig, WindowAttentionBlock};
use crate::nn::basic::Conv2d;
use crate::nn::residual::ResidualConvBlock;
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct HybridModule {
    pub channels: usize,
    pub entry: Conv2d,
    pub residual: ResidualConvBlock,
    pub attention: WindowAttentionBlock,
    pub exit: Conv2d,
}

/// Intermediate tensors of one module, captured for inspection.
#[derive(Debug, Clone)]
pub struct HybridModuleTrace<T> {
    pub conv_branch_in: Tensor<T>,
    pub attention_branch_in: Tensor<T>,
    pub conv_branch_out: Tensor<T>,
    pub attention_branch_out: Tensor<T>,
    pub output: Tensor<T>,
}

impl HybridModule {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        attention: AttentionConfig,
        shifted: bool,
    ) -> Result<Self> {
        if channels % 2 != 0 {
            return Err(Error::config(format!(
                "hybrid module needs an even channel count, got {channels}"
            )));
        }
        let half = channels / 2;
        Ok(Self {
            channels,
            entry: Conv2d::same(store, &format!("{name}.entry"), channels, channels, 1)?,
            residual: ResidualConvBlock::new(store, &format!("{name}.residual"), half)?,
            attention: WindowAttentionBlock::new(store, &format!("{name}.attention"), half, attention, shifted)?,
            exit: Conv2d::same(store, &format!("{name}.exit"), channels, channels, 1)?,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        x: Var,
        trace: Option<&mut Vec<HybridModuleTrace<T>>>,
    ) -> Result<Var> {
        let dims = tape.value(x).dims4()?;
        if dims[1] != self.channels {
            return Err(Error::shape(format!(
                "hybrid module expects {} channels, got {}",
                self.channels, dims[1]
            )));
        }
        let half = self.channels / 2;
        self.attention.check_input([dims[0], half, dims[2], dims[3]])?;
        let fused = self.entry.forward(tape, x)?;
        let x_c = tape.slice_channels(fused, 0, half)?;
        let x_t = tape.slice_channels(fused, half, half)?;
        let x_cl = self.residual.forward(tape, x_c)?;
        let x_tg = self.attention.forward(tape, x_t)?;
        let cat = tape.concat_channels(&[x_cl, x_tg])?;
        let mixed = self.exit.forward(tape, cat)?;
        let y = tape.add(x, mixed)?;
        if let Some(t) = trace {
            t.push(HybridModuleTrace {
                conv_branch_in: tape.value(x_c).clone(),
                attention_branch_in: tape.value(x_t).clone(),
                conv_branch_out: tape.value(x_cl).clone(),
                attention_branch_out: tape.value(x_tg).clone(),
                output: tape.value(y).clone(),
            });
        }
        Ok(y)
    }
}

/// Two cascaded modules: window attention, then shifted-window attention.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridLayer {
    pub first: HybridModule,
    pub second: HybridModule,
}

impl HybridLayer {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize, attention: AttentionConfig) -> Result<Self> {
        Ok(Self {
            first: HybridModule::new(store, &format!("{name}.module0"), channels, attention, false)?,
            second: HybridModule::new(store, &format!("{name}.module1"), channels, attention, true)?,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        x: Var,
        mut trace: Option<&mut Vec<HybridModuleTrace<T>>>,
    ) -> Result<Var> {
        let y_w = self.first.forward(tape, x, trace.as_deref_mut())?;
        self.second.forward(tape, y_w, trace)
    }
}
