//! Convolution with pixel-wise adaptive receptive fields.
//!
//! `K` parallel same-padded convolutions of increasing kernel size produce
//! feature maps `F_k`. A spatial-attention head shared by all branches turns
//! each `F_k` into a per-pixel gate `A_k = σ(conv7×7([max_c F_k, mean_c F_k]))`,
//! and the layer returns `x + Σ_k A_k ⊙ F_k`.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::basic::Conv2d;
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Kernel set used when none is configured.
pub const DEFAULT_KERNELS: [usize; 3] = [3, 7, 11];
pub const ATTENTION_KERNEL: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParfLayer {
    pub channels: usize,
    pub kernel_sizes: Vec<usize>,
    pub branches: Vec<Conv2d>,
    pub attention: Conv2d,
}

/// Activation maps captured from one forward pass, one `[n,1,h,w]` tensor per branch.
#[derive(Debug, Clone, Default)]
pub struct ParfCapture<T> {
    pub maps: Vec<Tensor<T>>,
}

pub fn validate_kernel_sizes(kernels: &[usize]) -> Result<()> {
    if kernels.is_empty() {
        return Err(Error::config("Conv-PARF needs at least one kernel size"));
    }
    if let Some(k) = kernels.iter().find(|&&k| k % 2 == 0) {
        return Err(Error::config(format!("Conv-PARF kernel size {k} must be odd")));
    }
    if kernels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(format!(
            "Conv-PARF kernel sizes {kernels:?} must be strictly increasing"
        )));
    }
    Ok(())
}

/// `σ(conv(channel_stats(f)))`, one gate per pixel.
pub fn spatial_attention<T: Scalar>(tape: &mut Tape<'_, T>, features: Var, attention: &Conv2d) -> Result<Var> {
    let stats = tape.channel_stats(features)?;
    let logits = attention.forward(tape, stats)?;
    Ok(tape.sigmoid(logits))
}

impl ConvParfLayer {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize, kernel_sizes: &[usize]) -> Result<Self> {
        validate_kernel_sizes(kernel_sizes)?;
        let branches = kernel_sizes
            .iter()
            .enumerate()
            .map(|(i, &k)| Conv2d::same(store, &format!("{name}.branch{i}"), channels, channels, k))
            .collect::<Result<Vec<_>>>()?;
        let attention = Conv2d::same(store, &format!("{name}.attention"), 2, 1, ATTENTION_KERNEL)?;
        Ok(Self {
            channels,
            kernel_sizes: kernel_sizes.to_vec(),
            branches,
            attention,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        x: Var,
        mut capture: Option<&mut ParfCapture<T>>,
    ) -> Result<Var> {
        let c = tape.value(x).dims4()?[1];
        if c != self.channels {
            return Err(Error::shape(format!(
                "Conv-PARF layer expects {} channels, got {c}",
                self.channels
            )));
        }
        let mut y = x;
        for branch in &self.branches {
            let f = branch.forward(tape, x)?;
            let a = spatial_attention(tape, f, &self.attention)?;
            if let Some(cap) = capture.as_deref_mut() {
                cap.maps.push(tape.value(a).clone());
            }
            let gated = tape.mul_gate(f, a)?;
            y = tape.add(y, gated)?;
        }
        Ok(y)
    }
}
