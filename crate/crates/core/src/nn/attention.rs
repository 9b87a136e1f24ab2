//! Pre-norm window attention transformer block (W-MSA / SW-MSA).

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::basic::{LayerNorm, Linear};
use crate::ops::{relative_position_index, shifted_window_mask};
use crate::params::{Init, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig {
    pub window: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub use_mlp: bool,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            window: 7,
            heads: 4,
            mlp_ratio: 4,
            use_mlp: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowAttentionBlock {
    pub channels: usize,
    pub config: AttentionConfig,
    pub shifted: bool,
    pub norm1: LayerNorm,
    pub query: Linear,
    /// No bias: a shared offset on every key cancels in the softmax.
    pub key: Linear,
    pub value: Linear,
    pub proj: Linear,
    /// `[(2m−1)², heads]`.
    pub position_bias: ParamId,
    pub norm2: LayerNorm,
    pub mlp: Option<Mlp>,
}

/// Attention probabilities `[windows·heads, T, T]` of the last forward pass.
#[derive(Debug, Clone, Default)]
pub struct AttentionTrace<T> {
    pub probs: Option<Tensor<T>>,
}

impl WindowAttentionBlock {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        config: AttentionConfig,
        shifted: bool,
    ) -> Result<Self> {
        if config.window == 0 {
            return Err(Error::config("window size must be positive"));
        }
        if config.heads == 0 || channels % config.heads != 0 {
            return Err(Error::config(format!(
                "{channels} attention channels are not divisible by {} heads",
                config.heads
            )));
        }
        let span = 2 * config.window - 1;
        let mlp = if config.use_mlp {
            let hidden = channels * config.mlp_ratio;
            Some(Mlp {
                fc1: Linear::new(store, &format!("{name}.mlp.fc1"), channels, hidden)?,
                fc2: Linear::new(store, &format!("{name}.mlp.fc2"), hidden, channels)?,
            })
        } else {
            None
        };
        Ok(Self {
            channels,
            config,
            shifted,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), channels)?,
            query: Linear::new(store, &format!("{name}.query"), channels, channels)?,
            key: Linear::without_bias(store, &format!("{name}.key"), channels, channels)?,
            value: Linear::new(store, &format!("{name}.value"), channels, channels)?,
            proj: Linear::new(store, &format!("{name}.proj"), channels, channels)?,
            position_bias: store.register(
                format!("{name}.position_bias"),
                &[span * span, config.heads],
                Init::Zeros,
            )?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), channels)?,
            mlp,
        })
    }

    pub fn shift(&self) -> usize {
        if self.shifted {
            self.config.window / 2
        } else {
            0
        }
    }

    pub fn check_input(&self, dims: [usize; 4]) -> Result<()> {
        let [_, c, h, w] = dims;
        let m = self.config.window;
        if c != self.channels {
            return Err(Error::shape(format!(
                "attention block expects {} channels, got {c}",
                self.channels
            )));
        }
        if h % m != 0 || w % m != 0 {
            return Err(Error::config(format!("window size {m} does not divide feature map {h}x{w}")));
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        self.forward_traced(tape, x, None)
    }

    pub fn forward_traced<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        x: Var,
        trace: Option<&mut AttentionTrace<T>>,
    ) -> Result<Var> {
        let dims = tape.value(x).dims4()?;
        self.check_input(dims)?;
        let [_, c, h, w] = dims;
        let m = self.config.window;
        let heads = self.config.heads;
        let dh = c / heads;
        let shift = self.shift();

        let shifted = if shift > 0 {
            tape.roll(x, -(shift as isize), -(shift as isize))?
        } else {
            x
        };
        let windows = tape.window_partition(shifted, m)?;
        let normed = self.norm1.forward(tape, windows)?;
        let q = self.query.forward(tape, normed)?;
        let q = tape.split_heads(q, 0, heads, dh)?;
        let k = self.key.forward(tape, normed)?;
        let k = tape.split_heads(k, 0, heads, dh)?;
        let v = self.value.forward(tape, normed)?;
        let v = tape.split_heads(v, 0, heads, dh)?;
        let scores = tape.bmm(q, k, true)?;
        let scores = tape.scale(scores, T::one() / T::lit(dh as f64).sqrt());
        let mask = if shift > 0 {
            Some(shifted_window_mask::<T>(h, w, m, shift)?)
        } else {
            None
        };
        let table = tape.param(self.position_bias);
        let scores = tape.position_bias(scores, table, relative_position_index(m), mask.as_ref(), heads)?;
        let probs = tape.softmax(scores)?;
        if let Some(t) = trace {
            t.probs = Some(tape.value(probs).clone());
        }
        let attended = tape.bmm(probs, v, false)?;
        let merged = tape.merge_heads(attended, heads)?;
        let projected = self.proj.forward(tape, merged)?;
        let restored = tape.window_reverse(projected, m, dims)?;
        let restored = if shift > 0 {
            tape.roll(restored, shift as isize, shift as isize)?
        } else {
            restored
        };
        let t = tape.add(x, restored)?;

        let Some(mlp) = &self.mlp else { return Ok(t) };
        // one token per pixel
        let tokens = tape.window_partition(t, 1)?;
        let normed = self.norm2.forward(tape, tokens)?;
        let hidden = mlp.fc1.forward(tape, normed)?;
        let hidden = tape.gelu(hidden);
        let out = mlp.fc2.forward(tape, hidden)?;
        let out = tape.window_reverse(out, 1, dims)?;
        tape.add(t, out)
    }
}
