use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::variant::{LayerKind, VariantSpec, SLOTS};
use crate::nn::attention::AttentionConfig;
use crate::nn::parf::{validate_kernel_sizes, DEFAULT_KERNELS};

/// Full architecture genotype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: VariantSpec,
    pub kernel_sizes: Vec<usize>,
    pub base_width: usize,
    /// Widest stage as a multiple of `base_width`.
    pub channel_cap: usize,
    pub window: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub use_mlp: bool,
    pub num_classes: usize,
    pub input_channels: usize,
    /// Spatial size the model is validated against at build time.
    pub input_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: VariantSpec::default(),
            kernel_sizes: DEFAULT_KERNELS.to_vec(),
            base_width: 64,
            channel_cap: 8,
            window: 7,
            heads: 4,
            mlp_ratio: 4,
            use_mlp: true,
            num_classes: 2,
            input_channels: 3,
            input_size: 224,
        }
    }
}

impl ModelConfig {
    /// Desk-scale settings: 16 base channels, 4×4 windows, 64×64 inputs.
    pub fn desk() -> Self {
        Self {
            base_width: 16,
            window: 4,
            input_size: 64,
            ..Self::default()
        }
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            window: self.window,
            heads: self.heads,
            mlp_ratio: self.mlp_ratio,
            use_mlp: self.use_mlp,
        }
    }

    /// Channel widths of the four encoder stages followed by the bottleneck.
    pub fn widths(&self) -> [usize; SLOTS + 1] {
        let cap = self.channel_cap * self.base_width;
        std::array::from_fn(|i| (self.base_width << i).min(cap))
    }

    /// Width of decoder slot `j` (0 = nearest the bottleneck).
    pub fn decoder_width(&self, j: usize) -> usize {
        self.widths()[SLOTS - 1 - j]
    }

    pub fn validate(&self) -> Result<()> {
        validate_kernel_sizes(&self.kernel_sizes)?;
        if self.base_width == 0 || self.channel_cap == 0 {
            return Err(Error::config("base_width and channel_cap must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("num_classes must be at least 2"));
        }
        if self.input_channels == 0 {
            return Err(Error::config("input_channels must be positive"));
        }
        if self.window == 0 || self.heads == 0 || self.mlp_ratio == 0 {
            return Err(Error::config("window, heads and mlp_ratio must be positive"));
        }
        let widths = self.widths();
        let hybrid_stages = self
            .variant
            .encoder_slots()
            .into_iter()
            .enumerate()
            .filter(|(_, k)| *k == LayerKind::Hybrid)
            .map(|(i, _)| (format!("enc{}", i + 1), widths[i]))
            .chain(
                self.variant
                    .decoder_slots()
                    .into_iter()
                    .enumerate()
                    .filter(|(_, k)| *k == LayerKind::Hybrid)
                    .map(|(j, _)| (format!("dec{}", j + 1), self.decoder_width(j))),
            );
        for (stage, c) in hybrid_stages {
            if c % 2 != 0 || (c / 2) % self.heads != 0 {
                return Err(Error::config(format!(
                    "stage {stage}: width {c} cannot be split into halves divisible by {} heads",
                    self.heads
                )));
            }
        }
        self.validate_input(self.input_size, self.input_size)
    }

    /// Checks that an `h × w` input survives four halvings and that every
    /// hybrid stage resolution is a multiple of the window size.
    pub fn validate_input(&self, h: usize, w: usize) -> Result<()> {
        let div = 1 << SLOTS;
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return Err(Error::config(format!(
                "input {h}x{w} must be a positive multiple of {div} in both dimensions"
            )));
        }
        let mut bad = Vec::new();
        for (i, kind) in self.variant.encoder_slots().iter().enumerate() {
            if *kind == LayerKind::Hybrid && ((h >> i) % self.window != 0 || (w >> i) % self.window != 0) {
                bad.push(format!("enc{} ({}x{})", i + 1, h >> i, w >> i));
            }
        }
        for (j, kind) in self.variant.decoder_slots().iter().enumerate() {
            let shift = SLOTS - 1 - j;
            if *kind == LayerKind::Hybrid && ((h >> shift) % self.window != 0 || (w >> shift) % self.window != 0) {
                bad.push(format!("dec{} ({}x{})", j + 1, h >> shift, w >> shift));
            }
        }
        if !bad.is_empty() {
            return Err(Error::config(format!(
                "window size {} does not divide hybrid stage(s): {}",
                self.window,
                bad.join(", ")
            )));
        }
        Ok(())
    }
}
