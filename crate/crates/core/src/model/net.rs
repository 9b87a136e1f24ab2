//! The assembled U-shaped network.

use std::collections::BTreeMap;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::variant::{LayerKind, SLOTS};
use crate::nn::{
    Conv2d, ConvParfLayer, Downsample, HybridLayer, HybridModuleTrace, ParfCapture, ResidualConvBlock, SkipFuse,
    StaticConvBlock, Upsample, LEAKY_SLOPE,
};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Layer occupying one encoder or decoder slot.
#[derive(Debug, Clone, PartialEq)]
pub enum StageLayer {
    Static(StaticConvBlock),
    Parf(ConvParfLayer),
    Hybrid(HybridLayer),
}

impl StageLayer {
    fn build<T: Scalar>(store: &mut ParamStore<T>, stage: &str, kind: LayerKind, width: usize, cfg: &ModelConfig) -> Result<Self> {
        let name = format!("{stage}.{}", kind.as_str());
        Ok(match kind {
            LayerKind::Static => StageLayer::Static(StaticConvBlock::new(store, &name, width)?),
            LayerKind::Parf => StageLayer::Parf(ConvParfLayer::new(store, &name, width, &cfg.kernel_sizes)?),
            LayerKind::Hybrid => StageLayer::Hybrid(HybridLayer::new(store, &name, width, cfg.attention())?),
        })
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            StageLayer::Static(_) => LayerKind::Static,
            StageLayer::Parf(_) => LayerKind::Parf,
            StageLayer::Hybrid(_) => LayerKind::Hybrid,
        }
    }

    fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        x: Var,
        stage: &str,
        capture: Option<&mut ForwardCapture<T>>,
    ) -> Result<Var> {
        match self {
            StageLayer::Static(b) => b.forward(tape, x),
            StageLayer::Parf(l) => match capture {
                Some(cap) => {
                    let mut maps = ParfCapture::default();
                    let y = l.forward(tape, x, Some(&mut maps))?;
                    cap.activation_maps.push(ActivationMaps {
                        layer: stage.to_string(),
                        kernel_sizes: l.kernel_sizes.clone(),
                        maps: maps.maps,
                    });
                    Ok(y)
                }
                None => l.forward(tape, x, None),
            },
            StageLayer::Hybrid(l) => match capture {
                Some(cap) => {
                    let mut traces = Vec::new();
                    let y = l.forward(tape, x, Some(&mut traces))?;
                    cap.hybrid.push((stage.to_string(), traces));
                    Ok(y)
                }
                None => l.forward(tape, x, None),
            },
        }
    }
}

/// Activation maps of one Conv-PARF layer.
#[derive(Debug, Clone)]
pub struct ActivationMaps<T> {
    pub layer: String,
    pub kernel_sizes: Vec<usize>,
    /// One `[n,1,h,w]` gate per kernel, in kernel order.
    pub maps: Vec<Tensor<T>>,
}

/// Optional intermediate values recorded by [`ParfNet::forward`].
#[derive(Debug, Clone, Default)]
pub struct ForwardCapture<T> {
    pub activation_maps: Vec<ActivationMaps<T>>,
    pub hybrid: Vec<(String, Vec<HybridModuleTrace<T>>)>,
    /// Encoder outputs before downsampling, shallowest first.
    pub skips: Vec<Tensor<T>>,
    /// Decoder inputs right after upsampling, deepest first.
    pub upsampled: Vec<Tensor<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParfNet<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub stem: Conv2d,
    pub encoders: Vec<StageLayer>,
    pub downsamples: Vec<Downsample>,
    pub bottleneck: ResidualConvBlock,
    pub upsamples: Vec<Upsample>,
    pub fuses: Vec<SkipFuse>,
    pub decoders: Vec<StageLayer>,
    pub head: Conv2d,
}

/// Builds a network with deterministic initialization from `seed`.
pub fn build_model<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ParfNet<T>> {
    config.validate()?;
    let mut store = ParamStore::new(seed);
    let widths = config.widths();
    let stem = Conv2d::same(&mut store, "stem", config.input_channels, widths[0], 3)?;
    let mut encoders = Vec::with_capacity(SLOTS);
    let mut downsamples = Vec::with_capacity(SLOTS);
    for (i, kind) in config.variant.encoder_slots().into_iter().enumerate() {
        let stage = format!("enc{}", i + 1);
        encoders.push(StageLayer::build(&mut store, &stage, kind, widths[i], config)?);
        downsamples.push(Downsample::new(&mut store, &format!("down{}", i + 1), widths[i], widths[i + 1])?);
    }
    let bottleneck = ResidualConvBlock::new(&mut store, "bottleneck", widths[SLOTS])?;
    let mut upsamples = Vec::with_capacity(SLOTS);
    let mut fuses = Vec::with_capacity(SLOTS);
    let mut decoders = Vec::with_capacity(SLOTS);
    for (j, kind) in config.variant.decoder_slots().into_iter().enumerate() {
        let c_in = widths[SLOTS - j];
        let c_out = config.decoder_width(j);
        upsamples.push(Upsample::new(&mut store, &format!("up{}", j + 1), c_in, c_out)?);
        fuses.push(SkipFuse::new(&mut store, &format!("fuse{}", j + 1), c_out)?);
        decoders.push(StageLayer::build(&mut store, &format!("dec{}", j + 1), kind, c_out, config)?);
    }
    let head = Conv2d::same(&mut store, "head", widths[0], config.num_classes, 1)?;
    Ok(ParfNet {
        config: config.clone(),
        params: store,
        stem,
        encoders,
        downsamples,
        bottleneck,
        upsamples,
        fuses,
        decoders,
        head,
    })
}

impl<T: Scalar> ParfNet<T> {
    /// Full pipeline producing `[n, num_classes, H, W]` logits.
    pub fn forward(&self, tape: &mut Tape<'_, T>, x: Var, mut capture: Option<&mut ForwardCapture<T>>) -> Result<Var> {
        let [_, c, h, w] = tape.value(x).dims4()?;
        if c != self.config.input_channels {
            return Err(Error::shape(format!(
                "model expects {} input channels, got {c}",
                self.config.input_channels
            )));
        }
        self.config.validate_input(h, w)?;
        let stem = self.stem.forward(tape, x)?;
        let mut y = tape.leaky_relu(stem, LEAKY_SLOPE);
        let mut skips = Vec::with_capacity(SLOTS);
        for (i, (layer, down)) in self.encoders.iter().zip(&self.downsamples).enumerate() {
            y = layer.forward(tape, y, &format!("enc{}", i + 1), capture.as_deref_mut())?;
            skips.push(y);
            if let Some(cap) = capture.as_deref_mut() {
                cap.skips.push(tape.value(y).clone());
            }
            y = down.forward(tape, y)?;
        }
        y = self.bottleneck.forward(tape, y)?;
        for (j, ((up, fuse), layer)) in self.upsamples.iter().zip(&self.fuses).zip(&self.decoders).enumerate() {
            y = up.forward(tape, y)?;
            if let Some(cap) = capture.as_deref_mut() {
                cap.upsampled.push(tape.value(y).clone());
            }
            y = fuse.forward(tape, y, skips[SLOTS - 1 - j])?;
            y = layer.forward(tape, y, &format!("dec{}", j + 1), capture.as_deref_mut())?;
        }
        self.head.forward(tape, y)
    }

    /// Inference-only convenience wrapper around [`ParfNet::forward`].
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new(&self.params);
        let input = tape.constant(x.clone());
        let out = self.forward(&mut tape, input, None)?;
        Ok(tape.value(out).clone())
    }

    pub fn predict_with_capture(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardCapture<T>)> {
        let mut tape = Tape::new(&self.params);
        let input = tape.constant(x.clone());
        let mut capture = ForwardCapture::default();
        let out = self.forward(&mut tape, input, Some(&mut capture))?;
        Ok((tape.value(out).clone(), capture))
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Scalar counts per top-level block (`stem`, `enc1`, `down1`, ...).
    pub fn param_breakdown(&self) -> BTreeMap<String, usize> {
        self.params.count_by_prefix(1)
    }
}

/// Per-pixel argmax over classes; ties resolve to the lowest class index.
pub fn argmax_classes<T: Scalar>(logits: &Tensor<T>) -> Result<Vec<usize>> {
    let [n, c, h, w] = logits.dims4()?;
    let plane = h * w;
    let mut out = vec![0usize; n * plane];
    for b in 0..n {
        for p in 0..plane {
            let mut best = logits.data()[b * c * plane + p];
            for ch in 1..c {
                let v = logits.data()[(b * c + ch) * plane + p];
                if v > best {
                    best = v;
                    out[b * plane + p] = ch;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_pick_lowest_class() {
        let logits = Tensor::<f64>::from_vec(&[1, 3, 1, 2], vec![1.0, 0.0, 1.0, 2.0, 0.5, 2.0]).unwrap();
        assert_eq!(argmax_classes(&logits).unwrap(), vec![0, 1]);
    }

    #[test]
    fn parameter_names_follow_stage_layout() {
        let net = build_model::<f32>(&ModelConfig::desk(), 0).unwrap();
        assert!(net.params.id("enc1.parf.branch0.weight").is_some());
        assert!(net.params.id("enc3.hybrid.module1.attention.position_bias").is_some());
        assert!(net.params.id("dec3.static.conv1.weight").is_some());
        assert!(net.params.id("fuse4.conv.bias").is_some());
        assert_eq!(net.param_breakdown().values().sum::<usize>(), net.param_count());
    }

    #[test]
    fn wrong_input_channels_rejected() {
        let net = build_model::<f32>(&ModelConfig::desk(), 0).unwrap();
        assert!(net.predict(&Tensor::zeros(&[1, 1, 64, 64])).is_err());
    }
}
