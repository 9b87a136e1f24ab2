//! Finite-difference checks for every block type and the assembled model.

use serde::Serialize;

use super::{grad_check_with, GradCheckOptions, GradCheckReport};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::{build_model, ModelConfig};
use crate::nn::{
    AttentionConfig, Conv2d, ConvParfLayer, Downsample, HybridLayer, ResidualConvBlock, SkipFuse, Upsample,
    WindowAttentionBlock,
};
use crate::params::{named_rng, ParamStore};
use crate::tensor::Tensor;
use crate::training::combined_loss_var;

/// Spatial side of the full-model input.
pub const CHECK_SIZE: usize = 16;

/// Step used for the full model. At 1e-5 the rounding noise of a full forward
/// pass (about 1e-15) is comparable to the smallest gradients times 2·eps.
pub const FULL_MODEL_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    ConvParf,
    ResidualConv,
    WindowAttention,
    ShiftedWindowAttention,
    Hybrid,
    Downsample,
    Upsample,
    SkipFuse,
    Loss,
    FullModel,
}

impl BlockKind {
    pub const ALL: [BlockKind; 10] = [
        Self::ConvParf,
        Self::ResidualConv,
        Self::WindowAttention,
        Self::ShiftedWindowAttention,
        Self::Hybrid,
        Self::Downsample,
        Self::Upsample,
        Self::SkipFuse,
        Self::Loss,
        Self::FullModel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ConvParf => "conv_parf",
            Self::ResidualConv => "residual_conv",
            Self::WindowAttention => "window_attention",
            Self::ShiftedWindowAttention => "shifted_window_attention",
            Self::Hybrid => "hybrid",
            Self::Downsample => "downsample",
            Self::Upsample => "upsample",
            Self::SkipFuse => "skip_fuse",
            Self::Loss => "loss",
            Self::FullModel => "full_model",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub block: BlockKind,
    pub report: GradCheckReport,
}

/// Shrinks a model configuration so a full-model check at 16×16 stays cheap:
/// width 8, window 2 (divides the 2×2 deepest stages), 2 heads.
pub fn check_model_config(cfg: &ModelConfig) -> ModelConfig {
    ModelConfig {
        base_width: 8,
        window: 2,
        heads: 2,
        input_size: CHECK_SIZE,
        ..cfg.clone()
    }
}

fn noise(shape: &[usize], seed: u64, name: &str) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, &mut named_rng(seed, name))
}

fn targets(len: usize, classes: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;
    let mut rng = named_rng(seed, "targets");
    (0..len).map(|_| rng.gen_range(0..classes)).collect()
}

/// Builds the block's parameters and returns a closure computing a scalar loss.
type LossFn = Box<dyn FnMut(&mut Tape<'_, f64>) -> Result<Var>>;

fn block_case(kind: BlockKind, cfg: &ModelConfig, seed: u64) -> Result<(ParamStore<f64>, LossFn)> {
    let mut store = ParamStore::<f64>::new(seed);
    let attention = AttentionConfig {
        window: 2,
        heads: 2,
        mlp_ratio: 2,
        use_mlp: cfg.use_mlp,
    };
    let c = 4;
    let side = 8;
    let input = noise(&[1, c, side, side], seed, "input");
    let probe = move |shape: &[usize]| noise(shape, seed, "probe");
    let loss: LossFn = match kind {
        BlockKind::ConvParf => {
            let layer = ConvParfLayer::new(&mut store, "parf", c, &cfg.kernel_sizes)?;
            Box::new(move |tape| {
                let x = tape.constant(input.clone());
                let y = layer.forward(tape, x, None)?;
                tape.dot(y, probe(&[1, c, side, side]))
            })
        }
        BlockKind::ResidualConv => {
            let block = ResidualConvBlock::new(&mut store, "residual", c)?;
            Box::new(move |tape| {
                let x = tape.constant(input.clone());
                let y = block.forward(tape, x)?;
                tape.dot(y, probe(&[1, c, side, side]))
            })
        }
        BlockKind::WindowAttention | BlockKind::ShiftedWindowAttention => {
            let shifted = kind == BlockKind::ShiftedWindowAttention;
            let block = WindowAttentionBlock::new(&mut store, "attention", c, attention, shifted)?;
            let small = noise(&[1, c, 4, 4], seed, "input");
            Box::new(move |tape| {
                let x = tape.constant(small.clone());
                let y = block.forward(tape, x)?;
                tape.dot(y, probe(&[1, c, 4, 4]))
            })
        }
        BlockKind::Hybrid => {
            let layer = HybridLayer::new(&mut store, "hybrid", c, AttentionConfig { heads: 1, ..attention })?;
            let small = noise(&[1, c, 4, 4], seed, "input");
            Box::new(move |tape| {
                let x = tape.constant(small.clone());
                let y = layer.forward(tape, x, None)?;
                tape.dot(y, probe(&[1, c, 4, 4]))
            })
        }
        BlockKind::Downsample => {
            let block = Downsample::new(&mut store, "down", c, 2 * c)?;
            Box::new(move |tape| {
                let x = tape.constant(input.clone());
                let y = block.forward(tape, x)?;
                tape.dot(y, probe(&[1, 2 * c, side / 2, side / 2]))
            })
        }
        BlockKind::Upsample => {
            let block = Upsample::halving(&mut store, "up", 2 * c)?;
            let small = noise(&[1, 2 * c, side / 2, side / 2], seed, "input");
            Box::new(move |tape| {
                let x = tape.constant(small.clone());
                let y = block.forward(tape, x)?;
                tape.dot(y, probe(&[1, c, side, side]))
            })
        }
        BlockKind::SkipFuse => {
            let block = SkipFuse::new(&mut store, "fuse", c)?;
            let skip = noise(&[1, c, side, side], seed, "skip");
            Box::new(move |tape| {
                let d = tape.constant(input.clone());
                let e = tape.constant(skip.clone());
                let y = block.forward(tape, d, e)?;
                tape.dot(y, probe(&[1, c, side, side]))
            })
        }
        BlockKind::Loss => {
            let classes = cfg.num_classes.max(3);
            let head = Conv2d::new(&mut store, "head", c, classes, 1, 1, 0)?;
            let t = targets(side * side, classes, seed);
            Box::new(move |tape| {
                let x = tape.constant(input.clone());
                let logits = head.forward(tape, x)?;
                Ok(combined_loss_var(tape, logits, &t)?.0)
            })
        }
        BlockKind::FullModel => unreachable!("handled by full_model_case"),
    };
    // random values everywhere so no parameter sits at an exact zero
    store.randomize(0.5, seed);
    Ok((store, loss))
}

/// Redraws every parameter at a well-conditioned point for finite differences:
/// weights `N(0, 1/fan_in)`, layer-norm gains `1 + N(0, 0.1²)`, biases
/// `0.2 + N(0, 0.1²)`, everything else `N(0, 0.1²)`. At the default
/// initialisation many deep units sit on the 0.01 LeakyReLU slope and their
/// gradients fall below what a double-precision difference quotient resolves.
pub fn well_conditioned_draw(store: &mut ParamStore<f64>, seed: u64) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.get(id).name.clone();
        let shape = store.value(id).shape().to_vec();
        let mut rng = named_rng(seed, &format!("redraw/{name}"));
        let is_weight = name.ends_with(".weight") && shape.len() >= 2;
        let std = if is_weight {
            (1.0 / shape[1..].iter().product::<usize>() as f64).sqrt()
        } else {
            0.1
        };
        let mut value = Tensor::randn(&shape, std, &mut rng);
        if name.ends_with(".gamma") {
            value = value.map(|v| v + 1.0);
        } else if name.ends_with(".bias") {
            value = value.map(|v| v + 0.2);
        }
        *store.value_mut(id) = value;
    }
}

fn full_model_case(cfg: &ModelConfig, seed: u64) -> Result<(ParamStore<f64>, LossFn)> {
    let small = check_model_config(cfg);
    small.validate()?;
    let model = build_model::<f64>(&small, seed)?;
    let x = noise(&[1, small.input_channels, CHECK_SIZE, CHECK_SIZE], seed, "input");
    let probe = noise(&[1, small.num_classes, CHECK_SIZE, CHECK_SIZE], seed, "probe");
    let mut store = model.params.clone();
    well_conditioned_draw(&mut store, seed);
    Ok((
        store,
        Box::new(move |tape| {
            let input = tape.constant(x.clone());
            let logits = model.forward(tape, input, None)?;
            tape.dot(logits, probe.clone())
        }),
    ))
}

/// Runs the check for one block. The full model is checked on a random-weighted
/// sum of its logits at [`FULL_MODEL_EPS`]; the losses have their own case. `fault` scales conv-weight gradients by 1.5
/// during backward as a negative control.
pub fn check_block(
    kind: BlockKind,
    cfg: &ModelConfig,
    opts: &GradCheckOptions,
    fault: bool,
) -> Result<GradCheckReport> {
    let mut opts = opts.clone();
    let (mut store, mut loss) = match kind {
        BlockKind::FullModel => {
            opts.eps = FULL_MODEL_EPS;
            full_model_case(cfg, opts.seed)?
        }
        _ => block_case(kind, cfg, opts.seed)?,
    };
    if let Some(prefix) = &opts.prefix {
        if !store.iter().any(|(_, p)| p.name.starts_with(prefix.as_str())) {
            return Err(Error::config(format!("no parameter matches scope `{prefix}`")));
        }
    }
    grad_check_with(&mut store, &mut loss, &opts, |tape| {
        if fault {
            tape.inject_weight_grad_fault(1.5);
        }
    })
}

/// Every block check plus the full model, or only the full model restricted to
/// parameters under `scope`.
pub fn run_suite(
    cfg: &ModelConfig,
    scope: Option<&str>,
    opts: &GradCheckOptions,
    fault: bool,
) -> Result<Vec<SuiteResult>> {
    match scope {
        None | Some("all") => BlockKind::ALL
            .iter()
            .map(|&block| {
                let report = check_block(block, cfg, opts, fault)?;
                Ok(SuiteResult { block, report })
            })
            .collect(),
        Some(prefix) => {
            let opts = GradCheckOptions {
                prefix: Some(prefix.to_string()),
                ..opts.clone()
            };
            let report = check_block(BlockKind::FullModel, cfg, &opts, fault)?;
            Ok(vec![SuiteResult {
                block: BlockKind::FullModel,
                report,
            }])
        }
    }
}
