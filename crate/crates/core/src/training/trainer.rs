//! Mini-batch training loop.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, AdamState};
use super::loss::{combined_loss_var, LossBreakdown};
use crate::autodiff::Tape;
use crate::data::{augment, AugmentConfig, Sample};
use crate::error::{Error, Result};
use crate::model::ParfNet;
use crate::params::named_rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stops after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    pub lr: f64,
    /// Multiplies the learning rate after every epoch; 1.0 keeps it constant.
    pub lr_decay: f64,
    pub seed: u64,
    /// Evaluate every this many epochs; 0 disables periodic evaluation.
    pub eval_interval: usize,
    pub augment: AugmentConfig,
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            max_epochs: 400,
            max_steps: None,
            lr: 1e-4,
            lr_decay: 1.0,
            seed: 0,
            eval_interval: 0,
            augment: AugmentConfig::default(),
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::validation(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::validation(format!("grad_clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub loss: LossBreakdown,
}

/// Stacks samples into an `[n, c, h, w]` batch and flattened targets.
pub fn make_batch<T: Scalar>(samples: &[Sample]) -> Result<(Tensor<T>, Vec<usize>)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::validation("cannot build an empty batch"))?;
    let (c, h, w) = (first.channels(), first.height(), first.width());
    let mut data = Vec::with_capacity(samples.len() * c * h * w);
    let mut targets = Vec::with_capacity(samples.len() * h * w);
    for s in samples {
        if (s.channels(), s.height(), s.width()) != (c, h, w) {
            return Err(Error::shape(format!(
                "sample `{}` is {}x{}x{}, batch expects {c}x{h}x{w}",
                s.id,
                s.channels(),
                s.height(),
                s.width()
            )));
        }
        data.extend(s.image.data().iter().map(|&v| T::lit(f64::from(v))));
        targets.extend(s.mask.labels.iter().map(|&l| usize::from(l)));
    }
    Ok((Tensor::from_vec(&[samples.len(), c, h, w], data)?, targets))
}

/// Forward, backward and one Adam update on a prepared batch.
pub fn train_step<T: Scalar>(
    model: &mut ParfNet<T>,
    adam: &mut AdamState<T>,
    images: &Tensor<T>,
    targets: &[usize],
    grad_clip: Option<f64>,
) -> Result<LossBreakdown> {
    let (loss, mut grads) = {
        let mut tape = Tape::new(&model.params);
        let x = tape.constant(images.clone());
        let logits = model.forward(&mut tape, x, None)?;
        let (total, loss) = combined_loss_var(&mut tape, logits, targets)?;
        if !loss.total.is_finite() {
            return Err(Error::numerical("loss", format!("non-finite training loss {}", loss.total)));
        }
        (loss, tape.backward(total)?.into_param_grads())
    };
    if let Some(max) = grad_clip {
        clip_grad_norm(&mut grads, max);
    }
    adam.step(&mut model.params, &grads)?;
    Ok(loss)
}

/// One pass over `dataset`: shuffle, augment, one optimizer step per batch.
///
/// The shuffle order comes from `rng`; each sample's augmentation uses its own
/// stream derived from a per-epoch draw of `rng` and the sample's position.
/// `step_limit` caps the number of steps taken in this call.
pub fn train_epoch<T: Scalar, R: Rng>(
    model: &mut ParfNet<T>,
    adam: &mut AdamState<T>,
    dataset: &[Sample],
    config: &TrainConfig,
    rng: &mut R,
    epoch: usize,
    step_limit: Option<usize>,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<EpochStats> {
    if dataset.is_empty() {
        return Err(Error::validation("cannot train on an empty dataset"));
    }
    config.validate()?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(rng);
    let augment_seed: u64 = rng.gen();

    let mut losses = Vec::new();
    for (b, chunk) in order.chunks(config.batch_size).enumerate() {
        if step_limit.is_some_and(|limit| losses.len() >= limit) {
            break;
        }
        let batch = chunk
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let mut stream = named_rng(augment_seed, &format!("augment/{}", b * config.batch_size + k));
                augment(&dataset[i], &config.augment, &mut stream)
            })
            .collect::<Result<Vec<_>>>()?;
        let (images, targets) = make_batch::<T>(&batch)?;
        let loss = train_step(model, adam, &images, &targets, config.grad_clip)?;
        on_step(&StepRecord {
            epoch,
            step: adam.step,
            loss,
        });
        losses.push(loss);
    }
    Ok(EpochStats {
        epoch,
        steps: losses.len(),
        loss: LossBreakdown::mean(&losses),
    })
}

/// Runs epochs until `max_epochs` or `max_steps` is reached, calling `on_epoch`
/// after each one. The run's randomness is a single stream seeded by `config.seed`.
pub fn fit<T: Scalar>(
    model: &mut ParfNet<T>,
    adam: &mut AdamState<T>,
    dataset: &[Sample],
    config: &TrainConfig,
    mut on_step: impl FnMut(&StepRecord),
    mut on_epoch: impl FnMut(&ParfNet<T>, &EpochStats) -> Result<()>,
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    let mut rng = named_rng(config.seed, "train");
    let mut history = Vec::new();
    let mut taken = 0usize;
    for epoch in 0..config.max_epochs {
        let remaining = config.max_steps.map(|m| m.saturating_sub(taken));
        if remaining == Some(0) {
            break;
        }
        let stats = train_epoch(model, adam, dataset, config, &mut rng, epoch, remaining, &mut on_step)?;
        taken += stats.steps;
        adam.lr *= config.lr_decay;
        on_epoch(model, &stats)?;
        history.push(stats);
    }
    Ok(history)
}
