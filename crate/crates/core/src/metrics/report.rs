//! Per-image and dataset-level evaluation.

use serde::{Deserialize, Serialize};

use super::confusion::{confusion, Rates};
use super::hausdorff::hausdorff;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{argmax_classes, ParfNet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    /// 95 for HD95, 100 for the maximum Hausdorff distance.
    pub hd_percentile: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { hd_percentile: 95.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    #[serde(flatten)]
    pub rates: Rates,
    /// `None` when the class is missing from the prediction or the ground truth.
    pub hd: Option<f64>,
}

/// Headline numbers: the foreground class for binary tasks, the mean over
/// non-background classes otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    #[serde(flatten)]
    pub rates: Rates,
    pub hd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: String,
    pub classes: Vec<ClassMetrics>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub num_classes: usize,
    pub hd_percentile: f64,
    pub images: Vec<ImageMetrics>,
    /// Unweighted mean of the per-image summaries.
    pub mean: Summary,
    /// Images whose summary HD was undefined and left out of `mean.hd`.
    pub hd_excluded: usize,
}

fn mean_rates<'a>(items: impl Iterator<Item = &'a Rates>) -> Rates {
    let mut acc = Rates::default();
    let mut n = 0.0;
    for r in items {
        acc.iou += r.iou;
        acc.dice += r.dice;
        acc.acc += r.acc;
        acc.recall += r.recall;
        acc.precision += r.precision;
        n += 1.0;
    }
    if n > 0.0 {
        acc.iou /= n;
        acc.dice /= n;
        acc.acc /= n;
        acc.recall /= n;
        acc.precision /= n;
    }
    acc
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut n, mut missing) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => missing += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), missing)
}

/// Metrics for one predicted label map against its ground truth.
pub fn image_metrics(
    id: &str,
    pred: &[usize],
    gt: &[usize],
    h: usize,
    w: usize,
    num_classes: usize,
    options: &MetricOptions,
) -> Result<ImageMetrics> {
    let counts = confusion(pred, gt, num_classes)?;
    let mut classes = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let pm: Vec<bool> = pred.iter().map(|&p| p == c).collect();
        let gm: Vec<bool> = gt.iter().map(|&g| g == c).collect();
        classes.push(ClassMetrics {
            class: c,
            rates: counts.class(c).rates(),
            hd: hausdorff(&pm, &gm, h, w, options.hd_percentile)?,
        });
    }
    let fg = &classes[1.min(num_classes - 1)..];
    let summary = Summary {
        rates: mean_rates(fg.iter().map(|c| &c.rates)),
        hd: mean_defined(fg.iter().map(|c| c.hd)).0,
    };
    Ok(ImageMetrics {
        id: id.to_string(),
        classes,
        summary,
    })
}

/// Evaluates `predict` on every sample; per-image metrics are averaged without weighting.
pub fn evaluate_with(
    dataset: &[Sample],
    num_classes: usize,
    options: &MetricOptions,
    mut predict: impl FnMut(&Sample) -> Result<Vec<usize>>,
) -> Result<MetricReport> {
    if dataset.is_empty() {
        return Err(Error::validation("cannot evaluate an empty dataset"));
    }
    if num_classes < 2 {
        return Err(Error::validation(format!("num_classes must be at least 2, got {num_classes}")));
    }
    let mut images = Vec::with_capacity(dataset.len());
    for s in dataset {
        let pred = predict(s)?;
        images.push(image_metrics(
            &s.id,
            &pred,
            &s.mask.to_targets(),
            s.height(),
            s.width(),
            num_classes,
            options,
        )?);
    }
    let (hd, hd_excluded) = mean_defined(images.iter().map(|m| m.summary.hd));
    Ok(MetricReport {
        num_classes,
        hd_percentile: options.hd_percentile,
        mean: Summary {
            rates: mean_rates(images.iter().map(|m| &m.summary.rates)),
            hd,
        },
        images,
        hd_excluded,
    })
}

pub fn evaluate_dataset<T: Scalar>(model: &ParfNet<T>, dataset: &[Sample], options: &MetricOptions) -> Result<MetricReport> {
    evaluate_with(dataset, model.config.num_classes, options, |s| {
        let image: Tensor<T> = s.image.cast();
        argmax_classes(&model.predict(&image)?)
    })
}

impl MetricReport {
    /// One JSON object per image followed by one aggregate object, newline-delimited.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for img in &self.images {
            let line = serde_json::json!({
                "kind": "image",
                "id": img.id,
                "summary": img.summary,
                "classes": img.classes,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        let agg = serde_json::json!({
            "kind": "aggregate",
            "images": self.images.len(),
            "num_classes": self.num_classes,
            "hd_percentile": self.hd_percentile,
            "mean": self.mean,
            "hd_excluded": self.hd_excluded,
        });
        out.push_str(&agg.to_string());
        out.push('\n');
        out
    }
}
