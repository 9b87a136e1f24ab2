//! Segmentation losses on `[n, C, h, w]` logits and `[n, h, w]` class indices.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Soft Dice smoothing term.
pub const DICE_SMOOTH: f64 = 1.0;

pub(crate) fn validate_targets<T: Scalar>(logits: &Tensor<T>, targets: &[usize]) -> Result<[usize; 4]> {
    let dims = logits.dims4()?;
    let [n, c, h, w] = dims;
    if targets.len() != n * h * w {
        return Err(Error::shape(format!(
            "{} targets for logits {:?}",
            targets.len(),
            logits.shape()
        )));
    }
    if let Some((i, &t)) = targets.iter().enumerate().find(|(_, &t)| t >= c) {
        return Err(Error::validation(format!(
            "target {t} at pixel {i} is outside [0, {c})"
        )));
    }
    Ok(dims)
}

/// Channel softmax per pixel.
pub(crate) fn pixel_softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = logits.dims4().expect("rank 4");
    let plane = h * w;
    let mut p = Tensor::zeros(logits.shape());
    let (src, dst) = (logits.data(), p.data_mut());
    for b in 0..n {
        for px in 0..plane {
            let at = |ch: usize| (b * c + ch) * plane + px;
            let max = (0..c).map(|ch| src[at(ch)]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for ch in 0..c {
                let e = (src[at(ch)] - max).exp();
                dst[at(ch)] = e;
                total += e;
            }
            for ch in 0..c {
                dst[at(ch)] /= total;
            }
        }
    }
    p
}

/// Mean over pixels of `−log softmax(logits)[target]`, via log-sum-exp.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, targets: &[usize]) -> Result<T> {
    let [n, c, h, w] = validate_targets(logits, targets)?;
    let plane = h * w;
    let src = logits.data();
    let mut total = T::zero();
    for b in 0..n {
        for px in 0..plane {
            let at = |ch: usize| (b * c + ch) * plane + px;
            let max = (0..c).map(|ch| src[at(ch)]).fold(T::neg_infinity(), T::max);
            let lse = max + (0..c).map(|ch| (src[at(ch)] - max).exp()).sum::<T>().ln();
            total += lse - src[at(targets[b * plane + px])];
        }
    }
    Ok(total / T::lit((n * plane).max(1) as f64))
}

pub(crate) fn cross_entropy_backward<T: Scalar>(probs: &Tensor<T>, targets: &[usize], grad: T) -> Tensor<T> {
    let [n, c, h, w] = probs.dims4().expect("rank 4");
    let plane = h * w;
    let scale = grad / T::lit((n * plane).max(1) as f64);
    let mut d = probs.map(|p| p * scale);
    for b in 0..n {
        for px in 0..plane {
            d.data_mut()[(b * c + targets[b * plane + px]) * plane + px] -= scale;
        }
    }
    d
}

/// Per-class sums needed by the soft Dice loss.
#[derive(Debug, Clone)]
pub(crate) struct DiceSums<T> {
    pub intersection: Vec<T>,
    pub denominator: Vec<T>,
}

pub(crate) fn dice_sums<T: Scalar>(probs: &Tensor<T>, targets: &[usize]) -> DiceSums<T> {
    let [n, c, h, w] = probs.dims4().expect("rank 4");
    let plane = h * w;
    let mut inter = vec![T::zero(); c];
    let mut denom = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let row = &probs.data()[(b * c + ch) * plane..(b * c + ch + 1) * plane];
            for (px, &p) in row.iter().enumerate() {
                denom[ch] += p;
                if targets[b * plane + px] == ch {
                    inter[ch] += p;
                    denom[ch] += T::one();
                }
            }
        }
    }
    DiceSums {
        intersection: inter,
        denominator: denom,
    }
}

pub(crate) fn dice_from_sums<T: Scalar>(sums: &DiceSums<T>) -> T {
    let eps = T::lit(DICE_SMOOTH);
    let c = sums.intersection.len();
    let mean: T = sums
        .intersection
        .iter()
        .zip(&sums.denominator)
        .map(|(&i, &d)| (T::lit(2.0) * i + eps) / (d + eps))
        .sum::<T>()
        / T::lit(c as f64);
    T::one() - mean
}

/// `1 − mean_j (2Σp_j t_j + ε)/(Σp_j + Σt_j + ε)` over all classes, with
/// `p = softmax(logits)` and one-hot `t`, pooled over the whole batch.
pub fn dice_loss<T: Scalar>(logits: &Tensor<T>, targets: &[usize]) -> Result<T> {
    validate_targets(logits, targets)?;
    let probs = pixel_softmax(logits);
    Ok(dice_from_sums(&dice_sums(&probs, targets)))
}

pub(crate) fn dice_backward<T: Scalar>(
    probs: &Tensor<T>,
    targets: &[usize],
    sums: &DiceSums<T>,
    grad: T,
) -> Tensor<T> {
    let [n, c, h, w] = probs.dims4().expect("rank 4");
    let plane = h * w;
    let eps = T::lit(DICE_SMOOTH);
    let two = T::lit(2.0);
    let scale = -grad / T::lit(c as f64);
    // d d_j / d p_j(px) = (2 t − d_j) / D_j with d_j the Dice ratio and D_j its denominator
    let ratio: Vec<T> = sums
        .intersection
        .iter()
        .zip(&sums.denominator)
        .map(|(&i, &d)| (two * i + eps) / (d + eps))
        .collect();
    let mut dp = Tensor::zeros(probs.shape());
    for b in 0..n {
        for ch in 0..c {
            let den = sums.denominator[ch] + eps;
            for px in 0..plane {
                let t = if targets[b * plane + px] == ch { two } else { T::zero() };
                dp.data_mut()[(b * c + ch) * plane + px] = scale * (t - ratio[ch]) / den;
            }
        }
    }
    // back through the per-pixel softmax
    let mut dl = Tensor::zeros(probs.shape());
    for b in 0..n {
        for px in 0..plane {
            let at = |ch: usize| (b * c + ch) * plane + px;
            let dot: T = (0..c).map(|ch| probs.data()[at(ch)] * dp.data()[at(ch)]).sum();
            for ch in 0..c {
                dl.data_mut()[at(ch)] = probs.data()[at(ch)] * (dp.data()[at(ch)] - dot);
            }
        }
    }
    dl
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln2() {
        let logits = Tensor::<f64>::zeros(&[1, 2, 2, 2]);
        let ce = cross_entropy(&logits, &[0, 1, 1, 0]).unwrap();
        assert!((ce - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn confident_logits_cost_nothing() {
        let targets = [1usize, 0, 1, 1];
        let logits = Tensor::<f64>::from_fn(&[1, 2, 2, 2], |i| {
            let (ch, px) = (i / 4, i % 4);
            if targets[px] == ch { 40.0 } else { 0.0 }
        });
        assert!(cross_entropy(&logits, &targets).unwrap() <= 1e-12);
        assert!(dice_loss(&logits, &targets).unwrap() <= 1e-6);
    }

    #[test]
    fn out_of_range_target_is_validation_error() {
        let logits = Tensor::<f64>::zeros(&[1, 2, 1, 2]);
        assert!(matches!(cross_entropy(&logits, &[0, 2]), Err(Error::Validation(_))));
        assert!(matches!(dice_loss(&logits, &[0, 2]), Err(Error::Validation(_))));
    }

    #[test]
    fn fully_wrong_prediction_dice() {
        // 16 pixels all predicted class 0, all labelled class 1
        let logits = Tensor::<f64>::from_fn(&[1, 2, 4, 4], |i| if i < 16 { 40.0 } else { -40.0 });
        let targets = vec![1usize; 16];
        let loss = dice_loss(&logits, &targets).unwrap();
        assert!((loss - 16.0 / 17.0).abs() < 1e-9, "{loss}");
    }
}
