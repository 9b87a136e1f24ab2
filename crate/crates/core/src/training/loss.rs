use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use crate::ops::{cross_entropy as cross_entropy_loss, dice_loss};

/// Cross-entropy and soft Dice terms with their unit-weight sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub dice: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(ce: f64, dice: f64) -> Self {
        Self {
            ce,
            dice,
            total: ce + dice,
        }
    }

    /// Mean of several breakdowns, each component averaged separately.
    pub fn mean(items: &[LossBreakdown]) -> Self {
        if items.is_empty() {
            return Self::default();
        }
        let n = items.len() as f64;
        Self::new(
            items.iter().map(|l| l.ce).sum::<f64>() / n,
            items.iter().map(|l| l.dice).sum::<f64>() / n,
        )
    }
}

pub fn combined_loss<T: Scalar>(logits: &Tensor<T>, targets: &[usize]) -> Result<LossBreakdown> {
    let ce = ops::cross_entropy(logits, targets)?;
    let dice = ops::dice_loss(logits, targets)?;
    Ok(LossBreakdown::new(ce.as_f64(), dice.as_f64()))
}

/// Records `ce + dice` on the tape and returns the differentiable total.
pub fn combined_loss_var<T: Scalar>(
    tape: &mut Tape<'_, T>,
    logits: Var,
    targets: &[usize],
) -> Result<(Var, LossBreakdown)> {
    let ce = tape.cross_entropy(logits, targets)?;
    let dice = tape.dice_loss(logits, targets)?;
    let breakdown = LossBreakdown::new(tape.value(ce).data()[0].as_f64(), tape.value(dice).data()[0].as_f64());
    let total = tape.add(ce, dice)?;
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_has_near_zero_total() {
        let targets = [0usize, 1, 1, 0];
        let logits = Tensor::<f64>::from_fn(&[1, 2, 2, 2], |i| {
            let (c, p) = (i / 4, i % 4);
            if targets[p] == c {
                40.0
            } else {
                -40.0
            }
        });
        assert!(combined_loss(&logits, &targets).unwrap().total <= 1e-6);
    }

    #[test]
    fn total_is_exact_sum() {
        let logits = Tensor::<f64>::from_fn(&[2, 3, 2, 2], |i| ((i * 37) % 11) as f64 / 3.0 - 1.5);
        let targets: Vec<usize> = (0..8).map(|i| i % 3).collect();
        let l = combined_loss(&logits, &targets).unwrap();
        assert_eq!(l.total, l.ce + l.dice);
        assert!((0.0..=1.0).contains(&l.dice));
    }
}
