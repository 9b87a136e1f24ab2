use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-vs-rest pixel counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rates {
    pub iou: f64,
    pub dice: f64,
    pub acc: f64,
    pub recall: f64,
    pub precision: f64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Overlap and pixel rates. A zero denominator gives 1.0 when the class is
    /// absent from both prediction and ground truth, otherwise 0.0.
    pub fn rates(&self) -> Rates {
        let absent = self.tp + self.fp + self.fn_ == 0;
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                if absent {
                    1.0
                } else {
                    0.0
                }
            } else {
                num as f64 / den as f64
            }
        };
        Rates {
            iou: ratio(self.tp, self.tp + self.fp + self.fn_),
            dice: ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_),
            acc: ratio(self.tp + self.tn, self.total()),
            recall: ratio(self.tp, self.tp + self.fn_),
            precision: ratio(self.tp, self.tp + self.fp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub classes: Vec<ClassCounts>,
}

impl ConfusionCounts {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, c: usize) -> &ClassCounts {
        &self.classes[c]
    }
}

/// Per-class counts for two flattened label maps of equal size.
pub fn confusion(pred: &[usize], gt: &[usize], num_classes: usize) -> Result<ConfusionCounts> {
    if pred.len() != gt.len() {
        return Err(Error::shape(format!(
            "prediction has {} pixels, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    if let Some(&bad) = pred.iter().chain(gt).find(|&&l| l >= num_classes) {
        return Err(Error::validation(format!("label {bad} is not below {num_classes} classes")));
    }
    let mut classes = vec![ClassCounts::default(); num_classes];
    for (&p, &g) in pred.iter().zip(gt) {
        if p == g {
            classes[p].tp += 1;
        } else {
            classes[p].fp += 1;
            classes[g].fn_ += 1;
        }
    }
    let total = pred.len() as u64;
    for c in &mut classes {
        c.tn = total - c.tp - c.fp - c.fn_;
    }
    Ok(ConfusionCounts { classes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_counts() {
        let pred = [1, 1, 1, 0];
        let gt = [1, 1, 0, 0];
        let c = confusion(&pred, &gt, 2).unwrap();
        assert_eq!(
            *c.class(1),
            ClassCounts {
                tp: 2,
                fp: 1,
                fn_: 0,
                tn: 1
            }
        );
    }

    #[test]
    fn rates_from_counts() {
        let r = ClassCounts {
            tp: 3,
            fp: 3,
            fn_: 1,
            tn: 10,
        }
        .rates();
        assert_eq!(r.iou, 3.0 / 7.0);
        assert_eq!(r.dice, 0.6);
        assert!((r.dice - 2.0 * r.iou / (1.0 + r.iou)).abs() <= 1e-12);
    }

    #[test]
    fn absent_class_scores_one() {
        let c = confusion(&[0; 9], &[0; 9], 2).unwrap();
        let r = c.class(1).rates();
        assert_eq!((c.class(1).tp, c.class(1).fp, c.class(1).fn_), (0, 0, 0));
        assert_eq!((r.iou, r.dice, r.recall, r.precision, r.acc), (1.0, 1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn missed_class_scores_zero() {
        let r = confusion(&[0, 0], &[1, 0], 2).unwrap().class(1).rates();
        assert_eq!((r.iou, r.dice, r.recall, r.precision), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn mismatched_lengths_error() {
        assert!(confusion(&[0, 1], &[0], 2).is_err());
        assert!(confusion(&[3], &[0], 2).is_err());
    }
}
