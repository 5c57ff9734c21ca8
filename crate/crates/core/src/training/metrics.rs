use serde::{Deserialize, Serialize};

/// Confusion counts with the sarcastic class as positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(labels: &[u8], predicted: &[u8]) -> Self {
        assert_eq!(labels.len(), predicted.len(), "one prediction per label");
        let mut c = Confusion::default();
        for (&y, &p) in labels.iter().zip(predicted) {
            match (y, p) {
                (1, 1) => c.tp += 1,
                (0, 1) => c.fp += 1,
                (0, 0) => c.tn += 1,
                _ => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Sarcastic class.
    pub binary: ClassScores,
    /// Unweighted mean over both classes.
    pub macro_avg: ClassScores,
    pub confusion: Confusion,
    /// Names of quantities whose denominator was zero and were set to 0.
    pub undefined: Vec<String>,
}

fn ratio(num: usize, den: usize, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn class_scores(tp: usize, fp: usize, fn_: usize, class: &str, undefined: &mut Vec<String>) -> ClassScores {
    let precision = ratio(tp, tp + fp, &format!("precision_{class}"), undefined);
    let recall = ratio(tp, tp + fn_, &format!("recall_{class}"), undefined);
    ClassScores {
        precision,
        recall,
        f1: f1(precision, recall),
    }
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Self {
        let mut undefined = Vec::new();
        let accuracy = ratio(c.tp + c.tn, c.total(), "accuracy", &mut undefined);
        let positive = class_scores(c.tp, c.fp, c.fn_, "sarcastic", &mut undefined);
        let negative = class_scores(c.tn, c.fn_, c.fp, "non_sarcastic", &mut undefined);
        let macro_avg = ClassScores {
            precision: (positive.precision + negative.precision) / 2.0,
            recall: (positive.recall + negative.recall) / 2.0,
            f1: (positive.f1 + negative.f1) / 2.0,
        };
        Self {
            accuracy,
            binary: positive,
            macro_avg,
            confusion: c,
            undefined,
        }
    }

    pub fn from_predictions(labels: &[u8], predicted: &[u8]) -> Self {
        Self::from_confusion(Confusion::from_predictions(labels, predicted))
    }
}
