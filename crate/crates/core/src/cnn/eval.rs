use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::severity::{Severity, NUM_CLASSES};

/// `counts[true][predicted]`
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: Severity,
    /// `None` when the class has no support
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub support: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class precision/recall/F1 with accuracy and macro/weighted averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total: usize,
}

impl ConfusionMatrix {
    pub fn from_pairs<I: IntoIterator<Item = (Severity, Severity)>>(pairs: I) -> Self {
        let mut m = ConfusionMatrix::default();
        for (truth, pred) in pairs {
            m.counts[truth.index()][pred.index()] += 1;
        }
        m
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            self.correct() as f64 / n as f64
        }
    }

    pub fn report(&self) -> ClassificationReport {
        let total = self.total();
        let mut per_class = Vec::with_capacity(NUM_CLASSES);
        let (mut macro_sum, mut weighted_sum) = ([0.0; 3], [0.0; 3]);
        let mut present = 0usize;
        for class in Severity::ALL {
            let c = class.index();
            let support: usize = self.counts[c].iter().sum();
            let predicted: usize = (0..NUM_CLASSES).map(|t| self.counts[t][c]).sum();
            let tp = self.counts[c][c] as f64;
            if support == 0 {
                per_class.push(ClassMetrics {
                    class,
                    precision: None,
                    recall: None,
                    f1: None,
                    support,
                });
                continue;
            }
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = tp / support as f64;
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            present += 1;
            for (acc, v) in macro_sum.iter_mut().zip([precision, recall, f1]) {
                *acc += v;
            }
            for (acc, v) in weighted_sum.iter_mut().zip([precision, recall, f1]) {
                *acc += v * support as f64;
            }
            per_class.push(ClassMetrics {
                class,
                precision: Some(precision),
                recall: Some(recall),
                f1: Some(f1),
                support,
            });
        }
        let avg = |sums: [f64; 3], denom: f64| {
            if denom == 0.0 {
                Averages {
                    precision: 0.0,
                    recall: 0.0,
                    f1: 0.0,
                }
            } else {
                Averages {
                    precision: sums[0] / denom,
                    recall: sums[1] / denom,
                    f1: sums[2] / denom,
                }
            }
        };
        ClassificationReport {
            per_class,
            accuracy: self.accuracy(),
            macro_avg: avg(macro_sum, present as f64),
            weighted_avg: avg(weighted_sum, total as f64),
            total,
        }
    }
}
