//! Metrics, confusion matrices and the final device association.

use serde::{Deserialize, Serialize};

use crate::fusion::Label;
use crate::vision::VisionRecord;
use crate::{Error, Result};

/// Floor applied to probabilities before taking logs.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Rows are true labels, columns predicted labels, both in `X` order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: Label, predicted: Label) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.counts[class][class]
    }

    pub fn false_positives(&self, class: usize) -> u64 {
        (0..3).filter(|&r| r != class).map(|r| self.counts[r][class]).sum()
    }

    pub fn false_negatives(&self, class: usize) -> u64 {
        (0..3).filter(|&c| c != class).map(|c| self.counts[class][c]).sum()
    }

    /// Recall of one class; `None` when the class never occurs.
    pub fn class_recall(&self, class: Label) -> Option<f64> {
        let c = class.index();
        let support: u64 = self.counts[c].iter().sum();
        (support > 0).then(|| self.counts[c][c] as f64 / support as f64)
    }

    /// Plot-ready CSV: a header with the class names and one row per true
    /// label.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for l in Label::ALL {
            s.push(',');
            s.push_str(l.name());
        }
        s.push('\n');
        for l in Label::ALL {
            s.push_str(l.name());
            for c in 0..3 {
                s.push_str(&format!(",{}", self.counts[l.index()][c]));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut cm = ConfusionMatrix::default();
        let mut rows = 0;
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let parse = |m: &str| Error::Parse {
                line: i + 1,
                message: m.to_string(),
            };
            if rows >= 3 {
                return Err(parse("more than three class rows"));
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(parse("expected four fields"));
            }
            for c in 0..3 {
                cm.counts[rows][c] = fields[c + 1].trim().parse().map_err(|_| parse("count is not an integer"))?;
            }
            rows += 1;
        }
        if rows != 3 {
            return Err(Error::Parse {
                line: rows + 1,
                message: "expected three class rows".into(),
            });
        }
        Ok(cm)
    }
}

pub fn confusion(pairs: &[(Label, Label)]) -> Result<ConfusionMatrix> {
    if pairs.is_empty() {
        return Err(Error::Contract("confusion matrix of an empty set".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for &(t, p) in pairs {
        cm.add(t, p);
    }
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_loss: Option<f64>,
}

/// Micro-averaged metrics: tp, fp and fn are summed over the classes
/// before applying `tp/(tp+fp)`, `tp/(tp+fn)` and `tp/(tp + (fp+fn)/2)`.
pub fn micro_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Contract("metrics of an empty confusion matrix".into()));
    }
    let tp: u64 = (0..3).map(|c| cm.true_positives(c)).sum();
    let fp: u64 = (0..3).map(|c| cm.false_positives(c)).sum();
    let fneg: u64 = (0..3).map(|c| cm.false_negatives(c)).sum();
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    let tp_f = tp as f64;
    Ok(MetricsReport {
        accuracy: cm.trace() as f64 / total as f64,
        precision: ratio(tp_f, (tp + fp) as f64),
        recall: ratio(tp_f, (tp + fneg) as f64),
        f1: ratio(tp_f, tp_f + 0.5 * (fp + fneg) as f64),
        log_loss: None,
    })
}

/// Per-class precision, recall and F1, for report readability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: String,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn per_class(cm: &ConfusionMatrix) -> Vec<ClassRow> {
    Label::ALL
        .iter()
        .map(|&l| {
            let c = l.index();
            let (tp, fp, fneg) = (
                cm.true_positives(c) as f64,
                cm.false_positives(c) as f64,
                cm.false_negatives(c) as f64,
            );
            let ratio = |n: f64, d: f64| if d > 0.0 { n / d } else { 0.0 };
            ClassRow {
                class: l.name().to_string(),
                support: cm.counts[c].iter().sum(),
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fneg),
                f1: ratio(tp, tp + 0.5 * (fp + fneg)),
            }
        })
        .collect()
}

/// Mean of `-ln p(true class)` with probabilities floored at 1e-12.
pub fn log_loss(probabilities: &[[f64; 3]], truth: &[Label]) -> Result<f64> {
    if probabilities.len() != truth.len() {
        return Err(Error::Contract(format!(
            "{} distributions for {} labels",
            probabilities.len(),
            truth.len()
        )));
    }
    if probabilities.is_empty() {
        return Err(Error::Contract("log-loss of an empty set".into()));
    }
    let mut acc = 0.0;
    for (i, (p, t)) in probabilities.iter().zip(truth).enumerate() {
        let sum: f64 = p.iter().sum();
        if p.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!("row {i} is not a probability distribution: {p:?}")));
        }
        acc -= p[t.index()].max(PROBABILITY_FLOOR).ln();
    }
    Ok(acc / probabilities.len() as f64)
}

/// Outcome of mapping a classifier decision back onto the scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Association {
    /// The device inside detection `detection` is the transmitter.
    Device { detection: usize },
    NoTransmitter,
    /// The label names a box the detector did not report.
    Inconsistent { label: Label },
}

impl Association {
    pub fn describe(&self) -> String {
        match self {
            Association::Device { detection } => format!("device-in-bb{}", detection + 1),
            Association::NoTransmitter => "no-transmitter".into(),
            Association::Inconsistent { label } => format!("inconsistent({})", label.name()),
        }
    }
}

pub fn associate(prediction: (Label, f64), record: &VisionRecord) -> Association {
    let (label, _confidence) = prediction;
    match label {
        Label::NoTx => Association::NoTransmitter,
        Label::Bb1 | Label::Bb2 => {
            let detection = label.index() - 1;
            if detection < record.detections.len() {
                Association::Device { detection }
            } else {
                Association::Inconsistent { label }
            }
        }
    }
}
