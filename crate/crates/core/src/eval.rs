//! Pixel-level scoring of rendered labels against ground-truth images.
//!
//! "Average" figures pool all pixels (micro); "overall" figures average the
//! per-class values over the classes present in the ground truth (macro).

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::camera::{LabelImage, VOID_LABEL};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction is {pred:?}, ground truth is {gt:?}")]
    Dimensions {
        pred: (usize, usize),
        gt: (usize, usize),
    },
    #[error("label {0} outside the class range")]
    Label(u8),
    #[error("confusion matrix is empty")]
    Empty,
}

/// `counts[g][p]` pixels with ground truth `g` predicted `p`; column
/// `classes` collects valid ground-truth pixels predicted as void.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * (classes + 1)],
        }
    }

    /// Builds a matrix from dense rows of `L` predictions, optionally
    /// followed by the miss count.
    pub fn from_rows(rows: &[&[u64]]) -> Self {
        let classes = rows.len();
        let mut cm = ConfusionMatrix::new(classes);
        for (g, row) in rows.iter().enumerate() {
            assert!(
                row.len() == classes || row.len() == classes + 1,
                "row {g} has {} entries",
                row.len()
            );
            for (p, &c) in row.iter().enumerate() {
                cm.counts[g * (classes + 1) + p] = c;
            }
        }
        cm
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// `pred` may be `classes` for the miss column.
    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * (self.classes + 1) + pred]
    }

    pub fn misses(&self, gt: usize) -> u64 {
        self.get(gt, self.classes)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds one view. Void ground-truth pixels are skipped; void predictions
    /// over valid ground truth land in the miss column.
    pub fn accumulate(&mut self, pred: &LabelImage, gt: &LabelImage) -> Result<(), EvalError> {
        if (pred.width, pred.height) != (gt.width, gt.height) {
            return Err(EvalError::Dimensions {
                pred: (pred.width, pred.height),
                gt: (gt.width, gt.height),
            });
        }
        let k = self.classes;
        for (&p, &g) in pred.data.iter().zip(&gt.data) {
            if g == VOID_LABEL {
                continue;
            }
            if g as usize >= k {
                return Err(EvalError::Label(g));
            }
            let col = if p == VOID_LABEL {
                k
            } else if (p as usize) < k {
                p as usize
            } else {
                return Err(EvalError::Label(p));
            };
            self.counts[g as usize * (k + 1) + col] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.classes, other.classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn metrics(&self) -> Result<MetricReport, EvalError> {
        let total = self.total();
        if total == 0 {
            return Err(EvalError::Empty);
        }
        let k = self.classes;
        let n = total as f64;
        let mut per_class = Vec::with_capacity(k);
        let (mut sum_tp, mut sum_fp, mut sum_fn) = (0u64, 0u64, 0u64);
        for c in 0..k {
            let tp = self.get(c, c);
            let row: u64 = (0..=k).map(|p| self.get(c, p)).sum();
            let col: u64 = (0..k).map(|g| self.get(g, c)).sum();
            let fp = col - tp;
            let fn_ = row - tp;
            let tn = total - tp - fp - fn_;
            sum_tp += tp;
            sum_fp += fp;
            sum_fn += fn_;
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            per_class.push(ClassMetrics {
                class: c,
                support: row,
                precision,
                recall,
                f1: f_score(precision, recall),
                iou: ratio(tp, tp + fp + fn_),
                accuracy: (tp + tn) as f64 / n,
            });
        }
        let trace: u64 = (0..k).map(|c| self.get(c, c)).sum();
        let micro_p = ratio(sum_tp, sum_tp + sum_fp);
        let micro_r = ratio(sum_tp, sum_tp + sum_fn);
        let present: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.support > 0).collect();
        let mean = |f: fn(&ClassMetrics) -> f64| {
            present.iter().map(|m| f(m)).sum::<f64>() / present.len() as f64
        };
        Ok(MetricReport {
            average_accuracy: trace as f64 / n,
            average_recall: micro_r,
            average_f_score: f_score(micro_p, micro_r),
            average_precision: micro_p,
            overall_accuracy: mean(|m| m.accuracy),
            overall_recall: mean(|m| m.recall),
            overall_f_score: mean(|m| m.f1),
            overall_precision: mean(|m| m.precision),
            iou: mean(|m| m.iou),
            pixels: total,
            per_class,
        })
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn f_score(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: usize,
    /// Ground-truth pixels of this class.
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    /// One-vs-rest accuracy `(tp + tn) / total`.
    pub accuracy: f64,
}

/// Table-style summary: micro ("average") and macro ("overall") aggregates
/// plus macro mean IoU.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub average_accuracy: f64,
    pub average_recall: f64,
    pub average_f_score: f64,
    pub average_precision: f64,
    pub overall_accuracy: f64,
    pub overall_recall: f64,
    pub overall_f_score: f64,
    pub overall_precision: f64,
    pub iou: f64,
    pub pixels: u64,
    pub per_class: Vec<ClassMetrics>,
}

const COLUMNS: [&str; 9] = [
    "avg_accuracy",
    "avg_recall",
    "avg_f_score",
    "avg_precision",
    "overall_accuracy",
    "overall_recall",
    "overall_f_score",
    "overall_precision",
    "iou",
];

impl MetricReport {
    fn row(&self) -> [f64; 9] {
        [
            self.average_accuracy,
            self.average_recall,
            self.average_f_score,
            self.average_precision,
            self.overall_accuracy,
            self.overall_recall,
            self.overall_f_score,
            self.overall_precision,
            self.iou,
        ]
    }

    /// Header plus one row per `(method, report)`.
    pub fn csv(rows: &[(&str, &MetricReport)]) -> String {
        let mut s = format!("method,{}\n", COLUMNS.join(","));
        for (name, r) in rows {
            let vals: Vec<String> = r.row().iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(s, "{name},{}", vals.join(","));
        }
        s
    }

    /// Aligned-column text table in the same column order as [`Self::csv`].
    pub fn table(rows: &[(&str, &MetricReport)]) -> String {
        let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(6).max(6);
        let col_w = COLUMNS.iter().map(|c| c.len()).max().unwrap_or(8);
        let mut s = format!("{:<name_w$}", "method");
        for c in COLUMNS {
            let _ = write!(s, "  {c:>col_w$}");
        }
        s.push('\n');
        for (name, r) in rows {
            let _ = write!(s, "{name:<name_w$}");
            for v in r.row() {
                let _ = write!(s, "  {v:>col_w$.4}");
            }
            s.push('\n');
        }
        s
    }
}
