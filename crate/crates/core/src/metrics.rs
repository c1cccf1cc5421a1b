//! Classification evaluation: per-class precision, sensitivity, F1, and the
//! macro F1 used as the headline score.

use std::fmt::Write as _;

/// Per-class confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

/// Confusion counts for a fixed set of classes indexed `0..num_classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    counts: Vec<ClassCounts>,
}

impl ConfusionCounts {
    pub fn new(num_classes: usize) -> Self {
        assert!(num_classes >= 1, "need at least one class");
        ConfusionCounts {
            counts: vec![ClassCounts::default(); num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn class(&self, cls: usize) -> ClassCounts {
        self.counts[cls]
    }

    pub fn record(&mut self, true_cls: usize, pred_cls: usize) {
        if true_cls == pred_cls {
            self.counts[true_cls].true_pos += 1;
        } else {
            self.counts[pred_cls].false_pos += 1;
            self.counts[true_cls].false_neg += 1;
        }
    }

    pub fn from_pairs(num_classes: usize, pairs: &[(usize, usize)]) -> Self {
        let mut c = ConfusionCounts::new(num_classes);
        for &(t, p) in pairs {
            c.record(t, p);
        }
        c
    }

    /// Direct count injection, for reconstructing published results.
    pub fn with_class(mut self, cls: usize, counts: ClassCounts) -> Self {
        self.counts[cls] = counts;
        self
    }
}

/// Ratio metric with the 0/0 convention flagged rather than erroring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioValue {
    pub value: f64,
    /// True when the denominator was zero and the value defaulted to 0.
    pub degenerate: bool,
}

impl RatioValue {
    fn of(num: u64, den: u64) -> Self {
        if den == 0 {
            RatioValue {
                value: 0.0,
                degenerate: true,
            }
        } else {
            RatioValue {
                value: num as f64 / den as f64,
                degenerate: false,
            }
        }
    }
}

/// tp / (tp + fp); a zero denominator yields 0 with the degenerate flag set.
pub fn precision(c: &ConfusionCounts, cls: usize) -> RatioValue {
    let k = c.class(cls);
    RatioValue::of(k.true_pos, k.true_pos + k.false_pos)
}

/// tp / (tp + fn); a zero denominator yields 0 with the degenerate flag set.
pub fn sensitivity(c: &ConfusionCounts, cls: usize) -> RatioValue {
    let k = c.class(cls);
    RatioValue::of(k.true_pos, k.true_pos + k.false_neg)
}

/// Harmonic combination `2pr / (p + r)`, 0 when both inputs are 0.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Arithmetic mean of per-class F1 scores. Panics on an empty slice.
pub fn macro_f1(per_class: &[f64]) -> f64 {
    assert!(!per_class.is_empty(), "macro F1 of zero classes");
    per_class.iter().sum::<f64>() / per_class.len() as f64
}

/// Per-class row of an evaluation report.
#[derive(Debug, Clone)]
pub struct ClassReport {
    pub name: String,
    pub precision: RatioValue,
    pub sensitivity: RatioValue,
    pub f1: f64,
}

/// Full evaluation report; scores are fractions in `[0, 1]`, rendered as
/// percentages with two decimals.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub per_class: Vec<ClassReport>,
    pub macro_f1: f64,
}

/// Evaluate `(true, predicted)` class-index pairs.
pub fn evaluate(pairs: &[(usize, usize)], class_names: &[&str]) -> EvaluationReport {
    let counts = ConfusionCounts::from_pairs(class_names.len(), pairs);
    report_from_counts(&counts, class_names)
}

pub fn report_from_counts(counts: &ConfusionCounts, class_names: &[&str]) -> EvaluationReport {
    assert_eq!(counts.num_classes(), class_names.len());
    let per_class: Vec<ClassReport> = class_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let p = precision(counts, i);
            let r = sensitivity(counts, i);
            ClassReport {
                name: name.to_string(),
                precision: p,
                sensitivity: r,
                f1: f1(p.value, r.value),
            }
        })
        .collect();
    let scores: Vec<f64> = per_class.iter().map(|c| c.f1).collect();
    EvaluationReport {
        per_class,
        macro_f1: macro_f1(&scores),
    }
}

impl EvaluationReport {
    /// Tab-separated text, percentages with two decimals; degenerate 0/0
    /// ratios are marked in the flags column.
    pub fn to_text(&self) -> String {
        let mut out = String::from("class\tprecision\tsensitivity\tf1\tflags\n");
        for c in &self.per_class {
            let mut flags = Vec::new();
            if c.precision.degenerate {
                flags.push("degenerate_precision");
            }
            if c.sensitivity.degenerate {
                flags.push("degenerate_sensitivity");
            }
            let _ = writeln!(
                out,
                "{}\t{:.2}\t{:.2}\t{:.2}\t{}",
                c.name,
                c.precision.value * 100.0,
                c.sensitivity.value * 100.0,
                c.f1 * 100.0,
                flags.join(",")
            );
        }
        let _ = writeln!(out, "macro_f1\t{:.2}", self.macro_f1 * 100.0);
        out
    }
}
