//! Confusion-matrix metrics with Broken as the positive class, and the
//! timed method comparison table.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `(tp + tn) / total`; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }

    /// The same counts with Intact as the positive class.
    pub fn swap_positive(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

fn check_lengths(pred: &[Label], truth: &[Label]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension {
            what: "predictions",
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::input("no samples to evaluate"));
    }
    Ok(())
}

pub fn confusion(pred: &[Label], truth: &[Label]) -> Result<ConfusionMatrix> {
    check_lengths(pred, truth)?;
    let mut cm = ConfusionMatrix::default();
    for (p, t) in pred.iter().zip(truth) {
        match (p, t) {
            (Label::Broken, Label::Broken) => cm.tp += 1,
            (Label::Broken, Label::Intact) => cm.fp += 1,
            (Label::Intact, Label::Broken) => cm.fn_ += 1,
            (Label::Intact, Label::Intact) => cm.tn += 1,
        }
    }
    Ok(cm)
}

pub fn accuracy(pred: &[Label], truth: &[Label]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let ok = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(ok as f64 / truth.len() as f64)
}

/// A metric whose denominator vanished is reported as 0 with its flag set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_degenerate: bool,
    pub recall_degenerate: bool,
    pub f1_degenerate: bool,
}

pub fn precision_recall_f1(cm: &ConfusionMatrix) -> Scores {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            (0.0, true)
        } else {
            (num as f64 / den as f64, false)
        }
    };
    let (precision, precision_degenerate) = ratio(cm.tp, cm.tp + cm.fp);
    let (recall, recall_degenerate) = ratio(cm.tp, cm.tp + cm.fn_);
    let (f1, f1_degenerate) = if precision + recall > 0.0 {
        (2.0 * precision * recall / (precision + recall), false)
    } else {
        (0.0, true)
    };
    Scores {
        precision,
        recall,
        f1,
        precision_degenerate,
        recall_degenerate,
        f1_degenerate,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub confusion: ConfusionMatrix,
    pub scores: Scores,
    pub accuracy: f64,
    pub train_ms: f64,
    pub test_ms: f64,
    pub config: String,
}

impl MethodReport {
    pub fn from_predictions(
        method: impl Into<String>,
        pred: &[Label],
        truth: &[Label],
        train_ms: f64,
        test_ms: f64,
        config: impl Into<String>,
    ) -> Result<Self> {
        let cm = confusion(pred, truth)?;
        Ok(MethodReport {
            method: method.into(),
            confusion: cm,
            scores: precision_recall_f1(&cm),
            accuracy: cm.accuracy(),
            train_ms,
            test_ms,
            config: config.into(),
        })
    }
}

/// A classifier bound to its own training and test representation.
pub trait Method {
    fn name(&self) -> String;
    fn config_summary(&self) -> String;
    fn fit(&mut self) -> Result<()>;
    fn is_trained(&self) -> bool;
    /// Predictions on the held-out set; errors when untrained.
    fn predict_test(&self) -> Result<Vec<Label>>;
}

pub const TEST_TIMING_REPEATS: usize = 3;

/// Milliseconds on the monotonic clock.
pub fn time_ms<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64() * 1e3))
}

/// Train each method, then time its prediction `TEST_TIMING_REPEATS` times
/// and keep the fastest. Methods run one after another.
pub fn compare(methods: &mut [Box<dyn Method + '_>], truth: &[Label]) -> Result<Vec<MethodReport>> {
    let mut out = Vec::with_capacity(methods.len());
    for m in methods.iter_mut() {
        let ((), train_ms) = time_ms(|| m.fit())?;
        out.push(evaluate_method(m.as_ref(), truth, train_ms)?);
    }
    Ok(out)
}

/// Report for an already fitted method.
pub fn evaluate_method(m: &dyn Method, truth: &[Label], train_ms: f64) -> Result<MethodReport> {
    if !m.is_trained() {
        return Err(Error::Training(format!(
            "method {} is not trained",
            m.name()
        )));
    }
    let mut best = f64::INFINITY;
    let mut pred = Vec::new();
    for _ in 0..TEST_TIMING_REPEATS {
        let (p, ms) = time_ms(|| m.predict_test())?;
        best = best.min(ms);
        pred = p;
    }
    MethodReport::from_predictions(m.name(), &pred, truth, train_ms, best, m.config_summary())
}

pub const REPORT_COLUMNS: [&str; 8] = [
    "method",
    "precision",
    "recall",
    "f1",
    "accuracy",
    "train_ms",
    "test_ms",
    "config",
];

/// One row per report under [`REPORT_COLUMNS`].
pub fn write_reports_csv<W: Write>(w: W, reports: &[MethodReport]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(REPORT_COLUMNS)?;
    for r in reports {
        wtr.write_record([
            r.method.clone(),
            format!("{:.6}", r.scores.precision),
            format!("{:.6}", r.scores.recall),
            format!("{:.6}", r.scores.f1),
            format!("{:.6}", r.accuracy),
            format!("{:.3}", r.train_ms),
            format!("{:.3}", r.test_ms),
            r.config.clone(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Fixed-width text table of the same columns.
pub fn format_table(reports: &[MethodReport]) -> String {
    let rows: Vec<[String; 8]> = reports
        .iter()
        .map(|r| {
            [
                r.method.clone(),
                format!("{:.4}", r.scores.precision),
                format!("{:.4}", r.scores.recall),
                format!("{:.4}", r.scores.f1),
                format!("{:.4}", r.accuracy),
                format!("{:.1}", r.train_ms),
                format!("{:.3}", r.test_ms),
                r.config.clone(),
            ]
        })
        .collect();
    let mut widths = REPORT_COLUMNS.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 || i == 7 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &REPORT_COLUMNS.map(String::from));
    for row in &rows {
        line(&mut out, row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Broken as B, Intact as I};

    #[test]
    fn enumeration_example() {
        let cm = confusion(&[B, B, I, I], &[B, I, I, B]).unwrap();
        assert_eq!(
            cm,
            ConfusionMatrix {
                tp: 1,
                fp: 1,
                fn_: 1,
                tn: 1
            }
        );
        let s = precision_recall_f1(&cm);
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn degenerate_flags() {
        let s = precision_recall_f1(&ConfusionMatrix {
            tp: 0,
            fp: 0,
            fn_: 3,
            tn: 2,
        });
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        assert!(s.precision_degenerate && !s.recall_degenerate && s.f1_degenerate);
    }

    #[test]
    fn full_test_set_accuracy() {
        let truth = vec![B; 1236];
        let mut pred = truth.clone();
        for p in pred.iter_mut().take(4) {
            *p = I;
        }
        assert!((accuracy(&pred, &truth).unwrap() - 0.99676).abs() < 5e-6);
        assert!(accuracy(&pred[..3], &truth).is_err());
    }

    #[test]
    fn table_has_one_row_per_report() {
        let r = MethodReport::from_predictions("logreg", &[B, I], &[B, I], 1.0, 0.1, "lambda=1")
            .unwrap();
        let t = format_table(std::slice::from_ref(&r));
        assert_eq!(t.lines().count(), 2);
        let mut buf = Vec::new();
        write_reports_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,precision,recall,f1,accuracy,train_ms,test_ms,config\n"));
        assert!(text.contains("logreg,1.000000,1.000000,1.000000,1.000000,"));
    }
}
