//! Accuracy, confusion matrices, one-vs-rest ROC/AUC, and the cross-validated
//! report in the two-model table format.
//!
//! ROC curves step tied scores jointly (one point per distinct threshold),
//! which makes the trapezoidal area equal the tie-corrected Mann-Whitney
//! statistic exactly.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Fraction of exact matches.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    if y_true.is_empty() || y_true.len() != y_pred.len() {
        return Err(Error::Metric(format!(
            "accuracy needs equal non-empty vectors, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// Row = true class, column = predicted class.
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Array2<u32>> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Metric("confusion needs equal-length vectors".into()));
    }
    let mut m = Array2::zeros((n_classes, n_classes));
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::Metric(format!("label ({t}, {p}) outside the {n_classes}-class set")));
        }
        m[[t, p]] += 1;
    }
    Ok(m)
}

/// ROC curve as (fpr, tpr) points, thresholds swept over the distinct score
/// values descending. Tied scores advance TP and FP jointly. The curve starts
/// at (0,0) and ends at (1,1).
pub fn roc_curve(scores: &[f64], y_binary: &[bool]) -> Result<Vec<(f64, f64)>> {
    if scores.len() != y_binary.len() || scores.is_empty() {
        return Err(Error::Metric("roc needs equal non-empty score/label vectors".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Metric("non-finite score".into()));
    }
    let pos = y_binary.iter().filter(|&&b| b).count();
    let neg = y_binary.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("roc curve undefined: only one class present".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if y_binary[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Trapezoidal area under a curve of (x, y) points.
pub fn auc(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Metric(format!("auc needs at least 2 points, got {}", points.len())));
    }
    let mut area = 0.0;
    for pair in points.windows(2) {
        let (x1, y1) = pair[0];
        let (x2, y2) = pair[1];
        area += (x2 - x1) * (y1 + y2) * 0.5;
    }
    Ok(area)
}

/// One-vs-rest AUC per class. A class absent from `y_true` gets `None`
/// instead of failing the whole evaluation.
pub fn one_vs_rest_auc(proba: &Array2<f64>, y_true: &[usize]) -> Result<Vec<Option<f64>>> {
    if proba.nrows() != y_true.len() {
        return Err(Error::Metric(format!(
            "{} probability rows vs {} labels",
            proba.nrows(),
            y_true.len()
        )));
    }
    let n_classes = proba.ncols();
    if let Some(&bad) = y_true.iter().find(|&&c| c >= n_classes) {
        return Err(Error::Metric(format!("label {bad} outside the {n_classes}-class set")));
    }
    let mut out = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let y_bin: Vec<bool> = y_true.iter().map(|&t| t == c).collect();
        let pos = y_bin.iter().filter(|&&b| b).count();
        if pos == 0 || pos == y_bin.len() {
            out.push(None);
            continue;
        }
        let scores: Vec<f64> = proba.column(c).to_vec();
        out.push(Some(auc(&roc_curve(&scores, &y_bin)?)?));
    }
    Ok(out)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divide by N, not N-1).
fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Cross-validated evaluation summary in the report-table format.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub horizon: u32,
    pub fold_count: usize,
    /// Percentages.
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    /// Per class: (mean, population std) over the folds where the class AUC
    /// was defined; None when it never was.
    pub auc_summary: Vec<Option<(f64, f64)>>,
    pub class_names: Vec<String>,
    /// Summed over folds.
    pub confusion: Array2<u32>,
}

fn fmt_pm(mean: f64, std: f64) -> String {
    format!("{mean:.2} ± {std:.2}")
}

impl EvalReport {
    pub fn accuracy_cell(&self) -> String {
        fmt_pm(self.accuracy_mean, self.accuracy_std)
    }

    pub fn auc_cell(&self, class: usize) -> String {
        match self.auc_summary[class] {
            Some((m, s)) => fmt_pm(m, s),
            None => "n/a".into(),
        }
    }

    /// CSV mirroring the report table column order, one row per model,
    /// with a footer documenting the aggregation.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("model,accuracy");
        for name in &self.class_names {
            out.push_str(&format!(",auc_{}", name.to_lowercase()));
        }
        out.push('\n');
        out.push_str(&format!("M{},{}", self.horizon, self.accuracy_cell()));
        for c in 0..self.class_names.len() {
            out.push_str(&format!(",{}", self.auc_cell(c)));
        }
        out.push('\n');
        out.push_str(&format!(
            "# {}-fold CV; cells are fold mean ± population std; accuracy in percent; non-nested fold mean of the tuned config\n",
            self.fold_count
        ));
        out
    }
}

/// Aggregate per-fold accuracies (fractions), per-fold per-class AUCs, and
/// per-fold confusion matrices into the report.
pub fn cv_summary(
    fold_accuracies: &[f64],
    fold_aucs: &[Vec<Option<f64>>],
    fold_confusions: &[Array2<u32>],
    class_names: &[String],
    horizon: u32,
) -> Result<EvalReport> {
    let folds = fold_accuracies.len();
    if folds < 2 {
        return Err(Error::Metric(format!("cv summary needs at least 2 folds, got {folds}")));
    }
    if fold_aucs.len() != folds || fold_confusions.len() != folds {
        return Err(Error::Metric("per-fold vectors have mismatched lengths".into()));
    }
    let n_classes = class_names.len();
    if fold_aucs.iter().any(|a| a.len() != n_classes) {
        return Err(Error::Metric("per-fold AUC vectors must cover every class".into()));
    }

    let acc_pct: Vec<f64> = fold_accuracies.iter().map(|a| a * 100.0).collect();
    let mut auc_summary = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let defined: Vec<f64> = fold_aucs.iter().filter_map(|f| f[c]).collect();
        if defined.is_empty() {
            auc_summary.push(None);
        } else {
            auc_summary.push(Some((mean(&defined), population_std(&defined))));
        }
    }

    let mut confusion = Array2::zeros((n_classes, n_classes));
    for fold in fold_confusions {
        if fold.dim() != (n_classes, n_classes) {
            return Err(Error::Metric("confusion matrix dimension mismatch".into()));
        }
        confusion += fold;
    }

    Ok(EvalReport {
        horizon,
        fold_count: folds,
        accuracy_mean: mean(&acc_pct),
        accuracy_std: population_std(&acc_pct),
        auc_summary,
        class_names: class_names.to_vec(),
        confusion,
    })
}
