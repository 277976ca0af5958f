//! Classification and regression metrics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    /// Counts for probabilities thresholded at `threshold` (inclusive).
    pub fn from_probabilities(probs: &[f64], labels: &[f64], threshold: f64) -> Confusion {
        let mut c = Confusion::default();
        for (&p, &y) in probs.iter().zip(labels) {
            match (p >= threshold, y >= 0.5) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// TP / (TP + ½(FP + FN)); zero when there are no positives at all.
    pub fn f1(&self) -> f64 {
        let den = self.tp as f64 + 0.5 * (self.fp + self.fn_) as f64;
        if den == 0.0 {
            0.0
        } else {
            self.tp as f64 / den
        }
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / n as f64
        }
    }

    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Area under the ROC curve. Tied scores contribute one half, which is the
/// trapezoidal area of the threshold-swept curve.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Metric(format!("non-finite score {s}")));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Midranks over tie groups.
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|&&y| y >= 0.5).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("AUC needs both classes".into()));
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y >= 0.5).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Metric(format!("rmse over {} vs {} values", pred.len(), truth.len())));
    }
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((s / pred.len() as f64).sqrt())
}

/// Probability cut-off maximizing TPR − FPR. Reporting aid only.
pub fn youden_threshold(probs: &[f64], labels: &[f64]) -> Option<f64> {
    let mut cands: Vec<f64> = probs.to_vec();
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    cands
        .into_iter()
        .map(|t| {
            let c = Confusion::from_probabilities(probs, labels, t);
            (t, c.tpr() - c.fpr())
        })
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.total_cmp(&a.0)))
        .map(|(t, _)| t)
}

/// Mean and half-width of a two-sided Student-t confidence interval.
pub fn mean_with_margin(values: &[f64], confidence: f64) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + confidence / 2.0);
    (mean, t * (var / n as f64).sqrt())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Confusion>,
}

impl MetricsReport {
    /// Metrics from logits against binary labels.
    pub fn classification(logits: &[f64], labels: &[f64], loss: f64) -> MetricsReport {
        let probs: Vec<f64> = logits.iter().map(|&z| crate::tensor::sigmoid(z)).collect();
        let c = Confusion::from_probabilities(&probs, labels, DECISION_THRESHOLD);
        MetricsReport {
            n: labels.len(),
            loss,
            auc: auc(&probs, labels).ok(),
            f1: Some(c.f1()),
            accuracy: Some(c.accuracy()),
            rmse: None,
            confusion: Some(c),
        }
    }

    pub fn regression(pred: &[f64], truth: &[f64], loss: f64) -> MetricsReport {
        MetricsReport {
            n: truth.len(),
            loss,
            rmse: rmse(pred, truth).ok(),
            ..Default::default()
        }
    }

    /// The headline score: F1 for classification, RMSE for regression.
    pub fn primary(&self) -> f64 {
        self.f1.or(self.rmse).unwrap_or(f64::NAN)
    }
}
