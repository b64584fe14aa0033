use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Predictor;
use crate::pipeline::WindowSet;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Positive examples of this class.
    pub support: usize,
    pub confusion: ConfusionMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub classes: Vec<ClassMetrics>,
    /// Element-wise accuracy over the `(N, K)` decision matrix.
    pub accuracy: f64,
    pub threshold: f64,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Metrics {
    pub fn f1(&self, class: &str) -> Option<f64> {
        self.classes.iter().find(|c| c.class == class).map(|c| c.f1)
    }

    pub fn mean_f1(&self) -> f64 {
        self.classes.iter().map(|c| c.f1).sum::<f64>() / self.classes.len().max(1) as f64
    }
}

/// Metrics from `(N, K)` row-major truth and decision matrices.
pub fn score(truth: &[u8], decisions: &[u8], class_names: &[String], threshold: f64) -> Result<Metrics> {
    let k = class_names.len();
    if k == 0 || truth.len() != decisions.len() || !truth.len().is_multiple_of(k) {
        return Err(Error::shape(format!(
            "truth ({}) and decisions ({}) must both be N x {k}",
            truth.len(),
            decisions.len()
        )));
    }
    let n = truth.len() / k;
    let mut cms = vec![ConfusionMatrix::default(); k];
    let mut hits = 0;
    for (t, d) in truth.chunks(k).zip(decisions.chunks(k)) {
        for c in 0..k {
            let cm = &mut cms[c];
            match (t[c] > 0, d[c] > 0) {
                (true, true) => cm.tp += 1,
                (false, true) => cm.fp += 1,
                (true, false) => cm.fn_ += 1,
                (false, false) => cm.tn += 1,
            }
            hits += usize::from((t[c] > 0) == (d[c] > 0));
        }
    }
    let mut warnings = Vec::new();
    let classes = class_names
        .iter()
        .zip(&cms)
        .map(|(name, cm)| {
            let support = cm.tp + cm.fn_;
            if support == 0 {
                warnings.push(format!("class `{name}` has no positive examples; recall reported as 0"));
            }
            ClassMetrics {
                class: name.clone(),
                precision: cm.precision(),
                recall: cm.recall(),
                f1: cm.f1(),
                support,
                confusion: *cm,
            }
        })
        .collect();
    Ok(Metrics {
        classes,
        accuracy: ratio(hits, n * k),
        threshold,
        count: n,
        warnings,
    })
}

/// Thresholds probabilities: `decision = p >= threshold`.
pub fn decide(proba: &[f64], threshold: f64) -> Vec<u8> {
    proba.iter().map(|&p| u8::from(p >= threshold)).collect()
}

/// Scores a model on labeled windows.
pub fn evaluate<P: Predictor + ?Sized>(model: &mut P, test: &WindowSet, threshold: f64) -> Result<Metrics> {
    if model.classes() != test.classes() {
        return Err(Error::shape(format!(
            "model predicts {} classes, windows carry {}",
            model.classes(),
            test.classes()
        )));
    }
    if test.is_empty() {
        return score(&[], &[], &test.class_names, threshold);
    }
    let p = model.predict_proba(&test.x)?;
    score(&test.y, &decide(p.data(), threshold), &test.class_names, threshold)
}
