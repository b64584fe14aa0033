use serde::{Deserialize, Serialize};

use super::frame::SensorFrame;
use crate::error::{Error, Result};

/// Pearson correlation between every pair of the listed variables.
///
/// Variables are features followed by classes; binary classes enter as 0/1
/// series, which makes the feature/class entries point-biserial coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// Row-major `names.len() x names.len()`.
    pub values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.values[self.index(a)?][self.index(b)?])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Population-moment Pearson coefficient, clamped to `[-1, 1]`.
///
/// Returns `None` when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson_matrix(frame: &SensorFrame, variables: &[String]) -> Result<CorrelationMatrix> {
    if frame.len() < 2 {
        return Err(Error::Degenerate("need at least two rows for correlation".into()));
    }
    let series = variables
        .iter()
        .map(|v| {
            let s = frame
                .numeric_series(v)
                .ok_or_else(|| Error::Schema(format!("unknown variable `{v}`")))?;
            if s.iter().any(|x| x.is_nan()) {
                return Err(Error::Integrity(format!("variable `{v}` has missing values")));
            }
            let first = s[0];
            if s.iter().all(|&x| x == first) {
                return Err(Error::DegenerateVariable(v.clone()));
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let d = series.len();
    let mut values = vec![vec![0.0; d]; d];
    for i in 0..d {
        values[i][i] = 1.0;
        for j in i + 1..d {
            let r = pearson(&series[i], &series[j]).ok_or_else(|| Error::DegenerateVariable(variables[i].clone()))?;
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: variables.to_vec(),
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub name: String,
    /// The feature it was too correlated with.
    pub partner: String,
    pub pair_r: f64,
    /// Largest |r| of the dropped feature to any class.
    pub class_relevance: f64,
}

/// Retained feature channels plus a record of what was removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub features: Vec<String>,
    pub pair_threshold: f64,
    pub dropped: Vec<DroppedFeature>,
}

/// Greedy redundancy elimination.
///
/// While some surviving feature pair has `|r| > pair_threshold`, the pair with
/// the largest `|r|` is resolved by dropping the member with the smaller
/// maximum `|r|` to any class; equal relevance drops the member that comes
/// later in channel order. Pair ties on `|r|` go to the pair met first in
/// row-major order. Survivors keep their original order.
pub fn select_features(matrix: &CorrelationMatrix, pair_threshold: f64, class_names: &[String]) -> Result<FeatureSet> {
    if !(pair_threshold > 0.0 && pair_threshold < 1.0) {
        return Err(Error::config(format!(
            "pair_threshold must lie in (0, 1), got {pair_threshold}"
        )));
    }
    let class_idx = class_names
        .iter()
        .map(|c| {
            matrix
                .index(c)
                .ok_or_else(|| Error::Schema(format!("class `{c}` not in correlation matrix")))
        })
        .collect::<Result<Vec<_>>>()?;
    let features: Vec<usize> = (0..matrix.len()).filter(|i| !class_idx.contains(i)).collect();
    if features.is_empty() {
        return Err(Error::config("correlation matrix has no feature variables"));
    }
    let relevance: Vec<f64> = (0..matrix.len())
        .map(|i| class_idx.iter().map(|&c| matrix.values[i][c].abs()).fold(0.0, f64::max))
        .collect();

    let mut alive = vec![true; matrix.len()];
    let mut dropped = Vec::new();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for (a_pos, &a) in features.iter().enumerate() {
            if !alive[a] {
                continue;
            }
            for &b in &features[a_pos + 1..] {
                if !alive[b] {
                    continue;
                }
                let r = matrix.values[a][b].abs();
                if r > pair_threshold && best.is_none_or(|(_, _, br)| r > br) {
                    best = Some((a, b, r));
                }
            }
        }
        let Some((a, b, _)) = best else { break };
        // `a` precedes `b` in channel order, so ties drop `b`.
        let (victim, keeper) = if relevance[a] < relevance[b] { (a, b) } else { (b, a) };
        alive[victim] = false;
        dropped.push(DroppedFeature {
            name: matrix.names[victim].clone(),
            partner: matrix.names[keeper].clone(),
            pair_r: matrix.values[a][b],
            class_relevance: relevance[victim],
        });
    }
    Ok(FeatureSet {
        features: features
            .iter()
            .filter(|&&i| alive[i])
            .map(|&i| matrix.names[i].clone())
            .collect(),
        pair_threshold,
        dropped,
    })
}
