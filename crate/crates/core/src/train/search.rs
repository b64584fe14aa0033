use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, DEFAULT_THRESHOLD};
use super::trainer::{train_ensemble, TrainConfig};
use crate::error::{Error, Result};
use crate::models::{ArchConfig, Ensemble};
use crate::par;
use crate::pipeline::WindowSet;
use crate::rng::{derive_seed, SeededRng};

/// One named, discrete hyperparameter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrid {
    pub name: String,
    pub values: Vec<f64>,
}

impl ParamGrid {
    /// `start, start + step, ...` up to and including `end` (within rounding).
    pub fn range(name: &str, start: f64, end: f64, step: f64) -> Self {
        let n = ((end - start) / step + 1e-9).floor() as usize + 1;
        let values = (0..n)
            .map(|i| {
                let v = start + i as f64 * step;
                // Keep decimal grids such as 0.1..0.5 exact to 12 places.
                (v * 1e12).round() / 1e12
            })
            .collect();
        Self {
            name: name.to_string(),
            values,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub params: Vec<ParamGrid>,
}

/// A sampled configuration: parameter name to value.
pub type Sample = BTreeMap<String, f64>;

impl SearchSpace {
    /// Per-block filter counts from 8 to 32 in steps of 4.
    pub fn fcn(blocks: usize) -> Self {
        Self {
            params: (0..blocks)
                .map(|i| ParamGrid::range(&format!("filters{i}"), 8.0, 32.0, 4.0))
                .collect(),
        }
    }

    /// Hidden size 10..30 step 2 and dropout 0.1..0.5 step 0.1.
    pub fn lstm() -> Self {
        Self {
            params: vec![
                ParamGrid::range("hidden", 10.0, 30.0, 2.0),
                ParamGrid::range("dropout", 0.1, 0.5, 0.1),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::config("search space has no parameters"));
        }
        if let Some(g) = self.params.iter().find(|g| g.values.is_empty()) {
            return Err(Error::config(format!("search grid `{}` is empty", g.name)));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.params.iter().map(|g| g.values.len()).product()
    }

    /// Uniform draw from every grid, in declaration order.
    pub fn sample(&self, rng: &mut SeededRng) -> Sample {
        self.params
            .iter()
            .map(|g| (g.name.clone(), g.values[rng.index(g.values.len())]))
            .collect()
    }

    /// Every grid point, last parameter varying fastest.
    pub fn points(&self) -> Vec<Sample> {
        let mut out = vec![Sample::new()];
        for g in &self.params {
            out = out
                .into_iter()
                .flat_map(|s| {
                    g.values.iter().map(move |&v| {
                        let mut s = s.clone();
                        s.insert(g.name.clone(), v);
                        s
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    /// Seed the sample was drawn with.
    pub seed: u64,
    pub params: Sample,
    /// Mean validation F1 over classes.
    pub valid_f1: f64,
    pub meta: TrialMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub trials: Vec<TrialResult>,
    /// Index into `trials` of the best (highest F1, earliest on ties).
    pub best: usize,
}

impl SearchResult {
    pub fn best_trial(&self) -> &TrialResult {
        &self.trials[self.best]
    }
}

/// Index of the maximum score; the first one wins ties.
pub fn best_index(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Draws `n` samples (with replacement) and scores each with `objective`.
///
/// Trial `t` samples with `derive_seed(seed, t)`. Trials may run in
/// parallel; results are reported in trial order.
pub fn random_search<F>(space: &SearchSpace, n: usize, seed: u64, objective: F) -> Result<SearchResult>
where
    F: Fn(&Sample) -> Result<f64> + Sync + Send,
{
    space.validate()?;
    if n == 0 {
        return Err(Error::config("random search needs at least one trial"));
    }
    let trials = par::map_indices(n, |t| {
        let s = derive_seed(seed, t as u64);
        let params = space.sample(&mut SeededRng::new(s));
        let start = Instant::now();
        objective(&params).map(|valid_f1| TrialResult {
            trial: t,
            seed: s,
            params,
            valid_f1,
            meta: TrialMeta {
                seconds: start.elapsed().as_secs_f64(),
            },
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = trials.iter().map(|t| t.valid_f1).collect();
    let best = best_index(&scores).expect("n >= 1");
    Ok(SearchResult { trials, best })
}

/// Applies sampled values to an architecture config.
///
/// FCN understands `filters<i>`; LSTM understands `hidden` and `dropout`.
pub fn apply_sample(base: &ArchConfig, sample: &Sample) -> Result<ArchConfig> {
    let mut out = base.clone();
    for (name, &v) in sample {
        let as_count = || -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::config(format!("`{name}` needs a positive integer, got {v}")))
            }
        };
        match &mut out {
            ArchConfig::Fcn(c) => {
                let i: usize = name
                    .strip_prefix("filters")
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::config(format!("unknown FCN search parameter `{name}`")))?;
                let slot = c
                    .filters
                    .get_mut(i)
                    .ok_or_else(|| Error::config(format!("`{name}` exceeds the {} FCN blocks", c.kernels.len())))?;
                *slot = as_count()?;
            }
            ArchConfig::Lstm(c) => match name.as_str() {
                "hidden" => c.hidden = as_count()?,
                "dropout" => c.dropout = v,
                _ => return Err(Error::config(format!("unknown LSTM search parameter `{name}`"))),
            },
            _ => return Err(Error::config("random search supports FCN and LSTM configs")),
        }
    }
    out.validate()?;
    Ok(out)
}

/// Random search over architecture hyperparameters. Every trial trains with
/// the same `train_cfg` (including its seed), so equal samples give equal
/// scores.
pub fn tune(
    base: &ArchConfig,
    space: &SearchSpace,
    train: &WindowSet,
    valid: &WindowSet,
    train_cfg: &TrainConfig,
    n: usize,
    seed: u64,
) -> Result<SearchResult> {
    random_search(space, n, seed, |sample| {
        let arch = apply_sample(base, sample)?;
        let mut model = Ensemble::build(&arch, train_cfg.seed)?;
        train_ensemble(&mut model, train, valid, train_cfg)?;
        Ok(evaluate(&mut model, valid, DEFAULT_THRESHOLD)?.mean_f1())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{FcnConfig, LstmConfig};

    #[test]
    fn declared_grids() {
        let f = SearchSpace::fcn(2);
        assert_eq!(f.params[0].values, vec![8.0, 12.0, 16.0, 20.0, 24.0, 28.0, 32.0]);
        let l = SearchSpace::lstm();
        assert_eq!(l.params[0].values.len(), 11);
        assert_eq!(l.params[1].values, vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(l.size(), 55);
        assert_eq!(l.points().len(), 55);
    }

    #[test]
    fn single_trial_is_best() {
        let r = random_search(&SearchSpace::lstm(), 1, 3, |s| Ok(s["hidden"])).unwrap();
        assert_eq!(r.best, 0);
        assert_eq!(r.trials.len(), 1);
    }

    #[test]
    fn empty_grid_is_config_error() {
        let s = SearchSpace {
            params: vec![ParamGrid {
                name: "hidden".into(),
                values: vec![],
            }],
        };
        assert!(matches!(random_search(&s, 2, 0, |_| Ok(0.0)), Err(Error::Config(_))));
    }

    #[test]
    fn ties_go_to_the_earlier_trial() {
        assert_eq!(best_index(&[0.5, 0.9, 0.9, 0.1]), Some(1));
        assert_eq!(best_index(&[]), None);
    }

    #[test]
    fn samples_apply_to_configs() {
        let fcn = ArchConfig::Fcn(FcnConfig::new(9, &[16, 32], &[5, 3], 2));
        let mut s = Sample::new();
        s.insert("filters1".into(), 8.0);
        match apply_sample(&fcn, &s).unwrap() {
            ArchConfig::Fcn(c) => assert_eq!(c.filters, vec![16, 8]),
            _ => unreachable!(),
        }
        s.insert("filters5".into(), 8.0);
        assert!(apply_sample(&fcn, &s).is_err());
        let lstm = ArchConfig::Lstm(LstmConfig::new(9, 10, false, 0.0, 2));
        let mut s = Sample::new();
        s.insert("hidden".into(), 26.0);
        s.insert("dropout".into(), 0.2);
        match apply_sample(&lstm, &s).unwrap() {
            ArchConfig::Lstm(c) => assert_eq!((c.hidden, c.dropout), (26, 0.2)),
            _ => unreachable!(),
        }
    }
}
