use serde::{Deserialize, Serialize};

use super::scaler::{fit_windows, ScalerKind, ScalerParams};
use super::segment::DEFAULT_MAX_GAP_SECS;
use super::split::{split_time, split_train_valid};
use super::window::{event_windows, WindowSet, WindowSpec};
use crate::data::{
    binarize_person, interpolate_missing, pearson_matrix, select_features, EdgePolicy, FeatureSet, SensorFrame,
};
use crate::error::{Error, Result};
use crate::CLASS_NAMES;

/// The standard labeled path: clean, select features, cut off a
/// time-separated test tail, window both sides, split validation off the
/// training windows and scale with training statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepareConfig {
    pub pair_threshold: f64,
    /// `None` keeps every window.
    pub undersample_k: Option<usize>,
    pub window: WindowSpec,
    pub max_gap: i64,
    /// Trailing share of the timeline reserved for testing.
    pub test_fraction: f64,
    /// Explicit first test timestamp; overrides `test_fraction`.
    pub cut: Option<i64>,
    /// Share of the training windows held out for validation.
    pub valid_fraction: f64,
    pub scaler: ScalerKind,
    pub edge_policy: EdgePolicy,
    pub seed: u64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            pair_threshold: 0.9,
            undersample_k: Some(50),
            window: WindowSpec::default(),
            max_gap: DEFAULT_MAX_GAP_SECS,
            test_fraction: 0.2,
            cut: None,
            valid_fraction: 0.2,
            scaler: ScalerKind::Standard,
            edge_policy: EdgePolicy::Trim,
            seed: 0,
        }
    }
}

impl PrepareConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("test_fraction", self.test_fraction),
            ("valid_fraction", self.valid_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1), got {f}")));
            }
        }
        if !(self.pair_threshold > 0.0 && self.pair_threshold < 1.0) {
            return Err(Error::config("pair_threshold must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Prepared {
    pub features: FeatureSet,
    pub scaler: ScalerParams,
    pub train: WindowSet,
    pub valid: WindowSet,
    pub test: WindowSet,
    /// First test timestamp.
    pub cut: i64,
}

/// Cleans a labeled frame: interpolation plus a binary `person` label.
pub fn clean_labeled(frame: &SensorFrame, policy: EdgePolicy) -> Result<SensorFrame> {
    binarize_person(&interpolate_missing(frame, policy)?)
}

pub fn prepare_labeled(frame: &SensorFrame, cfg: &PrepareConfig) -> Result<Prepared> {
    prepare_labeled_with(frame, cfg, None, None)
}

/// [`prepare_labeled`] with a fixed channel list (skipping feature
/// selection) and/or a pre-fitted scaler, as used when a pretrained encoder
/// dictates both.
pub fn prepare_labeled_with(
    frame: &SensorFrame,
    cfg: &PrepareConfig,
    channels: Option<&[String]>,
    scaler: Option<&ScalerParams>,
) -> Result<Prepared> {
    cfg.validate()?;
    let frame = clean_labeled(frame, cfg.edge_policy)?;
    let classes: Vec<String> = CLASS_NAMES.iter().map(|s| s.to_string()).collect();
    let features = match channels {
        Some(c) => FeatureSet {
            features: c.to_vec(),
            pair_threshold: cfg.pair_threshold,
            dropped: Vec::new(),
        },
        None => {
            let mut variables = frame.channel_names();
            variables.extend(classes.iter().cloned());
            select_features(&pearson_matrix(&frame, &variables)?, cfg.pair_threshold, &classes)?
        }
    };
    let cut = match cfg.cut {
        Some(c) => c,
        None => {
            let n = frame.len();
            let cut_row = ((n as f64) * (1.0 - cfg.test_fraction)).round() as usize;
            if cut_row == 0 || cut_row >= n {
                return Err(Error::Split(format!("test_fraction leaves an empty side of {n} rows")));
            }
            frame.timestamps[cut_row]
        }
    };
    let (before, after) = split_time(&frame, cut)?;
    let windows = |f: &SensorFrame| {
        event_windows(
            f,
            &features.features,
            &classes,
            cfg.undersample_k,
            cfg.max_gap,
            &cfg.window,
        )
    };
    let (train, valid) = split_train_valid(&windows(&before)?, cfg.valid_fraction, cfg.seed)?;
    let test = windows(&after)?;
    if test.is_empty() {
        return Err(Error::Split("time-separated test side holds no windows".into()));
    }
    let scaler = match scaler {
        Some(s) => s.clone(),
        None => fit_windows(cfg.scaler, &train)?,
    };
    Ok(Prepared {
        train: scaler.transform_windows(&train)?,
        valid: scaler.transform_windows(&valid)?,
        test: scaler.transform_windows(&test)?,
        features,
        scaler,
        cut,
    })
}
