use serde::{Deserialize, Serialize};

use super::window::WindowSet;
use crate::data::SensorFrame;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Shuffle windows, then cut.
    #[default]
    RandomAfterSegmentation,
    /// Cut the frame at a timestamp, then window each side.
    TimeSeparatedBeforeSegmentation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    #[serde(default)]
    pub mode: SplitMode,
    /// `(train, valid, test)`, summing to 1.
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cut: Option<i64>,
}

fn default_ratios() -> [f64; 3] {
    [0.7, 0.2, 0.1]
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            mode: SplitMode::RandomAfterSegmentation,
            ratios: default_ratios(),
            seed: 0,
            cut: None,
        }
    }
}

/// Seeded shuffle followed by a contiguous `train | valid | test` cut.
///
/// Part sizes are `round(N·r_train)` and `round(N·r_valid)`, with the rest
/// going to test; every part must end up non-empty.
pub fn split_random(windows: &WindowSet, spec: &SplitSpec) -> Result<(WindowSet, WindowSet, WindowSet)> {
    if spec.mode != SplitMode::RandomAfterSegmentation {
        return Err(Error::config("split_random needs mode random_after_segmentation"));
    }
    if spec.ratios.iter().any(|&r| !(r > 0.0)) || (spec.ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split ratios must be positive and sum to 1, got {:?}",
            spec.ratios
        )));
    }
    let n = windows.len();
    let n_train = (n as f64 * spec.ratios[0]).round() as usize;
    let n_valid = (n as f64 * spec.ratios[1]).round() as usize;
    if n < 3 || n_train == 0 || n_valid == 0 || n_train + n_valid >= n {
        return Err(Error::Split(format!(
            "{n} windows cannot fill three parts with ratios {:?}",
            spec.ratios
        )));
    }
    let perm = SeededRng::new(spec.seed).permutation(n);
    Ok((
        windows.subset(&perm[..n_train]),
        windows.subset(&perm[n_train..n_train + n_valid]),
        windows.subset(&perm[n_train + n_valid..]),
    ))
}

/// Two-way seeded split used to carve validation windows out of a training
/// side.
pub fn split_train_valid(windows: &WindowSet, valid_fraction: f64, seed: u64) -> Result<(WindowSet, WindowSet)> {
    if !(valid_fraction > 0.0 && valid_fraction < 1.0) {
        return Err(Error::config(format!(
            "valid_fraction must lie in (0, 1), got {valid_fraction}"
        )));
    }
    let n = windows.len();
    let n_valid = (n as f64 * valid_fraction).round() as usize;
    if n_valid == 0 || n_valid >= n {
        return Err(Error::Split(format!("{n} windows cannot be split at {valid_fraction}")));
    }
    let perm = SeededRng::new(seed).permutation(n);
    Ok((windows.subset(&perm[n_valid..]), windows.subset(&perm[..n_valid])))
}

/// Rows with `timestamp < cut` go to train, the rest to test.
pub fn split_time(frame: &SensorFrame, cut: i64) -> Result<(SensorFrame, SensorFrame)> {
    let (first, last) = match (frame.timestamps.first(), frame.timestamps.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::config("cannot split an empty frame")),
    };
    if !(cut > first && cut <= last) {
        return Err(Error::config(format!("cut {cut} must lie inside ({first}, {last}]")));
    }
    let idx = frame.timestamps.partition_point(|&t| t < cut);
    Ok((frame.slice(0, idx), frame.slice(idx, frame.len())))
}
