use serde::{Deserialize, Serialize};

use super::frame::SensorFrame;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingRun {
    pub start: usize,
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMissing {
    pub channel: String,
    pub count: usize,
    pub runs: Vec<MissingRun>,
}

/// Per-channel census of missing samples.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingReport {
    pub total_rows: usize,
    pub channels: Vec<ChannelMissing>,
}

impl MissingReport {
    pub fn count(&self, channel: &str) -> Option<usize> {
        self.channels.iter().find(|c| c.channel == channel).map(|c| c.count)
    }

    pub fn total_missing(&self) -> usize {
        self.channels.iter().map(|c| c.count).sum()
    }
}

fn missing_runs(values: &[f64]) -> Vec<MissingRun> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < values.len() {
        if values[i].is_nan() {
            let start = i;
            while i < values.len() && values[i].is_nan() {
                i += 1;
            }
            runs.push(MissingRun {
                start,
                length: i - start,
            });
        } else {
            i += 1;
        }
    }
    runs
}

pub fn missing_report(frame: &SensorFrame) -> MissingReport {
    MissingReport {
        total_rows: frame.len(),
        channels: frame
            .channels
            .iter()
            .map(|c| {
                let runs = missing_runs(&c.values);
                ChannelMissing {
                    channel: c.name.clone(),
                    count: runs.iter().map(|r| r.length).sum(),
                    runs,
                }
            })
            .collect(),
    }
}

/// How leading and trailing missing runs are resolved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgePolicy {
    /// Drop the affected rows (from every channel).
    #[default]
    Trim,
    /// Repeat the nearest present value.
    Extend,
}

/// Fills interior gaps by linear interpolation between the nearest present
/// neighbours and resolves edge gaps according to `policy`.
pub fn interpolate_missing(frame: &SensorFrame, policy: EdgePolicy) -> Result<SensorFrame> {
    let n = frame.len();
    let mut first_present = 0;
    let mut last_present = n.saturating_sub(1);
    for c in &frame.channels {
        let first = c
            .values
            .iter()
            .position(|v| !v.is_nan())
            .ok_or_else(|| Error::UnrecoverableChannel(c.name.clone()))?;
        let last = c.values.iter().rposition(|v| !v.is_nan()).unwrap_or(first);
        first_present = first_present.max(first);
        last_present = last_present.min(last);
    }

    let mut out = frame.clone();
    for c in &mut out.channels {
        let v = &mut c.values;
        let first = v.iter().position(|x| !x.is_nan()).unwrap_or(0);
        let last = v.iter().rposition(|x| !x.is_nan()).unwrap_or(0);
        // Under `Trim` these rows are removed below, so the fill is moot.
        let (head, tail) = (v[first], v[last]);
        v[..first].fill(head);
        v[last + 1..].fill(tail);
        let mut i = first;
        while i < last {
            if v[i + 1].is_nan() {
                let left = i;
                let mut right = i + 1;
                while v[right].is_nan() {
                    right += 1;
                }
                let (a, b) = (v[left], v[right]);
                let span = (right - left) as f64;
                for (j, slot) in v.iter_mut().enumerate().take(right).skip(left + 1) {
                    let w = (j - left) as f64 / span;
                    *slot = a + (b - a) * w;
                }
                i = right;
            } else {
                i += 1;
            }
        }
    }

    match policy {
        EdgePolicy::Extend => Ok(out),
        EdgePolicy::Trim => {
            if first_present > last_present {
                return Err(Error::Degenerate(
                    "no row is covered by every channel after trimming".into(),
                ));
            }
            Ok(out.slice(first_present, last_present + 1))
        }
    }
}

/// Replaces the `person` head count by an occupancy indicator.
pub fn binarize_person(frame: &SensorFrame) -> Result<SensorFrame> {
    let mut out = frame.clone();
    let person = out
        .labels
        .iter_mut()
        .find(|l| l.name == "person")
        .ok_or_else(|| Error::LabelSchema("label `person` is missing".into()))?;
    for v in person.values.iter_mut() {
        *v = u32::from(*v > 0);
    }
    Ok(out)
}
