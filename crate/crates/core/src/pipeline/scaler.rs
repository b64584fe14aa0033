use serde::{Deserialize, Serialize};

use super::window::WindowSet;
use crate::data::SensorFrame;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerKind {
    #[default]
    Standard,
    MinMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalerStats {
    /// Population mean and standard deviation.
    Standard {
        mean: Vec<f64>,
        std: Vec<f64>,
    },
    MinMax {
        min: Vec<f64>,
        max: Vec<f64>,
    },
}

/// Per-channel affine normalization fitted on training data only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub channels: Vec<String>,
    #[serde(flatten)]
    pub stats: ScalerStats,
}

fn fit_series<'a, I>(kind: ScalerKind, names: &[String], series: I) -> Result<ScalerParams>
where
    I: Iterator<Item = Vec<&'a [f64]>>,
{
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (name, chunks) in names.iter().zip(series) {
        let count: usize = chunks.iter().map(|c| c.len()).sum();
        if count == 0 {
            return Err(Error::DegenerateChannel(name.clone()));
        }
        match kind {
            ScalerKind::Standard => {
                let mean = chunks.iter().flat_map(|c| c.iter()).sum::<f64>() / count as f64;
                let var = chunks
                    .iter()
                    .flat_map(|c| c.iter())
                    .map(|v| (v - mean) * (v - mean))
                    .sum::<f64>()
                    / count as f64;
                let std = var.sqrt();
                if !(std > 0.0) || !std.is_finite() {
                    return Err(Error::DegenerateChannel(name.clone()));
                }
                a.push(mean);
                b.push(std);
            }
            ScalerKind::MinMax => {
                let it = || chunks.iter().flat_map(|c| c.iter().copied());
                let min = it().fold(f64::INFINITY, f64::min);
                let max = it().fold(f64::NEG_INFINITY, f64::max);
                if !(max > min) || !(max - min).is_finite() {
                    return Err(Error::DegenerateChannel(name.clone()));
                }
                a.push(min);
                b.push(max);
            }
        }
    }
    let stats = match kind {
        ScalerKind::Standard => ScalerStats::Standard { mean: a, std: b },
        ScalerKind::MinMax => ScalerStats::MinMax { min: a, max: b },
    };
    Ok(ScalerParams {
        channels: names.to_vec(),
        stats,
    })
}

/// Fits on the rows of a (training) frame.
pub fn fit_frame(kind: ScalerKind, frame: &SensorFrame, channels: &[String]) -> Result<ScalerParams> {
    let series = channels
        .iter()
        .map(|n| {
            frame
                .channel(n)
                .map(|c| vec![c.values.as_slice()])
                .ok_or_else(|| Error::Schema(format!("unknown channel `{n}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_series(kind, channels, series.into_iter())
}

/// Fits on every value of every window (overlapping windows count each
/// source row once per window).
pub fn fit_windows(kind: ScalerKind, windows: &WindowSet) -> Result<ScalerParams> {
    let (n, c, l) = (windows.len(), windows.channels(), windows.length());
    let data = windows.x.data();
    let series = (0..c).map(|ci| (0..n).map(|b| &data[(b * c + ci) * l..(b * c + ci + 1) * l]).collect());
    fit_series(kind, &windows.channel_names, series)
}

impl ScalerParams {
    pub fn kind(&self) -> ScalerKind {
        match self.stats {
            ScalerStats::Standard { .. } => ScalerKind::Standard,
            ScalerStats::MinMax { .. } => ScalerKind::MinMax,
        }
    }

    /// `(offset, scale)` such that `scaled = (x - offset) / scale`.
    fn affine(&self, i: usize) -> (f64, f64) {
        match &self.stats {
            ScalerStats::Standard { mean, std } => (mean[i], std[i]),
            ScalerStats::MinMax { min, max } => (min[i], max[i] - min[i]),
        }
    }

    fn check(&self, names: &[String]) -> Result<()> {
        if names != self.channels.as_slice() {
            let unknown = names
                .iter()
                .find(|n| !self.channels.contains(n))
                .cloned()
                .unwrap_or_else(|| "channel order".to_string());
            return Err(Error::Schema(format!(
                "scaler fitted on {:?} cannot transform {:?} (first mismatch: `{unknown}`)",
                self.channels, names
            )));
        }
        Ok(())
    }

    fn apply_windows(&self, windows: &WindowSet, inverse: bool) -> Result<WindowSet> {
        self.check(&windows.channel_names)?;
        let mut out = windows.clone();
        let (c, l) = (windows.channels(), windows.length());
        for (s, chunk) in out.x.data_mut().chunks_mut(l).enumerate() {
            let (off, sc) = self.affine(s % c);
            for v in chunk {
                *v = if inverse { *v * sc + off } else { (*v - off) / sc };
            }
        }
        out.scaler = if inverse { None } else { Some(self.clone()) };
        Ok(out)
    }

    pub fn transform_windows(&self, windows: &WindowSet) -> Result<WindowSet> {
        self.apply_windows(windows, false)
    }

    pub fn inverse_windows(&self, windows: &WindowSet) -> Result<WindowSet> {
        self.apply_windows(windows, true)
    }

    /// Scales the named channels of a frame in place of a copy; other
    /// channels pass through.
    pub fn transform_frame(&self, frame: &SensorFrame) -> Result<SensorFrame> {
        let mut out = frame.clone();
        for (i, name) in self.channels.iter().enumerate() {
            let (off, sc) = self.affine(i);
            let ch = out
                .channel_mut(name)
                .ok_or_else(|| Error::Schema(format!("unknown channel `{name}`")))?;
            for v in ch.values.iter_mut() {
                *v = (*v - off) / sc;
            }
        }
        Ok(out)
    }
}
