use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scaler::ScalerParams;
use super::segment::{intersect, slide, split_on_gaps, undersample, Segment};
use crate::data::SensorFrame;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Which per-step labels of a window become the window's label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelPosition {
    #[default]
    First,
    /// Per-class mean thresholded at 0.5 (ties count as positive).
    Mean,
    Last,
}

impl LabelPosition {
    /// Row offset inside a window that a window's prediction is attributed
    /// to on a timeline.
    pub fn anchor(self, length: usize) -> usize {
        match self {
            LabelPosition::First => 0,
            LabelPosition::Mean => (length - 1) / 2,
            LabelPosition::Last => length - 1,
        }
    }
}

/// Collapses `(L, K)` per-step labels (row-major) into one `(K)` label.
pub fn window_label(rows: &[u8], classes: usize, position: LabelPosition) -> Vec<u8> {
    let l = rows.len() / classes;
    assert!(l >= 1, "window must hold at least one step");
    match position {
        LabelPosition::First => rows[..classes].to_vec(),
        LabelPosition::Last => rows[(l - 1) * classes..].to_vec(),
        LabelPosition::Mean => (0..classes)
            .map(|k| {
                let pos: usize = (0..l).map(|t| rows[t * classes + k] as usize).sum();
                u8::from(2 * pos >= l)
            })
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSpec {
    pub length: usize,
    pub stride: usize,
    pub position: LabelPosition,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            length: 7,
            stride: 1,
            position: LabelPosition::First,
        }
    }
}

/// Fixed-length sequences `(N, C, L)` with a binary label matrix `(N, K)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSet {
    pub x: Tensor,
    /// Row-major `(N, K)` in {0, 1}.
    pub y: Vec<u8>,
    pub channel_names: Vec<String>,
    pub class_names: Vec<String>,
    pub start_timestamps: Vec<i64>,
    /// First source-frame row of each window.
    pub start_rows: Vec<usize>,
    pub label_position: LabelPosition,
    pub scaler: Option<ScalerParams>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.start_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start_rows.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn length(&self) -> usize {
        self.x.shape().get(2).copied().unwrap_or(0)
    }

    pub fn label(&self, i: usize) -> &[u8] {
        let k = self.classes();
        &self.y[i * k..(i + 1) * k]
    }

    /// Labels as an `(N, K)` f64 tensor.
    pub fn targets(&self) -> Tensor {
        Tensor::from_vec(
            &[self.len(), self.classes()],
            self.y.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("consistent label matrix")
    }

    pub fn subset(&self, idx: &[usize]) -> WindowSet {
        let k = self.classes();
        WindowSet {
            x: if self.is_empty() {
                Tensor::zeros(&[0, self.channels(), self.length()])
            } else {
                self.x.select_rows(idx)
            },
            y: idx
                .iter()
                .flat_map(|&i| self.y[i * k..(i + 1) * k].iter().copied())
                .collect(),
            channel_names: self.channel_names.clone(),
            class_names: self.class_names.clone(),
            start_timestamps: idx.iter().map(|&i| self.start_timestamps[i]).collect(),
            start_rows: idx.iter().map(|&i| self.start_rows[i]).collect(),
            label_position: self.label_position,
            scaler: self.scaler.clone(),
        }
    }

    /// Concatenates sets with identical schema, keeping order.
    pub fn concat(parts: &[WindowSet]) -> Result<WindowSet> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("no window sets to concatenate"))?;
        let mut out = first.clone();
        for p in &parts[1..] {
            if p.channel_names != first.channel_names || p.class_names != first.class_names {
                return Err(Error::Schema("window sets disagree on channels or classes".into()));
            }
            out.x = Tensor::concat_rows(&[out.x, p.x.clone()])?;
            out.y.extend_from_slice(&p.y);
            out.start_timestamps.extend_from_slice(&p.start_timestamps);
            out.start_rows.extend_from_slice(&p.start_rows);
        }
        Ok(out)
    }

    /// Fraction of positive windows per class.
    pub fn positive_rate(&self) -> Vec<f64> {
        let k = self.classes();
        (0..k)
            .map(|c| {
                let pos = (0..self.len()).filter(|&i| self.y[i * k + c] == 1).count();
                pos as f64 / self.len().max(1) as f64
            })
            .collect()
    }

    /// Writes the JSON header at `path` and the f64 payload next to it
    /// (`.bin`): `X` in `(N, C, L)` order followed by `Y` as 0.0/1.0.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = WindowHeader {
            format: WINDOW_FORMAT.to_string(),
            shape: [self.len(), self.channels(), self.length()],
            classes: self.classes(),
            channel_names: self.channel_names.clone(),
            class_names: self.class_names.clone(),
            label_position: self.label_position,
            start_timestamps: self.start_timestamps.clone(),
            start_rows: self.start_rows.clone(),
            scaler: self.scaler.clone(),
        };
        std::fs::write(path, serde_json::to_vec_pretty(&header)?)?;
        let mut blob = Vec::with_capacity((self.x.len() + self.y.len()) * 8);
        for v in self.x.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        for &v in &self.y {
            blob.extend_from_slice(&f64::from(v).to_le_bytes());
        }
        std::fs::write(path.with_extension("bin"), blob)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<WindowSet> {
        let header: WindowHeader = serde_json::from_slice(&std::fs::read(path)?)?;
        if header.format != WINDOW_FORMAT {
            return Err(Error::Schema(format!("unknown window format `{}`", header.format)));
        }
        let blob = std::fs::read(path.with_extension("bin"))?;
        let [n, c, l] = header.shape;
        let nx = n * c * l;
        let ny = n * header.classes;
        if blob.len() != (nx + ny) * 8 {
            return Err(Error::Integrity("window payload size does not match header".into()));
        }
        let vals: Vec<f64> = blob
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let y = vals[nx..]
            .iter()
            .map(|&v| match v {
                0.0 => Ok(0),
                1.0 => Ok(1),
                _ => Err(Error::Integrity(format!("label value {v} is not 0 or 1"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        let x = if n == 0 {
            Tensor::zeros(&[0, c, l])
        } else {
            Tensor::from_vec(&[n, c, l], vals[..nx].to_vec())?
        };
        Ok(WindowSet {
            x,
            y,
            channel_names: header.channel_names,
            class_names: header.class_names,
            start_timestamps: header.start_timestamps,
            start_rows: header.start_rows,
            label_position: header.label_position,
            scaler: header.scaler,
        })
    }
}

const WINDOW_FORMAT: &str = "sensorclf-windows/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowHeader {
    format: String,
    shape: [usize; 3],
    classes: usize,
    channel_names: Vec<String>,
    class_names: Vec<String>,
    label_position: LabelPosition,
    start_timestamps: Vec<i64>,
    start_rows: Vec<usize>,
    scaler: Option<ScalerParams>,
}

/// Materializes every window that fits inside `segments`, in segment order.
///
/// `classes` may be empty (unlabeled corpora).
pub fn build_windows(
    frame: &SensorFrame,
    channels: &[String],
    classes: &[String],
    segments: &[Segment],
    spec: &WindowSpec,
) -> Result<WindowSet> {
    if spec.length < 1 || spec.stride < 1 {
        return Err(Error::config("window length and stride must be >= 1"));
    }
    let series = channels
        .iter()
        .map(|n| {
            frame
                .channel(n)
                .map(|c| c.values.as_slice())
                .ok_or_else(|| Error::Schema(format!("unknown channel `{n}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = frame.label_matrix(classes)?;
    let k = classes.len();
    let l = spec.length;
    let starts: Vec<usize> = segments.iter().flat_map(|s| slide(s, l, spec.stride)).collect();
    let c = channels.len();
    let mut x = Vec::with_capacity(starts.len() * c * l);
    let mut y = Vec::with_capacity(starts.len() * k);
    for &s in &starts {
        for ser in &series {
            x.extend_from_slice(&ser[s..s + l]);
        }
        if k > 0 {
            y.extend(window_label(&labels[s * k..(s + l) * k], k, spec.position));
        }
    }
    let x = if starts.is_empty() {
        Tensor::zeros(&[0, c, l])
    } else {
        Tensor::from_vec(&[starts.len(), c, l], x)?
    };
    Ok(WindowSet {
        x,
        y,
        channel_names: channels.to_vec(),
        class_names: classes.to_vec(),
        start_timestamps: starts.iter().map(|&s| frame.timestamps[s]).collect(),
        start_rows: starts,
        label_position: spec.position,
        scaler: None,
    })
}

/// Windows over time-gap pieces, optionally restricted to the under-sampled
/// neighbourhood (`±k` rows) of positive events.
pub fn event_windows(
    frame: &SensorFrame,
    channels: &[String],
    classes: &[String],
    undersample_k: Option<usize>,
    max_gap: i64,
    spec: &WindowSpec,
) -> Result<WindowSet> {
    let gaps = split_on_gaps(&frame.timestamps, max_gap);
    let segments = match undersample_k {
        Some(k) => {
            let labels = frame.label_matrix(classes)?;
            intersect(&undersample(&labels, classes.len(), k), &gaps)
        }
        None => gaps,
    };
    build_windows(frame, channels, classes, &segments, spec)
}
