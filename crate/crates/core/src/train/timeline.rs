use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::metrics::{decide, DEFAULT_THRESHOLD};
use crate::data::SensorFrame;
use crate::error::{Error, Result};
use crate::models::Predictor;
use crate::pipeline::{build_windows, split_on_gaps, ScalerParams, WindowSpec, DEFAULT_MAX_GAP_SECS};

/// Per-timestamp predictions over a frame. `None` marks timestamps that no
/// window was assigned to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrack {
    pub timestamps: Vec<i64>,
    pub class_names: Vec<String>,
    /// `[class][t]`
    pub probabilities: Vec<Vec<Option<f64>>>,
    /// `[class][t]`, `probability >= threshold`.
    pub decisions: Vec<Vec<Option<u8>>>,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PredictionTrack {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Number of timestamps that carry a prediction.
    pub fn covered(&self) -> usize {
        self.decisions
            .first()
            .map_or(0, |d| d.iter().filter(|v| v.is_some()).count())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineOptions {
    /// Length and label position; the stride is always 1.
    #[serde(default)]
    pub window: WindowSpec,
    #[serde(default = "default_gap")]
    pub max_gap: i64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_gap() -> i64 {
    DEFAULT_MAX_GAP_SECS
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

impl Default for TimelineOptions {
    fn default() -> Self {
        Self {
            window: WindowSpec::default(),
            max_gap: default_gap(),
            threshold: default_threshold(),
        }
    }
}

/// Slides stride-1 windows over the gap-free pieces of `frame` and assigns
/// each window's prediction to its label-position timestamp.
pub fn predict_timeline<P: Predictor + ?Sized>(
    model: &mut P,
    frame: &SensorFrame,
    channels: &[String],
    class_names: &[String],
    scaler: Option<&ScalerParams>,
    opts: &TimelineOptions,
) -> Result<PredictionTrack> {
    let (max_gap, threshold) = (opts.max_gap, opts.threshold);
    if class_names.len() != model.classes() {
        return Err(Error::shape(format!(
            "{} class names for a model with {} classes",
            class_names.len(),
            model.classes()
        )));
    }
    let spec = WindowSpec {
        stride: 1,
        ..opts.window
    };
    let k = class_names.len();
    let n = frame.len();
    let mut track = PredictionTrack {
        timestamps: frame.timestamps.clone(),
        class_names: class_names.to_vec(),
        probabilities: vec![vec![None; n]; k],
        decisions: vec![vec![None; n]; k],
        threshold,
        warnings: Vec::new(),
    };
    let segments = split_on_gaps(&frame.timestamps, max_gap);
    let mut windows = build_windows(frame, channels, &[], &segments, &spec)?;
    if windows.is_empty() {
        track.warnings.push(format!(
            "no gap-free stretch of {} samples; track is empty",
            spec.length
        ));
        return Ok(track);
    }
    if let Some(s) = scaler {
        windows = s.transform_windows(&windows)?;
    }
    let p = model.predict_proba(&windows.x)?;
    let d = decide(p.data(), threshold);
    let anchor = spec.position.anchor(spec.length);
    for (w, &start) in windows.start_rows.iter().enumerate() {
        let t = start + anchor;
        for c in 0..k {
            track.probabilities[c][t] = Some(p.data()[w * k + c]);
            track.decisions[c][t] = Some(d[w * k + c]);
        }
    }
    Ok(track)
}

#[derive(Clone, Copy, Debug)]
struct Run {
    start: usize,
    len: usize,
    value: u8,
    prev: Option<usize>,
    next: Option<usize>,
}

/// Smooths one contiguous stretch of decisions in place.
///
/// Repeatedly flips the shortest interior run (leftmost on ties) whose length
/// is below `w` and whose two neighbouring runs share a value, until none
/// remain. Edge runs have only one neighbour and are never flipped.
pub fn smooth_run_lengths(values: &mut [u8], w: usize) {
    if values.is_empty() || w <= 1 {
        return;
    }
    let mut runs: Vec<Run> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.value == v => r.len += 1,
            _ => {
                let id = runs.len();
                if let Some(last) = runs.last_mut() {
                    last.next = Some(id);
                }
                runs.push(Run {
                    start: i,
                    len: 1,
                    value: v,
                    prev: id.checked_sub(1),
                    next: None,
                });
            }
        }
    }
    let qualifies = |runs: &[Run], id: usize| -> bool {
        let r = runs[id];
        match (r.prev, r.next) {
            (Some(p), Some(n)) => r.len < w && runs[p].value == runs[n].value,
            _ => false,
        }
    };
    let key = |runs: &[Run], id: usize| (runs[id].len, runs[id].start, id);
    let mut queue: BTreeSet<(usize, usize, usize)> = (0..runs.len())
        .filter(|&id| qualifies(&runs, id))
        .map(|id| key(&runs, id))
        .collect();
    while let Some((_, _, id)) = queue.pop_first() {
        let r = runs[id];
        let (p, n) = (r.prev.expect("interior"), r.next.expect("interior"));
        for x in [p, n] {
            queue.remove(&key(&runs, x));
        }
        let after = runs[n].next;
        runs[p].len += r.len + runs[n].len;
        runs[p].next = after;
        if let Some(a) = after {
            queue.remove(&key(&runs, a));
            runs[a].prev = Some(p);
        }
        let neighbours = [Some(p), runs[p].prev, after];
        for x in neighbours.into_iter().flatten() {
            queue.remove(&key(&runs, x));
            if qualifies(&runs, x) {
                queue.insert(key(&runs, x));
            }
        }
    }
    let mut id = Some(0);
    while let Some(i) = id {
        let r = runs[i];
        values[r.start..r.start + r.len].fill(r.value);
        id = r.next;
    }
}

/// Spike smoothing of every class's decisions. No-prediction markers split a
/// series into independent stretches; probabilities are left untouched.
pub fn smooth(track: &PredictionTrack, w: usize) -> Result<PredictionTrack> {
    if w < 1 {
        return Err(Error::config("smoothing width must be >= 1"));
    }
    let mut out = track.clone();
    for series in &mut out.decisions {
        let mut t = 0;
        while t < series.len() {
            if series[t].is_none() {
                t += 1;
                continue;
            }
            let end = series[t..]
                .iter()
                .position(Option::is_none)
                .map_or(series.len(), |p| t + p);
            let mut stretch: Vec<u8> = series[t..end].iter().map(|v| v.expect("present")).collect();
            smooth_run_lengths(&mut stretch, w);
            for (dst, v) in series[t..end].iter_mut().zip(stretch) {
                *dst = Some(v);
            }
            t = end;
        }
    }
    Ok(out)
}
