use serde::{Deserialize, Serialize};

/// Default cut between segments: three nominal sampling periods.
pub const DEFAULT_MAX_GAP_SECS: i64 = 360;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentReason {
    EventWindow,
    FullFrame,
    TimeGapPiece,
}

/// Half-open row range `[start, end)` of a parent frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub reason: SegmentReason,
}

impl Segment {
    pub fn new(start: usize, end: usize, reason: SegmentReason) -> Self {
        Self { start, end, reason }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Event-centred under-sampling.
///
/// Every row where any class is positive is widened to `[i-k, i+k]`, clipped
/// to the frame, and overlapping (or touching) ranges are merged. `labels` is
/// a row-major `(N, classes)` 0/1 matrix.
pub fn undersample(labels: &[u8], classes: usize, k: usize) -> Vec<Segment> {
    let n = labels.len().checked_div(classes).unwrap_or(0);
    let mut out: Vec<Segment> = Vec::new();
    for i in 0..n {
        if labels[i * classes..(i + 1) * classes].iter().all(|&v| v == 0) {
            continue;
        }
        let start = i.saturating_sub(k);
        let end = (i + k + 1).min(n);
        match out.last_mut() {
            Some(last) if start <= last.end => last.end = last.end.max(end),
            _ => out.push(Segment::new(start, end, SegmentReason::EventWindow)),
        }
    }
    out
}

/// Cuts wherever consecutive timestamps are more than `max_gap` seconds
/// apart.
pub fn split_on_gaps(timestamps: &[i64], max_gap: i64) -> Vec<Segment> {
    if timestamps.is_empty() {
        return Vec::new();
    }
    let mut cuts = vec![0];
    for i in 1..timestamps.len() {
        if timestamps[i] - timestamps[i - 1] > max_gap {
            cuts.push(i);
        }
    }
    cuts.push(timestamps.len());
    let reason = if cuts.len() == 2 {
        SegmentReason::FullFrame
    } else {
        SegmentReason::TimeGapPiece
    };
    cuts.windows(2).map(|w| Segment::new(w[0], w[1], reason)).collect()
}

/// Pairwise intersection of two sorted, disjoint segment lists. The result
/// keeps the reason of the `a` side.
pub fn intersect(a: &[Segment], b: &[Segment]) -> Vec<Segment> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let start = a[i].start.max(b[j].start);
        let end = a[i].end.min(b[j].end);
        if start < end {
            out.push(Segment::new(start, end, a[i].reason));
        }
        if a[i].end < b[j].end {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Start rows of every length-`length` window that fits in `segment`.
pub fn slide(segment: &Segment, length: usize, stride: usize) -> Vec<usize> {
    assert!(length >= 1 && stride >= 1, "length and stride must be >= 1");
    if segment.len() < length {
        return Vec::new();
    }
    (segment.start..=segment.end - length).step_by(stride).collect()
}
