use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    /// Missing samples are stored as NaN.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSeries {
    pub name: String,
    pub values: Vec<u32>,
}

/// Timestamped multichannel sensor record with optional labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    /// Epoch seconds, strictly increasing.
    pub timestamps: Vec<i64>,
    pub channels: Vec<Channel>,
    pub labels: Vec<LabelSeries>,
    pub device_id: String,
}

impl SensorFrame {
    /// Builds a frame and checks every structural invariant.
    pub fn new(
        device_id: impl Into<String>,
        timestamps: Vec<i64>,
        channels: Vec<Channel>,
        labels: Vec<LabelSeries>,
    ) -> Result<Self> {
        let frame = Self {
            timestamps,
            channels,
            labels,
            device_id: device_id.into(),
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.timestamps.len();
        if let Some(w) = self.timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Integrity(format!(
                "timestamps not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        let mut seen = HashSet::new();
        for c in &self.channels {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate channel `{}`", c.name)));
            }
            if c.values.len() != n {
                return Err(Error::Integrity(format!(
                    "channel `{}` has {} values for {} timestamps",
                    c.name,
                    c.values.len(),
                    n
                )));
            }
        }
        let mut seen = HashSet::new();
        for l in &self.labels {
            if !seen.insert(l.name.as_str()) {
                return Err(Error::Schema(format!("duplicate label `{}`", l.name)));
            }
            if l.values.len() != n {
                return Err(Error::Integrity(format!(
                    "label `{}` has {} values for {} timestamps",
                    l.name,
                    l.values.len(),
                    n
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn channel_mut(&mut self, name: &str) -> Option<&mut Channel> {
        self.channels.iter_mut().find(|c| c.name == name)
    }

    pub fn label(&self, name: &str) -> Option<&LabelSeries> {
        self.labels.iter().find(|l| l.name == name)
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name.clone()).collect()
    }

    pub fn label_names(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.name.clone()).collect()
    }

    /// Numeric series for a channel or a label (labels as 0/1-style numbers).
    pub fn numeric_series(&self, name: &str) -> Option<Vec<f64>> {
        if let Some(c) = self.channel(name) {
            return Some(c.values.clone());
        }
        self.label(name).map(|l| l.values.iter().map(|&v| v as f64).collect())
    }

    /// Row-major (N, K) binary matrix of the named labels (`value > 0`).
    pub fn label_matrix(&self, names: &[String]) -> Result<Vec<u8>> {
        let cols = names
            .iter()
            .map(|n| {
                self.label(n)
                    .ok_or_else(|| Error::LabelSchema(format!("missing label `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(self.len() * cols.len());
        for t in 0..self.len() {
            out.extend(cols.iter().map(|c| u8::from(c.values[t] > 0)));
        }
        Ok(out)
    }

    /// Rows `start..end` as a new frame.
    pub fn slice(&self, start: usize, end: usize) -> SensorFrame {
        SensorFrame {
            timestamps: self.timestamps[start..end].to_vec(),
            channels: self
                .channels
                .iter()
                .map(|c| Channel {
                    name: c.name.clone(),
                    values: c.values[start..end].to_vec(),
                })
                .collect(),
            labels: self
                .labels
                .iter()
                .map(|l| LabelSeries {
                    name: l.name.clone(),
                    values: l.values[start..end].to_vec(),
                })
                .collect(),
            device_id: self.device_id.clone(),
        }
    }

    /// Keeps the rows whose mask entry is true.
    pub fn filter_rows(&self, keep: &[bool]) -> SensorFrame {
        let pick_f = |v: &[f64]| -> Vec<f64> { v.iter().zip(keep).filter(|(_, &k)| k).map(|(&x, _)| x).collect() };
        SensorFrame {
            timestamps: self
                .timestamps
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(&t, _)| t)
                .collect(),
            channels: self
                .channels
                .iter()
                .map(|c| Channel {
                    name: c.name.clone(),
                    values: pick_f(&c.values),
                })
                .collect(),
            labels: self
                .labels
                .iter()
                .map(|l| LabelSeries {
                    name: l.name.clone(),
                    values: l.values.iter().zip(keep).filter(|(_, &k)| k).map(|(&x, _)| x).collect(),
                })
                .collect(),
            device_id: self.device_id.clone(),
        }
    }

    /// Copy with only the named channels (in the given order); labels kept.
    pub fn select_channels(&self, names: &[String]) -> Result<SensorFrame> {
        let channels = names
            .iter()
            .map(|n| {
                self.channel(n)
                    .cloned()
                    .ok_or_else(|| Error::Schema(format!("unknown channel `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SensorFrame {
            timestamps: self.timestamps.clone(),
            channels,
            labels: self.labels.clone(),
            device_id: self.device_id.clone(),
        })
    }

    /// Copy with all label columns removed.
    pub fn without_labels(&self) -> SensorFrame {
        SensorFrame {
            labels: Vec::new(),
            ..self.clone()
        }
    }
}

/// Which CSV columns carry labels and what the device is called.
///
/// The timestamp column is always `timestamp`; every other column that is not
/// listed in `label_columns` is treated as a feature channel. Optional renames
/// map CSV header names onto channel names (e.g. `o2` -> `oxygen`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    #[serde(default = "default_label_columns")]
    pub label_columns: Vec<String>,
    #[serde(default)]
    pub renames: Vec<(String, String)>,
    #[serde(default)]
    pub device_id: String,
}

fn default_label_columns() -> Vec<String> {
    vec!["person".into(), "window_open".into()]
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            label_columns: default_label_columns(),
            renames: Vec::new(),
            device_id: String::new(),
        }
    }
}

fn parse_timestamp(cell: &str) -> Option<i64> {
    let cell = cell.trim();
    if let Ok(v) = cell.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(cell) {
        return Some(dt.timestamp());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(cell, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

/// Parses a CSV export into a [`SensorFrame`].
///
/// Empty feature cells become NaN; rows are sorted by timestamp and duplicate
/// timestamps are rejected. Row numbers in errors are 1-based data rows.
pub fn parse_frame<R: Read>(reader: R, schema: &ColumnSchema) -> Result<SensorFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || &headers[0] != "timestamp" {
        return Err(Error::Schema("first column must be `timestamp`".to_string()));
    }
    let rename = |h: &str| -> String {
        schema
            .renames
            .iter()
            .find(|(from, _)| from == h)
            .map(|(_, to)| to.clone())
            .unwrap_or_else(|| h.to_string())
    };
    let mut seen = HashSet::new();
    let mut is_label = Vec::new();
    let mut names = Vec::new();
    for h in headers.iter().skip(1) {
        if h.is_empty() {
            return Err(Error::Schema("empty column name in header".into()));
        }
        let name = rename(h);
        if !seen.insert(name.clone()) {
            return Err(Error::Schema(format!("duplicate column `{name}`")));
        }
        is_label.push(schema.label_columns.iter().any(|l| l == &name));
        names.push(name);
    }

    let mut rows: Vec<(i64, Vec<f64>, Vec<u32>)> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} cells, found {}", headers.len(), record.len()),
            });
        }
        let ts = parse_timestamp(&record[0]).ok_or_else(|| Error::Parse {
            row,
            column: "timestamp".into(),
            message: format!("cannot parse `{}` as a timestamp", &record[0]),
        })?;
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for (i, cell) in record.iter().skip(1).enumerate() {
            if is_label[i] {
                let v = cell.parse::<u32>().map_err(|_| Error::Parse {
                    row,
                    column: names[i].clone(),
                    message: format!("cannot parse `{cell}` as a non-negative integer label"),
                })?;
                labels.push(v);
            } else if cell.is_empty() {
                feats.push(f64::NAN);
            } else {
                let v = cell.parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    column: names[i].clone(),
                    message: format!("cannot parse `{cell}` as a decimal"),
                })?;
                feats.push(v);
            }
        }
        rows.push((ts, feats, labels));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Integrity(format!("duplicate timestamp {}", w[0].0)));
    }

    let feat_names: Vec<&String> = names
        .iter()
        .zip(&is_label)
        .filter(|(_, &l)| !l)
        .map(|(n, _)| n)
        .collect();
    let label_names: Vec<&String> = names
        .iter()
        .zip(&is_label)
        .filter(|(_, &l)| l)
        .map(|(n, _)| n)
        .collect();
    let channels = feat_names
        .iter()
        .enumerate()
        .map(|(j, n)| Channel {
            name: (*n).clone(),
            values: rows.iter().map(|r| r.1[j]).collect(),
        })
        .collect();
    let labels = label_names
        .iter()
        .enumerate()
        .map(|(j, n)| LabelSeries {
            name: (*n).clone(),
            values: rows.iter().map(|r| r.2[j]).collect(),
        })
        .collect();
    SensorFrame::new(
        schema.device_id.clone(),
        rows.iter().map(|r| r.0).collect(),
        channels,
        labels,
    )
}

/// Writes the frame as CSV: `timestamp` (epoch seconds), channels, labels.
/// Values use Rust's shortest round-trip float formatting.
pub fn write_frame<W: Write>(frame: &SensorFrame, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string()];
    header.extend(frame.channels.iter().map(|c| c.name.clone()));
    header.extend(frame.labels.iter().map(|l| l.name.clone()));
    wtr.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for t in 0..frame.len() {
        record.clear();
        record.push(frame.timestamps[t].to_string());
        for c in &frame.channels {
            let v = c.values[t];
            record.push(if v.is_nan() { String::new() } else { format!("{v:?}") });
        }
        for l in &frame.labels {
            record.push(l.values[t].to_string());
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_frame(path: &Path, schema: &ColumnSchema) -> Result<SensorFrame> {
    let file = std::fs::File::open(path)?;
    let mut schema = schema.clone();
    if schema.device_id.is_empty() {
        schema.device_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    parse_frame(std::io::BufReader::new(file), &schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<SensorFrame> {
        parse_frame(s.as_bytes(), &ColumnSchema::default())
    }

    #[test]
    fn three_filled_rows() {
        let f = parse("timestamp,co2,oxygen,person\n0,400,20.9,0\n120,410,20.8,1\n240,420,20.7,2\n").unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.channels.len(), 2);
        assert_eq!(f.labels[0].values, vec![0, 1, 2]);
        assert!(f.channels.iter().all(|c| c.values.iter().all(|v| !v.is_nan())));
    }

    #[test]
    fn empty_cell_is_missing() {
        let f = parse("timestamp,co2,oxygen\n0,400,\n120,410,20.8\n").unwrap();
        assert!(f.channel("oxygen").unwrap().values[0].is_nan());
    }

    #[test]
    fn unsorted_rows_equal_sorted() {
        let a = parse("timestamp,co2\n240,3\n0,1\n120,2\n").unwrap();
        let b = parse("timestamp,co2\n0,1\n120,2\n240,3\n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn iso_timestamps() {
        let f = parse("timestamp,co2\n1970-01-01T00:02:00Z,1\n1970-01-01 00:04:00,2\n").unwrap();
        assert_eq!(f.timestamps, vec![120, 240]);
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        assert!(matches!(parse("timestamp,co2\n0,1\n0,2\n"), Err(Error::Integrity(_))));
    }

    #[test]
    fn bad_cell_is_addressed() {
        match parse("timestamp,co2\n0,1\n120,abc\n") {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "co2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_header_rejected() {
        assert!(matches!(parse("time,co2\n0,1\n"), Err(Error::Schema(_))));
        assert!(matches!(parse("timestamp,co2,co2\n0,1,2\n"), Err(Error::Schema(_))));
    }

    #[test]
    fn renames_apply() {
        let schema = ColumnSchema {
            renames: vec![("o2".into(), "oxygen".into())],
            ..ColumnSchema::default()
        };
        let f = parse_frame("timestamp,o2\n0,20.9\n".as_bytes(), &schema).unwrap();
        assert!(f.channel("oxygen").is_some());
    }

    #[test]
    fn write_then_parse_round_trips() {
        let f = parse("timestamp,co2,oxygen,person,window_open\n0,400.125,,0,1\n120,1e-7,20.8,3,0\n").unwrap();
        let mut buf = Vec::new();
        write_frame(&f, &mut buf).unwrap();
        let g = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(f.timestamps, g.timestamps);
        assert_eq!(f.labels, g.labels);
        for (a, b) in f.channels.iter().zip(&g.channels) {
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
            }
        }
    }
}
