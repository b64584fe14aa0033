//! JSON and plot-ready CSV artifacts.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::metrics::Metrics;
use super::search::SearchResult;
use super::timeline::PredictionTrack;
use super::trainer::History;
use crate::error::Result;
use crate::nn::Tensor;

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_history_csv<W: Write>(history: &History, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "epoch",
        "train_loss",
        "valid_loss",
        "valid_accuracy",
        "lr",
        "best_valid_loss",
    ])?;
    for e in &history.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.valid_loss.to_string(),
            opt(e.valid_accuracy),
            e.lr.to_string(),
            e.best_valid_loss.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_csv<W: Write>(metrics: &Metrics, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["class", "precision", "recall", "f1", "support", "tp", "fp", "fn", "tn"])?;
    for c in &metrics.classes {
        let cm = c.confusion;
        w.write_record([
            c.class.clone(),
            c.precision.to_string(),
            c.recall.to_string(),
            c.f1.to_string(),
            c.support.to_string(),
            cm.tp.to_string(),
            cm.fp.to_string(),
            cm.fn_.to_string(),
            cm.tn.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per timestamp; empty cells mark missing predictions.
pub fn write_track_csv<W: Write>(track: &PredictionTrack, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["timestamp".to_string()];
    for c in &track.class_names {
        header.push(format!("p_{c}"));
        header.push(format!("decision_{c}"));
    }
    w.write_record(&header)?;
    for t in 0..track.len() {
        let mut row = vec![track.timestamps[t].to_string()];
        for c in 0..track.class_names.len() {
            row.push(opt(track.probabilities[c][t]));
            row.push(opt(track.decisions[c][t]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per point: `index, pc1, pc2` plus optional label columns.
pub fn write_projection_csv<W: Write>(points: &Tensor, labels: Option<(&[String], &[u8])>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["index".to_string(), "pc1".into(), "pc2".into()];
    if let Some((names, _)) = labels {
        header.extend(names.iter().cloned());
    }
    w.write_record(&header)?;
    for i in 0..points.rows() {
        let p = points.row(i);
        let mut row = vec![i.to_string(), p[0].to_string(), p[1].to_string()];
        if let Some((names, y)) = labels {
            let k = names.len();
            row.extend(y[i * k..(i + 1) * k].iter().map(|v| v.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trials_csv<W: Write>(result: &SearchResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let names: Vec<String> = result
        .trials
        .first()
        .map(|t| t.params.keys().cloned().collect())
        .unwrap_or_default();
    let mut header = vec!["trial".to_string(), "seed".into()];
    header.extend(names.iter().cloned());
    header.push("valid_f1".into());
    w.write_record(&header)?;
    for t in &result.trials {
        let mut row = vec![t.trial.to_string(), t.seed.to_string()];
        row.extend(names.iter().map(|n| t.params[n].to_string()));
        row.push(t.valid_f1.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Serializes a report with every `meta` object removed, for byte-level
/// reproducibility checks.
pub fn normalized_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    fn strip(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(m) => {
                m.remove("meta");
                m.values_mut().for_each(strip);
            }
            serde_json::Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    let mut v = serde_json::to_value(value)?;
    strip(&mut v);
    Ok(serde_json::to_string_pretty(&v)?)
}
