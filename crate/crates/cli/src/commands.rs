use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use sensorclf::data::{
    interpolate_missing, missing_report, pearson_matrix, read_frame, select_features, write_frame, CorrelationMatrix,
    FeatureSet,
};
use sensorclf::models::{ArchConfig, Autoencoder, Ensemble};
use sensorclf::pipeline::{
    clean_labeled, event_windows, fit_windows, prepare_labeled_with, split_random, split_train_valid, ScalerParams,
    WindowSet,
};
use sensorclf::synth::{generate_fleet, generate_frame};
use sensorclf::train::report::{
    normalized_json, write_history_csv, write_metrics_csv, write_projection_csv, write_track_csv, write_trials_csv,
};
use sensorclf::train::{
    apply_sample, evaluate, pca_fit, predict_timeline, reconstruction_mse, smooth, train_autoencoder, train_classifier,
    train_ensemble, tune, History, Metrics, PredictionTrack, SearchSpace,
};
use sensorclf::{SensorFrame, Tensor, CLASS_NAMES};

use crate::config::{default_model, with_channels, PcaSource, RunConfig};
use crate::error::CliError;

type Outcome = Result<(), CliError>;

/// Output sink of one command run.
pub struct Run<'a> {
    pub cfg: &'a RunConfig,
}

impl Run<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    /// Reports go through normalization so reruns are byte-identical.
    fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Outcome {
        let mut text = normalized_json(value)?;
        text.push('\n');
        std::fs::write(self.path(name), text)?;
        Ok(())
    }

    fn csv(&self, name: &str, write: impl FnOnce(BufWriter<File>) -> sensorclf::Result<()>) -> Outcome {
        write(BufWriter::new(File::create(self.path(name))?))?;
        Ok(())
    }

    fn frame(&self) -> Result<SensorFrame, CliError> {
        let path = self.cfg.require(&self.cfg.input, "input")?;
        Ok(read_frame(path, &self.cfg.schema)?)
    }

    fn write_frame(&self, name: &str, frame: &SensorFrame) -> Outcome {
        self.csv(name, |w| write_frame(frame, w))
    }

    fn write_windows(&self, name: &str, windows: &WindowSet) -> Outcome {
        windows.save(&self.path(name))?;
        Ok(())
    }

    /// Timing blocks are kept out of the reports and collected here.
    fn timing(&self, histories: &[History]) -> Outcome {
        let meta: Vec<_> = histories.iter().map(|h| &h.meta).collect();
        sensorclf::train::report::write_json(&self.path("timing.json"), &meta)?;
        Ok(())
    }

    fn histories(&self, histories: &[History]) -> Outcome {
        self.json("history.json", histories)?;
        for (i, h) in histories.iter().enumerate() {
            let name = if histories.len() == 1 {
                "history.csv".to_string()
            } else {
                format!("history_{i}.csv")
            };
            self.csv(&name, |w| write_history_csv(h, w))?;
        }
        self.timing(histories)
    }

    fn metrics(&self, metrics: &Metrics) -> Outcome {
        self.json("metrics.json", metrics)?;
        self.csv("metrics.csv", |w| write_metrics_csv(metrics, w))
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn load_windows(path: &Path) -> Result<WindowSet, CliError> {
    WindowSet::load(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn f1_summary(m: &Metrics) -> String {
    m.classes
        .iter()
        .map(|c| format!("{} F1 {:.3}", c.class, c.f1))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Label columns of `frame` that are known event classes, in class order.
fn classes_of(frame: &SensorFrame) -> Vec<String> {
    let present = frame.label_names();
    CLASS_NAMES
        .iter()
        .map(|s| s.to_string())
        .filter(|c| present.contains(c))
        .collect()
}

fn correlation(frame: &SensorFrame) -> Result<(CorrelationMatrix, Vec<String>), CliError> {
    let classes = classes_of(frame);
    let mut variables = frame.channel_names();
    variables.extend(classes.iter().cloned());
    Ok((pearson_matrix(frame, &variables)?, classes))
}

fn feature_channels(cfg: &RunConfig) -> Result<Option<Vec<String>>, CliError> {
    match &cfg.feature_set {
        Some(p) => Ok(Some(load_json::<FeatureSet>(p)?.features)),
        None => Ok(None),
    }
}

fn select(cfg: &RunConfig, frame: &SensorFrame) -> Result<FeatureSet, CliError> {
    let (m, classes) = correlation(frame)?;
    Ok(select_features(&m, cfg.pair_threshold, &classes)?)
}

pub fn synth(run: &Run) -> Outcome {
    let cfg = run.cfg;
    if cfg.scenario.devices == 1 {
        let frame = generate_frame(&cfg.scenario)?;
        run.write_frame("frame.csv", &frame)?;
        let rates: Vec<String> = frame
            .labels
            .iter()
            .map(|l| {
                let pos = l.values.iter().filter(|&&v| v > 0).count();
                format!("{} {:.1}%", l.name, 100.0 * pos as f64 / frame.len() as f64)
            })
            .collect();
        println!(
            "wrote {} samples of {} to frame.csv; event rates {}",
            frame.len(),
            frame.device_id,
            rates.join(", ")
        );
    } else {
        let fleet = generate_fleet(&cfg.scenario, cfg.scenario.devices)?;
        for f in &fleet {
            run.write_frame(&format!("{}.csv", f.device_id), f)?;
        }
        println!(
            "wrote {} unlabeled devices of {} samples",
            fleet.len(),
            cfg.scenario.samples
        );
    }
    sensorclf::train::report::write_json(&run.path("scenario.json"), &cfg.scenario)?;
    Ok(())
}

pub fn clean(run: &Run) -> Outcome {
    let frame = run.frame()?;
    let report = missing_report(&frame);
    let cleaned = if frame.label("person").is_some() {
        clean_labeled(&frame, run.cfg.edge_policy)?
    } else {
        interpolate_missing(&frame, run.cfg.edge_policy)?
    };
    run.json("missing.json", &report)?;
    run.write_frame("clean.csv", &cleaned)?;
    println!(
        "filled {} missing values; {} of {} rows kept",
        report.total_missing(),
        cleaned.len(),
        frame.len()
    );
    Ok(())
}

pub fn report_missing(run: &Run) -> Outcome {
    let report = missing_report(&run.frame()?);
    run.json("missing.json", &report)?;
    run.csv("missing.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["channel", "missing", "runs", "longest_run"])?;
        for c in &report.channels {
            let longest = c.runs.iter().map(|r| r.length).max().unwrap_or(0);
            w.write_record([
                c.channel.clone(),
                c.count.to_string(),
                c.runs.len().to_string(),
                longest.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    println!("{} rows, {} missing values", report.total_rows, report.total_missing());
    for c in report.channels.iter().filter(|c| c.count > 0) {
        println!("  {:<14} {:>6} in {} runs", c.channel, c.count, c.runs.len());
    }
    Ok(())
}

pub fn correlate(run: &Run) -> Outcome {
    let (m, _) = correlation(&run.frame()?)?;
    run.json("correlation.json", &m)?;
    run.csv("correlation.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["variable".to_string()];
        header.extend(m.names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in m.names.iter().zip(&m.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })?;
    println!("correlation of {} variables written", m.len());
    Ok(())
}

pub fn select_features_cmd(run: &Run) -> Outcome {
    let fs = select(run.cfg, &run.frame()?)?;
    run.json("features.json", &fs)?;
    println!("kept {} features: {}", fs.features.len(), fs.features.join(", "));
    for d in &fs.dropped {
        println!("  dropped {} (|r| {:.3} with {})", d.name, d.pair_r.abs(), d.partner);
    }
    Ok(())
}

pub fn sample(run: &Run) -> Outcome {
    let cfg = run.cfg;
    let frame = run.frame()?;
    let channels = feature_channels(cfg)?.unwrap_or_else(|| frame.channel_names());
    let classes = classes_of(&frame);
    let w = event_windows(&frame, &channels, &classes, cfg.undersample_k, cfg.max_gap, &cfg.window)?;
    run.write_windows("windows.json", &w)?;
    let rates: Vec<String> = classes
        .iter()
        .zip(w.positive_rate())
        .map(|(c, r)| format!("{c} {:.1}%", 100.0 * r))
        .collect();
    println!(
        "{} windows of {} x {}; positives {}",
        w.len(),
        w.channels(),
        w.length(),
        rates.join(", ")
    );
    Ok(())
}

pub fn split(run: &Run) -> Outcome {
    let cfg = run.cfg;
    let frame = run.frame()?;
    let channels = feature_channels(cfg)?;
    let (features, scaler, train, valid, test) = if cfg.time_separated() {
        let p = prepare_labeled_with(&frame, &cfg.prepare(), channels.as_deref(), None)?;
        (p.features, p.scaler, p.train, p.valid, p.test)
    } else {
        let cleaned = clean_labeled(&frame, cfg.edge_policy)?;
        let features = match channels {
            Some(c) => FeatureSet {
                features: c,
                pair_threshold: cfg.pair_threshold,
                dropped: Vec::new(),
            },
            None => select(cfg, &cleaned)?,
        };
        let classes = classes_of(&cleaned);
        let w = event_windows(
            &cleaned,
            &features.features,
            &classes,
            cfg.undersample_k,
            cfg.max_gap,
            &cfg.window,
        )?;
        let (tr, va, te) = split_random(&w, &cfg.split)?;
        let scaler = fit_windows(cfg.scaler, &tr)?;
        let t = |s: &WindowSet| scaler.transform_windows(s);
        (features.clone(), scaler.clone(), t(&tr)?, t(&va)?, t(&te)?)
    };
    run.write_windows("train.json", &train)?;
    run.write_windows("valid.json", &valid)?;
    run.write_windows("test.json", &test)?;
    run.json("scaler.json", &scaler)?;
    run.json("features.json", &features)?;
    println!(
        "{} features; train {} / valid {} / test {} windows",
        features.features.len(),
        train.len(),
        valid.len(),
        test.len()
    );
    Ok(())
}

struct Splits {
    train: WindowSet,
    valid: WindowSet,
    test: WindowSet,
    dir: PathBuf,
}

fn splits(cfg: &RunConfig) -> Result<Splits, CliError> {
    let dir = cfg.require(&cfg.data, "data")?;
    Ok(Splits {
        train: load_windows(&dir.join("train.json"))?,
        valid: load_windows(&dir.join("valid.json"))?,
        test: load_windows(&dir.join("test.json"))?,
        dir: dir.to_path_buf(),
    })
}

fn arch_for(cfg: &RunConfig, channels: usize) -> ArchConfig {
    with_channels(&cfg.model.clone().unwrap_or_else(|| default_model(channels)), channels)
}

/// Keeps the scaler next to the model so `predict` needs only the model.
fn copy_scaler(from: &Path, model_dir: &Path) -> Outcome {
    let src = from.join("scaler.json");
    if src.exists() {
        std::fs::copy(src, model_dir.join("scaler.json"))?;
    }
    Ok(())
}

pub fn train(run: &Run) -> Outcome {
    let cfg = run.cfg;
    let s = splits(cfg)?;
    let arch = arch_for(cfg, s.train.channels());
    let mut model = Ensemble::build(&arch, cfg.seed)?;
    let histories = train_ensemble(&mut model, &s.train, &s.valid, &cfg.train)?;
    let metrics = evaluate(&mut model, &s.test, cfg.threshold)?;
    let model_dir = run.path("model");
    model.save(&model_dir)?;
    copy_scaler(&s.dir, &model_dir)?;
    run.json("model_config.json", &arch)?;
    run.histories(&histories)?;
    run.metrics(&metrics)?;
    let epochs: Vec<String> = histories.iter().map(|h| h.epochs.len().to_string()).collect();
    println!(
        "trained {} parameters for {} epochs; test {}",
        model.param_count(),
        epochs.join("/"),
        f1_summary(&metrics)
    );
    Ok(())
}

pub fn tune_cmd(run: &Run) -> Outcome {
    let cfg = run.cfg;
    let s = splits(cfg)?;
    let base = arch_for(cfg, s.train.channels());
    let space = match (&cfg.search, &base) {
        (Some(sp), _) => sp.clone(),
        (None, ArchConfig::Fcn(c)) => SearchSpace::fcn(c.filters.len()),
        (None, ArchConfig::Lstm(_)) => SearchSpace::lstm(),
        (None, _) => return Err(CliError::Config("search: required for this model family".into())),
    };
    let result = tune(&base, &space, &s.train, &s.valid, &cfg.train, cfg.trials, cfg.seed)?;
    let best = apply_sample(&base, &result.best_trial().params)?;
    run.json("trials.json", &result)?;
    run.csv("trials.csv", |w| write_trials_csv(&result, w))?;
    run.json("best_model.json", &best)?;
    let t = result.best_trial();
    println!(
        "best of {} trials: #{} {:?}, validation F1 {:.3}",
        result.trials.len(),
        t.trial,
        t.params,
        t.valid_f1
    );
    Ok(())
}

fn unlabeled_inputs(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    if !cfg.inputs.is_empty() {
        return Ok(cfg.inputs.clone());
    }
    let dir = cfg.require(&cfg.input, "inputs")?;
    if !dir.is_dir() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Runtime(format!("no CSV files in {}", dir.display())));
    }
    Ok(files)
}

pub fn pretrain_ae(run: &Run) -> Outcome {
    let cfg = run.cfg;
    let mut parts = Vec::new();
    let mut channels: Option<Vec<String>> = None;
    for path in unlabeled_inputs(cfg)? {
        let frame = interpolate_missing(&read_frame(&path, &cfg.schema)?, cfg.edge_policy)?;
        let ch = channels.get_or_insert_with(|| frame.channel_names()).clone();
        parts.push(event_windows(&frame, &ch, &[], None, cfg.max_gap, &cfg.window)?);
    }
    let raw = WindowSet::concat(&parts)?;
    let scaler = fit_windows(cfg.scaler, &raw)?;
    let windows = scaler.transform_windows(&raw)?;
    let mut ae_cfg = cfg.autoencoder.clone();
    ae_cfg.input_channels = windows.channels();
    ae_cfg.length = windows.length();
    let mut ae = Autoencoder::build(&ae_cfg, cfg.seed)?;
    let history = train_autoencoder(&mut ae, &windows, &cfg.train)?;
    let mse = reconstruction_mse(&mut ae, &windows.x)?;
    ae.save(&run.path("autoencoder.json"))?;
    run.json("scaler.json", &scaler)?;
    run.histories(std::slice::from_ref(&history))?;
    println!(
        "pretrained latent {} on {} windows from {} frames; reconstruction MSE {mse:.5}",
        ae_cfg.latent,
        windows.len(),
        parts.len()
    );
    Ok(())
}

pub fn train_head(run: &Run) -> Outcome {
    let cfg = run.cfg;
    let ckpt = cfg.require(&cfg.checkpoint, "checkpoint")?;
    let ae = Autoencoder::load(ckpt)?;
    let ae_dir = ckpt.parent().unwrap_or(Path::new("."));
    let scaler: ScalerParams = load_json(&ae_dir.join("scaler.json"))?;
    let frame = run.frame()?;
    let mut prep = cfg.prepare();
    prep.window.length = ae.config.length;
    let p = prepare_labeled_with(&frame, &prep, Some(&scaler.channels), Some(&scaler))?;
    let labeled = if cfg.labeled_fraction < 1.0 {
        split_train_valid(&p.train, cfg.labeled_fraction, cfg.seed)?.1
    } else {
        p.train.clone()
    };
    let mut clf = ae.classifier(cfg.head.clone(), cfg.seed)?;
    let history = train_classifier(&mut clf, &labeled, &p.valid, &cfg.train)?;
    let mut model = Ensemble::single(clf);
    let metrics = evaluate(&mut model, &p.test, cfg.threshold)?;
    let model_dir = run.path("model");
    model.save(&model_dir)?;
    copy_scaler(ae_dir, &model_dir)?;
    run.write_windows("test.json", &p.test)?;
    run.histories(std::slice::from_ref(&history))?;
    run.metrics(&metrics)?;
    println!(
        "head trained on {} of {} labeled windows; test {}",
        labeled.len(),
        p.train.len(),
        f1_summary(&metrics)
    );
    Ok(())
}

fn test_windows(cfg: &RunConfig) -> Result<WindowSet, CliError> {
    match (&cfg.input, &cfg.data) {
        (Some(p), _) => load_windows(p),
        (None, Some(d)) => load_windows(&d.join("test.json")),
        (None, None) => Err(CliError::Config("input: a window set or `data` is required".into())),
    }
}

fn load_model(cfg: &RunConfig, expected: Option<&ArchConfig>) -> Result<Ensemble, CliError> {
    let dir = cfg.require(&cfg.checkpoint, "checkpoint")?;
    Ok(Ensemble::load(dir, expected)?)
}

pub fn eval(run: &Run) -> Outcome {
    let cfg = run.cfg;
    let test = test_windows(cfg)?;
    let expected = cfg.model.as_ref().map(|m| with_channels(m, test.channels()));
    let mut model = load_model(cfg, expected.as_ref())?;
    let metrics = evaluate(&mut model, &test, cfg.threshold)?;
    run.metrics(&metrics)?;
    println!("{} test windows; {}", test.len(), f1_summary(&metrics));
    Ok(())
}

fn write_track(run: &Run, name: &str, track: &PredictionTrack) -> Outcome {
    run.json(&format!("{name}.json"), track)?;
    run.csv(&format!("{name}.csv"), |w| write_track_csv(track, w))
}

pub fn predict(run: &Run) -> Outcome {
    let cfg = run.cfg;
    let mut model = load_model(cfg, None)?;
    let ckpt = cfg.require(&cfg.checkpoint, "checkpoint")?;
    let scaler: ScalerParams = load_json(&ckpt.join("scaler.json"))?;
    let frame = interpolate_missing(&run.frame()?, cfg.edge_policy)?;
    let classes: Vec<String> = CLASS_NAMES.iter().map(|s| s.to_string()).collect();
    let track = predict_timeline(
        &mut model,
        &frame,
        &scaler.channels,
        &classes,
        Some(&scaler),
        &cfg.timeline(),
    )?;
    write_track(run, "track", &track)?;
    for w in &track.warnings {
        println!("warning: {w}");
    }
    println!("predicted {} of {} timestamps", track.covered(), track.len());
    Ok(())
}

pub fn smooth_cmd(run: &Run) -> Outcome {
    let cfg = run.cfg;
    let track: PredictionTrack = load_json(cfg.require(&cfg.input, "input")?)?;
    let out = smooth(&track, cfg.smoothing_width)?;
    let flipped: usize = track
        .decisions
        .iter()
        .zip(&out.decisions)
        .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count())
        .sum();
    write_track(run, "smoothed", &out)?;
    println!("smoothed with w = {}: {flipped} decisions flipped", cfg.smoothing_width);
    Ok(())
}

pub fn pca(run: &Run) -> Outcome {
    let cfg = run.cfg;
    let windows = load_windows(cfg.require(&cfg.input, "input")?)?;
    let points = match cfg.pca_source {
        PcaSource::Raw => {
            let (n, c, l) = windows.x.dims3()?;
            Tensor::from_vec(&[n, c * l], windows.x.data().to_vec())?
        }
        PcaSource::Features => {
            let mut model = load_model(cfg, None)?;
            model.members[0].features(&windows.x)?
        }
    };
    let fitted = pca_fit(&points)?;
    let projected = fitted.project(&points)?;
    run.json("pca.json", &fitted)?;
    let labels = (windows.classes() > 0).then_some((windows.class_names.as_slice(), windows.y.as_slice()));
    run.csv("projection.csv", |w| write_projection_csv(&projected, labels, w))?;
    println!(
        "explained variance {:.1}% + {:.1}% over {} points",
        100.0 * fitted.explained[0],
        100.0 * fitted.explained[1],
        points.rows()
    );
    Ok(())
}
