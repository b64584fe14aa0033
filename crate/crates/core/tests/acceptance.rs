//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use sensorclf::models::{
    ArchConfig, Autoencoder, AutoencoderConfig, Classifier, Ensemble, FcnConfig, HeadConfig, LstmConfig,
};
use sensorclf::pipeline::{
    event_windows, fit_windows, prepare_labeled, prepare_labeled_with, split_train_valid, PrepareConfig, Prepared,
    ScalerKind, WindowSet, WindowSpec,
};
use sensorclf::synth::{generate_fleet, generate_frame, ScenarioConfig};
use sensorclf::train::report::normalized_json;
use sensorclf::train::{
    evaluate, reconstruction_mse, train_autoencoder, train_classifier, train_ensemble, Metrics, TrainConfig,
    DEFAULT_THRESHOLD,
};
use sensorclf::{SensorFrame, SENSOR_CHANNELS};

const SEED: u64 = 7;

type Check = Result<String, String>;

struct Line {
    id: u32,
    ok: bool,
    elapsed: Duration,
    budget: Duration,
    detail: String,
}

fn timed(id: u32, budget_secs: u64, f: impl FnOnce() -> Check) -> Line {
    let start = Instant::now();
    let r = f();
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(budget_secs);
    let (ok, detail) = match r {
        Ok(d) => (elapsed <= budget, d),
        Err(d) => (false, d),
    };
    let line = Line {
        id,
        ok,
        elapsed,
        budget,
        detail,
    };
    print_line(&line);
    line
}

fn print_line(l: &Line) {
    println!(
        "criterion {} {} [{:.1} s / {} s] {}",
        l.id,
        if l.ok { "PASS" } else { "FAIL" },
        l.elapsed.as_secs_f64(),
        l.budget.as_secs(),
        l.detail
    );
}

fn f1s(m: &Metrics) -> (f64, f64) {
    (m.f1("person").unwrap_or(0.0), m.f1("window_open").unwrap_or(0.0))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn criterion_1() -> Check {
    let counts = [
        (ArchConfig::Fcn(FcnConfig::new(9, &[16, 32], &[5, 3], 2)), 2_418),
        (ArchConfig::Fcn(FcnConfig::new(9, &[32, 8], &[5, 3], 2)), 2_306),
        (ArchConfig::Lstm(LstmConfig::new(8, 100, false, 0.0, 2)), 43_802),
        (ArchConfig::Lstm(LstmConfig::new(8, 100, true, 0.0, 2)), 87_602),
    ];
    let mut got = Vec::new();
    for (cfg, want) in counts {
        let n = Classifier::build(&cfg, 0).map_err(err)?.param_count();
        if n != want {
            return Err(format!("expected {want}, got {n}"));
        }
        got.push(n.to_string());
    }
    Ok(format!("param counts {}", got.join(", ")))
}

fn criterion_2() -> Check {
    let layers = common::gradcheck::layer_suite();
    let models = common::gradcheck::model_suite();
    let mut worst = 0.0f64;
    for (name, r) in layers.iter().chain(&models) {
        match r {
            Ok(e) => worst = worst.max(*e),
            Err(e) => return Err(format!("{name}: {e}")),
        }
    }
    Ok(format!(
        "{} layer/loss checks and {} architectures, worst relative error {worst:.1e}",
        layers.len(),
        models.len()
    ))
}

fn criterion_3() -> Check {
    let mut parts = Vec::new();
    for (name, r) in common::oracles::all() {
        let n = r.map_err(|e| format!("{name}: {e}"))?;
        if n < 100 {
            return Err(format!("{name}: only {n} instances"));
        }
        parts.push(format!("{name} x{n}"));
    }
    Ok(parts.join(", "))
}

fn bundled_frame() -> SensorFrame {
    generate_frame(&ScenarioConfig::bundled()).expect("bundled scenario is valid")
}

fn prep(frame: &SensorFrame, k: Option<usize>, scaler: ScalerKind) -> Result<Prepared, String> {
    let cfg = PrepareConfig {
        undersample_k: k,
        scaler,
        seed: SEED,
        ..PrepareConfig::default()
    };
    prepare_labeled(frame, &cfg).map_err(err)
}

fn optimized_fcn(channels: usize) -> ArchConfig {
    ArchConfig::Fcn(FcnConfig::new(channels, &[32, 8], &[5, 3], 2))
}

fn train_cfg() -> TrainConfig {
    TrainConfig {
        seed: SEED,
        ..TrainConfig::default()
    }
}

/// Writes every artifact a run produces; returns the test metrics.
fn fit_and_report(arch: &ArchConfig, p: &Prepared, cfg: &TrainConfig, out: &Path) -> Result<Metrics, String> {
    let mut model = Ensemble::build(arch, cfg.seed).map_err(err)?;
    let histories = train_ensemble(&mut model, &p.train, &p.valid, cfg).map_err(err)?;
    let metrics = evaluate(&mut model, &p.test, DEFAULT_THRESHOLD).map_err(err)?;
    std::fs::create_dir_all(out).map_err(err)?;
    model.save(&out.join("model")).map_err(err)?;
    std::fs::write(out.join("history.json"), normalized_json(&histories).map_err(err)?).map_err(err)?;
    std::fs::write(out.join("metrics.json"), normalized_json(&metrics).map_err(err)?).map_err(err)?;
    Ok(metrics)
}

fn run_criterion_4(out: &Path) -> Check {
    let frame = bundled_frame();
    let p = prep(&frame, Some(50), ScalerKind::Standard)?;
    let c = p.train.channels();
    let fcn = fit_and_report(&optimized_fcn(c), &p, &train_cfg(), &out.join("fcn"))?;
    let lstm_arch = ArchConfig::Lstm(LstmConfig::new(c, 26, false, 0.2, 2));
    let lstm = fit_and_report(&lstm_arch, &p, &train_cfg(), &out.join("lstm"))?;
    let (fp, fw) = f1s(&fcn);
    let (lp, lw) = f1s(&lstm);
    let detail =
        format!("{c} selected channels; FCN F1 person {fp:.3} window {fw:.3}; LSTM F1 person {lp:.3} window {lw:.3}");
    if fp >= 0.90 && fw >= 0.90 && lp >= 0.85 && lw >= 0.85 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5() -> Check {
    let frame = bundled_frame();
    let full = prep(&frame, None, ScalerKind::Standard)?;
    let under = prep(&frame, Some(30), ScalerKind::Standard)?;
    let cfg = TrainConfig {
        epochs: 20,
        early_stopping: None,
        ..train_cfg()
    };
    // Both models are scored on the same unbalanced test tail.
    let raw_test = full.scaler.inverse_windows(&full.test).map_err(err)?;
    let run = |p: &Prepared| -> Result<(f64, Metrics), String> {
        let mut m = Classifier::build(&optimized_fcn(p.train.channels()), SEED).map_err(err)?;
        let h = train_classifier(&mut m, &p.train, &p.valid, &cfg).map_err(err)?;
        let test = p.scaler.transform_windows(&raw_test).map_err(err)?;
        let metrics = evaluate(&mut m, &test, DEFAULT_THRESHOLD).map_err(err)?;
        Ok((h.meta.total_seconds, metrics))
    };
    let (t_full, m_full) = run(&full)?;
    let (t_under, m_under) = run(&under)?;
    let ratio = t_full / t_under;
    let (a, b) = (f1s(&m_full), f1s(&m_under));
    let (dp, dw) = ((a.0 - b.0).abs(), (a.1 - b.1).abs());
    let detail = format!(
        "{} vs {} training windows, time ratio {ratio:.2}; F1 person {:.3}/{:.3} window {:.3}/{:.3}",
        full.train.len(),
        under.train.len(),
        a.0,
        b.0,
        a.1,
        b.1
    );
    if ratio >= 2.0 && dp <= 0.05 && dw <= 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6() -> Check {
    let frame = bundled_frame();
    let mut f1 = Vec::new();
    for kind in [ScalerKind::Standard, ScalerKind::MinMax] {
        let p = prep(&frame, Some(50), kind)?;
        let mut m = Ensemble::build(&optimized_fcn(p.train.channels()), SEED).map_err(err)?;
        train_ensemble(&mut m, &p.train, &p.valid, &train_cfg()).map_err(err)?;
        f1.push(f1s(&evaluate(&mut m, &p.test, DEFAULT_THRESHOLD).map_err(err)?));
    }
    let (dp, dw) = ((f1[0].0 - f1[1].0).abs(), (f1[0].1 - f1[1].1).abs());
    let detail = format!(
        "standard F1 {:.3}/{:.3}, min-max F1 {:.3}/{:.3}, gaps {dp:.3}/{dw:.3}",
        f1[0].0, f1[0].1, f1[1].0, f1[1].1
    );
    if dp <= 0.05 && dw <= 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Fleet corpus: 20 devices x 2,000 samples, every 10th window.
fn fleet_windows() -> Result<WindowSet, String> {
    let cfg = ScenarioConfig {
        samples: 2_000,
        ..ScenarioConfig::bundled()
    };
    let channels: Vec<String> = SENSOR_CHANNELS.iter().map(|s| s.to_string()).collect();
    let spec = WindowSpec {
        stride: 10,
        ..WindowSpec::default()
    };
    let parts = generate_fleet(&cfg, 20)
        .map_err(err)?
        .iter()
        .map(|f| event_windows(f, &channels, &[], None, 360, &spec))
        .collect::<sensorclf::Result<Vec<_>>>()
        .map_err(err)?;
    WindowSet::concat(&parts).map_err(err)
}

fn run_criterion_7(out: &Path) -> Check {
    std::fs::create_dir_all(out).map_err(err)?;
    let raw = fleet_windows()?;
    let scaler = fit_windows(ScalerKind::Standard, &raw).map_err(err)?;
    let fleet = scaler.transform_windows(&raw).map_err(err)?;
    let channels: Vec<String> = SENSOR_CHANNELS.iter().map(|s| s.to_string()).collect();
    let cfg = PrepareConfig {
        seed: SEED,
        ..PrepareConfig::default()
    };
    let p = prepare_labeled_with(&bundled_frame(), &cfg, Some(&channels), Some(&scaler)).map_err(err)?;
    let ae_cfg = TrainConfig {
        epochs: 10,
        ..train_cfg()
    };
    let mut mse = BTreeMap::new();
    let mut encoder = None;
    for latent in [2, 10] {
        let mut ae =
            Autoencoder::build(&AutoencoderConfig::new(SENSOR_CHANNELS.len(), latent, 7), SEED).map_err(err)?;
        let h = train_autoencoder(&mut ae, &fleet, &ae_cfg).map_err(err)?;
        ae.save(&out.join(format!("ae_latent{latent}.json"))).map_err(err)?;
        std::fs::write(
            out.join(format!("ae_latent{latent}_history.json")),
            normalized_json(&h).map_err(err)?,
        )
        .map_err(err)?;
        mse.insert(latent, reconstruction_mse(&mut ae, &p.test.x).map_err(err)?);
        encoder = Some(ae);
    }
    let ae = encoder.expect("latent 10 trained last");
    let (_, few) = split_train_valid(&p.train, 0.1, SEED).map_err(err)?;
    let mut clf = ae.classifier(HeadConfig::default(), SEED).map_err(err)?;
    let h = train_classifier(&mut clf, &few, &p.valid, &train_cfg()).map_err(err)?;
    let metrics = evaluate(&mut clf, &p.test, DEFAULT_THRESHOLD).map_err(err)?;
    clf.save(&out.join("head.json")).map_err(err)?;
    std::fs::write(out.join("head_history.json"), normalized_json(&h).map_err(err)?).map_err(err)?;
    std::fs::write(out.join("head_metrics.json"), normalized_json(&metrics).map_err(err)?).map_err(err)?;
    let (fp, fw) = f1s(&metrics);
    let detail = format!(
        "{} fleet windows, head on {} labeled windows: F1 person {fp:.3} window {fw:.3}; test MSE latent 2 {:.4}, latent 10 {:.4}",
        fleet.len(),
        few.len(),
        mse[&2],
        mse[&10]
    );
    if fp >= 0.80 && fw >= 0.80 && mse[&10] < mse[&2] {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).unwrap_or_default();
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), bytes);
            }
        }
    }
    out
}

fn criterion_8(first: &Path, second: &Path) -> Check {
    run_criterion_4(&second.join("c4"))?;
    run_criterion_7(&second.join("c7"))?;
    let (a, b) = (read_tree(first), read_tree(second));
    if a.is_empty() {
        return Err("first run left no artifacts".into());
    }
    if a.keys().ne(b.keys()) {
        return Err(format!("artifact sets differ: {:?} vs {:?}", a.keys(), b.keys()));
    }
    let differing: Vec<String> = a
        .iter()
        .filter(|(k, v)| b[*k] != **v)
        .map(|(k, _)| k.display().to_string())
        .collect();
    if differing.is_empty() {
        let bytes: usize = a.values().map(Vec::len).sum();
        Ok(format!(
            "{} artifacts ({bytes} bytes) bit-identical across runs",
            a.len()
        ))
    } else {
        Err(format!("differing artifacts: {differing:?}"))
    }
}

fn criterion_9() -> Check {
    common::smoothing::run(1000)?;
    Ok("1000 random tracks: no flank-agreeing run shorter than w, idempotent".into())
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let (first, second) = (dir.path().join("first"), dir.path().join("second"));
    let mut lines = vec![
        timed(1, 1, criterion_1),
        timed(2, 60, criterion_2),
        timed(3, 30, criterion_3),
        timed(4, 600, || run_criterion_4(&first.join("c4"))),
        timed(5, 600, criterion_5),
        timed(6, 300, criterion_6),
        timed(7, 900, || run_criterion_7(&first.join("c7"))),
    ];
    lines.push(timed(8, 1500, || criterion_8(&first, &second)));
    lines.push(timed(9, 5, criterion_9));
    let failed = lines.iter().filter(|l| !l.ok).count();
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
