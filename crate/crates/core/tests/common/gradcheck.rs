//! Central finite-difference gradient checks.

use sensorclf::models::{ArchConfig, Autoencoder, Classifier, HeadMode};
use sensorclf::nn::{bce_with_logits, mse, BufferKind, Layer, Mode, ParamStore, Tensor};
use sensorclf::rng::SeededRng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

pub fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = SeededRng::new(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.normal()).collect()).unwrap()
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, with an absolute floor so that an
/// identically-zero gradient compares as exact.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = norm(analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(analytic.iter().copied()).max(norm(numeric.iter().copied()));
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Learnable buffers that gradients must flow to.
fn checked_params(store: &ParamStore) -> Vec<sensorclf::nn::ParamId> {
    store
        .ids()
        .filter(|&id| store.meta(id).kind == BufferKind::Param && store.is_trainable(id))
        .collect()
}

/// Numeric gradient of `f` with respect to every entry of one parameter.
fn numeric_param(
    store: &mut ParamStore,
    id: sensorclf::nn::ParamId,
    f: &mut dyn FnMut(&mut ParamStore) -> f64,
) -> Vec<f64> {
    let len = store.value(id).len();
    (0..len)
        .map(|j| {
            let orig = store.value(id)[j];
            store.value_mut(id)[j] = orig + STEP;
            let plus = f(store);
            store.value_mut(id)[j] = orig - STEP;
            let minus = f(store);
            store.value_mut(id)[j] = orig;
            (plus - minus) / (2.0 * STEP)
        })
        .collect()
}

/// Worst relative error across the input gradient and every parameter
/// gradient of `layer`, for the objective `Σ r ⊙ layer(x)` with a random `r`.
pub fn check_layer(layer: &mut dyn Layer, store: &mut ParamStore, x: &Tensor, seed: u64) -> Result<f64, String> {
    let y = layer.forward(store, x, Mode::Train).map_err(|e| e.to_string())?;
    let r = random(y.shape(), seed ^ 0xABCD);
    store.zero_grads();
    let dx = layer.backward(store, &r).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut report = |what: &str, a: &[f64], n: &[f64]| -> Result<(), String> {
        let e = rel_error(a, n);
        worst = worst.max(e);
        if e < TOLERANCE {
            Ok(())
        } else {
            Err(format!("{what}: relative error {e:.3e}"))
        }
    };

    let mut xp = x.clone();
    let numeric_x: Vec<f64> = (0..x.len())
        .map(|i| {
            let orig = xp.data()[i];
            xp.data_mut()[i] = orig + STEP;
            let plus = dot(&layer.forward(store, &xp, Mode::Train).unwrap(), &r);
            xp.data_mut()[i] = orig - STEP;
            let minus = dot(&layer.forward(store, &xp, Mode::Train).unwrap(), &r);
            xp.data_mut()[i] = orig;
            (plus - minus) / (2.0 * STEP)
        })
        .collect();
    report("input", dx.data(), &numeric_x)?;

    for id in checked_params(store) {
        let analytic = store.grad(id).to_vec();
        let name = store.meta(id).name.clone();
        let numeric = numeric_param(store, id, &mut |s| dot(&layer.forward(s, x, Mode::Train).unwrap(), &r));
        report(&name, &analytic, &numeric)?;
    }
    Ok(worst)
}

/// Scalar loss and its gradient checked against finite differences.
pub fn check_loss(f: &dyn Fn(&Tensor) -> (f64, Tensor), x: &Tensor) -> Result<f64, String> {
    let (_, g) = f(x);
    let mut xp = x.clone();
    let numeric: Vec<f64> = (0..x.len())
        .map(|i| {
            let orig = xp.data()[i];
            xp.data_mut()[i] = orig + STEP;
            let plus = f(&xp).0;
            xp.data_mut()[i] = orig - STEP;
            let minus = f(&xp).0;
            xp.data_mut()[i] = orig;
            (plus - minus) / (2.0 * STEP)
        })
        .collect();
    let e = rel_error(g.data(), &numeric);
    if e < TOLERANCE {
        Ok(e)
    } else {
        Err(format!("loss gradient: relative error {e:.3e}"))
    }
}

/// End-to-end BCE gradient of a classifier with respect to every trainable
/// parameter.
pub fn check_classifier(config: &ArchConfig, x: &Tensor, seed: u64) -> Result<f64, String> {
    let mut model = Classifier::build(config, seed).map_err(|e| e.to_string())?;
    let n = x.shape()[0];
    let k = match config.head() {
        HeadMode::MultiLabel => config.classes(),
        HeadMode::SingleLabel { .. } => 2,
    };
    let mut rng = SeededRng::new(seed ^ 0x7A);
    let targets = Tensor::from_vec(
        &[n, k],
        (0..n * k).map(|_| f64::from(u8::from(rng.bernoulli(0.5)))).collect(),
    )
    .unwrap();
    model.store.zero_grads();
    let z = model.forward(x, Mode::Train).map_err(|e| e.to_string())?;
    let (_, dz) = bce_with_logits(&z, &targets).unwrap();
    model.backward(&dz).map_err(|e| e.to_string())?;
    let ids = checked_params(&model.store);
    if ids.is_empty() {
        return Err("no trainable parameters".into());
    }
    let mut worst = 0.0f64;
    for id in ids {
        let analytic = model.store.grad(id).to_vec();
        let name = model.store.meta(id).name.clone();
        let mut numeric = vec![0.0; analytic.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = model.store.value(id)[j];
            let eval = |v: f64, m: &mut Classifier| {
                m.store.value_mut(id)[j] = v;
                bce_with_logits(&m.forward(x, Mode::Train).unwrap(), &targets)
                    .unwrap()
                    .0
            };
            let plus = eval(orig + STEP, &mut model);
            let minus = eval(orig - STEP, &mut model);
            model.store.value_mut(id)[j] = orig;
            *slot = (plus - minus) / (2.0 * STEP);
        }
        let e = rel_error(&analytic, &numeric);
        worst = worst.max(e);
        if e >= TOLERANCE {
            return Err(format!("{name}: relative error {e:.3e}"));
        }
    }
    Ok(worst)
}

/// End-to-end reconstruction-MSE gradient of an autoencoder.
pub fn check_autoencoder(model: &mut Autoencoder, x: &Tensor) -> Result<f64, String> {
    model.store.zero_grads();
    let y = model.forward(x, Mode::Train).map_err(|e| e.to_string())?;
    let (_, dy) = mse(&y, x).unwrap();
    model.backward(&dy).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for id in checked_params(&model.store) {
        let analytic = model.store.grad(id).to_vec();
        let name = model.store.meta(id).name.clone();
        let mut numeric = vec![0.0; analytic.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = model.store.value(id)[j];
            let eval = |v: f64, m: &mut Autoencoder| {
                m.store.value_mut(id)[j] = v;
                mse(&m.forward(x, Mode::Train).unwrap(), x).unwrap().0
            };
            let plus = eval(orig + STEP, model);
            let minus = eval(orig - STEP, model);
            model.store.value_mut(id)[j] = orig;
            *slot = (plus - minus) / (2.0 * STEP);
        }
        let e = rel_error(&analytic, &numeric);
        worst = worst.max(e);
        if e >= TOLERANCE {
            return Err(format!("{name}: relative error {e:.3e}"));
        }
    }
    Ok(worst)
}

/// One named check and its worst relative error.
pub type Outcome = (String, Result<f64, String>);

fn layer_case(
    name: String,
    build: impl FnOnce(&mut ParamStore, &mut SeededRng) -> Box<dyn Layer>,
    x: Tensor,
    seed: u64,
) -> Outcome {
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(seed);
    let mut layer = build(&mut store, &mut rng);
    let r = check_layer(layer.as_mut(), &mut store, &x, seed);
    (name, r)
}

/// Every layer and loss on three shapes each.
pub fn layer_suite() -> Vec<Outcome> {
    use sensorclf::nn::{
        softmax_cross_entropy, BatchNorm1d, Conv1d, Dense, GlobalAvgPool, Lstm, LstmOutput, MaxPool3, Relu, Sigmoid,
        SoftmaxClasses,
    };
    let mut out = Vec::new();
    for (i, &(n, c, l, f, k)) in [(2, 3, 7, 4, 3), (3, 2, 9, 2, 4), (1, 4, 5, 3, 5)].iter().enumerate() {
        let seed = 100 + i as u64;
        out.push(layer_case(
            format!("conv1d {n}x{c}x{l} -> {f} k{k}"),
            |s, r| Box::new(Conv1d::new(s, "conv", c, f, k, r)),
            random(&[n, c, l], seed),
            seed,
        ));
    }
    for (i, &(n, c, l)) in [(4, 3, 5), (3, 2, 7), (6, 4, 3)].iter().enumerate() {
        let seed = 200 + i as u64;
        let x = random(&[n, c, l], seed);
        out.push(layer_case(
            format!("batchnorm1d {n}x{c}x{l}"),
            |s, _| {
                let bn = BatchNorm1d::new(s, "bn", c);
                // Non-trivial affine parameters.
                let mut g = SeededRng::new(seed);
                for id in s.ids().collect::<Vec<_>>() {
                    if s.meta(id).kind == BufferKind::Param {
                        s.value_mut(id).iter_mut().for_each(|v| *v += 0.3 * g.normal());
                    }
                }
                Box::new(bn)
            },
            x.clone(),
            seed,
        ));
        out.push(layer_case(
            format!("gap {n}x{c}x{l}"),
            |_, _| Box::new(GlobalAvgPool::new()),
            x.clone(),
            seed,
        ));
        out.push(layer_case(
            format!("relu {n}x{c}x{l}"),
            |_, _| Box::new(Relu::new()),
            x.clone(),
            seed,
        ));
        out.push(layer_case(
            format!("sigmoid {n}x{c}x{l}"),
            |_, _| Box::new(Sigmoid::new()),
            x.clone(),
            seed,
        ));
        out.push(layer_case(
            format!("maxpool3 {n}x{c}x{l}"),
            |_, _| Box::new(MaxPool3::new()),
            x,
            seed,
        ));
    }
    for (i, &(n, a, b)) in [(3, 5, 4), (2, 7, 2), (5, 3, 6)].iter().enumerate() {
        let seed = 300 + i as u64;
        out.push(layer_case(
            format!("dense {n}x{a} -> {b}"),
            |s, r| Box::new(Dense::new(s, "dense", a, b, r)),
            random(&[n, a], seed),
            seed,
        ));
        out.push(layer_case(
            format!("softmax {n}x{b}"),
            |_, _| Box::new(SoftmaxClasses::new()),
            random(&[n, b], seed),
            seed,
        ));
    }
    for (i, &(n, c, l, h)) in [(2, 3, 5, 4), (3, 2, 4, 3), (1, 4, 6, 2)].iter().enumerate() {
        for bi in [false, true] {
            for output in [LstmOutput::Sequence, LstmOutput::Last] {
                let seed = 400 + i as u64;
                out.push(layer_case(
                    format!("lstm {} {output:?} {n}x{c}x{l} h{h}", if bi { "bi" } else { "uni" }),
                    |s, r| Box::new(Lstm::new(s, "lstm", c, h, bi, output, r).unwrap()),
                    random(&[n, c, l], seed),
                    seed,
                ));
            }
        }
    }
    for (i, &(n, k)) in [(4, 2), (3, 5), (6, 1)].iter().enumerate() {
        let seed = 500 + i as u64;
        let z = random(&[n, k], seed);
        let mut rng = SeededRng::new(seed);
        let y = Tensor::from_vec(
            &[n, k],
            (0..n * k).map(|_| f64::from(u8::from(rng.bernoulli(0.5)))).collect(),
        )
        .unwrap();
        out.push((
            format!("bce {n}x{k}"),
            check_loss(&|x| bce_with_logits(x, &y).unwrap(), &z),
        ));
        let t = random(&[n, k], seed + 1);
        out.push((format!("mse {n}x{k}"), check_loss(&|x| mse(x, &t).unwrap(), &z)));
        let kk = k.max(2);
        let zc = random(&[n, kk], seed + 2);
        let cls: Vec<usize> = (0..n).map(|_| rng.index(kk)).collect();
        out.push((
            format!("softmax cross-entropy {n}x{kk}"),
            check_loss(&|x| softmax_cross_entropy(x, &cls).unwrap(), &zc),
        ));
    }
    out
}

/// End-to-end checks on toy versions of the five architectures.
pub fn model_suite() -> Vec<Outcome> {
    use sensorclf::models::{
        AutoencoderConfig, EncoderClassifierConfig, FcnConfig, HeadConfig, InceptionConfig, LstmConfig,
    };
    let x = random(&[4, 3, 6], 900);
    let mut out = Vec::new();
    let fcn = ArchConfig::Fcn(FcnConfig::new(3, &[4, 3], &[3, 2], 2));
    out.push(("fcn".to_string(), check_classifier(&fcn, &x, 1)));
    out.push((
        "fcn single-label".to_string(),
        check_classifier(&fcn.with_head(HeadMode::SingleLabel { class_index: 1 }), &x, 2),
    ));
    out.push((
        "lstm".to_string(),
        check_classifier(&ArchConfig::Lstm(LstmConfig::new(3, 3, false, 0.0, 2)), &x, 3),
    ));
    out.push((
        "lstm bidirectional".to_string(),
        check_classifier(&ArchConfig::Lstm(LstmConfig::new(3, 3, true, 0.0, 2)), &x, 4),
    ));
    let inception = InceptionConfig {
        filters: 2,
        bottleneck: 2,
        kernels: vec![2, 3, 5],
        depth: 3,
        ensemble: 1,
        ..InceptionConfig::standard(3, 2)
    };
    out.push((
        "inception".to_string(),
        check_classifier(&ArchConfig::Inception(inception), &x, 5),
    ));
    let encoder = AutoencoderConfig {
        input_channels: 3,
        hidden: vec![4, 3],
        latent: 2,
        length: 6,
    };
    let mut ae = Autoencoder::build(&encoder, 6).unwrap();
    out.push(("autoencoder".to_string(), check_autoencoder(&mut ae, &x)));
    let head = HeadConfig {
        hidden: 4,
        ..HeadConfig::default()
    };
    let ec = ArchConfig::EncoderClassifier(EncoderClassifierConfig { encoder, head });
    out.push(("encoder classifier".to_string(), check_classifier(&ec, &x, 7)));
    out
}
