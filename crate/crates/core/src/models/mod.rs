//! Architecture configs and the networks built from them.
//!
//! Every builder is a pure function of its config and a seed: it registers the
//! network's buffers in a fresh [`ParamStore`] and returns the layer graph.
//! [`Classifier`] pairs the two and adds checkpoint I/O guarded by an
//! architecture fingerprint.

mod autoencoder;
mod fcn;
mod inception;
mod lstm;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use autoencoder::{Autoencoder, AutoencoderConfig, EncoderClassifierConfig, HeadConfig};
pub use fcn::FcnConfig;
pub use inception::InceptionConfig;
pub use lstm::LstmConfig;

use crate::error::{Error, Result};
use crate::nn::checkpoint::{fingerprint, load_checkpoint, save_checkpoint};
use crate::nn::{sigmoid, softmax_rows, Layer, Mode, ParamStore, Tensor};
use crate::rng::derive_seed;

/// How logits turn into class probabilities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadMode {
    /// One sigmoid per class; classes are independent.
    #[default]
    MultiLabel,
    /// A two-way softmax (absent, present) for a single class. A full
    /// classifier then needs one network per class.
    SingleLabel { class_index: usize },
}

impl HeadMode {
    /// Width of the logit layer for `classes` classes.
    pub fn logits(self, classes: usize) -> usize {
        match self {
            HeadMode::MultiLabel => classes,
            HeadMode::SingleLabel { .. } => 2,
        }
    }

    fn validate(self, classes: usize) -> Result<()> {
        if classes == 0 {
            return Err(Error::config("class count must be >= 1"));
        }
        if let HeadMode::SingleLabel { class_index } = self {
            if class_index >= classes {
                return Err(Error::config(format!(
                    "class_index {class_index} out of range for {classes} classes"
                )));
            }
        }
        Ok(())
    }
}

/// Declarative description of any supported architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum ArchConfig {
    Fcn(FcnConfig),
    Lstm(LstmConfig),
    Inception(InceptionConfig),
    EncoderClassifier(EncoderClassifierConfig),
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            ArchConfig::Fcn(c) => c.validate(),
            ArchConfig::Lstm(c) => c.validate(),
            ArchConfig::Inception(c) => c.validate(),
            ArchConfig::EncoderClassifier(c) => c.validate(),
        }
    }

    pub fn input_channels(&self) -> usize {
        match self {
            ArchConfig::Fcn(c) => c.input_channels,
            ArchConfig::Lstm(c) => c.input_channels,
            ArchConfig::Inception(c) => c.input_channels,
            ArchConfig::EncoderClassifier(c) => c.encoder.input_channels,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            ArchConfig::Fcn(c) => c.classes,
            ArchConfig::Lstm(c) => c.classes,
            ArchConfig::Inception(c) => c.classes,
            ArchConfig::EncoderClassifier(c) => c.head.classes,
        }
    }

    pub fn head(&self) -> HeadMode {
        match self {
            ArchConfig::Fcn(c) => c.head,
            ArchConfig::Lstm(c) => c.head,
            ArchConfig::Inception(c) => c.head,
            ArchConfig::EncoderClassifier(c) => c.head.head,
        }
    }

    /// Same architecture with a different head mode.
    pub fn with_head(&self, head: HeadMode) -> ArchConfig {
        let mut out = self.clone();
        match &mut out {
            ArchConfig::Fcn(c) => c.head = head,
            ArchConfig::Lstm(c) => c.head = head,
            ArchConfig::Inception(c) => c.head = head,
            ArchConfig::EncoderClassifier(c) => c.head.head = head,
        }
        out
    }

    /// Number of independently initialized members a full model of this
    /// config holds (Inception ensembles, one network per class in
    /// single-label mode).
    pub fn ensemble_size(&self) -> usize {
        match self {
            ArchConfig::Inception(c) => c.ensemble,
            _ => 1,
        }
    }

    fn build_net(&self, store: &mut ParamStore, seed: u64) -> Result<Box<dyn Network>> {
        self.validate()?;
        Ok(match self {
            ArchConfig::Fcn(c) => Box::new(fcn::FcnNet::build(c, store, seed)),
            ArchConfig::Lstm(c) => Box::new(lstm::LstmNet::build(c, store, seed)?),
            ArchConfig::Inception(c) => Box::new(inception::InceptionNet::build(c, store, seed)),
            ArchConfig::EncoderClassifier(c) => Box::new(autoencoder::EncoderClassifierNet::build(c, store, seed)?),
        })
    }
}

/// A layer graph mapping `(N, C, L)` windows to logits.
pub trait Network: Layer + Send {
    /// Penultimate representation in eval mode (GAP output, last hidden
    /// state or latent), used for feature-space projections.
    fn features(&mut self, store: &mut ParamStore, x: &Tensor) -> Result<Tensor>;
}

/// A built network together with its parameters.
pub struct Classifier {
    pub config: ArchConfig,
    pub store: ParamStore,
    pub seed: u64,
    /// Optimizer steps taken so far.
    pub step: u64,
    net: Box<dyn Network>,
}

impl std::fmt::Debug for Classifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Classifier")
            .field("config", &self.config)
            .field("seed", &self.seed)
            .field("step", &self.step)
            .field("param_count", &self.store.param_count())
            .finish()
    }
}

impl Clone for Classifier {
    fn clone(&self) -> Self {
        let mut out = Classifier::build(&self.config, self.seed).expect("config was valid when built");
        out.store = self.store.clone();
        out.step = self.step;
        out
    }
}

/// Inference batch size; bounds peak memory without changing results.
const PREDICT_CHUNK: usize = 512;

impl Classifier {
    pub fn build(config: &ArchConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = config.build_net(&mut store, seed)?;
        Ok(Self {
            config: config.clone(),
            store,
            seed,
            step: 0,
            net,
        })
    }

    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }

    pub fn trainable_count(&self) -> usize {
        self.store.trainable_count()
    }

    pub fn head(&self) -> HeadMode {
        self.config.head()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.check_input(x)?;
        self.net.forward(&mut self.store, x, mode)
    }

    /// Backpropagates `d loss / d logits`, accumulating into the store's
    /// gradient buffers.
    pub fn backward(&mut self, dlogits: &Tensor) -> Result<()> {
        self.net.backward(&mut self.store, dlogits).map(|_| ())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, _) = x.dims3()?;
        if c != self.config.input_channels() {
            return Err(Error::shape(format!(
                "model expects {} input channels, got {c}",
                self.config.input_channels()
            )));
        }
        Ok(())
    }

    fn chunked(&mut self, x: &Tensor, mut f: impl FnMut(&mut Self, &Tensor) -> Result<Tensor>) -> Result<Tensor> {
        let n = x.rows();
        if n <= PREDICT_CHUNK {
            return f(self, x);
        }
        let mut parts = Vec::new();
        for start in (0..n).step_by(PREDICT_CHUNK) {
            let idx: Vec<usize> = (start..(start + PREDICT_CHUNK).min(n)).collect();
            parts.push(f(self, &x.select_rows(&idx))?);
        }
        Tensor::concat_rows(&parts)
    }

    /// Eval-mode logits.
    pub fn logits(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        self.chunked(x, |m, xb| m.net.forward(&mut m.store, xb, Mode::Eval))
    }

    /// Class probabilities of the network's own head: `(N, K)` for
    /// multi-label, `(N, 1)` (probability of presence) for single-label.
    pub fn head_proba(&mut self, x: &Tensor) -> Result<Tensor> {
        let z = self.logits(x)?;
        probabilities(self.head(), &z)
    }

    /// Eval-mode penultimate features.
    pub fn features(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        self.chunked(x, |m, xb| m.net.features(&mut m.store, xb))
    }

    pub fn architecture_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.config).expect("configs serialize")
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.architecture_json(), &self.store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.store, self.architecture_json(), self.seed, self.step)?;
        Ok(())
    }

    /// Loads a checkpoint. With `expected`, the checkpoint's fingerprint must
    /// match the fingerprint of that architecture.
    pub fn load(path: &Path, expected: Option<&ArchConfig>) -> Result<Self> {
        let (manifest, store) = load_checkpoint(path)?;
        let config: ArchConfig = serde_json::from_value(manifest.architecture.clone())
            .map_err(|e| Error::Checkpoint(format!("unreadable architecture: {e}")))?;
        let mut model = Classifier::build(&config, manifest.seed)?;
        if model.fingerprint() != manifest.fingerprint {
            return Err(Error::Checkpoint(format!(
                "checkpoint fingerprint {} does not match its architecture ({})",
                manifest.fingerprint,
                model.fingerprint()
            )));
        }
        if let Some(exp) = expected {
            let want = Classifier::build(exp, manifest.seed)?.fingerprint();
            if want != manifest.fingerprint {
                return Err(Error::Checkpoint(format!(
                    "architecture fingerprint mismatch: checkpoint {} vs config {want}",
                    manifest.fingerprint
                )));
            }
        }
        if store.metas() != model.store.metas() {
            return Err(Error::Checkpoint("buffer layout does not match architecture".into()));
        }
        model.store = store;
        model.step = manifest.step;
        Ok(model)
    }
}

/// Turns logits into head probabilities.
pub fn probabilities(head: HeadMode, logits: &Tensor) -> Result<Tensor> {
    match head {
        HeadMode::MultiLabel => Ok(logits.map(sigmoid)),
        HeadMode::SingleLabel { .. } => {
            let p = softmax_rows(logits)?;
            let n = p.rows();
            Tensor::from_vec(&[n, 1], p.data().chunks(2).map(|r| r[1]).collect())
        }
    }
}

/// Anything that maps windows to `(N, K)` class probabilities.
pub trait Predictor {
    fn classes(&self) -> usize;
    fn predict_proba(&mut self, x: &Tensor) -> Result<Tensor>;
}

/// A set of classifiers whose probabilities are averaged per class.
///
/// Multi-label members vote on every class; single-label members vote only
/// on their own class. This one type covers a plain model (one member), an
/// Inception ensemble, one network per class, and combinations.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub members: Vec<Classifier>,
}

impl Ensemble {
    /// Builds every member a config calls for. Member `i` uses seed
    /// `derive_seed(seed, i)`; a single multi-label member uses `seed`
    /// directly.
    pub fn build(config: &ArchConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let heads: Vec<HeadMode> = match config.head() {
            HeadMode::MultiLabel => vec![HeadMode::MultiLabel],
            HeadMode::SingleLabel { .. } => (0..config.classes())
                .map(|class_index| HeadMode::SingleLabel { class_index })
                .collect(),
        };
        let copies = config.ensemble_size();
        let total = copies * heads.len();
        let mut members = Vec::with_capacity(total);
        for _ in 0..copies {
            for h in &heads {
                let i = members.len();
                let s = if total == 1 { seed } else { derive_seed(seed, i as u64) };
                members.push(Classifier::build(&config.with_head(*h), s)?);
            }
        }
        Ok(Self { members })
    }

    pub fn single(model: Classifier) -> Self {
        Self { members: vec![model] }
    }

    pub fn param_count(&self) -> usize {
        self.members.iter().map(Classifier::param_count).sum()
    }

    /// Saves `member_<i>.json` (+ `.bin`) files into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, m) in self.members.iter().enumerate() {
            m.save(&dir.join(format!("member_{i}.json")))?;
        }
        Ok(())
    }

    /// Loads every `member_<i>.json` in `dir`, in index order.
    pub fn load(dir: &Path, expected: Option<&ArchConfig>) -> Result<Self> {
        let mut members = Vec::new();
        loop {
            let p = dir.join(format!("member_{}.json", members.len()));
            if !p.exists() {
                break;
            }
            let exp = expected.map(|e| {
                let head = members_head_hint(&p).unwrap_or(e.head());
                e.with_head(head)
            });
            members.push(Classifier::load(&p, exp.as_ref())?);
        }
        if members.is_empty() {
            return Err(Error::Checkpoint(format!("no member checkpoints in {}", dir.display())));
        }
        Ok(Self { members })
    }
}

/// Head mode recorded in a member manifest, so a multi-label config can be
/// checked against single-label members of the same architecture.
fn members_head_hint(path: &Path) -> Option<HeadMode> {
    let text = std::fs::read(path).ok()?;
    let v: serde_json::Value = serde_json::from_slice(&text).ok()?;
    let arch: ArchConfig = serde_json::from_value(v.get("architecture")?.clone()).ok()?;
    Some(arch.head())
}

impl Predictor for Classifier {
    fn classes(&self) -> usize {
        self.config.classes()
    }

    fn predict_proba(&mut self, x: &Tensor) -> Result<Tensor> {
        Ensemble::single(self.clone()).predict_proba(x)
    }
}

impl Predictor for Ensemble {
    fn classes(&self) -> usize {
        self.members.first().map_or(0, |m| m.config.classes())
    }

    fn predict_proba(&mut self, x: &Tensor) -> Result<Tensor> {
        let k = self.classes();
        let n = x.rows();
        let mut sum = vec![0.0; n * k];
        let mut votes = vec![0usize; k];
        for m in &mut self.members {
            let p = m.head_proba(x)?;
            match m.head() {
                HeadMode::MultiLabel => {
                    for (s, v) in sum.iter_mut().zip(p.data()) {
                        *s += v;
                    }
                    votes.iter_mut().for_each(|v| *v += 1);
                }
                HeadMode::SingleLabel { class_index } => {
                    for (b, v) in p.data().iter().enumerate() {
                        sum[b * k + class_index] += v;
                    }
                    votes[class_index] += 1;
                }
            }
        }
        if let Some(c) = votes.iter().position(|&v| v == 0) {
            return Err(Error::config(format!("no ensemble member predicts class {c}")));
        }
        for row in sum.chunks_mut(k) {
            for (s, &v) in row.iter_mut().zip(&votes) {
                *s /= v as f64;
            }
        }
        Tensor::from_vec(&[n, k], sum)
    }
}

// ---------------------------------------------------------------------------
// Channel-axis helpers shared by the builders.

/// Concatenates `(N, C_i, L)` tensors along the channel axis.
pub(crate) fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let (n, _, l) = parts[0].dims3()?;
    let mut cs = Vec::with_capacity(parts.len());
    for p in parts {
        let (pn, pc, pl) = p.dims3()?;
        if pn != n || pl != l {
            return Err(Error::shape("channel concat needs equal N and L"));
        }
        cs.push(pc);
    }
    let total: usize = cs.iter().sum();
    let mut out = Vec::with_capacity(n * total * l);
    for b in 0..n {
        for (p, &c) in parts.iter().zip(&cs) {
            out.extend_from_slice(&p.data()[b * c * l..(b + 1) * c * l]);
        }
    }
    Tensor::from_vec(&[n, total, l], out)
}

/// Inverse of [`concat_channels`].
pub(crate) fn split_channels(x: &Tensor, sizes: &[usize]) -> Result<Vec<Tensor>> {
    let (n, c, l) = x.dims3()?;
    if sizes.iter().sum::<usize>() != c {
        return Err(Error::shape("channel split sizes do not add up"));
    }
    let mut outs: Vec<Vec<f64>> = sizes.iter().map(|s| Vec::with_capacity(n * s * l)).collect();
    for b in 0..n {
        let mut off = 0;
        for (o, &s) in outs.iter_mut().zip(sizes) {
            o.extend_from_slice(&x.data()[(b * c + off) * l..(b * c + off + s) * l]);
            off += s;
        }
    }
    outs.into_iter()
        .zip(sizes)
        .map(|(d, &s)| Tensor::from_vec(&[n, s, l], d))
        .collect()
}

/// `(N, C, L) -> (N·L, C)`.
pub(crate) fn to_steps(x: &Tensor) -> Result<Tensor> {
    let (n, c, l) = x.dims3()?;
    let xd = x.data();
    let mut out = vec![0.0; n * l * c];
    for b in 0..n {
        for ci in 0..c {
            for t in 0..l {
                out[(b * l + t) * c + ci] = xd[(b * c + ci) * l + t];
            }
        }
    }
    Tensor::from_vec(&[n * l, c], out)
}

/// `(N·L, C) -> (N, C, L)`.
pub(crate) fn from_steps(x: &Tensor, n: usize, l: usize) -> Result<Tensor> {
    let (rows, c) = x.dims2()?;
    if rows != n * l {
        return Err(Error::shape("step count does not match N·L"));
    }
    let xd = x.data();
    let mut out = vec![0.0; n * c * l];
    for b in 0..n {
        for ci in 0..c {
            for t in 0..l {
                out[(b * c + ci) * l + t] = xd[(b * l + t) * c + ci];
            }
        }
    }
    Tensor::from_vec(&[n, c, l], out)
}
