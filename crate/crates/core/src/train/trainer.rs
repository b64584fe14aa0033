use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{probabilities, Autoencoder, Classifier, Ensemble, HeadMode};
use crate::nn::{bce_with_logits, cosine_lr, mse, softmax_cross_entropy, AdamState, Mode, Tensor};
use crate::par;
use crate::pipeline::{split_train_valid, WindowSet};
use crate::rng::{derive_seed, SeededRng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Cosine,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStopping {
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_min_delta")]
    pub min_delta: f64,
}

fn default_patience() -> usize {
    10
}

fn default_min_delta() -> f64 {
    1e-4
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self {
            patience: default_patience(),
            min_delta: default_min_delta(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr_max")]
    pub lr_max: f64,
    #[serde(default = "default_lr_min")]
    pub lr_min: f64,
    #[serde(default)]
    pub schedule: Schedule,
    /// `None` trains for every epoch; best weights are restored either way.
    #[serde(default = "default_early")]
    pub early_stopping: Option<EarlyStopping>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub shuffle: bool,
}

fn default_epochs() -> usize {
    100
}

fn default_batch() -> usize {
    64
}

fn default_lr_max() -> f64 {
    1e-2
}

fn default_lr_min() -> f64 {
    1e-4
}

fn default_early() -> Option<EarlyStopping> {
    Some(EarlyStopping::default())
}

fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            lr_max: default_lr_max(),
            lr_min: default_lr_min(),
            schedule: Schedule::Cosine,
            early_stopping: default_early(),
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if !(self.lr_max > 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr_max) {
            return Err(Error::config(format!(
                "learning rates need 0 <= lr_min <= lr_max and lr_max > 0 (got {} / {})",
                self.lr_min, self.lr_max
            )));
        }
        if let Some(es) = &self.early_stopping {
            if es.patience == 0 {
                return Err(Error::config("early_stopping.patience must be >= 1"));
            }
            if !(es.min_delta >= 0.0) {
                return Err(Error::config("early_stopping.min_delta must be >= 0"));
            }
        }
        Ok(())
    }

    fn lr(&self, step: usize, total: usize) -> f64 {
        match self.schedule {
            Schedule::Cosine => cosine_lr(step, total, self.lr_max, self.lr_min),
            Schedule::Constant => self.lr_max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Element-wise accuracy on the validation set (classifiers only).
    pub valid_accuracy: Option<f64>,
    pub lr: f64,
    /// Lowest validation loss seen up to and including this epoch.
    pub best_valid_loss: f64,
}

/// Wall-clock data, kept apart so the rest of a report is reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub epoch_seconds: Vec<f64>,
    pub total_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub meta: RunMeta,
}

impl History {
    #[allow(clippy::misnamed_getters)]
    pub fn best_valid_loss(&self) -> f64 {
        self.epochs[self.best_epoch - 1].valid_loss
    }

    /// The history without its timing block.
    pub fn normalized(&self) -> History {
        History {
            meta: RunMeta::default(),
            ..self.clone()
        }
    }
}

/// What the generic loop needs from a trainable model.
trait Trainee {
    fn store(&mut self) -> &mut crate::nn::ParamStore;
    fn step_counter(&mut self) -> &mut u64;
    /// Loss and gradient on a batch; also writes parameter gradients.
    fn train_batch(&mut self, x: &Tensor, y: &Target) -> Result<f64>;
    /// Eval-mode loss and optional accuracy over a whole set.
    fn evaluate(&mut self, x: &Tensor, y: &Target) -> Result<(f64, Option<f64>)>;
}

enum Target {
    Labels(Tensor),
    Classes(Vec<usize>),
    Reconstruct,
}

impl Target {
    fn select(&self, idx: &[usize]) -> Target {
        match self {
            Target::Labels(t) => Target::Labels(t.select_rows(idx)),
            Target::Classes(c) => Target::Classes(idx.iter().map(|&i| c[i]).collect()),
            Target::Reconstruct => Target::Reconstruct,
        }
    }
}

fn classifier_loss(head: HeadMode, logits: &Tensor, y: &Target) -> Result<(f64, Tensor)> {
    match (head, y) {
        (HeadMode::MultiLabel, Target::Labels(t)) => bce_with_logits(logits, t),
        (HeadMode::SingleLabel { .. }, Target::Classes(c)) => softmax_cross_entropy(logits, c),
        _ => Err(Error::config("target kind does not match head mode")),
    }
}

/// Element-wise accuracy of decisions at 0.5.
fn accuracy(head: HeadMode, logits: &Tensor, y: &Target) -> Result<f64> {
    let p = probabilities(head, logits)?;
    let (hits, total) = match y {
        Target::Labels(t) => (
            p.data()
                .iter()
                .zip(t.data())
                .filter(|(p, t)| (**p >= 0.5) == (**t >= 0.5))
                .count(),
            t.len(),
        ),
        Target::Classes(c) => (
            p.data()
                .iter()
                .zip(c)
                .filter(|(p, c)| (**p >= 0.5) == (**c == 1))
                .count(),
            c.len(),
        ),
        Target::Reconstruct => return Err(Error::config("no accuracy for reconstruction")),
    };
    Ok(hits as f64 / total.max(1) as f64)
}

impl Trainee for Classifier {
    fn store(&mut self) -> &mut crate::nn::ParamStore {
        &mut self.store
    }

    fn step_counter(&mut self) -> &mut u64 {
        &mut self.step
    }

    fn train_batch(&mut self, x: &Tensor, y: &Target) -> Result<f64> {
        let logits = self.forward(x, Mode::Train)?;
        let (loss, grad) = classifier_loss(self.head(), &logits, y)?;
        if loss.is_finite() {
            self.backward(&grad)?;
        }
        Ok(loss)
    }

    fn evaluate(&mut self, x: &Tensor, y: &Target) -> Result<(f64, Option<f64>)> {
        let logits = self.logits(x)?;
        let (loss, _) = classifier_loss(self.head(), &logits, y)?;
        Ok((loss, Some(accuracy(self.head(), &logits, y)?)))
    }
}

impl Trainee for Autoencoder {
    fn store(&mut self) -> &mut crate::nn::ParamStore {
        &mut self.store
    }

    fn step_counter(&mut self) -> &mut u64 {
        &mut self.step
    }

    fn train_batch(&mut self, x: &Tensor, _y: &Target) -> Result<f64> {
        let out = self.forward(x, Mode::Train)?;
        let (loss, grad) = mse(&out, x)?;
        if loss.is_finite() {
            self.backward(&grad)?;
        }
        Ok(loss)
    }

    fn evaluate(&mut self, x: &Tensor, _y: &Target) -> Result<(f64, Option<f64>)> {
        Ok((reconstruction_mse(self, x)?, None))
    }
}

/// Mean squared reconstruction error over a set, in eval mode.
pub fn reconstruction_mse(ae: &mut Autoencoder, x: &Tensor) -> Result<f64> {
    let n = x.rows();
    let mut sum = 0.0;
    for start in (0..n).step_by(512) {
        let idx: Vec<usize> = (start..(start + 512).min(n)).collect();
        let xb = x.select_rows(&idx);
        let (l, _) = mse(&ae.reconstruct(&xb)?, &xb)?;
        sum += l * xb.len() as f64;
    }
    Ok(sum / x.len().max(1) as f64)
}

fn run<M: Trainee>(
    model: &mut M,
    train_x: &Tensor,
    train_y: &Target,
    valid_x: &Tensor,
    valid_y: &Target,
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    let n = train_x.rows();
    if n == 0 || valid_x.rows() == 0 {
        return Err(Error::config("training and validation sets must be non-empty"));
    }
    let started = Instant::now();
    let per_epoch = n.div_ceil(cfg.batch_size);
    let total = cfg.epochs * per_epoch;
    let mut adam = AdamState::new(model.store());
    let mut epochs = Vec::new();
    let mut meta = RunMeta::default();
    let mut best: Option<(f64, usize, Vec<Vec<f64>>)> = None;
    let mut stale = 0;
    let mut stopped_early = false;
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        let order = if cfg.shuffle {
            SeededRng::new(derive_seed(cfg.seed, epoch as u64)).permutation(n)
        } else {
            (0..n).collect()
        };
        let mut loss_sum = 0.0;
        let mut lr = cfg.lr(step, total);
        for batch in order.chunks(cfg.batch_size) {
            lr = cfg.lr(step, total);
            let xb = train_x.select_rows(batch);
            let loss = model.train_batch(&xb, &train_y.select(batch))?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite training loss in epoch {epoch}")));
            }
            adam.step(model.store(), lr)
                .map_err(|e| Error::Diverged(format!("epoch {epoch}: {e}")))?;
            *model.step_counter() += 1;
            loss_sum += loss * batch.len() as f64;
            step += 1;
        }
        let (valid_loss, valid_accuracy) = model.evaluate(valid_x, valid_y)?;
        if !valid_loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite validation loss in epoch {epoch}")));
        }
        let improved = match &best {
            None => true,
            Some((b, _, _)) => {
                let delta = cfg.early_stopping.as_ref().map_or(0.0, |e| e.min_delta);
                valid_loss < b - delta
            }
        };
        if improved {
            best = Some((valid_loss, epoch, model.store().snapshot()));
            stale = 0;
        } else {
            stale += 1;
        }
        let best_valid_loss = epochs
            .last()
            .map_or(valid_loss, |r: &EpochRecord| r.best_valid_loss.min(valid_loss));
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            valid_loss,
            valid_accuracy,
            lr,
            best_valid_loss,
        });
        meta.epoch_seconds.push(t0.elapsed().as_secs_f64());
        if let Some(es) = &cfg.early_stopping {
            if stale > es.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (_, best_epoch, snapshot) = best.expect("at least one epoch ran");
    model.store().restore(&snapshot)?;
    model.store().zero_grads();
    meta.total_seconds = started.elapsed().as_secs_f64();
    Ok(History {
        epochs,
        best_epoch,
        stopped_early,
        meta,
    })
}

fn targets_for(head: HeadMode, set: &WindowSet) -> Target {
    match head {
        HeadMode::MultiLabel => Target::Labels(set.targets()),
        HeadMode::SingleLabel { class_index } => {
            let k = set.classes();
            Target::Classes(set.y.chunks(k).map(|r| usize::from(r[class_index])).collect())
        }
    }
}

fn check_schema(model: &Classifier, set: &WindowSet, what: &str) -> Result<()> {
    if set.channels() != model.config.input_channels() {
        return Err(Error::shape(format!(
            "{what} windows have {} channels, model expects {}",
            set.channels(),
            model.config.input_channels()
        )));
    }
    if set.classes() != model.config.classes() {
        return Err(Error::shape(format!(
            "{what} windows have {} classes, model expects {}",
            set.classes(),
            model.config.classes()
        )));
    }
    Ok(())
}

/// Mini-batch training with Adam, the configured schedule and early
/// stopping on validation loss. The best epoch's weights are restored.
pub fn train_classifier(
    model: &mut Classifier,
    train: &WindowSet,
    valid: &WindowSet,
    cfg: &TrainConfig,
) -> Result<History> {
    check_schema(model, train, "training")?;
    check_schema(model, valid, "validation")?;
    let head = model.head();
    run(
        model,
        &train.x,
        &targets_for(head, train),
        &valid.x,
        &targets_for(head, valid),
        cfg,
    )
}

/// Trains every member independently. Member `i` shuffles with
/// `derive_seed(cfg.seed, i)` when the ensemble has more than one member.
pub fn train_ensemble(
    model: &mut Ensemble,
    train: &WindowSet,
    valid: &WindowSet,
    cfg: &TrainConfig,
) -> Result<Vec<History>> {
    let single = model.members.len() == 1;
    par::map_mut(&mut model.members, |i, m| {
        let mut c = cfg.clone();
        if !single {
            c.seed = derive_seed(cfg.seed, i as u64);
        }
        train_classifier(m, train, valid, &c)
    })
    .into_iter()
    .collect()
}

/// Reconstruction training on unlabeled windows; 10% of them, chosen with
/// the config seed, are held out for validation and early stopping.
pub fn train_autoencoder(model: &mut Autoencoder, windows: &WindowSet, cfg: &TrainConfig) -> Result<History> {
    let (train, valid) = split_train_valid(windows, 0.1, cfg.seed)?;
    run(
        model,
        &train.x,
        &Target::Reconstruct,
        &valid.x,
        &Target::Reconstruct,
        cfg,
    )
}
