use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sensorclf::data::{ColumnSchema, EdgePolicy};
use sensorclf::models::{ArchConfig, AutoencoderConfig, FcnConfig, HeadConfig};
use sensorclf::pipeline::{PrepareConfig, ScalerKind, SplitMode, SplitSpec, WindowSpec, DEFAULT_MAX_GAP_SECS};
use sensorclf::synth::ScenarioConfig;
use sensorclf::train::{SearchSpace, TimelineOptions, TrainConfig, DEFAULT_THRESHOLD};
use sensorclf::SENSOR_CHANNELS;

use crate::error::CliError;

/// Where `pca` takes its input vectors from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaSource {
    /// Flattened `(C, L)` windows.
    #[default]
    Raw,
    /// Penultimate features of a trained model (needs `checkpoint`).
    Features,
}

/// Every knob of every command. Each command reads the keys it needs; the
/// rest keep their defaults. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Global seed, copied into every seeded section.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// CSV frame, window set header or track, depending on the command.
    pub input: Option<PathBuf>,
    /// Unlabeled CSV frames for autoencoder pretraining; a directory in
    /// `input` stands for all CSV files inside it.
    pub inputs: Vec<PathBuf>,
    /// Output directory of `split` (train/valid/test windows and scaler).
    pub data: Option<PathBuf>,
    /// Model directory, autoencoder checkpoint or model file.
    pub checkpoint: Option<PathBuf>,
    /// `features.json` from `select-features`; selection runs inline when unset.
    pub feature_set: Option<PathBuf>,
    pub schema: ColumnSchema,
    pub scenario: ScenarioConfig,
    pub edge_policy: EdgePolicy,
    pub pair_threshold: f64,
    pub window: WindowSpec,
    pub max_gap: i64,
    /// `None` keeps every window.
    pub undersample_k: Option<usize>,
    pub split: SplitSpec,
    /// Time-separated mode: trailing test share (unless `split.cut` is set)
    /// and validation share of the training windows.
    pub test_fraction: f64,
    pub valid_fraction: f64,
    pub scaler: ScalerKind,
    /// Defaults to the compact FCN; input channels follow the data.
    pub model: Option<ArchConfig>,
    pub train: TrainConfig,
    /// Defaults to the grid of the model family.
    pub search: Option<SearchSpace>,
    pub trials: usize,
    pub autoencoder: AutoencoderConfig,
    pub head: HeadConfig,
    /// Share of the labeled training windows the head trains on.
    pub labeled_fraction: f64,
    pub threshold: f64,
    pub smoothing_width: usize,
    pub pca_source: PcaSource,
}

impl Default for RunConfig {
    fn default() -> Self {
        let prep = PrepareConfig::default();
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            input: None,
            inputs: Vec::new(),
            data: None,
            checkpoint: None,
            feature_set: None,
            schema: ColumnSchema::default(),
            scenario: ScenarioConfig::default(),
            edge_policy: EdgePolicy::Trim,
            pair_threshold: prep.pair_threshold,
            window: WindowSpec::default(),
            max_gap: DEFAULT_MAX_GAP_SECS,
            undersample_k: prep.undersample_k,
            split: SplitSpec::default(),
            test_fraction: prep.test_fraction,
            valid_fraction: prep.valid_fraction,
            scaler: ScalerKind::Standard,
            model: None,
            train: TrainConfig::default(),
            search: None,
            trials: 10,
            autoencoder: AutoencoderConfig::new(SENSOR_CHANNELS.len(), 10, WindowSpec::default().length),
            head: HeadConfig::default(),
            labeled_fraction: 0.1,
            threshold: DEFAULT_THRESHOLD,
            smoothing_width: 3,
            pca_source: PcaSource::Raw,
        }
    }
}

pub fn default_model(channels: usize) -> ArchConfig {
    ArchConfig::Fcn(FcnConfig::new(channels, &[32, 8], &[5, 3], 2))
}

/// The same architecture reading `channels` input channels.
pub fn with_channels(arch: &ArchConfig, channels: usize) -> ArchConfig {
    let mut out = arch.clone();
    match &mut out {
        ArchConfig::Fcn(c) => c.input_channels = channels,
        ArchConfig::Lstm(c) => c.input_channels = channels,
        ArchConfig::Inception(c) => c.input_channels = channels,
        ArchConfig::EncoderClassifier(c) => c.encoder.input_channels = channels,
    }
    out
}

impl RunConfig {
    /// Reads a JSON config; unknown keys fail with the key's name.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Copies the global seed into every seeded section.
    pub fn resolve(mut self) -> Self {
        self.scenario.seed = self.seed;
        self.split.seed = self.seed;
        self.train.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |key: &str, r: sensorclf::Result<()>| r.map_err(|e| CliError::Config(format!("{key}: {e}")));
        wrap("scenario", self.scenario.validate())?;
        wrap("train", self.train.validate())?;
        wrap("autoencoder", self.autoencoder.validate())?;
        wrap("prepare", self.prepare().validate())?;
        if let Some(m) = &self.model {
            wrap("model", with_channels(m, m.input_channels().max(1)).validate())?;
        }
        if let Some(s) = &self.search {
            wrap("search", s.validate())?;
        }
        let checks = [
            ("window.length", self.window.length >= 1),
            ("window.stride", self.window.stride >= 1),
            ("max_gap", self.max_gap >= 1),
            ("trials", self.trials >= 1),
            (
                "labeled_fraction",
                self.labeled_fraction > 0.0 && self.labeled_fraction <= 1.0,
            ),
            ("threshold", self.threshold > 0.0 && self.threshold < 1.0),
            ("smoothing_width", self.smoothing_width >= 1),
            (
                "split.ratios",
                self.split.ratios.iter().all(|r| *r > 0.0)
                    && (self.split.ratios.iter().sum::<f64>() - 1.0).abs() < 1e-9,
            ),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((key, _)) => Err(CliError::Config(format!("{key}: value out of range"))),
            None => Ok(()),
        }
    }

    pub fn prepare(&self) -> PrepareConfig {
        PrepareConfig {
            pair_threshold: self.pair_threshold,
            undersample_k: self.undersample_k,
            window: self.window,
            max_gap: self.max_gap,
            test_fraction: self.test_fraction,
            cut: self.split.cut,
            valid_fraction: self.valid_fraction,
            scaler: self.scaler,
            edge_policy: self.edge_policy,
            seed: self.seed,
        }
    }

    pub fn time_separated(&self) -> bool {
        self.split.mode == SplitMode::TimeSeparatedBeforeSegmentation
    }

    pub fn timeline(&self) -> TimelineOptions {
        TimelineOptions {
            window: self.window,
            max_gap: self.max_gap,
            threshold: self.threshold,
        }
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("{key}: required by this command")))
    }
}
