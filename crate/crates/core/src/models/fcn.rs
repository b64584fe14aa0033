use serde::{Deserialize, Serialize};

use super::{HeadMode, Network};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm1d, Conv1d, Dense, GlobalAvgPool, Layer, Mode, ParamStore, Relu, Tensor};
use crate::rng::SeededRng;

/// Fully convolutional network: `conv → batch norm → relu` blocks, global
/// average pooling and a dense head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcnConfig {
    pub input_channels: usize,
    #[serde(default = "default_filters")]
    pub filters: Vec<usize>,
    #[serde(default = "default_kernels")]
    pub kernels: Vec<usize>,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default)]
    pub head: HeadMode,
}

fn default_filters() -> Vec<usize> {
    vec![128, 256, 128]
}

fn default_kernels() -> Vec<usize> {
    vec![8, 5, 3]
}

pub(super) fn default_classes() -> usize {
    2
}

impl FcnConfig {
    /// Three blocks of `{128, 256, 128}` filters with kernels `{8, 5, 3}`.
    pub fn standard(input_channels: usize, classes: usize) -> Self {
        Self {
            input_channels,
            filters: default_filters(),
            kernels: default_kernels(),
            classes,
            head: HeadMode::MultiLabel,
        }
    }

    pub fn new(input_channels: usize, filters: &[usize], kernels: &[usize], classes: usize) -> Self {
        Self {
            input_channels,
            filters: filters.to_vec(),
            kernels: kernels.to_vec(),
            classes,
            head: HeadMode::MultiLabel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.filters.is_empty() || self.filters.len() != self.kernels.len() {
            return Err(Error::config(format!(
                "fcn needs equally long, non-empty filter and kernel lists (got {} and {})",
                self.filters.len(),
                self.kernels.len()
            )));
        }
        if self.input_channels == 0 || self.filters.contains(&0) || self.kernels.contains(&0) {
            return Err(Error::config("fcn channel, filter and kernel sizes must be >= 1"));
        }
        self.head.validate(self.classes)
    }
}

pub(super) struct FcnNet {
    blocks: Vec<(Conv1d, BatchNorm1d, Relu)>,
    gap: GlobalAvgPool,
    dense: Dense,
}

impl FcnNet {
    pub(super) fn build(cfg: &FcnConfig, store: &mut ParamStore, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let mut c = cfg.input_channels;
        let mut blocks = Vec::new();
        for (i, (&f, &k)) in cfg.filters.iter().zip(&cfg.kernels).enumerate() {
            blocks.push((
                Conv1d::new(store, &format!("block{i}.conv"), c, f, k, &mut rng),
                BatchNorm1d::new(store, &format!("block{i}.bn"), f),
                Relu::new(),
            ));
            c = f;
        }
        let dense = Dense::new(store, "head", c, cfg.head.logits(cfg.classes), &mut rng);
        Self {
            blocks,
            gap: GlobalAvgPool::new(),
            dense,
        }
    }

    fn trunk(&mut self, store: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut h = x.clone();
        for (conv, bn, relu) in &mut self.blocks {
            h = conv.forward(store, &h, mode)?;
            h = bn.forward(store, &h, mode)?;
            h = relu.forward(store, &h, mode)?;
        }
        self.gap.forward(store, &h, mode)
    }
}

impl Layer for FcnNet {
    fn forward(&mut self, store: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let h = self.trunk(store, x, mode)?;
        self.dense.forward(store, &h, mode)
    }

    fn backward(&mut self, store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let mut g = self.dense.backward(store, dy)?;
        g = self.gap.backward(store, &g)?;
        for (conv, bn, relu) in self.blocks.iter_mut().rev() {
            g = relu.backward(store, &g)?;
            g = bn.backward(store, &g)?;
            g = conv.backward(store, &g)?;
        }
        Ok(g)
    }
}

impl Network for FcnNet {
    fn features(&mut self, store: &mut ParamStore, x: &Tensor) -> Result<Tensor> {
        self.trunk(store, x, Mode::Eval)
    }
}
