use serde::{Deserialize, Serialize};

use super::fcn::default_classes;
use super::{concat_channels, split_channels, HeadMode, Network};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm1d, Conv1d, Dense, GlobalAvgPool, Layer, MaxPool3, Mode, ParamStore, Relu, Tensor};
use crate::rng::SeededRng;

/// Inception network: stacked multi-scale modules with a residual shortcut
/// around every three of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InceptionConfig {
    pub input_channels: usize,
    /// Filters per branch (`nf`).
    #[serde(default = "default_32")]
    pub filters: usize,
    /// Bottleneck width (`m`).
    #[serde(default = "default_32")]
    pub bottleneck: usize,
    #[serde(default = "default_kernels")]
    pub kernels: Vec<usize>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default)]
    pub head: HeadMode,
}

fn default_32() -> usize {
    32
}

fn default_kernels() -> Vec<usize> {
    vec![10, 20, 40]
}

fn default_depth() -> usize {
    6
}

fn default_ensemble() -> usize {
    5
}

impl InceptionConfig {
    pub fn standard(input_channels: usize, classes: usize) -> Self {
        Self {
            input_channels,
            filters: 32,
            bottleneck: 32,
            kernels: default_kernels(),
            depth: 6,
            ensemble: 5,
            classes,
            head: HeadMode::MultiLabel,
        }
    }

    /// Channels leaving every module: one `nf`-wide output per branch plus
    /// the pooling branch.
    pub fn module_channels(&self) -> usize {
        (self.kernels.len() + 1) * self.filters
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || !self.depth.is_multiple_of(3) {
            return Err(Error::config(format!(
                "inception depth must be a positive multiple of 3, got {}",
                self.depth
            )));
        }
        if self.ensemble == 0 {
            return Err(Error::config("inception ensemble size must be >= 1"));
        }
        if self.input_channels == 0
            || self.filters == 0
            || self.bottleneck == 0
            || self.kernels.is_empty()
            || self.kernels.contains(&0)
        {
            return Err(Error::config(
                "inception sizes and kernel list must be non-empty and >= 1",
            ));
        }
        self.head.validate(self.classes)
    }
}

struct Module {
    bottleneck: Conv1d,
    branches: Vec<Conv1d>,
    pool: MaxPool3,
    pool_conv: Conv1d,
    bn: BatchNorm1d,
    relu: Relu,
    widths: Vec<usize>,
}

impl Module {
    fn new(store: &mut ParamStore, name: &str, cfg: &InceptionConfig, input: usize, rng: &mut SeededRng) -> Self {
        let nf = cfg.filters;
        let bottleneck = Conv1d::new(store, &format!("{name}.bottleneck"), input, cfg.bottleneck, 1, rng);
        let branches = cfg
            .kernels
            .iter()
            .enumerate()
            .map(|(i, &k)| Conv1d::new(store, &format!("{name}.branch{i}"), cfg.bottleneck, nf, k, rng))
            .collect();
        let pool_conv = Conv1d::new(store, &format!("{name}.pool_conv"), input, nf, 1, rng);
        let bn = BatchNorm1d::new(store, &format!("{name}.bn"), cfg.module_channels());
        Self {
            bottleneck,
            branches,
            pool: MaxPool3::new(),
            pool_conv,
            bn,
            relu: Relu::new(),
            widths: vec![nf; cfg.kernels.len() + 1],
        }
    }

    fn forward(&mut self, store: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let b = self.bottleneck.forward(store, x, mode)?;
        let mut outs = Vec::with_capacity(self.branches.len() + 1);
        for conv in &mut self.branches {
            outs.push(conv.forward(store, &b, mode)?);
        }
        let p = self.pool.forward(store, x, mode)?;
        outs.push(self.pool_conv.forward(store, &p, mode)?);
        let cat = concat_channels(&outs.iter().collect::<Vec<_>>())?;
        let h = self.bn.forward(store, &cat, mode)?;
        self.relu.forward(store, &h, mode)
    }

    fn backward(&mut self, store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let g = self.relu.backward(store, dy)?;
        let g = self.bn.backward(store, &g)?;
        let parts = split_channels(&g, &self.widths)?;
        let (pool_part, branch_parts) = parts.split_last().expect("at least one branch");
        let mut db: Option<Tensor> = None;
        for (conv, part) in self.branches.iter_mut().zip(branch_parts) {
            let d = conv.backward(store, part)?;
            match &mut db {
                Some(acc) => acc.add_assign(&d)?,
                None => db = Some(d),
            }
        }
        let mut dx = self.bottleneck.backward(store, &db.expect("at least one branch"))?;
        let dp = self.pool_conv.backward(store, pool_part)?;
        dx.add_assign(&self.pool.backward(store, &dp)?)?;
        Ok(dx)
    }
}

/// Shortcut around a block of three modules: kernel-1 conv plus batch norm
/// when channel counts differ, identity otherwise.
struct Shortcut {
    proj: Option<(Conv1d, BatchNorm1d)>,
    relu: Relu,
}

impl Shortcut {
    fn forward(&mut self, store: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match &mut self.proj {
            Some((conv, bn)) => {
                let h = conv.forward(store, x, mode)?;
                bn.forward(store, &h, mode)
            }
            None => Ok(x.clone()),
        }
    }

    fn backward(&mut self, store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        match &mut self.proj {
            Some((conv, bn)) => {
                let g = bn.backward(store, dy)?;
                conv.backward(store, &g)
            }
            None => Ok(dy.clone()),
        }
    }
}

pub(super) struct InceptionNet {
    modules: Vec<Module>,
    shortcuts: Vec<Shortcut>,
    gap: GlobalAvgPool,
    dense: Dense,
}

impl InceptionNet {
    pub(super) fn build(cfg: &InceptionConfig, store: &mut ParamStore, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let out = cfg.module_channels();
        let mut modules = Vec::with_capacity(cfg.depth);
        let mut shortcuts = Vec::with_capacity(cfg.depth / 3);
        let mut block_in = cfg.input_channels;
        for i in 0..cfg.depth {
            let input = if i % 3 == 0 { block_in } else { out };
            modules.push(Module::new(store, &format!("module{i}"), cfg, input, &mut rng));
            if i % 3 == 2 {
                let j = i / 3;
                let proj = (block_in != out).then(|| {
                    (
                        Conv1d::new(store, &format!("shortcut{j}.conv"), block_in, out, 1, &mut rng),
                        BatchNorm1d::new(store, &format!("shortcut{j}.bn"), out),
                    )
                });
                shortcuts.push(Shortcut {
                    proj,
                    relu: Relu::new(),
                });
                block_in = out;
            }
        }
        let dense = Dense::new(store, "head", out, cfg.head.logits(cfg.classes), &mut rng);
        Self {
            modules,
            shortcuts,
            gap: GlobalAvgPool::new(),
            dense,
        }
    }

    fn trunk(&mut self, store: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut h = x.clone();
        let mut block_in = x.clone();
        for (i, m) in self.modules.iter_mut().enumerate() {
            h = m.forward(store, &h, mode)?;
            if i % 3 == 2 {
                let sc = &mut self.shortcuts[i / 3];
                let s = sc.forward(store, &block_in, mode)?;
                h.add_assign(&s)?;
                h = sc.relu.forward(store, &h, mode)?;
                block_in = h.clone();
            }
        }
        self.gap.forward(store, &h, mode)
    }
}

impl Layer for InceptionNet {
    fn forward(&mut self, store: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let h = self.trunk(store, x, mode)?;
        self.dense.forward(store, &h, mode)
    }

    fn backward(&mut self, store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let g = self.dense.backward(store, dy)?;
        let mut g = self.gap.backward(store, &g)?;
        let mut pending: Option<Tensor> = None;
        for i in (0..self.modules.len()).rev() {
            if i % 3 == 2 {
                let sc = &mut self.shortcuts[i / 3];
                g = sc.relu.backward(store, &g)?;
                pending = Some(sc.backward(store, &g)?);
            }
            g = self.modules[i].backward(store, &g)?;
            if i % 3 == 0 {
                if let Some(p) = pending.take() {
                    g.add_assign(&p)?;
                }
            }
        }
        Ok(g)
    }
}

impl Network for InceptionNet {
    fn features(&mut self, store: &mut ParamStore, x: &Tensor) -> Result<Tensor> {
        self.trunk(store, x, Mode::Eval)
    }
}
