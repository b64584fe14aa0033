use serde::{Deserialize, Serialize};

use super::fcn::default_classes;
use super::{HeadMode, Network};
use crate::error::{Error, Result};
use crate::nn::{Dense, Dropout, Layer, Lstm, LstmOutput, Mode, ParamStore, Tensor};
use crate::rng::{derive_seed, SeededRng};

/// One recurrent layer read at its last step, dropout, and a dense head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmConfig {
    pub input_channels: usize,
    pub hidden: usize,
    #[serde(default)]
    pub bidirectional: bool,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default)]
    pub head: HeadMode,
}

impl LstmConfig {
    pub fn new(input_channels: usize, hidden: usize, bidirectional: bool, dropout: f64, classes: usize) -> Self {
        Self {
            input_channels,
            hidden,
            bidirectional,
            dropout,
            classes,
            head: HeadMode::MultiLabel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 {
            return Err(Error::config("lstm input_channels must be >= 1"));
        }
        if self.hidden == 0 {
            return Err(Error::config("lstm hidden must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "lstm dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        self.head.validate(self.classes)
    }
}

pub(super) struct LstmNet {
    lstm: Lstm,
    dropout: Dropout,
    dense: Dense,
}

/// Stream index for the dropout masks, kept apart from weight init.
const DROPOUT_STREAM: u64 = 0xD0;

impl LstmNet {
    pub(super) fn build(cfg: &LstmConfig, store: &mut ParamStore, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        let lstm = Lstm::new(
            store,
            "lstm",
            cfg.input_channels,
            cfg.hidden,
            cfg.bidirectional,
            LstmOutput::Last,
            &mut rng,
        )?;
        let dense = Dense::new(
            store,
            "head",
            lstm.output_channels(),
            cfg.head.logits(cfg.classes),
            &mut rng,
        );
        Ok(Self {
            lstm,
            dropout: Dropout::new(cfg.dropout, derive_seed(seed, DROPOUT_STREAM))?,
            dense,
        })
    }
}

impl Layer for LstmNet {
    fn forward(&mut self, store: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let h = self.lstm.forward(store, x, mode)?;
        let h = self.dropout.forward(store, &h, mode)?;
        self.dense.forward(store, &h, mode)
    }

    fn backward(&mut self, store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let g = self.dense.backward(store, dy)?;
        let g = self.dropout.backward(store, &g)?;
        self.lstm.backward(store, &g)
    }
}

impl Network for LstmNet {
    fn features(&mut self, store: &mut ParamStore, x: &Tensor) -> Result<Tensor> {
        self.lstm.forward(store, x, Mode::Eval)
    }
}
