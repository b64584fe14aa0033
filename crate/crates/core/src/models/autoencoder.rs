use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fcn::default_classes;
use super::{from_steps, to_steps, Classifier, HeadMode, Network};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{fingerprint, load_checkpoint, save_checkpoint};
use crate::nn::{Dense, Layer, Lstm, LstmOutput, Mode, ParamStore, Relu, Tensor};
use crate::rng::SeededRng;

/// Recurrent sequence autoencoder.
///
/// The encoder stacks LSTMs of sizes `hidden..., latent` and keeps the last
/// hidden state of the final layer. The decoder repeats the latent vector
/// over `length` steps, runs LSTMs of sizes `latent, reversed(hidden)...`
/// and maps every step back to the input channels with a dense layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderConfig {
    #[serde(default = "default_channels")]
    pub input_channels: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    pub latent: usize,
    #[serde(default = "default_length")]
    pub length: usize,
}

fn default_channels() -> usize {
    crate::SENSOR_CHANNELS.len()
}

fn default_hidden() -> Vec<usize> {
    vec![128, 64]
}

fn default_length() -> usize {
    7
}

impl AutoencoderConfig {
    pub fn new(input_channels: usize, latent: usize, length: usize) -> Self {
        Self {
            input_channels,
            hidden: default_hidden(),
            latent,
            length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.latent == 0 || self.length == 0 || self.hidden.contains(&0) {
            return Err(Error::config("autoencoder sizes must be >= 1"));
        }
        Ok(())
    }

    fn encoder_sizes(&self) -> Vec<usize> {
        let mut s = self.hidden.clone();
        s.push(self.latent);
        s
    }

    fn decoder_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.latent];
        s.extend(self.hidden.iter().rev());
        s
    }
}

/// Dense head on top of a frozen encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    #[serde(default = "default_head_hidden")]
    pub hidden: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default)]
    pub head: HeadMode,
    /// Expected latent width; checked against the encoder when set.
    #[serde(default)]
    pub input: Option<usize>,
}

fn default_head_hidden() -> usize {
    100
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            hidden: default_head_hidden(),
            classes: default_classes(),
            head: HeadMode::MultiLabel,
            input: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderClassifierConfig {
    pub encoder: AutoencoderConfig,
    #[serde(default)]
    pub head: HeadConfig,
}

impl EncoderClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.head.hidden == 0 {
            return Err(Error::config("head hidden must be >= 1"));
        }
        if let Some(input) = self.head.input {
            if input != self.encoder.latent {
                return Err(Error::config(format!(
                    "head expects latent size {input}, encoder produces {}",
                    self.encoder.latent
                )));
            }
        }
        self.head.head.validate(self.head.classes)
    }
}

pub(super) const ENCODER_PREFIX: &str = "encoder.";

fn build_encoder(cfg: &AutoencoderConfig, store: &mut ParamStore, rng: &mut SeededRng) -> Result<Vec<Lstm>> {
    let sizes = cfg.encoder_sizes();
    let mut input = cfg.input_channels;
    let mut layers = Vec::with_capacity(sizes.len());
    for (i, &h) in sizes.iter().enumerate() {
        let output = if i + 1 == sizes.len() {
            LstmOutput::Last
        } else {
            LstmOutput::Sequence
        };
        layers.push(Lstm::new(
            store,
            &format!("{ENCODER_PREFIX}lstm{i}"),
            input,
            h,
            false,
            output,
            rng,
        )?);
        input = h;
    }
    Ok(layers)
}

fn run_encoder(layers: &mut [Lstm], store: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
    let mut h = x.clone();
    for l in layers.iter_mut() {
        h = l.forward(store, &h, mode)?;
    }
    Ok(h)
}

/// `(N, D) -> (N, D, L)`.
fn repeat_time(z: &Tensor, l: usize) -> Result<Tensor> {
    let (n, d) = z.dims2()?;
    let mut out = Vec::with_capacity(n * d * l);
    for &v in z.data() {
        out.extend(std::iter::repeat_n(v, l));
    }
    Tensor::from_vec(&[n, d, l], out)
}

/// `(N, D, L) -> (N, D)`, summing over time (adjoint of [`repeat_time`]).
fn sum_time(g: &Tensor) -> Result<Tensor> {
    let (n, d, l) = g.dims3()?;
    Tensor::from_vec(&[n, d], g.data().chunks(l).map(|c| c.iter().sum()).collect())
}

struct AutoencoderNet {
    encoder: Vec<Lstm>,
    decoder: Vec<Lstm>,
    out: Dense,
    length: usize,
    batch: usize,
}

impl AutoencoderNet {
    fn build(cfg: &AutoencoderConfig, store: &mut ParamStore, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = SeededRng::new(seed);
        let encoder = build_encoder(cfg, store, &mut rng)?;
        let mut decoder = Vec::new();
        let mut input = cfg.latent;
        for (i, &h) in cfg.decoder_sizes().iter().enumerate() {
            decoder.push(Lstm::new(
                store,
                &format!("decoder.lstm{i}"),
                input,
                h,
                false,
                LstmOutput::Sequence,
                &mut rng,
            )?);
            input = h;
        }
        let out = Dense::new(store, "decoder.out", input, cfg.input_channels, &mut rng);
        Ok(Self {
            encoder,
            decoder,
            out,
            length: cfg.length,
            batch: 0,
        })
    }

    fn decode(&mut self, store: &mut ParamStore, z: &Tensor, mode: Mode) -> Result<Tensor> {
        let n = z.rows();
        let mut h = repeat_time(z, self.length)?;
        for l in &mut self.decoder {
            h = l.forward(store, &h, mode)?;
        }
        let y = self.out.forward(store, &to_steps(&h)?, mode)?;
        self.batch = n;
        from_steps(&y, n, self.length)
    }
}

impl Layer for AutoencoderNet {
    fn forward(&mut self, store: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (_, _, l) = x.dims3()?;
        if l != self.length {
            return Err(Error::shape(format!(
                "autoencoder built for L={}, got L={l}",
                self.length
            )));
        }
        let z = run_encoder(&mut self.encoder, store, x, mode)?;
        self.decode(store, &z, mode)
    }

    fn backward(&mut self, store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let mut g = self.out.backward(store, &to_steps(dy)?)?;
        g = from_steps(&g, self.batch, self.length)?;
        for l in self.decoder.iter_mut().rev() {
            g = l.backward(store, &g)?;
        }
        g = sum_time(&g)?;
        for l in self.encoder.iter_mut().rev() {
            g = l.backward(store, &g)?;
        }
        Ok(g)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
enum AeArch {
    Autoencoder(AutoencoderConfig),
}

/// A built autoencoder with its parameters.
pub struct Autoencoder {
    pub config: AutoencoderConfig,
    pub store: ParamStore,
    pub seed: u64,
    pub step: u64,
    net: AutoencoderNet,
}

impl std::fmt::Debug for Autoencoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Autoencoder")
            .field("config", &self.config)
            .field("seed", &self.seed)
            .field("step", &self.step)
            .finish()
    }
}

impl Autoencoder {
    pub fn build(config: &AutoencoderConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = AutoencoderNet::build(config, &mut store, seed)?;
        Ok(Self {
            config: config.clone(),
            store,
            seed,
            step: 0,
            net,
        })
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        let (_, c, l) = x.dims3()?;
        if c != self.config.input_channels || l != self.config.length {
            return Err(Error::shape(format!(
                "autoencoder expects (N, {}, {}), got {:?}",
                self.config.input_channels,
                self.config.length,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Reconstruction with caches kept for [`Autoencoder::backward`].
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.check(x)?;
        self.net.forward(&mut self.store, x, mode)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<()> {
        self.net.backward(&mut self.store, dy).map(|_| ())
    }

    pub fn encode(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        run_encoder(&mut self.net.encoder, &mut self.store, x, Mode::Eval)
    }

    pub fn decode(&mut self, z: &Tensor) -> Result<Tensor> {
        let (_, d) = z.dims2()?;
        if d != self.config.latent {
            return Err(Error::shape(format!("latent width {d} != {}", self.config.latent)));
        }
        self.net.decode(&mut self.store, z, Mode::Eval)
    }

    pub fn reconstruct(&mut self, x: &Tensor) -> Result<Tensor> {
        let z = self.encode(x)?;
        self.decode(&z)
    }

    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }

    fn architecture_json(&self) -> serde_json::Value {
        serde_json::to_value(AeArch::Autoencoder(self.config.clone())).expect("configs serialize")
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.architecture_json(), &self.store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.store, self.architecture_json(), self.seed, self.step)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (manifest, store) = load_checkpoint(path)?;
        let AeArch::Autoencoder(config) = serde_json::from_value(manifest.architecture.clone())
            .map_err(|e| Error::Checkpoint(format!("not an autoencoder checkpoint: {e}")))?;
        let mut ae = Autoencoder::build(&config, manifest.seed)?;
        if ae.fingerprint() != manifest.fingerprint || store.metas() != ae.store.metas() {
            return Err(Error::Checkpoint(
                "autoencoder checkpoint does not match its architecture".into(),
            ));
        }
        ae.store = store;
        ae.step = manifest.step;
        Ok(ae)
    }

    /// Builds a classifier on this autoencoder's encoder. The encoder
    /// buffers are copied and frozen; only the head is trainable.
    pub fn classifier(&self, head: HeadConfig, seed: u64) -> Result<Classifier> {
        let config = super::ArchConfig::EncoderClassifier(EncoderClassifierConfig {
            encoder: self.config.clone(),
            head,
        });
        let mut model = Classifier::build(&config, seed)?;
        // Decoder buffers have no counterpart in the classifier and are skipped.
        model.store.copy_matching(&self.store, "")?;
        Ok(model)
    }
}

pub(super) struct EncoderClassifierNet {
    encoder: Vec<Lstm>,
    hidden: Dense,
    relu: Relu,
    out: Dense,
    input_shape: Vec<usize>,
}

impl EncoderClassifierNet {
    pub(super) fn build(cfg: &EncoderClassifierConfig, store: &mut ParamStore, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        let encoder = build_encoder(&cfg.encoder, store, &mut rng)?;
        store.set_trainable(ENCODER_PREFIX, false);
        let hidden = Dense::new(store, "head.hidden", cfg.encoder.latent, cfg.head.hidden, &mut rng);
        let out = Dense::new(
            store,
            "head.out",
            cfg.head.hidden,
            cfg.head.head.logits(cfg.head.classes),
            &mut rng,
        );
        Ok(Self {
            encoder,
            hidden,
            relu: Relu::new(),
            out,
            input_shape: Vec::new(),
        })
    }
}

impl Layer for EncoderClassifierNet {
    fn forward(&mut self, store: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let z = run_encoder(&mut self.encoder, store, x, mode)?;
        self.input_shape = x.shape().to_vec();
        let h = self.hidden.forward(store, &z, mode)?;
        let h = self.relu.forward(store, &h, mode)?;
        self.out.forward(store, &h, mode)
    }

    /// Gradients stop at the latent: the encoder is frozen, so the returned
    /// input gradient is zero.
    fn backward(&mut self, store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let g = self.out.backward(store, dy)?;
        let g = self.relu.backward(store, &g)?;
        self.hidden.backward(store, &g)?;
        Ok(Tensor::zeros(&self.input_shape))
    }
}

impl Network for EncoderClassifierNet {
    fn features(&mut self, store: &mut ParamStore, x: &Tensor) -> Result<Tensor> {
        run_encoder(&mut self.encoder, store, x, Mode::Eval)
    }
}
