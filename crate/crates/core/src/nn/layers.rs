//! Forward/backward layers over [`Tensor`]s.
//!
//! A layer caches what its backward pass needs during `forward`; `backward`
//! accumulates parameter gradients into the store and returns the input
//! gradient.

use super::init::glorot_uniform;
use super::linalg::{matmul, matmul_nt, matmul_nt_acc, matmul_tn_acc};
use super::store::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::par::for_each_row;
use crate::rng::{derive_seed, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub trait Layer {
    fn forward(&mut self, store: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor>;
    fn backward(&mut self, store: &mut ParamStore, dy: &Tensor) -> Result<Tensor>;
}

fn missing_cache(layer: &str) -> Error {
    Error::shape(format!("{layer}: backward called before forward"))
}

// ---------------------------------------------------------------------------
// Convolution

/// Same-length 1-D cross-correlation without bias, stride 1.
///
/// Zero padding is `floor((K-1)/2)` on the left and `ceil((K-1)/2)` on the
/// right, so `out[t] = Σ_{c,k} w[f,c,k] · x[c, t + k - left_pad]` keeps the
/// input length for every kernel size.
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub weight: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    cache: Option<(Vec<f64>, usize, usize)>,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let len = out_channels * in_channels * kernel;
        let w = glorot_uniform(rng, len, in_channels * kernel, out_channels * kernel);
        let weight = store.add_param(&format!("{name}.weight"), &[out_channels, in_channels, kernel], w);
        Self {
            weight,
            in_channels,
            out_channels,
            kernel,
            cache: None,
        }
    }

    pub fn left_pad(&self) -> usize {
        (self.kernel - 1) / 2
    }

    fn im2col(&self, x: &Tensor) -> Vec<f64> {
        let (n, c, l) = x.dims3().expect("checked by caller");
        let k = self.kernel;
        let lp = self.left_pad() as isize;
        let ck = c * k;
        let mut cols = vec![0.0; n * l * ck];
        let xd = x.data();
        for_each_row(&mut cols, l * ck, l * ck, |b, block| {
            let xb = &xd[b * c * l..(b + 1) * c * l];
            for t in 0..l {
                let row = &mut block[t * ck..(t + 1) * ck];
                for ci in 0..c {
                    for ki in 0..k {
                        let src = t as isize + ki as isize - lp;
                        if src >= 0 && (src as usize) < l {
                            row[ci * k + ki] = xb[ci * l + src as usize];
                        }
                    }
                }
            }
        });
        cols
    }
}

impl Layer for Conv1d {
    fn forward(&mut self, store: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (n, c, l) = x.dims3()?;
        if c != self.in_channels {
            return Err(Error::shape(format!(
                "conv1d expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let f = self.out_channels;
        let ck = c * self.kernel;
        let cols = self.im2col(x);
        let rows = matmul_nt(&cols, store.value(self.weight), n * l, ck, f);
        let mut out = vec![0.0; n * f * l];
        for_each_row(&mut out, f * l, f * l, |b, ob| {
            for t in 0..l {
                let r = &rows[(b * l + t) * f..(b * l + t + 1) * f];
                for (fi, &v) in r.iter().enumerate() {
                    ob[fi * l + t] = v;
                }
            }
        });
        self.cache = Some((cols, n, l));
        Tensor::from_vec(&[n, f, l], out)
    }

    fn backward(&mut self, store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let (cols, n, l) = self.cache.as_ref().ok_or_else(|| missing_cache("conv1d"))?;
        let (n, l) = (*n, *l);
        let (f, c, k) = (self.out_channels, self.in_channels, self.kernel);
        let ck = c * k;
        // (N, F, L) -> (N*L, F)
        let mut dyr = vec![0.0; n * l * f];
        let dyd = dy.data();
        for_each_row(&mut dyr, l * f, l * f, |b, block| {
            for fi in 0..f {
                for t in 0..l {
                    block[t * f + fi] = dyd[(b * f + fi) * l + t];
                }
            }
        });
        let (values, mut grads) = store.split();
        matmul_tn_acc(&dyr, cols, grads.get_mut(self.weight), n * l, f, ck);
        let dcols = matmul(&dyr, values.get(self.weight), n * l, f, ck);
        let lp = self.left_pad() as isize;
        let mut dx = vec![0.0; n * c * l];
        for_each_row(&mut dx, c * l, l * ck, |b, xb| {
            for t in 0..l {
                let row = &dcols[(b * l + t) * ck..(b * l + t + 1) * ck];
                for ci in 0..c {
                    for ki in 0..k {
                        let src = t as isize + ki as isize - lp;
                        if src >= 0 && (src as usize) < l {
                            xb[ci * l + src as usize] += row[ci * k + ki];
                        }
                    }
                }
            }
        });
        Tensor::from_vec(&[n, c, l], dx)
    }
}

// ---------------------------------------------------------------------------
// Batch normalization

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over the batch and time axes.
#[derive(Clone, Debug)]
pub struct BatchNorm1d {
    name: String,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    tracked: ParamId,
    channels: usize,
    cache: Option<BnCache>,
}

#[derive(Clone, Debug)]
struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    shape: (usize, usize, usize),
    mode: Mode,
}

impl BatchNorm1d {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        Self {
            name: name.to_string(),
            gamma: store.add_param(&format!("{name}.gamma"), &[channels], vec![1.0; channels]),
            beta: store.add_param(&format!("{name}.beta"), &[channels], vec![0.0; channels]),
            running_mean: store.add_state(&format!("{name}.running_mean"), &[channels], vec![0.0; channels]),
            running_var: store.add_state(&format!("{name}.running_var"), &[channels], vec![1.0; channels]),
            tracked: store.add_state(&format!("{name}.batches_tracked"), &[1], vec![0.0]),
            channels,
            cache: None,
        }
    }
}

impl Layer for BatchNorm1d {
    fn forward(&mut self, store: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (n, c, l) = x.dims3()?;
        if c != self.channels {
            return Err(Error::shape(format!(
                "batchnorm `{}` expects {} channels, got {c}",
                self.name, self.channels
            )));
        }
        let m = (n * l) as f64;
        let xd = x.data();
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ci in 0..c {
                    let mut s = 0.0;
                    for b in 0..n {
                        s += xd[(b * c + ci) * l..(b * c + ci + 1) * l].iter().sum::<f64>();
                    }
                    let mu = s / m;
                    let mut v = 0.0;
                    for b in 0..n {
                        for &xv in &xd[(b * c + ci) * l..(b * c + ci + 1) * l] {
                            v += (xv - mu) * (xv - mu);
                        }
                    }
                    mean[ci] = mu;
                    var[ci] = v / m;
                }
                for ci in 0..c {
                    let rm = &mut store.value_mut(self.running_mean)[ci];
                    *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * mean[ci];
                    let rv = &mut store.value_mut(self.running_var)[ci];
                    *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * var[ci];
                }
                store.value_mut(self.tracked)[0] += 1.0;
                (mean, var)
            }
            Mode::Eval => {
                if store.value(self.tracked)[0] == 0.0 {
                    return Err(Error::UninitializedStats(self.name.clone()));
                }
                (
                    store.value(self.running_mean).to_vec(),
                    store.value(self.running_var).to_vec(),
                )
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let gamma = store.value(self.gamma);
        let beta = store.value(self.beta);
        let mut xhat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for b in 0..n {
            for ci in 0..c {
                let base = (b * c + ci) * l;
                for t in 0..l {
                    let h = (xd[base + t] - mean[ci]) * inv_std[ci];
                    xhat[base + t] = h;
                    out[base + t] = gamma[ci] * h + beta[ci];
                }
            }
        }
        self.cache = Some(BnCache {
            xhat,
            inv_std,
            shape: (n, c, l),
            mode,
        });
        Tensor::from_vec(&[n, c, l], out)
    }

    fn backward(&mut self, store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("batchnorm1d"))?;
        let (n, c, l) = cache.shape;
        let m = (n * l) as f64;
        let dyd = dy.data();
        let (values, mut grads) = store.split();
        let gamma = values.get(self.gamma);
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        let mut sum_dxhat = vec![0.0; c];
        let mut sum_dxhat_xhat = vec![0.0; c];
        for b in 0..n {
            for ci in 0..c {
                let base = (b * c + ci) * l;
                for t in 0..l {
                    let g = dyd[base + t];
                    let h = cache.xhat[base + t];
                    dgamma[ci] += g * h;
                    dbeta[ci] += g;
                    sum_dxhat[ci] += g * gamma[ci];
                    sum_dxhat_xhat[ci] += g * gamma[ci] * h;
                }
            }
        }
        let mut dx = vec![0.0; dyd.len()];
        for b in 0..n {
            for ci in 0..c {
                let base = (b * c + ci) * l;
                for t in 0..l {
                    let dxhat = dyd[base + t] * gamma[ci];
                    dx[base + t] = match cache.mode {
                        Mode::Train => {
                            cache.inv_std[ci] / m
                                * (m * dxhat - sum_dxhat[ci] - cache.xhat[base + t] * sum_dxhat_xhat[ci])
                        }
                        Mode::Eval => dxhat * cache.inv_std[ci],
                    };
                }
            }
        }
        for (g, d) in grads.get_mut(self.gamma).iter_mut().zip(&dgamma) {
            *g += d;
        }
        for (g, d) in grads.get_mut(self.beta).iter_mut().zip(&dbeta) {
            *g += d;
        }
        Tensor::from_vec(&[n, c, l], dx)
    }
}

// ---------------------------------------------------------------------------
// Dense

/// Affine map `y = x · W + b` with `W: (D, M)`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
    cache: Option<Tensor>,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_features: usize,
        out_features: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let w = glorot_uniform(rng, in_features * out_features, in_features, out_features);
        Self {
            weight: store.add_param(&format!("{name}.weight"), &[in_features, out_features], w),
            bias: store.add_param(&format!("{name}.bias"), &[out_features], vec![0.0; out_features]),
            in_features,
            out_features,
            cache: None,
        }
    }
}

impl Layer for Dense {
    fn forward(&mut self, store: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (n, d) = x.dims2()?;
        if d != self.in_features {
            return Err(Error::shape(format!(
                "dense expects {} features, got {d}",
                self.in_features
            )));
        }
        let m = self.out_features;
        let mut out = vec![0.0; n * m];
        let b = store.value(self.bias);
        for row in out.chunks_mut(m) {
            row.copy_from_slice(b);
        }
        super::linalg::matmul_acc(x.data(), store.value(self.weight), &mut out, n, d, m);
        self.cache = Some(x.clone());
        Tensor::from_vec(&[n, m], out)
    }

    fn backward(&mut self, store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let x = self.cache.as_ref().ok_or_else(|| missing_cache("dense"))?;
        let (n, d) = x.dims2()?;
        let m = self.out_features;
        let (values, mut grads) = store.split();
        matmul_tn_acc(x.data(), dy.data(), grads.get_mut(self.weight), n, d, m);
        let gb = grads.get_mut(self.bias);
        for row in dy.data().chunks(m) {
            for (g, v) in gb.iter_mut().zip(row) {
                *g += v;
            }
        }
        let mut dx = vec![0.0; n * d];
        matmul_nt_acc(dy.data(), values.get(self.weight), &mut dx, n, m, d);
        Tensor::from_vec(&[n, d], dx)
    }
}

// ---------------------------------------------------------------------------
// Activations

#[derive(Clone, Debug, Default)]
pub struct Relu {
    cache: Option<Tensor>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Relu {
    fn forward(&mut self, _store: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let y = x.map(|v| v.max(0.0));
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, _store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let x = self.cache.as_ref().ok_or_else(|| missing_cache("relu"))?;
        let mut dx = dy.clone();
        for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
            if v <= 0.0 {
                *g = 0.0;
            }
        }
        Ok(dx)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Sigmoid {
    cache: Option<Tensor>,
}

impl Sigmoid {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Sigmoid {
    fn forward(&mut self, _store: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let y = x.map(sigmoid);
        self.cache = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, _store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let y = self.cache.as_ref().ok_or_else(|| missing_cache("sigmoid"))?;
        let mut dx = dy.clone();
        for (g, &s) in dx.data_mut().iter_mut().zip(y.data()) {
            *g *= s * (1.0 - s);
        }
        Ok(dx)
    }
}

/// Row-wise softmax of an `(N, K)` tensor.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let (_, k) = x.dims2()?;
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Softmax over the class axis of `(N, K)` logits.
#[derive(Clone, Debug, Default)]
pub struct SoftmaxClasses {
    cache: Option<Tensor>,
}

impl SoftmaxClasses {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for SoftmaxClasses {
    fn forward(&mut self, _store: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let y = softmax_rows(x)?;
        self.cache = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, _store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let y = self.cache.as_ref().ok_or_else(|| missing_cache("softmax"))?;
        let (_, k) = y.dims2()?;
        let mut dx = dy.clone();
        for (g, s) in dx.data_mut().chunks_mut(k).zip(y.data().chunks(k)) {
            let dot: f64 = g.iter().zip(s).map(|(a, b)| a * b).sum();
            for (gi, si) in g.iter_mut().zip(s) {
                *gi = si * (*gi - dot);
            }
        }
        Ok(dx)
    }
}

/// Inverted dropout. Each training-mode call draws a fresh mask from the
/// stream `derive_seed(seed, call_index)`, so a run is reproducible.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub p: f64,
    seed: u64,
    calls: u64,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(format!("dropout p must lie in [0, 1), got {p}")));
        }
        Ok(Self {
            p,
            seed,
            calls: 0,
            mask: None,
        })
    }
}

impl Layer for Dropout {
    fn forward(&mut self, _store: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if mode == Mode::Eval || self.p == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let mut rng = SeededRng::new(derive_seed(self.seed, self.calls));
        self.calls += 1;
        let scale = 1.0 / (1.0 - self.p);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if rng.uniform() < self.p { 0.0 } else { scale })
            .collect();
        let mut y = x.clone();
        for (v, m) in y.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(mask);
        Ok(y)
    }

    fn backward(&mut self, _store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let mut dx = dy.clone();
        if let Some(mask) = &self.mask {
            for (g, m) in dx.data_mut().iter_mut().zip(mask) {
                *g *= m;
            }
        }
        Ok(dx)
    }
}

// ---------------------------------------------------------------------------
// Pooling

/// Mean over the time axis: `(N, C, L) -> (N, C)`.
#[derive(Clone, Debug, Default)]
pub struct GlobalAvgPool {
    len: Option<usize>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, _store: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (n, c, l) = x.dims3()?;
        if l == 0 {
            return Err(Error::shape("global average pool needs L >= 1"));
        }
        let out = x.data().chunks(l).map(|s| s.iter().sum::<f64>() / l as f64).collect();
        self.len = Some(l);
        Tensor::from_vec(&[n, c], out)
    }

    fn backward(&mut self, _store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let l = self.len.ok_or_else(|| missing_cache("global_avg_pool"))?;
        let (n, c) = dy.dims2()?;
        let mut dx = Vec::with_capacity(n * c * l);
        for &g in dy.data() {
            dx.extend(std::iter::repeat_n(g / l as f64, l));
        }
        Tensor::from_vec(&[n, c, l], dx)
    }
}

/// Max pooling along time with kernel 3, stride 1 and same-length padding.
#[derive(Clone, Debug, Default)]
pub struct MaxPool3 {
    argmax: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool3 {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for MaxPool3 {
    fn forward(&mut self, _store: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (n, c, l) = x.dims3()?;
        let xd = x.data();
        let mut out = vec![0.0; xd.len()];
        let mut arg = vec![0; xd.len()];
        for (s, seq) in xd.chunks(l).enumerate() {
            for t in 0..l {
                let lo = t.saturating_sub(1);
                let hi = (t + 1).min(l - 1);
                let mut best = lo;
                for j in lo + 1..=hi {
                    if seq[j] > seq[best] {
                        best = j;
                    }
                }
                out[s * l + t] = seq[best];
                arg[s * l + t] = s * l + best;
            }
        }
        self.argmax = Some((arg, vec![n, c, l]));
        Tensor::from_vec(&[n, c, l], out)
    }

    fn backward(&mut self, _store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let (arg, shape) = self.argmax.as_ref().ok_or_else(|| missing_cache("maxpool"))?;
        let mut dx = vec![0.0; dy.len()];
        for (i, &g) in dy.data().iter().enumerate() {
            dx[arg[i]] += g;
        }
        Tensor::from_vec(shape, dx)
    }
}
