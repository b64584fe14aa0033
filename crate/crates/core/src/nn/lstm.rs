//! Single-layer LSTM with backpropagation through the whole window.
//!
//! Gate order is `(i, f, g, o)` and each direction carries one bias vector of
//! length `4H`, so a direction holds `4H(C + H) + 4H` parameters. Initial
//! hidden and cell states are zero. The backward direction reads the input in
//! reverse time order; in sequence mode its outputs are re-aligned to the
//! original time axis before concatenation.

use serde::{Deserialize, Serialize};

use super::init::lstm_uniform;
use super::layers::{sigmoid, Layer, Mode};
use super::linalg::{matmul_acc, matmul_nt_acc, matmul_tn_acc};
use super::store::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LstmOutput {
    /// `(N, H·dirs, L)`
    Sequence,
    /// Final hidden state of each direction, `(N, H·dirs)`.
    Last,
}

#[derive(Clone, Debug)]
struct Direction {
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
    reverse: bool,
    cache: Option<DirCache>,
}

#[derive(Clone, Debug)]
struct DirCache {
    /// Time-major input in processing order, `(L·N, C)`.
    xs: Vec<f64>,
    /// Activated gates per step, `(L, N, 4H)`.
    gates: Vec<f64>,
    /// Cell states, `(L + 1, N, H)` with the zero initial state first.
    cells: Vec<f64>,
    /// `tanh(c_t)`, `(L, N, H)`.
    tanh_c: Vec<f64>,
    /// Hidden states, `(L + 1, N, H)`.
    hidden: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Lstm {
    pub input_size: usize,
    pub hidden: usize,
    pub output: LstmOutput,
    dirs: Vec<Direction>,
    shape: Option<(usize, usize)>,
}

impl Lstm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_size: usize,
        hidden: usize,
        bidirectional: bool,
        output: LstmOutput,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if hidden < 1 {
            return Err(Error::config("LSTM hidden size must be >= 1"));
        }
        let labels: &[(&str, bool)] = if bidirectional {
            &[("fwd", false), ("bwd", true)]
        } else {
            &[("fwd", false)]
        };
        let g = 4 * hidden;
        let dirs = labels
            .iter()
            .map(|&(label, reverse)| {
                let w_ih = lstm_uniform(rng, input_size * g, hidden);
                let w_hh = lstm_uniform(rng, hidden * g, hidden);
                let mut bias = vec![0.0; g];
                bias[hidden..2 * hidden].fill(1.0);
                Direction {
                    w_ih: store.add_param(&format!("{name}.{label}.w_ih"), &[input_size, g], w_ih),
                    w_hh: store.add_param(&format!("{name}.{label}.w_hh"), &[hidden, g], w_hh),
                    bias: store.add_param(&format!("{name}.{label}.bias"), &[g], bias),
                    reverse,
                    cache: None,
                }
            })
            .collect();
        Ok(Self {
            input_size,
            hidden,
            output,
            dirs,
            shape: None,
        })
    }

    pub fn directions(&self) -> usize {
        self.dirs.len()
    }

    pub fn output_channels(&self) -> usize {
        self.hidden * self.dirs.len()
    }

    /// Every parameter buffer of the layer.
    pub fn param_ids(&self) -> Vec<ParamId> {
        self.dirs.iter().flat_map(|d| [d.w_ih, d.w_hh, d.bias]).collect()
    }
}

fn run_direction(store: &ParamStore, dir: &Direction, x: &Tensor, hidden: usize) -> DirCache {
    let (n, c, l) = x.dims3().expect("checked");
    let h = hidden;
    let g4 = 4 * h;
    let xd = x.data();
    let mut xs = vec![0.0; l * n * c];
    for s in 0..l {
        let t = if dir.reverse { l - 1 - s } else { s };
        for b in 0..n {
            for ci in 0..c {
                xs[(s * n + b) * c + ci] = xd[(b * c + ci) * l + t];
            }
        }
    }
    let bias = store.value(dir.bias);
    let mut pre = vec![0.0; l * n * g4];
    for row in pre.chunks_mut(g4) {
        row.copy_from_slice(bias);
    }
    matmul_acc(&xs, store.value(dir.w_ih), &mut pre, l * n, c, g4);

    let w_hh = store.value(dir.w_hh);
    let mut gates = pre;
    let mut cells = vec![0.0; (l + 1) * n * h];
    let mut hidden_states = vec![0.0; (l + 1) * n * h];
    let mut tanh_c = vec![0.0; l * n * h];
    for s in 0..l {
        let (hs_prev, hs_next) = hidden_states.split_at_mut((s + 1) * n * h);
        let h_prev = &hs_prev[s * n * h..];
        let z = &mut gates[s * n * g4..(s + 1) * n * g4];
        matmul_acc(h_prev, w_hh, z, n, h, g4);
        let (cs_prev, cs_next) = cells.split_at_mut((s + 1) * n * h);
        let c_prev = &cs_prev[s * n * h..];
        let c_new = &mut cs_next[..n * h];
        let h_new = &mut hs_next[..n * h];
        let tc = &mut tanh_c[s * n * h..(s + 1) * n * h];
        for b in 0..n {
            let zr = &mut z[b * g4..(b + 1) * g4];
            for j in 0..h {
                let i_g = sigmoid(zr[j]);
                let f_g = sigmoid(zr[h + j]);
                let g_g = zr[2 * h + j].tanh();
                let o_g = sigmoid(zr[3 * h + j]);
                zr[j] = i_g;
                zr[h + j] = f_g;
                zr[2 * h + j] = g_g;
                zr[3 * h + j] = o_g;
                let cv = f_g * c_prev[b * h + j] + i_g * g_g;
                c_new[b * h + j] = cv;
                let t = cv.tanh();
                tc[b * h + j] = t;
                h_new[b * h + j] = o_g * t;
            }
        }
    }
    DirCache {
        xs,
        gates,
        cells,
        tanh_c,
        hidden: hidden_states,
    }
}

impl Layer for Lstm {
    fn forward(&mut self, store: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (n, c, l) = x.dims3()?;
        if c != self.input_size {
            return Err(Error::shape(format!(
                "LSTM expects {} input channels, got {c}",
                self.input_size
            )));
        }
        if l == 0 {
            return Err(Error::shape("LSTM needs L >= 1"));
        }
        let h = self.hidden;
        let nd = self.dirs.len();
        for dir in &mut self.dirs {
            dir.cache = Some(run_direction(store, dir, x, h));
        }
        self.shape = Some((n, l));
        match self.output {
            LstmOutput::Last => {
                let mut out = vec![0.0; n * nd * h];
                for (d, dir) in self.dirs.iter().enumerate() {
                    let hs = &dir.cache.as_ref().unwrap().hidden[l * n * h..];
                    for b in 0..n {
                        out[b * nd * h + d * h..b * nd * h + (d + 1) * h].copy_from_slice(&hs[b * h..(b + 1) * h]);
                    }
                }
                Tensor::from_vec(&[n, nd * h], out)
            }
            LstmOutput::Sequence => {
                let mut out = vec![0.0; n * nd * h * l];
                for (d, dir) in self.dirs.iter().enumerate() {
                    let hs = &dir.cache.as_ref().unwrap().hidden;
                    for s in 0..l {
                        let t = if dir.reverse { l - 1 - s } else { s };
                        let step = &hs[(s + 1) * n * h..(s + 2) * n * h];
                        for b in 0..n {
                            for j in 0..h {
                                out[(b * nd * h + d * h + j) * l + t] = step[b * h + j];
                            }
                        }
                    }
                }
                Tensor::from_vec(&[n, nd * h, l], out)
            }
        }
    }

    fn backward(&mut self, store: &mut ParamStore, dy: &Tensor) -> Result<Tensor> {
        let (n, l) = self
            .shape
            .ok_or_else(|| Error::shape("LSTM: backward called before forward"))?;
        let h = self.hidden;
        let g4 = 4 * h;
        let c = self.input_size;
        let nd = self.dirs.len();
        let dyd = dy.data();
        let mut dx = vec![0.0; n * c * l];
        let (values, mut grads) = store.split();
        for (d, dir) in self.dirs.iter().enumerate() {
            let cache = dir.cache.as_ref().unwrap();
            // Upstream gradient on h per processing step, (L, N, H).
            let mut dh_out = vec![0.0; l * n * h];
            match self.output {
                LstmOutput::Last => {
                    for b in 0..n {
                        for j in 0..h {
                            dh_out[((l - 1) * n + b) * h + j] = dyd[b * nd * h + d * h + j];
                        }
                    }
                }
                LstmOutput::Sequence => {
                    for s in 0..l {
                        let t = if dir.reverse { l - 1 - s } else { s };
                        for b in 0..n {
                            for j in 0..h {
                                dh_out[(s * n + b) * h + j] = dyd[(b * nd * h + d * h + j) * l + t];
                            }
                        }
                    }
                }
            }
            let w_hh = values.get(dir.w_hh);
            let mut dz_all = vec![0.0; l * n * g4];
            let mut dh_next = vec![0.0; n * h];
            let mut dc_next = vec![0.0; n * h];
            let mut dw_hh = vec![0.0; h * g4];
            for s in (0..l).rev() {
                let gates = &cache.gates[s * n * g4..(s + 1) * n * g4];
                let c_prev = &cache.cells[s * n * h..(s + 1) * n * h];
                let tc = &cache.tanh_c[s * n * h..(s + 1) * n * h];
                let dz = &mut dz_all[s * n * g4..(s + 1) * n * g4];
                for b in 0..n {
                    let gr = &gates[b * g4..(b + 1) * g4];
                    for j in 0..h {
                        let k = b * h + j;
                        let (i_g, f_g, g_g, o_g) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                        let dh = dh_out[s * n * h + k] + dh_next[k];
                        let d_o = dh * tc[k];
                        let dc = dc_next[k] + dh * o_g * (1.0 - tc[k] * tc[k]);
                        let d_i = dc * g_g;
                        let d_g = dc * i_g;
                        let d_f = dc * c_prev[k];
                        dc_next[k] = dc * f_g;
                        let row = &mut dz[b * g4..(b + 1) * g4];
                        row[j] = d_i * i_g * (1.0 - i_g);
                        row[h + j] = d_f * f_g * (1.0 - f_g);
                        row[2 * h + j] = d_g * (1.0 - g_g * g_g);
                        row[3 * h + j] = d_o * o_g * (1.0 - o_g);
                    }
                }
                let h_prev = &cache.hidden[s * n * h..(s + 1) * n * h];
                matmul_tn_acc(h_prev, dz, &mut dw_hh, n, h, g4);
                dh_next.fill(0.0);
                matmul_nt_acc(dz, w_hh, &mut dh_next, n, g4, h);
            }
            for (g, v) in grads.get_mut(dir.w_hh).iter_mut().zip(&dw_hh) {
                *g += v;
            }
            matmul_tn_acc(&cache.xs, &dz_all, grads.get_mut(dir.w_ih), l * n, c, g4);
            let gb = grads.get_mut(dir.bias);
            for row in dz_all.chunks(g4) {
                for (g, v) in gb.iter_mut().zip(row) {
                    *g += v;
                }
            }
            let mut dxs = vec![0.0; l * n * c];
            matmul_nt_acc(&dz_all, values.get(dir.w_ih), &mut dxs, l * n, g4, c);
            for s in 0..l {
                let t = if dir.reverse { l - 1 - s } else { s };
                for b in 0..n {
                    for ci in 0..c {
                        dx[(b * c + ci) * l + t] += dxs[(s * n + b) * c + ci];
                    }
                }
            }
        }
        Tensor::from_vec(&[n, c, l], dx)
    }
}
