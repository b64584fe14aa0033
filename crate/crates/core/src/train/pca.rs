use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::SeededRng;

pub const PCA_TOLERANCE: f64 = 1e-10;
pub const PCA_MAX_ITERATIONS: usize = 10_000;
const COMPONENTS: usize = 2;

/// Two-component PCA fitted by power iteration with deflation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `components[j]` is a unit vector of length D.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Eigenvalue over total variance, descending.
    pub explained: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d).map(|i| dot(&m[i * d..(i + 1) * d], v)).collect()
}

/// Removes the `basis` directions from `v`. Two passes keep the result
/// orthogonal even when `v` starts almost inside the span.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting; `None`
/// when `a` is numerically singular.
fn solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let d = b.len();
    for col in 0..d {
        let piv = (col..d).max_by(|&i, &j| a[i * d + col].abs().total_cmp(&a[j * d + col].abs()))?;
        if a[piv * d + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..d {
                a.swap(piv * d + k, col * d + k);
            }
            b.swap(piv, col);
        }
        for r in col + 1..d {
            let f = a[r * d + col] / a[col * d + col];
            if f != 0.0 {
                for k in col..d {
                    a[r * d + k] -= f * a[col * d + k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; d];
    for r in (0..d).rev() {
        let s: f64 = (r + 1..d).map(|k| a[r * d + k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r * d + r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Dominant eigenpair of the symmetric matrix `m` restricted to the
/// complement of `basis`.
fn dominant(m: &[f64], d: usize, basis: &[Vec<f64>], rng: &mut SeededRng) -> (Vec<f64>, f64) {
    let scale = m.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    orthogonalize(&mut v, basis);
    normalize(&mut v);
    for _ in 0..PCA_MAX_ITERATIONS {
        let mut w = mat_vec(m, &v);
        orthogonalize(&mut w, basis);
        // The remaining spectrum is numerically zero: any direction will do.
        if normalize(&mut w) <= 1e-12 * scale {
            return (v, 0.0);
        }
        let change = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if change < PCA_TOLERANCE {
            break;
        }
    }
    // A few Rayleigh-quotient steps polish the vector to machine precision.
    for _ in 0..3 {
        let mu = dot(&v, &mat_vec(m, &v));
        let mut shifted = m.to_vec();
        for i in 0..d {
            shifted[i * d + i] -= mu;
        }
        let Some(mut w) = solve(shifted, v.clone()) else {
            break;
        };
        orthogonalize(&mut w, basis);
        if normalize(&mut w) == 0.0 {
            break;
        }
        orthogonalize(&mut w, basis);
        normalize(&mut w);
        if dot(&w, &v) < 0.0 {
            w.iter_mut().for_each(|x| *x = -*x);
        }
        v = w;
    }
    let lambda = dot(&v, &mat_vec(m, &v)).max(0.0);
    (v, lambda)
}

/// Fits the top two principal components of `(N, D)` features.
pub fn pca_fit(features: &Tensor) -> Result<PcaModel> {
    let (n, d) = features.dims2()?;
    if n < 3 || d < 2 {
        return Err(Error::config(format!("PCA needs N >= 3 and D >= 2, got N={n}, D={d}")));
    }
    let x = features.data();
    let mean: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| x[i * d + j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![0.0; d * d];
    for row in x.chunks(d) {
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in a..d {
                cov[a * d + b] += da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[a * d + b] / (n - 1) as f64;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    let total: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("features have zero variance".into()));
    }
    let mut rng = SeededRng::new(0x5CA1AB1E);
    let mut deflated = cov.clone();
    let mut components: Vec<Vec<f64>> = Vec::new();
    let mut eigenvalues = Vec::new();
    for _ in 0..COMPONENTS {
        let (mut v, lambda) = dominant(&deflated, d, &components, &mut rng);
        let lead = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("d >= 2");
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for a in 0..d {
            for b in 0..d {
                deflated[a * d + b] -= lambda * v[a] * v[b];
            }
        }
        components.push(v);
        eigenvalues.push(lambda);
    }
    let explained = eigenvalues.iter().map(|l| (l / total).clamp(0.0, 1.0)).collect();
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
        explained,
    })
}

impl PcaModel {
    /// Centers and projects `(N, D)` features onto the components: `(N, 2)`.
    pub fn project(&self, features: &Tensor) -> Result<Tensor> {
        let (n, d) = features.dims2()?;
        if d != self.mean.len() {
            return Err(Error::shape(format!("PCA fitted on D={}, got D={d}", self.mean.len())));
        }
        let mut out = Vec::with_capacity(n * COMPONENTS);
        for row in features.data().chunks(d) {
            let centered: Vec<f64> = row.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
            for c in &self.components {
                out.push(dot(&centered, c));
            }
        }
        Tensor::from_vec(&[n, COMPONENTS], out)
    }
}

pub fn pca_project(model: &PcaModel, features: &Tensor) -> Result<Tensor> {
    model.project(features)
}
