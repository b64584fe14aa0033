//! Row-parallel dense matrix kernels.
//!
//! Every output element is produced by exactly one closure with a fixed
//! summation order, so the result does not depend on the thread count.

use crate::par::for_each_row;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in chunks * 4..a.len() {
        s += a[j] * b[j];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `C += A · B` with `A: (m, k)`, `B: (k, n)`, `C: (m, n)`.
pub fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for_each_row(c, n, k * n, |i, row| {
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av != 0.0 {
                axpy(av, &b[p * n..(p + 1) * n], row);
            }
        }
    });
}

/// `A · B`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    matmul_acc(a, b, &mut c, m, k, n);
    c
}

/// `C += Aᵀ · B` with `A: (k, m)`, `B: (k, n)`, `C: (m, n)`.
pub fn matmul_tn_acc(a: &[f64], b: &[f64], c: &mut [f64], k: usize, m: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for_each_row(c, n, k * n, |i, row| {
        for p in 0..k {
            let av = a[p * m + i];
            if av != 0.0 {
                axpy(av, &b[p * n..(p + 1) * n], row);
            }
        }
    });
}

/// `C += A · Bᵀ` with `A: (m, k)`, `B: (n, k)`, `C: (m, n)`.
pub fn matmul_nt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for_each_row(c, n, k * n, |i, row| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, out) in row.iter_mut().enumerate() {
            *out += dot(a_row, &b[j * k..(j + 1) * k]);
        }
    });
}

/// `A · Bᵀ`.
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    matmul_nt_acc(a, b, &mut c, m, k, n);
    c
}
