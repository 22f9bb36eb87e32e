//! Matrix exponentials for finite-state generators.
//!
//! Two unrelated algorithms are provided so that oracles can cross-check
//! each other: Padé(13) scaling-and-squaring and uniformization.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numeric::ln_gamma;

/// Largest dense matrix the exact routines accept.
pub const DENSE_LIMIT: usize = 4096;

/// Sparse rows of a square matrix.
#[derive(Debug, Clone, Default)]
pub struct SparseRows {
    pub dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(dim: usize) -> Self {
        SparseRows {
            dim,
            rows: vec![Vec::new(); dim],
        }
    }

    /// Adds `value` at `(i, j)`, merging with an existing entry.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let row = &mut self.rows[i];
        if let Some(e) = row.iter_mut().find(|e| e.0 == j) {
            e.1 += value;
        } else {
            row.push((j, value));
        }
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|e| e.0 == j)
            .map_or(0.0, |e| e.1)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `out = M v`
    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            out[i] = row.iter().map(|&(j, a)| a * v[j]).sum();
        }
    }

    /// `out = v^T M`
    pub fn vec_mul(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, row) in self.rows.iter().enumerate() {
            let vi = v[i];
            if vi != 0.0 {
                for &(j, a) in row {
                    out[j] += vi * a;
                }
            }
        }
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.dim > DENSE_LIMIT {
            return Err(Error::StateSpaceTooLarge {
                size: self.dim as u128,
                limit: DENSE_LIMIT as u128,
            });
        }
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                m[(i, j)] += a;
            }
        }
        Ok(m)
    }

    /// Largest `|M_ii|`.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.get(i, i).abs())
            .fold(0.0, f64::max)
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(t Q)` by Padé(13) scaling and squaring.
pub fn expm_pade(q: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    const B: [f64; 14] = [
        64_764_752_532_480_000.0,
        32_382_376_266_240_000.0,
        7_771_770_303_897_600.0,
        1_187_353_796_428_800.0,
        129_060_195_264_000.0,
        10_559_470_521_600.0,
        670_442_572_800.0,
        33_522_128_640.0,
        1_323_241_920.0,
        40_840_800.0,
        960_960.0,
        16_380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371_920_351_148_152;
    let n = q.nrows();
    if n != q.ncols() {
        return Err(Error::param("q", "matrix must be square"));
    }
    if n > DENSE_LIMIT {
        return Err(Error::StateSpaceTooLarge {
            size: n as u128,
            limit: DENSE_LIMIT as u128,
        });
    }
    let a = q * t;
    let norm = one_norm(&a);
    if !norm.is_finite() {
        return Err(Error::Numerical {
            context: "expm_pade",
            achieved: norm,
            target: 0.0,
        });
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a / 2f64.powi(s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9])
        + &a6 * B[7]
        + &a4 * B[5]
        + &a2 * B[3]
        + &id * B[1];
    let u = &a * inner_u;
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8])
        + &a6 * B[6]
        + &a4 * B[4]
        + &a2 * B[2]
        + &id * B[0];
    let p = &v + &u;
    let qm = &v - &u;
    let lu = qm.lu();
    let mut r = lu.solve(&p).ok_or(Error::Numerical {
        context: "expm_pade (singular denominator)",
        achieved: f64::INFINITY,
        target: 0.0,
    })?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Poisson weights `P(N = k)`, `N ~ Poisson(mean)`, for `k = 0..` until the
/// right tail is below `tol`.
fn poisson_weights(mean: f64, tol: f64) -> Vec<f64> {
    if mean == 0.0 {
        return vec![1.0];
    }
    let ln_mean = mean.ln();
    let mut weights = Vec::new();
    let mut cum = 0.0;
    let mut k = 0usize;
    loop {
        let w = (-mean + k as f64 * ln_mean - ln_gamma(k as f64 + 1.0)).exp();
        weights.push(w);
        cum += w;
        if k as f64 > mean && 1.0 - cum <= tol {
            break;
        }
        // hard stop far in the tail
        if k as f64 > mean + 40.0 * mean.sqrt() + 60.0 {
            break;
        }
        k += 1;
    }
    weights
}

/// `exp(t Q)` by uniformization, `Q` a conservative generator.
pub fn expm_uniformization(q: &DMatrix<f64>, t: f64, tol: f64) -> Result<DMatrix<f64>> {
    let n = q.nrows();
    let lambda = (0..n).map(|i| q[(i, i)].abs()).fold(0.0, f64::max);
    let id = DMatrix::<f64>::identity(n, n);
    if lambda == 0.0 || t == 0.0 {
        return Ok(id);
    }
    let p = &id + q / lambda;
    let weights = poisson_weights(lambda * t, tol);
    let mut power = id.clone();
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for (k, w) in weights.iter().enumerate() {
        if k > 0 {
            power = &power * &p;
        }
        acc += &power * *w;
    }
    Ok(acc)
}

/// `exp(t Q) v` by uniformization with a sparse generator.
pub fn expm_action_uniformized(q: &SparseRows, t: f64, v: &[f64], tol: f64) -> Vec<f64> {
    uniformized(q, t, v, tol, false)
}

/// `v^T exp(t Q)` by uniformization (evolution of a distribution).
pub fn expm_transpose_action_uniformized(q: &SparseRows, t: f64, v: &[f64], tol: f64) -> Vec<f64> {
    uniformized(q, t, v, tol, true)
}

fn uniformized(q: &SparseRows, t: f64, v: &[f64], tol: f64, transpose: bool) -> Vec<f64> {
    let lambda = q.max_exit_rate();
    if lambda == 0.0 || t == 0.0 {
        return v.to_vec();
    }
    let weights = poisson_weights(lambda * t, tol);
    let mut cur = v.to_vec();
    let mut next = vec![0.0; v.len()];
    let mut acc = vec![0.0; v.len()];
    for (k, w) in weights.iter().enumerate() {
        if k > 0 {
            if transpose {
                q.vec_mul(&cur, &mut next);
            } else {
                q.mul_vec(&cur, &mut next);
            }
            for (nx, c) in next.iter_mut().zip(&cur) {
                *nx = c + *nx / lambda;
            }
            std::mem::swap(&mut cur, &mut next);
        }
        if *w > 0.0 {
            for (a, c) in acc.iter_mut().zip(&cur) {
                *a += w * c;
            }
        }
    }
    acc
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
