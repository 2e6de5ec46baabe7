//! Small dense linear algebra on `Vec<f64>`.
//!
//! Problem dimensions here are the model size (a handful to a few dozen
//! coordinates), so everything is row-major, allocation-light and
//! dependency-free: power iteration with deflation for symmetric
//! eigenproblems and Gaussian elimination with partial pivoting for solves.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
            }
            m.data[i * dim..(i + 1) * dim].copy_from_slice(row);
        }
        Ok(m)
    }

    /// `scale * Σ v vᵀ` over the given vectors.
    pub fn gram<'a, I>(dim: usize, vectors: I, scale: f64) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut m = Self::zeros(dim);
        for v in vectors {
            for i in 0..dim {
                let vi = v[i];
                if vi == 0.0 {
                    continue;
                }
                let row = &mut m.data[i * dim..(i + 1) * dim];
                for (r, vj) in row.iter_mut().zip(v) {
                    *r += vi * vj;
                }
            }
        }
        m.data.iter_mut().for_each(|x| *x *= scale);
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.data)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// `self - value * v vᵀ`.
    pub fn deflate(&mut self, value: f64, v: &[f64]) {
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.data[i * self.dim + j] -= value * v[i] * v[j];
            }
        }
    }

    /// `shift * I - self`.
    pub fn shifted_negation(&self, shift: f64) -> Self {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|x| *x = -*x);
        for i in 0..self.dim {
            m[(i, i)] += shift;
        }
        m
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

/// Result of one power-iteration solve.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub converged: bool,
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let n = norm2(v);
    if n <= f64::MIN_POSITIVE || !n.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

/// A deterministic unit start vector orthogonal to `basis`.
fn start_vector(dim: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    // Irregular weights so the start is not orthogonal to structured eigenvectors.
    let weighted: Vec<f64> = (0..dim).map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_75).fract()).collect();
    let axes = (0..dim).map(|axis| {
        let mut e = vec![0.0; dim];
        e[axis] = 1.0;
        e
    });
    for mut v in std::iter::once(weighted).chain(axes) {
        let before = norm2(&v);
        // Two passes keep the result orthogonal to working precision.
        orthogonalize(&mut v, basis);
        orthogonalize(&mut v, basis);
        if norm2(&v) > 1e-6 * before && normalize(&mut v) {
            return v;
        }
    }
    vec![0.0; dim]
}

/// Dominant eigenpair of a symmetric positive semidefinite matrix, restricted
/// to the orthogonal complement of `basis`.
///
/// Stops when `‖Av − μv‖₂ ≤ tol · scale` where `scale` is the largest absolute
/// entry of `a` (or 1 for the zero matrix).
pub fn power_iteration(a: &Matrix, basis: &[Vec<f64>], tol: f64, max_iter: usize) -> EigenPair {
    let dim = a.dim();
    let scale = if a.max_abs() > 0.0 { a.max_abs() } else { 1.0 };
    let mut v = start_vector(dim, basis);
    let mut value = 0.0;
    for _ in 0..max_iter {
        let mut w = a.mul_vec(&v);
        orthogonalize(&mut w, basis);
        value = dot(&v, &w);
        let residual: f64 =
            w.iter().zip(&v).map(|(wi, vi)| (wi - value * vi).powi(2)).sum::<f64>().sqrt();
        if residual <= tol * scale {
            return EigenPair { value, vector: v, converged: true };
        }
        if !normalize(&mut w) {
            // v lies in the null space of the restricted operator.
            return EigenPair { value: 0.0, vector: v, converged: true };
        }
        v = w;
    }
    EigenPair { value, vector: v, converged: false }
}

/// Top-`k` eigenpairs of a symmetric PSD matrix by power iteration with
/// deflation. Values are returned in the order found (descending for PSD
/// input); vectors are re-orthogonalized against earlier ones every step.
pub fn top_eigenpairs(a: &Matrix, k: usize, tol: f64, max_iter: usize) -> Vec<EigenPair> {
    let mut work = a.clone();
    let mut found: Vec<EigenPair> = Vec::with_capacity(k);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..k.min(a.dim()) {
        let pair = power_iteration(&work, &basis, tol, max_iter);
        work.deflate(pair.value, &pair.vector);
        basis.push(pair.vector.clone());
        found.push(pair);
    }
    found
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() });
    }
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.push(b[i]);
            row
        })
        .collect();
    let tiny = 1e-13 * a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap_or(col);
        if m[pivot][col].abs() <= tiny {
            return Err(Error::Singular);
        }
        m.swap(col, pivot);
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            if factor == 0.0 {
                continue;
            }
            for c in col..=n {
                m[row][c] -= factor * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let tail: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - tail) / m[i][i];
    }
    Ok(x)
}
