//! Minimal dense linear algebra: row-major matrices, Cholesky factorization,
//! and the handful of normal-equation helpers the samplers need.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length mismatch");
        Mat { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * v` for a length-`cols` vector.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ * v` for a length-`rows` vector.
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(self.row(i)) {
                *o += vi * x;
            }
        }
        out
    }

    /// `selfᵀ W self` with diagonal weights `w` (pass `None` for identity).
    pub fn xtwx(&self, w: Option<&[f64]>) -> Mat {
        let p = self.cols;
        let mut out = Mat::zeros(p, p);
        for i in 0..self.rows {
            let wi = w.map_or(1.0, |w| w[i]);
            if wi == 0.0 {
                continue;
            }
            let r = self.row(i);
            for a in 0..p {
                let s = wi * r[a];
                for b in a..p {
                    out.data[a * p + b] += s * r[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                out.data[a * p + b] = out.data[b * p + a];
            }
        }
        out
    }

    /// `selfᵀ W y` with diagonal weights `w` (pass `None` for identity).
    pub fn xtwy(&self, w: Option<&[f64]>, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let s = w.map_or(1.0, |w| w[i]) * y[i];
            if s == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(self.row(i)) {
                *o += s * x;
            }
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>, // row-major lower triangle, full n*n storage
}

impl Cholesky {
    /// Factorizes `a = L Lᵀ`. Fails on non-positive pivots.
    pub fn new(a: &Mat) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Dimension(format!(
                "Cholesky needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::Linalg(format!(
                            "matrix not positive definite at pivot {i} (value {s:.3e})"
                        )));
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, l })
    }

    /// Factorizes `a + jitter*I`, escalating the jitter a few times before
    /// giving up. Returns the factor of the first factorizable matrix.
    pub fn new_with_jitter(a: &Mat, base_jitter: f64) -> Result<Self> {
        match Cholesky::new(a) {
            Ok(c) => return Ok(c),
            Err(_) => {}
        }
        let n = a.rows();
        let mut scale = 0.0;
        for i in 0..n {
            scale += a.get(i, i).abs();
        }
        scale = (scale / n as f64).max(1e-300);
        let mut jitter = base_jitter * scale;
        for _ in 0..12 {
            let mut aj = a.clone();
            for i in 0..n {
                aj.set(i, i, aj.get(i, i) + jitter);
            }
            if let Ok(c) = Cholesky::new(&aj) {
                return Ok(c);
            }
            jitter *= 10.0;
        }
        Err(Error::Linalg(
            "matrix not positive semidefinite even after jitter".into(),
        ))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L z = b` in place.
    pub fn forward_solve(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn back_solve(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `A x = b` where `A = L Lᵀ`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_solve(&mut x);
        self.back_solve(&mut x);
        x
    }

    /// `L v` (used to turn iid normals into correlated draws).
    pub fn lower_matvec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| (0..=i).map(|k| self.l[i * n + k] * v[k]).sum())
            .collect()
    }

    /// Inverse of `A = L Lᵀ` as a dense matrix.
    pub fn inverse(&self) -> Mat {
        let n = self.n;
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        inv
    }

    /// log |A| where `A = L Lᵀ`.
    pub fn log_det(&self) -> f64 {
        let n = self.n;
        (0..n).map(|i| self.l[i * n + i].ln()).sum::<f64>() * 2.0
    }

    /// Diagonal entry `L[i,i]` (pivot), useful for rank diagnostics.
    pub fn pivot(&self, i: usize) -> f64 {
        self.l[i * self.n + i]
    }
}

/// Solves the SPD system `a x = b`.
pub fn solve_spd(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    Ok(Cholesky::new(a)?.solve(b))
}

/// Cholesky with a relative pivot check: rejects Gram matrices whose pivots
/// sit at rounding noise (collinear designs).
pub fn cholesky_full_rank(a: &Mat) -> Result<Cholesky> {
    let k = a.rows();
    let max_diag = (0..k).map(|j| a.get(j, j)).fold(0.0_f64, f64::max);
    let chol = Cholesky::new(a)
        .map_err(|_| Error::Linalg("matrix is rank deficient".into()))?;
    for j in 0..k {
        let pivot = chol.pivot(j);
        if pivot * pivot <= 1e-10 * max_diag {
            return Err(Error::Linalg("matrix is rank deficient".into()));
        }
    }
    Ok(chol)
}

/// Sample mean of each column.
pub fn col_means(m: &Mat) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (o, v) in out.iter_mut().zip(m.row(i)) {
            *o += v;
        }
    }
    let inv = 1.0 / m.rows() as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    out
}

/// Sample covariance (denominator n-1) of the rows of `m`.
pub fn sample_covariance(m: &Mat) -> Mat {
    let n = m.rows();
    let p = m.cols();
    let means = col_means(m);
    let mut cov = Mat::zeros(p, p);
    for i in 0..n {
        let r = m.row(i);
        for a in 0..p {
            let da = r[a] - means[a];
            for b in a..p {
                let v = cov.get(a, b) + da * (r[b] - means[b]);
                cov.set(a, b, v);
            }
        }
    }
    let denom = (n as f64 - 1.0).max(1.0);
    for a in 0..p {
        for b in a..p {
            let v = cov.get(a, b) / denom;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    cov
}

/// Mean and sample standard deviation (denominator n-1) of a slice.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let ss = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}
