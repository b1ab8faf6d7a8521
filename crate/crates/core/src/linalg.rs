//! Dense symmetric matrices, just enough for Gaussian targets and laws.

use crate::error::{Error, Result};
use crate::real::Real;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    n: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![F::one(); n])
    }

    pub fn diagonal(diag: &[F]) -> Self {
        let n = diag.len();
        let mut data = vec![F::zero(); n * n];
        for (i, &d) in diag.iter().enumerate() {
            data[i * n + i] = d;
        }
        Self { n, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<F>> {
        self.data.chunks(self.n).map(<[F]>::to_vec).collect()
    }

    pub fn diag(&self) -> Vec<F> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| i == j || self.get(i, j) == F::zero()))
    }

    pub fn mul_vec(&self, v: &[F]) -> Vec<F> {
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: F) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<F> {
    lower: Matrix<F>,
}

impl<F: Real> Cholesky<F> {
    pub fn new(a: &Matrix<F>) -> Result<Self> {
        let n = a.n;
        let tol = F::lit(1e-10);
        for i in 0..n {
            for j in 0..i {
                let (x, y) = (a.get(i, j), a.get(j, i));
                if (x - y).abs() > tol * (F::one() + x.abs().max(y.abs())) {
                    return Err(Error::InvalidInput("covariance is not symmetric".into()));
                }
            }
        }
        let mut l = vec![F::zero(); n * n];
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d = d - l[j * n + k] * l[j * n + k];
            }
            if !(d > F::zero()) || !d.is_finite() {
                return Err(Error::InvalidInput("covariance is not positive definite".into()));
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self {
            lower: Matrix { n, data: l },
        })
    }

    pub fn lower(&self) -> &Matrix<F> {
        &self.lower
    }

    pub fn log_det(&self) -> F {
        let two = F::lit(2.0);
        (0..self.lower.n).map(|i| two * self.lower.get(i, i).ln()).sum()
    }

    /// `L z`, used to colour standard normal draws.
    pub fn mul_lower(&self, z: &[F]) -> Vec<F> {
        let n = self.lower.n;
        (0..n)
            .map(|i| (0..=i).map(|k| self.lower.get(i, k) * z[k]).sum())
            .collect()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let n = self.lower.n;
        let l = &self.lower;
        let mut y = vec![F::zero(); n];
        for i in 0..n {
            let mut s = b[i];
            for (k, &yk) in y.iter().enumerate().take(i) {
                s = s - l.get(i, k) * yk;
            }
            y[i] = s / l.get(i, i);
        }
        let mut x = vec![F::zero(); n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for (k, &xk) in x.iter().enumerate().skip(i + 1) {
                s = s - l.get(k, i) * xk;
            }
            x[i] = s / l.get(i, i);
        }
        x
    }

    pub fn inverse(&self) -> Matrix<F> {
        let n = self.lower.n;
        let mut data = vec![F::zero(); n * n];
        for j in 0..n {
            let mut e = vec![F::zero(); n];
            e[j] = F::one();
            let col = self.solve(&e);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
        // symmetrise away round-off
        let half = F::lit(0.5);
        for i in 0..n {
            for j in 0..i {
                let v = half * (data[i * n + j] + data[j * n + i]);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Matrix { n, data }
    }
}
