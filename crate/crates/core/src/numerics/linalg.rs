//! Cholesky solves and Householder orthogonal completions.

use super::matrix::{dot, Matrix, SymMatrix};
use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn new(a: &SymMatrix) -> Result<Self> {
        let n = a.dim();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite(format!(
                    "pivot {j} is {d:e}"
                )));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let l = &self.l;
        let mut y = b.to_vec();
        for i in 0..n {
            let s = dot(&l.row(i)[..i], &y[..i]);
            y[i] = (y[i] - s) / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            out.set_column(j, &self.solve(&b.column(j)));
        }
        out
    }

    pub fn inverse(&self) -> SymMatrix {
        let mut inv = self.solve_matrix(&Matrix::identity(self.dim()));
        inv.symmetrize();
        SymMatrix::new(inv).expect("inverse of an SPD matrix is symmetric")
    }
}

/// Householder QR of an `n x p` matrix (`n >= p`), keeping the reflectors so
/// that columns of the full `n x n` orthogonal factor can be formed on demand.
pub struct HouseholderQr {
    n: usize,
    reflectors: Vec<Vec<f64>>,
    r_diag: Vec<f64>,
}

impl HouseholderQr {
    pub fn new(a: &Matrix) -> Self {
        let (n, p) = (a.rows(), a.cols());
        assert!(n >= p, "QR requires at least as many rows as columns");
        let mut work = a.clone();
        let mut reflectors = Vec::with_capacity(p);
        let mut r_diag = Vec::with_capacity(p);
        for k in 0..p {
            let mut v: Vec<f64> = (k..n).map(|i| work[(i, k)]).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            r_diag.push(alpha);
            v[0] -= alpha;
            let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if vnorm > 0.0 {
                for x in v.iter_mut() {
                    *x /= vnorm;
                }
                for j in k..p {
                    let s: f64 = (k..n).map(|i| v[i - k] * work[(i, j)]).sum();
                    for i in k..n {
                        work[(i, j)] -= 2.0 * s * v[i - k];
                    }
                }
            }
            reflectors.push(v);
        }
        HouseholderQr {
            n,
            reflectors,
            r_diag,
        }
    }

    /// Diagonal of `R` (signed).
    pub fn r_diag(&self) -> &[f64] {
        &self.r_diag
    }

    /// `Q e_j`, the `j`-th column of the full orthogonal factor.
    pub fn q_column(&self, j: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        x[j] = 1.0;
        for (k, v) in self.reflectors.iter().enumerate().rev() {
            let s: f64 = v.iter().zip(&x[k..]).map(|(a, b)| a * b).sum();
            if s != 0.0 {
                for (xi, vi) in x[k..].iter_mut().zip(v) {
                    *xi -= 2.0 * s * vi;
                }
            }
        }
        x
    }

    /// Columns `start..end` of the full orthogonal factor.
    pub fn q_columns(&self, start: usize, end: usize) -> Matrix {
        let mut out = Matrix::zeros(self.n, end - start);
        for (c, j) in (start..end).enumerate() {
            out.set_column(c, &self.q_column(j));
        }
        out
    }
}
