//! Cyclic Jacobi eigendecomposition for symmetric matrices and the
//! PSD square root built on it.

use super::matrix::{Matrix, SymMatrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues in ascending order with matching orthonormal eigenvectors
/// stored as the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NAN)
    }

    /// Spectral norm, `max |λ_i|`.
    pub fn spectral_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `V f(Λ) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let v = &self.vectors;
        let mut out = Matrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| v[(i, k)] * mapped[k] * v[(j, k)]).sum()
        });
        out.symmetrize();
        out
    }
}

pub fn sym_eigen(a: &SymMatrix) -> Result<SymEigen> {
    let n = a.dim();
    if !a.is_finite() {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    let mut m = a.matrix().clone();
    let mut v = Matrix::identity(n);

    let fro = m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    let floor = 1e-20 * fro;

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotations = 0usize;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= floor
                    || apq.abs() <= 0.1 * f64::EPSILON * (m[(p, p)] * m[(q, q)]).abs().sqrt()
                {
                    continue;
                }
                rotations += 1;
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                // signum keeps the rotation sequence equivariant under
                // column sign flips (it honours -0.0).
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                m[(p, p)] -= t * apq;
                m[(q, q)] += t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = m[(r, p)];
                    let arq = m[(r, q)];
                    let new_rp = c * arp - s * arq;
                    let new_rq = s * arp + c * arq;
                    m[(r, p)] = new_rp;
                    m[(p, r)] = new_rp;
                    m[(r, q)] = new_rq;
                    m[(q, r)] = new_rq;
                }
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
        converged = rotations == 0;
    }
    if !converged {
        return Err(Error::InvalidMatrix(format!(
            "Jacobi iteration did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = v.select_columns(&order);
    Ok(SymEigen { values, vectors })
}

/// Symmetric PSD square root. Eigenvalues in `[-1e-10 ‖A‖, 0)` are clamped
/// to zero, where `‖A‖` is the spectral norm.
pub fn psd_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eigen(a)?;
    let tolerance = 1e-10 * eig.spectral_norm();
    if eig.min() < -tolerance {
        return Err(Error::NotPsd {
            min_eigenvalue: eig.min(),
            tolerance,
        });
    }
    let b = eig.reconstruct_with(|l| l.max(0.0).sqrt());
    SymMatrix::new(b)
}
