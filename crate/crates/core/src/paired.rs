//! The two independent coefficient estimators and their p-values.
//!
//! With `Σ = XᵀX` and knockoffs satisfying `XᵀX̃ = Σ − D`,
//!
//! ```text
//! β̂₁ = (2Σ − D)⁻¹ (X + X̃)ᵀY  ~  N(β, 2σ²(2Σ − D)⁻¹)
//! β̂₂ = D⁻¹ (X − X̃)ᵀY         ~  N(β, 2σ² D⁻¹)
//! ```
//!
//! and because `(X + X̃)ᵀ(X − X̃) = 0` the two are independent.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knockoff::KnockoffModel;
use crate::numerics::{dot, t_two_sided, Cholesky, Matrix, SymMatrix, TParams};

/// Tolerance on the unbiasedness identities checked in [`PairedInference::new`].
pub const UNBIASED_TOL: f64 = 1e-8;

/// Where the residual scale `σ̂` comes from. `ν = n − 2m` in every case.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "sigma")]
pub enum NoiseScale {
    /// Residuals of `Y` regressed on `[X X̃]`, which have exactly `n − 2m`
    /// degrees of freedom and are independent of both estimators.
    #[default]
    Augmented,
    /// Residuals of `Y` regressed on `X` alone, divided by `n − 2m`. This
    /// overstates `σ²` by the factor `(n − m)/(n − 2m)` on average.
    OriginalDesign,
    /// A known noise level.
    Known(f64),
}

/// `(P₁, P₂, T₁, T₂, β̂₁, β̂₂, σ̂, ν)` for one response vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedEvidence {
    t1: Vec<f64>,
    t2: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
    beta1: Vec<f64>,
    beta2: Vec<f64>,
    sigma_hat: f64,
    nu: usize,
}

impl PairedEvidence {
    /// Rebuilds the p-values from stored statistics.
    pub fn from_statistics(
        t1: Vec<f64>,
        t2: Vec<f64>,
        beta1: Vec<f64>,
        beta2: Vec<f64>,
        sigma_hat: f64,
        nu: usize,
    ) -> Result<Self> {
        let m = t1.len();
        if t2.len() != m || beta1.len() != m || beta2.len() != m {
            return Err(Error::InvalidArgument("statistic vectors differ in length".into()));
        }
        if !(sigma_hat > 0.0) || !sigma_hat.is_finite() {
            return Err(Error::DegenerateFit);
        }
        let tp = TParams::new(nu as f64).ok_or(Error::InsufficientDf { n: nu, m: 0 })?;
        let p1 = t1.iter().map(|&t| t_two_sided(t, tp)).collect();
        let p2 = t2.iter().map(|&t| t_two_sided(t, tp)).collect();
        Ok(PairedEvidence {
            t1,
            t2,
            p1,
            p2,
            beta1,
            beta2,
            sigma_hat,
            nu,
        })
    }

    pub fn m(&self) -> usize {
        self.p1.len()
    }
    pub fn p1(&self) -> &[f64] {
        &self.p1
    }
    pub fn p2(&self) -> &[f64] {
        &self.p2
    }
    pub fn t1(&self) -> &[f64] {
        &self.t1
    }
    pub fn t2(&self) -> &[f64] {
        &self.t2
    }
    pub fn beta1(&self) -> &[f64] {
        &self.beta1
    }
    pub fn beta2(&self) -> &[f64] {
        &self.beta2
    }
    pub fn sigma_hat(&self) -> f64 {
        self.sigma_hat
    }
    pub fn nu(&self) -> usize {
        self.nu
    }

    /// CSV with `# sigma_hat=` and `# nu=` comment lines followed by the
    /// columns `j,T1,P1,T2,P2` (1-based `j`).
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# sigma_hat={}", self.sigma_hat)?;
        writeln!(w, "# nu={}", self.nu)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["j", "T1", "P1", "T2", "P2"])?;
        for j in 0..self.m() {
            csv.write_record([
                (j + 1).to_string(),
                self.t1[j].to_string(),
                self.p1[j].to_string(),
                self.t2[j].to_string(),
                self.p2[j].to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Precomputed pieces of the paired analysis for one knockoff model; cheap
/// to apply to many responses.
pub struct PairedInference<'a> {
    model: &'a KnockoffModel,
    scale: NoiseScale,
    x_plus: Matrix,
    x_minus: Matrix,
    chol_2s_d: Cholesky,
    inv_2s_d_diag: Vec<f64>,
    chol_sigma: Option<Cholesky>,
    nu: usize,
}

impl<'a> PairedInference<'a> {
    pub fn new(model: &'a KnockoffModel, scale: NoiseScale) -> Result<Self> {
        let (n, m) = (model.n(), model.m());
        if n <= 2 * m {
            return Err(Error::InsufficientDf { n, m });
        }
        if let NoiseScale::Known(s) = scale {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidArgument(format!("known sigma must be positive, got {s}")));
            }
        }
        let x = model.x();
        let xt = model.x_tilde();
        let x_plus = x.add(xt);
        let x_minus = x.sub(xt);
        let d = model.d();

        let mut a = model.sigma().scale(2.0);
        for (j, &dj) in d.iter().enumerate() {
            a[(j, j)] -= dj;
        }
        let chol_2s_d = Cholesky::new(&SymMatrix::new(a)?)
            .map_err(|e| Error::InfeasibleD(format!("2Σ − D: {e}")))?;
        let inv_2s_d_diag = chol_2s_d.inverse().diag();

        // (2Σ − D)⁻¹(X + X̃)ᵀX = I and D⁻¹(X − X̃)ᵀX = I
        let eye = Matrix::identity(m);
        let u1 = chol_2s_d.solve_matrix(&x_plus.t_matmul(x));
        let mut u2 = x_minus.t_matmul(x);
        for i in 0..m {
            for v in u2.row_mut(i) {
                *v /= d[i];
            }
        }
        let r1 = u1.max_abs_diff(&eye);
        let r2 = u2.max_abs_diff(&eye);
        if r1 > UNBIASED_TOL || r2 > UNBIASED_TOL {
            return Err(Error::InfeasibleD(format!(
                "unbiasedness identities fail (residuals {r1:e}, {r2:e})"
            )));
        }

        let chol_sigma = match scale {
            NoiseScale::OriginalDesign => Some(Cholesky::new(model.sigma())?),
            _ => None,
        };
        Ok(PairedInference {
            model,
            scale,
            x_plus,
            x_minus,
            chol_2s_d,
            inv_2s_d_diag,
            chol_sigma,
            nu: n - 2 * m,
        })
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn scale(&self) -> NoiseScale {
        self.scale
    }

    fn check_response(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.model.n() {
            return Err(Error::InvalidArgument(format!(
                "response has length {}, design has {} rows",
                y.len(),
                self.model.n()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("response entry {i} is not finite")));
        }
        Ok(())
    }

    fn estimators_unchecked(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let b1 = self.chol_2s_d.solve(&self.x_plus.t_mul_vec(y));
        let b2 = self
            .x_minus
            .t_mul_vec(y)
            .iter()
            .zip(self.model.d())
            .map(|(v, d)| v / d)
            .collect();
        (b1, b2)
    }

    /// `(β̂₁, β̂₂)`.
    pub fn twin_estimators(&self, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_response(y)?;
        Ok(self.estimators_unchecked(y))
    }

    fn sigma_from(&self, y: &[f64], b1: &[f64], b2: &[f64]) -> f64 {
        let fitted: Vec<f64> = match self.scale {
            NoiseScale::Known(s) => return s,
            NoiseScale::Augmented => {
                // span[X X̃] splits into the orthogonal spans of X + X̃ and
                // X − X̃, whose projections are (X + X̃)β̂₁/2 and (X − X̃)β̂₂/2
                let a = self.x_plus.mul_vec(b1);
                let b = self.x_minus.mul_vec(b2);
                a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect()
            }
            NoiseScale::OriginalDesign => {
                let x = self.model.x();
                let chol = self.chol_sigma.as_ref().expect("factor built for this scale");
                x.mul_vec(&chol.solve(&x.t_mul_vec(y)))
            }
        };
        let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
        if rss <= 1e-24 * dot(y, y) {
            return 0.0;
        }
        (rss / self.nu as f64).sqrt()
    }

    /// `(σ̂, ν)`; `σ̂ = 0` signals a response lying in the fitted span.
    pub fn sigma_hat(&self, y: &[f64]) -> Result<(f64, usize)> {
        self.check_response(y)?;
        let (b1, b2) = self.estimators_unchecked(y);
        Ok((self.sigma_from(y, &b1, &b2), self.nu))
    }

    pub fn evidence(&self, y: &[f64]) -> Result<PairedEvidence> {
        self.check_response(y)?;
        let (b1, b2) = self.estimators_unchecked(y);
        let sigma = self.sigma_from(y, &b1, &b2);
        if !(sigma > 0.0) {
            return Err(Error::DegenerateFit);
        }
        let root2 = std::f64::consts::SQRT_2;
        let t1 = b1
            .iter()
            .zip(&self.inv_2s_d_diag)
            .map(|(b, v)| b / (sigma * root2 * v.sqrt()))
            .collect();
        let t2 = b2
            .iter()
            .zip(self.model.d())
            .map(|(b, d)| b * d.sqrt() / (sigma * root2))
            .collect();
        PairedEvidence::from_statistics(t1, t2, b1, b2, sigma, self.nu)
    }
}

/// `(σ̂, ν)` with the default noise scale.
pub fn sigma_hat(model: &KnockoffModel, y: &[f64]) -> Result<(f64, usize)> {
    PairedInference::new(model, NoiseScale::default())?.sigma_hat(y)
}

pub fn twin_estimators(model: &KnockoffModel, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    PairedInference::new(model, NoiseScale::default())?.twin_estimators(y)
}

pub fn paired_pvalues(model: &KnockoffModel, y: &[f64]) -> Result<PairedEvidence> {
    PairedInference::new(model, NoiseScale::default())?.evidence(y)
}
