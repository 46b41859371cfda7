//! Fixed-X knockoff construction.
//!
//! Given a full-rank design `X` (`n >= 2m`) with Gram matrix `Σ = XᵀX` and a
//! diagonal `D` with `0 ≺ D ≺ 2Σ`, the knockoff copy is
//!
//! ```text
//! X̃ = X Σ⁻¹ (Σ − D) + Ũ (2D − D Σ⁻¹ D)^{1/2}
//! ```
//!
//! where `Ũ` is any `n x m` matrix with orthonormal columns orthogonal to
//! `col(X)`. The result satisfies `X̃ᵀX̃ = Σ` and `XᵀX̃ = Σ − D`, hence
//! `(X + X̃)ᵀ(X − X̃) = 0`.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::numerics::{norm2, psd_sqrt, sym_eigen, Cholesky, HouseholderQr, Matrix, SymMatrix};
use crate::sim::rng::NormalStream;

/// Tolerance for the Gram identities checked at construction.
pub const GRAM_TOL: f64 = 1e-8;
/// Shrink applied to the equicorrelated `s`.
pub const EQUI_SHRINK: f64 = 1e-3;
const RANK_TOL: f64 = 1e-10;

/// A regression design with validated full column rank.
#[derive(Clone, Debug)]
pub struct Design {
    x: Matrix,
    standardized: bool,
}

impl Design {
    /// Validates `x` without rescaling it.
    pub fn new(x: Matrix) -> Result<Self> {
        check_columns(&x)?;
        Ok(Design {
            x,
            standardized: false,
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn m(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn gram(&self) -> SymMatrix {
        gram(&self.x)
    }

    /// Design with columns permuted: column `j` of the result is column
    /// `perm[j]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Design {
        Design {
            x: self.x.select_columns(perm),
            standardized: self.standardized,
        }
    }
}

fn gram(x: &Matrix) -> SymMatrix {
    let mut g = x.t_matmul(x);
    g.symmetrize();
    SymMatrix::new(g).expect("Gram matrix is symmetric")
}

fn check_columns(x: &Matrix) -> Result<Vec<f64>> {
    if !x.is_finite() {
        return Err(Error::InvalidMatrix("design has non-finite entries".into()));
    }
    if x.cols() == 0 {
        return Err(Error::EmptyInput);
    }
    if x.rows() < x.cols() {
        return Err(Error::RankDeficient(format!(
            "{} rows cannot support {} columns",
            x.rows(),
            x.cols()
        )));
    }
    let norms: Vec<f64> = (0..x.cols()).map(|j| norm2(&x.column(j))).collect();
    if let Some(j) = norms.iter().position(|&v| v <= 1e-12) {
        return Err(Error::DegenerateColumn { column: j });
    }
    let mut corr = gram(x).into_matrix();
    for i in 0..x.cols() {
        for j in 0..x.cols() {
            corr[(i, j)] /= norms[i] * norms[j];
        }
    }
    for i in 0..x.cols() {
        for j in (i + 1)..x.cols() {
            if (corr[(i, j)].abs() - 1.0).abs() <= 1e-12 {
                return Err(Error::RankDeficient(format!(
                    "columns {i} and {j} are collinear"
                )));
            }
        }
    }
    let eig = sym_eigen(&SymMatrix::new(corr)?)?;
    if eig.min() <= RANK_TOL {
        return Err(Error::RankDeficient(format!(
            "smallest eigenvalue of the normalized Gram matrix is {:e}",
            eig.min()
        )));
    }
    Ok(norms)
}

/// Rescales every column to unit Euclidean norm.
pub fn standardize(raw: &Matrix) -> Result<Design> {
    let norms = check_columns(raw)?;
    let x = Matrix::from_fn(raw.rows(), raw.cols(), |i, j| raw[(i, j)] / norms[j]);
    Ok(Design {
        x,
        standardized: true,
    })
}

/// How the knockoff diagonal was chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DRule {
    Equicorrelated,
    UserSupplied,
}

/// The diagonal of `D`, tagged with its origin.
#[derive(Clone, Debug, PartialEq)]
pub struct KnockoffDiag {
    values: Vec<f64>,
    rule: DRule,
}

impl KnockoffDiag {
    pub fn user(values: Vec<f64>) -> Self {
        KnockoffDiag {
            values,
            rule: DRule::UserSupplied,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rule(&self) -> DRule {
        self.rule
    }
}

/// Equicorrelated choice `D = s I` with `s = (1 − ε) min(1, 2 λ_min(Σ))`.
pub fn choose_d(sigma: &SymMatrix) -> Result<KnockoffDiag> {
    let lmin = sym_eigen(sigma)?.min();
    if lmin <= RANK_TOL {
        return Err(Error::RankDeficient(format!(
            "λ_min(Σ) = {lmin:e} is not positive"
        )));
    }
    let s = (1.0 - EQUI_SHRINK) * (2.0 * lmin).min(1.0);
    Ok(KnockoffDiag {
        values: vec![s; sigma.dim()],
        rule: DRule::Equicorrelated,
    })
}

/// Source of the orthonormal complement `Ũ`.
#[derive(Clone, Debug)]
pub enum ComplementBasis {
    /// Columns `m..2m` of the Householder orthogonal factor of `X`.
    Householder,
    /// A seeded random orthonormal basis of a subspace of `col(X)^⊥`.
    Random { seed: u64 },
    /// Caller-provided `n x m` basis; validated.
    Supplied(Matrix),
}

/// Max-abs residuals of the defining identities of a knockoff triple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GramResiduals {
    /// `‖X̃ᵀX̃ − Σ‖_max`
    pub knockoff_gram: f64,
    /// `‖XᵀX̃ − (Σ − D)‖_max`
    pub cross_gram: f64,
    /// `‖(X + X̃)ᵀ(X − X̃)‖_max`
    pub independence: f64,
    /// `min_j D_jj`
    pub min_d: f64,
    /// `λ_min(2Σ − D)`
    pub min_eig_2sigma_minus_d: f64,
}

impl GramResiduals {
    pub fn compute(x: &Matrix, x_tilde: &Matrix, d: &[f64]) -> Result<Self> {
        if x.rows() != x_tilde.rows() || x.cols() != x_tilde.cols() || d.len() != x.cols() {
            return Err(Error::InvalidMatrix(format!(
                "shape mismatch: X {}x{}, X̃ {}x{}, D {}",
                x.rows(),
                x.cols(),
                x_tilde.rows(),
                x_tilde.cols(),
                d.len()
            )));
        }
        let sigma = x.t_matmul(x);
        let mut sigma_minus_d = sigma.clone();
        let mut two_sigma_minus_d = sigma.scale(2.0);
        for (j, &dj) in d.iter().enumerate() {
            sigma_minus_d[(j, j)] -= dj;
            two_sigma_minus_d[(j, j)] -= dj;
        }
        let knockoff_gram = x_tilde.t_matmul(x_tilde).max_abs_diff(&sigma);
        let cross_gram = x.t_matmul(x_tilde).max_abs_diff(&sigma_minus_d);
        let independence = x.add(x_tilde).t_matmul(&x.sub(x_tilde)).max_abs();
        two_sigma_minus_d.symmetrize();
        let min_eig_2sigma_minus_d = sym_eigen(&SymMatrix::new(two_sigma_minus_d)?)?.min();
        let min_d = d.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(GramResiduals {
            knockoff_gram,
            cross_gram,
            independence,
            min_d,
            min_eig_2sigma_minus_d,
        })
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.knockoff_gram.max(self.cross_gram).max(self.independence)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_identity_residual() <= tol && self.min_d > 0.0 && self.min_eig_2sigma_minus_d > 0.0
    }
}

/// Design, knockoff copy, Gram matrix and diagonal, with verified identities.
#[derive(Clone, Debug)]
pub struct KnockoffModel {
    design: Design,
    x_tilde: Matrix,
    sigma: SymMatrix,
    d: Vec<f64>,
    rule: DRule,
    complement: Matrix,
    residuals: GramResiduals,
}

impl KnockoffModel {
    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn x(&self) -> &Matrix {
        self.design.x()
    }

    pub fn x_tilde(&self) -> &Matrix {
        &self.x_tilde
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn rule(&self) -> DRule {
        self.rule
    }

    /// The `Ũ` used in the construction.
    pub fn complement(&self) -> &Matrix {
        &self.complement
    }

    pub fn residuals(&self) -> &GramResiduals {
        &self.residuals
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn m(&self) -> usize {
        self.design.m()
    }

    /// `[X X̃]`.
    pub fn augmented(&self) -> Matrix {
        self.x().hstack(&self.x_tilde)
    }

    /// Writes `x.csv`, `xtilde.csv` and `d.csv` into `dir`.
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        write_bundle(dir, self.x(), &self.x_tilde, &self.d)
    }
}

pub fn build_knockoffs(design: &Design, d: &KnockoffDiag) -> Result<KnockoffModel> {
    build_knockoffs_with_basis(design, d, ComplementBasis::Householder)
}

pub fn build_knockoffs_with_basis(
    design: &Design,
    d: &KnockoffDiag,
    basis: ComplementBasis,
) -> Result<KnockoffModel> {
    let (n, m) = (design.n(), design.m());
    if n < 2 * m {
        return Err(Error::InsufficientRows { n, m });
    }
    let dv = d.values();
    if dv.len() != m {
        return Err(Error::InfeasibleD(format!(
            "expected {m} diagonal entries, got {}",
            dv.len()
        )));
    }
    if let Some(j) = dv.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InfeasibleD(format!("D[{j}] = {} is not positive", dv[j])));
    }
    let sigma = design.gram();

    let mut two_sigma_minus_d = sigma.scale(2.0);
    for (j, &dj) in dv.iter().enumerate() {
        two_sigma_minus_d[(j, j)] -= dj;
    }
    let lmin = sym_eigen(&SymMatrix::new(two_sigma_minus_d)?)?.min();
    if !(lmin > 0.0) {
        return Err(Error::InfeasibleD(format!(
            "2Σ − D is not positive definite (λ_min = {lmin:e})"
        )));
    }

    let chol = Cholesky::new(&sigma)
        .map_err(|e| Error::RankDeficient(format!("Σ is not positive definite: {e}")))?;
    // Σ⁻¹ D
    let sigma_inv_d = chol.solve_matrix(&Matrix::from_diag(dv));
    // 2D − D Σ⁻¹ D
    let mut inner = Matrix::from_fn(m, m, |i, j| -dv[i] * sigma_inv_d[(i, j)]);
    for (j, &dj) in dv.iter().enumerate() {
        inner[(j, j)] += 2.0 * dj;
    }
    inner.symmetrize();
    let root = psd_sqrt(&SymMatrix::new(inner)?).map_err(|e| match e {
        Error::NotPsd { min_eigenvalue, .. } => Error::InfeasibleD(format!(
            "2D − DΣ⁻¹D has eigenvalue {min_eigenvalue:e}"
        )),
        other => other,
    })?;

    let complement = complement_basis(design.x(), basis)?;

    // X Σ⁻¹(Σ − D) = X − X Σ⁻¹ D
    let x = design.x();
    let x_tilde = x.sub(&x.matmul(&sigma_inv_d)).add(&complement.matmul(&root));

    let residuals = GramResiduals::compute(x, &x_tilde, dv)?;
    let tol = GRAM_TOL * sigma.max_abs().max(1.0);
    if !residuals.passes(tol) {
        return Err(Error::InfeasibleD(format!(
            "Gram identities violated after construction (max residual {:e})",
            residuals.max_identity_residual()
        )));
    }

    Ok(KnockoffModel {
        design: design.clone(),
        x_tilde,
        sigma,
        d: dv.to_vec(),
        rule: d.rule(),
        complement,
        residuals,
    })
}

fn complement_basis(x: &Matrix, basis: ComplementBasis) -> Result<Matrix> {
    let (n, m) = (x.rows(), x.cols());
    match basis {
        ComplementBasis::Householder => Ok(HouseholderQr::new(x).q_columns(m, 2 * m)),
        ComplementBasis::Random { seed } => {
            let mut normals = NormalStream::new(ChaCha20Rng::seed_from_u64(seed));
            let g = Matrix::from_fn(n, m, |_, _| normals.next());
            let qr = HouseholderQr::new(&x.hstack(&g));
            Ok(qr.q_columns(m, 2 * m))
        }
        ComplementBasis::Supplied(u) => {
            if u.rows() != n || u.cols() != m {
                return Err(Error::InvalidMatrix(format!(
                    "complement basis must be {n}x{m}, got {}x{}",
                    u.rows(),
                    u.cols()
                )));
            }
            let ortho = u.t_matmul(&u).max_abs_diff(&Matrix::identity(m));
            let cross = x.t_matmul(&u).max_abs() / x.max_abs().max(1.0);
            if ortho > 1e-10 || cross > 1e-10 {
                return Err(Error::InvalidMatrix(format!(
                    "supplied basis is not orthonormal and orthogonal to col(X) \
                     (‖ŨᵀŨ − I‖ = {ortho:e}, ‖XᵀŨ‖ = {cross:e})"
                )));
            }
            Ok(u)
        }
    }
}

/// Header-less numeric CSV, one row per line.
pub fn write_matrix_csv(path: &Path, a: &Matrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..a.rows() {
        w.write_record(a.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a header-less numeric CSV.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::Schema(format!("{}: row {}: bad number {s:?}", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

/// Writes a `(X, X̃, D)` triple: `x.csv` and `xtilde.csv` are header-less
/// numeric matrices, `d.csv` has columns `j,d` (1-based `j`).
pub fn write_bundle(dir: &Path, x: &Matrix, x_tilde: &Matrix, d: &[f64]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix_csv(&dir.join("x.csv"), x)?;
    write_matrix_csv(&dir.join("xtilde.csv"), x_tilde)?;
    let mut w = csv::Writer::from_path(dir.join("d.csv"))?;
    w.write_record(["j", "d"])?;
    for (j, v) in d.iter().enumerate() {
        w.write_record([(j + 1).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a bundle written by [`write_bundle`].
pub fn read_bundle(dir: &Path) -> Result<(Matrix, Matrix, Vec<f64>)> {
    let x = read_matrix_csv(&dir.join("x.csv"))?;
    let x_tilde = read_matrix_csv(&dir.join("xtilde.csv"))?;
    let path = dir.join("d.csv");
    let mut r = csv::Reader::from_path(&path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut d = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v = rec
            .get(1)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::Schema(format!("{}: bad record {rec:?}", path.display())))?;
        d.push(v);
    }
    Ok((x, x_tilde, d))
}
