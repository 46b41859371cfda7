//! The knockoff filter: lasso entry penalties on `[X X̃]`, antisymmetric
//! statistics and the knockoff+ threshold.

use std::io::Write;

use crate::error::{Error, Result};
use crate::knockoff::KnockoffModel;
use crate::numerics::Matrix;
use crate::procedures::DecisionReport;

pub const DEFAULT_GRID_SIZE: usize = 100;
pub const DEFAULT_GRID_RATIO: f64 = 1e-3;
/// KKT tolerance, relative to `max(1, λ_max)`.
pub const KKT_TOL: f64 = 1e-7;
/// A coefficient counts as nonzero above this magnitude.
pub const NONZERO_TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 100_000;

/// Lasso solutions of `½‖Y − Zb‖² + λ‖b‖₁` on a decreasing grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LassoPath {
    grid: Vec<f64>,
    coefficients: Matrix,
    entry_penalty: Vec<f64>,
}

impl LassoPath {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Row `i` holds the solution at `grid[i]`.
    pub fn coefficients(&self) -> &Matrix {
        &self.coefficients
    }

    /// Largest grid penalty at which each coefficient is nonzero, `0` if never.
    pub fn entry_penalty(&self) -> &[f64] {
        &self.entry_penalty
    }
}

/// `λ_max · ratio^{i/(G−1)}`, `i = 0..G`.
pub fn penalty_grid(lambda_max: f64, size: usize, ratio: f64) -> Result<Vec<f64>> {
    if size < 2 {
        return Err(Error::InvalidArgument(format!("grid needs at least 2 points, got {size}")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("grid ratio must lie in (0, 1), got {ratio}")));
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("λ_max must be positive, got {lambda_max}")));
    }
    let step = ratio.ln() / (size - 1) as f64;
    Ok((0..size).map(|i| lambda_max * (step * i as f64).exp()).collect())
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Largest violation of the lasso subgradient conditions, given the
/// gradient `g = Zᵀ(Y − Zb)`.
pub fn kkt_violation(g: &[f64], b: &[f64], lambda: f64) -> f64 {
    g.iter()
        .zip(b)
        .map(|(&gj, &bj)| {
            if bj > 0.0 {
                (gj - lambda).abs()
            } else if bj < 0.0 {
                (gj + lambda).abs()
            } else {
                (gj.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn exact_gradient(gram: &Matrix, zty: &[f64], b: &[f64]) -> Vec<f64> {
    let gb = gram.mul_vec(b);
    zty.iter().zip(&gb).map(|(c, v)| c - v).collect()
}

/// Path from the Gram matrix `ZᵀZ` and `ZᵀY`, by cyclic coordinate descent
/// with warm starts and a maintained gradient. The grid starts at
/// `λ_max = max|ZᵀY|`; if that is zero every coefficient stays zero.
pub fn lasso_path_gram(gram: &Matrix, zty: &[f64], grid_size: usize, grid_ratio: f64) -> Result<LassoPath> {
    let p = zty.len();
    if gram.rows() != p || gram.cols() != p {
        return Err(Error::InvalidMatrix(format!(
            "Gram matrix is {}x{}, expected {p}x{p}",
            gram.rows(),
            gram.cols()
        )));
    }
    if let Some(j) = (0..p).find(|&j| !(gram[(j, j)] > 0.0)) {
        return Err(Error::DegenerateColumn { column: j });
    }
    if !zty.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("ZᵀY has non-finite entries".into()));
    }
    let lambda_max = zty.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let grid = penalty_grid(if lambda_max > 0.0 { lambda_max } else { 1.0 }, grid_size, grid_ratio)?;
    let mut coefficients = Matrix::zeros(grid_size, p);
    let mut entry_penalty = vec![0.0; p];
    if lambda_max == 0.0 {
        return Ok(LassoPath {
            grid,
            coefficients,
            entry_penalty,
        });
    }

    let tol = KKT_TOL * lambda_max.max(1.0);
    let mut b = vec![0.0; p];
    let mut g = zty.to_vec();
    for (i, &lambda) in grid.iter().enumerate() {
        let mut sweeps = 0;
        loop {
            for j in 0..p {
                let gjj = gram[(j, j)];
                let old = b[j];
                let new = soft(g[j] + gjj * old, lambda) / gjj;
                let delta = new - old;
                if delta != 0.0 {
                    b[j] = new;
                    let col = gram.row(j); // symmetric
                    for (gk, ck) in g.iter_mut().zip(col) {
                        *gk -= delta * ck;
                    }
                }
            }
            sweeps += 1;
            if kkt_violation(&g, &b, lambda) <= tol {
                // refresh the gradient to shed drift before accepting
                g = exact_gradient(gram, zty, &b);
                if kkt_violation(&g, &b, lambda) <= tol {
                    break;
                }
            }
            if sweeps >= MAX_SWEEPS {
                return Err(Error::LassoDiverged { penalty: lambda, sweeps });
            }
        }
        coefficients.row_mut(i).copy_from_slice(&b);
        for j in 0..p {
            if entry_penalty[j] == 0.0 && b[j].abs() > NONZERO_TOL {
                entry_penalty[j] = lambda;
            }
        }
    }
    Ok(LassoPath {
        grid,
        coefficients,
        entry_penalty,
    })
}

/// Path on an arbitrary design `Z`.
pub fn lasso_path_design(z: &Matrix, y: &[f64], grid_size: usize, grid_ratio: f64) -> Result<LassoPath> {
    if y.len() != z.rows() {
        return Err(Error::InvalidArgument(format!(
            "response has length {}, design has {} rows",
            y.len(),
            z.rows()
        )));
    }
    let mut gram = z.t_matmul(z);
    gram.symmetrize();
    lasso_path_gram(&gram, &z.t_mul_vec(y), grid_size, grid_ratio)
}

/// `[[Σ, Σ − D], [Σ − D, Σ]]`, the Gram matrix of `[X X̃]`.
pub fn augmented_gram(model: &KnockoffModel) -> Matrix {
    let m = model.m();
    let sigma = model.sigma();
    let d = model.d();
    Matrix::from_fn(2 * m, 2 * m, |i, j| {
        let v = sigma[(i % m, j % m)];
        if (i < m) != (j < m) && i % m == j % m {
            v - d[i % m]
        } else {
            v
        }
    })
}

/// Path on `[X X̃]`.
pub fn lasso_path(model: &KnockoffModel, y: &[f64], grid_size: usize, grid_ratio: f64) -> Result<LassoPath> {
    if y.len() != model.n() {
        return Err(Error::InvalidArgument(format!(
            "response has length {}, design has {} rows",
            y.len(),
            model.n()
        )));
    }
    let mut zty = model.x().t_mul_vec(y);
    zty.extend(model.x_tilde().t_mul_vec(y));
    lasso_path_gram(&augmented_gram(model), &zty, grid_size, grid_ratio)
}

/// `V_j = (L_j ∨ L̃_j)(2·𝟙{L_j > L̃_j} − 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KnockoffStats {
    pub l: Vec<f64>,
    pub l_tilde: Vec<f64>,
    pub v: Vec<f64>,
}

impl KnockoffStats {
    pub fn from_entries(l: Vec<f64>, l_tilde: Vec<f64>) -> Result<Self> {
        if l.len() != l_tilde.len() {
            return Err(Error::InvalidArgument("entry vectors differ in length".into()));
        }
        let v = l
            .iter()
            .zip(&l_tilde)
            .map(|(&a, &b)| {
                let top = a.max(b);
                if top == 0.0 {
                    0.0
                } else if a > b {
                    top
                } else {
                    -top
                }
            })
            .collect();
        Ok(KnockoffStats { l, l_tilde, v })
    }

    pub fn m(&self) -> usize {
        self.v.len()
    }

    /// CSV `j,L,L_tilde,V,T` with the threshold repeated on every row.
    pub fn write_csv(&self, threshold: f64, w: impl Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["j", "L", "L_tilde", "V", "T"])?;
        for j in 0..self.m() {
            csv.write_record([
                (j + 1).to_string(),
                self.l[j].to_string(),
                self.l_tilde[j].to_string(),
                self.v[j].to_string(),
                threshold.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Splits a path on `[X X̃]` into `(L, L̃)` and forms `V`.
pub fn knockoff_stats(path: &LassoPath) -> Result<KnockoffStats> {
    let e = path.entry_penalty();
    if !e.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument("path does not cover an augmented design".into()));
    }
    let m = e.len() / 2;
    KnockoffStats::from_entries(e[..m].to_vec(), e[m..].to_vec())
}

fn plus_ratio(v: &[f64], t: f64) -> f64 {
    let neg = v.iter().filter(|&&x| x <= -t).count();
    let pos = v.iter().filter(|&&x| x >= t).count();
    (1.0 + neg as f64) / pos.max(1) as f64
}

fn candidates(v: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = v.iter().map(|x| x.abs()).filter(|&x| x > 0.0).collect();
    c.sort_by(|a, b| a.total_cmp(b));
    c.dedup();
    c
}

/// `T = min{t ∈ 𝒱 : (1 + #{V ≤ −t}) / (#{V ≥ t} ∨ 1) ≤ α}`, `∞` if empty.
pub fn knockoff_threshold(v: &[f64], alpha: f64) -> f64 {
    candidates(v)
        .into_iter()
        .find(|&t| plus_ratio(v, t) <= alpha)
        .unwrap_or(f64::INFINITY)
}

/// Selects `{j : V_j ≥ T}`. The adjusted value of `j` is the smallest level
/// at which it would be selected, `min{ratio(t) : t ∈ 𝒱, t ≤ V_j}`, and `∞`
/// when `V_j ≤ 0`.
pub fn knockoff_select(stats: &KnockoffStats, alpha: f64) -> Result<DecisionReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let v = &stats.v;
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("knockoff statistics contain NaN".into()));
    }
    let cands = candidates(v);
    let ratios: Vec<f64> = cands.iter().map(|&t| plus_ratio(v, t)).collect();
    let threshold = cands
        .iter()
        .zip(&ratios)
        .find(|(_, &r)| r <= alpha)
        .map(|(&t, _)| t)
        .unwrap_or(f64::INFINITY);
    let adjusted = v
        .iter()
        .map(|&vj| {
            if vj <= 0.0 {
                return f64::INFINITY;
            }
            cands
                .iter()
                .zip(&ratios)
                .take_while(|(&t, _)| t <= vj)
                .map(|(_, &r)| r)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let rejected = (0..v.len()).filter(|&j| v[j] >= threshold).collect();
    Ok(DecisionReport::knockoff(alpha, adjusted, rejected, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knockoff::{build_knockoffs, choose_d, standardize};
    use crate::numerics::HouseholderQr;
    use crate::sim::gen_design;
    use crate::sim::rng::NormalStream;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut s = NormalStream::new(ChaCha20Rng::seed_from_u64(seed));
        (0..n).map(|_| s.next()).collect()
    }

    /// Subgradient conditions from scratch: `Zᵀ(Y − Zb) ∈ λ ∂‖b‖₁`.
    fn brute_kkt(z: &Matrix, y: &[f64], b: &[f64], lambda: f64) -> f64 {
        let fit = z.mul_vec(b);
        let r: Vec<f64> = y.iter().zip(&fit).map(|(a, f)| a - f).collect();
        let mut worst = 0.0f64;
        for j in 0..z.cols() {
            let gj: f64 = (0..z.rows()).map(|i| z[(i, j)] * r[i]).sum();
            let v = if b[j] != 0.0 {
                (gj - lambda * b[j].signum()).abs()
            } else {
                (gj.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    #[test]
    fn zero_response_gives_empty_path() {
        let z = gen_design(10, 4, 0.2, 1);
        let path = lasso_path_design(&z, &[0.0; 10], 20, 1e-3).unwrap();
        assert!(path.coefficients().max_abs() == 0.0);
        assert!(path.entry_penalty().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_shape() {
        let g = penalty_grid(2.0, 100, 1e-3).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 2.0);
        assert!((g[99] - 2e-3).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
        assert!(penalty_grid(1.0, 1, 0.5).is_err());
    }

    #[test]
    fn orthogonal_design_soft_threshold_oracle() {
        let z = HouseholderQr::new(&gen_design(20, 6, 0.0, 2)).q_columns(0, 6);
        let y = normals(20, 3);
        let c = z.t_mul_vec(&y);
        let path = lasso_path_design(&z, &y, 50, 1e-3).unwrap();
        for (i, &lambda) in path.grid().iter().enumerate() {
            for j in 0..6 {
                let expect = soft(c[j], lambda);
                assert!((path.coefficients()[(i, j)] - expect).abs() < 1e-9);
            }
        }
        for j in 0..6 {
            let snapped = path
                .grid()
                .iter()
                .copied()
                .find(|&l| c[j].abs() - l > NONZERO_TOL)
                .unwrap_or(0.0);
            assert_eq!(path.entry_penalty()[j], snapped);
        }
        // the largest coefficient never enters at λ_max itself
        assert!(path.coefficients().row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_instance_satisfies_kkt_everywhere() {
        let design = standardize(&gen_design(8, 2, 0.4, 5)).unwrap();
        let model = build_knockoffs(&design, &choose_d(&design.gram()).unwrap()).unwrap();
        let mut beta_y = model.x().mul_vec(&[1.5, 0.0]);
        for (v, e) in beta_y.iter_mut().zip(normals(8, 6)) {
            *v += 0.3 * e;
        }
        let path = lasso_path(&model, &beta_y, 100, 1e-3).unwrap();
        let z = model.augmented();
        for (i, &lambda) in path.grid().iter().enumerate() {
            let b = path.coefficients().row(i);
            assert!(brute_kkt(&z, &beta_y, b, lambda) <= 1e-6, "grid point {i}");
        }
    }

    #[test]
    fn stats_examples() {
        let s = KnockoffStats::from_entries(vec![0.4, 0.1, 0.3, 0.0], vec![0.1, 0.4, 0.3, 0.0]).unwrap();
        assert_eq!(s.v, vec![0.4, -0.4, -0.3, 0.0]);
        assert!(s.v[3].is_sign_positive());
    }

    #[test]
    fn select_examples() {
        let neg = KnockoffStats::from_entries(vec![0.1, 0.2], vec![0.3, 0.4]).unwrap();
        let r = knockoff_select(&neg, 0.2).unwrap();
        assert_eq!(r.threshold, Some(f64::INFINITY));
        assert!(r.rejected.is_empty());

        let s = KnockoffStats {
            l: vec![],
            l_tilde: vec![],
            v: vec![3.0, 2.0, 1.0, -1.0],
        };
        let r = knockoff_select(&s, 0.5).unwrap();
        assert_eq!(r.threshold, Some(2.0));
        assert_eq!(r.rejected, vec![0, 1]);

        let single = KnockoffStats {
            l: vec![],
            l_tilde: vec![],
            v: vec![5.0],
        };
        assert!(knockoff_select(&single, 0.4).unwrap().rejected.is_empty());
    }

    #[test]
    fn swapping_a_pair_flips_its_statistic() {
        let design = standardize(&gen_design(60, 8, 0.5, 7)).unwrap();
        let model = build_knockoffs(&design, &choose_d(&design.gram()).unwrap()).unwrap();
        let mut beta = vec![0.0; 8];
        beta[1] = 4.0;
        beta[5] = 3.0;
        let mut y = model.x().mul_vec(&beta);
        for (v, e) in y.iter_mut().zip(normals(60, 8)) {
            *v += e;
        }
        let base = knockoff_stats(&lasso_path(&model, &y, 100, 1e-3).unwrap()).unwrap();
        let z = model.augmented();
        for j in [1usize, 3, 5] {
            let mut perm: Vec<usize> = (0..16).collect();
            perm.swap(j, j + 8);
            let swapped = z.select_columns(&perm);
            let s = knockoff_stats(&lasso_path_design(&swapped, &y, 100, 1e-3).unwrap()).unwrap();
            assert_eq!(s.v[j], -base.v[j], "pair {j}");
            for k in (0..8).filter(|&k| k != j) {
                assert_eq!(s.v[k], base.v[k], "pair {j}, other {k}");
            }
        }
    }

    fn brute_threshold(v: &[f64], alpha: f64) -> f64 {
        let mut best = f64::INFINITY;
        for &cand in v {
            let t = cand.abs();
            if t == 0.0 {
                continue;
            }
            let neg = v.iter().filter(|&&x| x <= -t).count() as f64;
            let pos = v.iter().filter(|&&x| x >= t).count().max(1) as f64;
            if (1.0 + neg) / pos <= alpha && t < best {
                best = t;
            }
        }
        best
    }

    proptest! {
        #[test]
        fn threshold_matches_brute_force(
            v in proptest::collection::vec(prop_oneof![(-5i32..=5).prop_map(|k| k as f64), -3.0f64..3.0], 1..=10),
            alpha in 0.05f64..0.95,
        ) {
            let stats = KnockoffStats { l: vec![], l_tilde: vec![], v: v.clone() };
            let r = knockoff_select(&stats, alpha).unwrap();
            let t = brute_threshold(&v, alpha);
            prop_assert_eq!(r.threshold, Some(t));
            prop_assert_eq!(knockoff_threshold(&v, alpha), t);
            let expect: Vec<usize> = (0..v.len()).filter(|&j| v[j] >= t).collect();
            prop_assert_eq!(&r.rejected, &expect);
            for j in 0..v.len() {
                prop_assert_eq!(r.adjusted[j] <= alpha, r.is_rejected(j));
            }
        }
    }
}
