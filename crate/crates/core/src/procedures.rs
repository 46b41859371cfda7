//! Step-up multiple testing rules and the paired-evidence methods built on
//! them.
//!
//! Adjusted vectors live in `[0, ∞]`; `∞` marks a hypothesis that can never
//! be rejected (a failed screen or a zero e-value).

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibrators::{normalize_weights, Calibrator};
use crate::error::{Error, Result};

/// Default tuning parameter for `π̂₀` and `δ̂₀`.
pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    Bh,
    StoreyBh,
    WeightedBh,
    EpBh,
    BonBh,
    AdaptiveBonBh,
    Method1,
    Method2,
    Method3,
    KnockoffFilter,
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Procedure::Bh => "bh",
            Procedure::StoreyBh => "storey_bh",
            Procedure::WeightedBh => "weighted_bh",
            Procedure::EpBh => "ep_bh",
            Procedure::BonBh => "bon_bh",
            Procedure::AdaptiveBonBh => "adaptive_bon_bh",
            Procedure::Method1 => "method1",
            Procedure::Method2 => "method2",
            Procedure::Method3 => "method3",
            Procedure::KnockoffFilter => "knockoff_filter",
        };
        f.write_str(s)
    }
}

/// Something a procedure had to work around.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Fallback {
    /// Every e-value was zero; uniform weights were used.
    UniformWeights,
    /// Some e-values were infinite and took all the weight.
    InfiniteEvidence { count: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionReport {
    pub procedure: Procedure,
    pub alpha: f64,
    /// Level of the final step-up (`√α` for the Bon-BH rules).
    pub level: f64,
    /// 0-based indices in increasing order.
    pub rejected: Vec<usize>,
    /// The vector the final step-up was applied to.
    pub adjusted: Vec<f64>,
    pub pi0_hat: Option<f64>,
    pub delta0_hat: Option<f64>,
    pub lambda: Option<f64>,
    /// Data-dependent threshold, for the knockoff filter.
    pub threshold: Option<f64>,
    pub evalues: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
    pub fallbacks: Vec<Fallback>,
}

#[derive(Serialize)]
struct Summary<'a> {
    procedure: Procedure,
    alpha: f64,
    level: f64,
    lambda: Option<f64>,
    pi0_hat: Option<f64>,
    delta0_hat: Option<f64>,
    threshold: Option<f64>,
    n_rejected: usize,
    rejected: Vec<usize>,
    fallbacks: &'a [Fallback],
}

impl DecisionReport {
    fn new(procedure: Procedure, alpha: f64, level: f64, adjusted: Vec<f64>, rejected: Vec<usize>) -> Self {
        DecisionReport {
            procedure,
            alpha,
            level,
            rejected,
            adjusted,
            pi0_hat: None,
            delta0_hat: None,
            lambda: None,
            threshold: None,
            evalues: None,
            weights: None,
            fallbacks: Vec::new(),
        }
    }

    pub(crate) fn knockoff(alpha: f64, adjusted: Vec<f64>, rejected: Vec<usize>, threshold: f64) -> Self {
        let mut r = DecisionReport::new(Procedure::KnockoffFilter, alpha, alpha, adjusted, rejected);
        r.threshold = Some(threshold);
        r
    }

    pub fn m(&self) -> usize {
        self.adjusted.len()
    }

    pub fn n_rejected(&self) -> usize {
        self.rejected.len()
    }

    pub fn is_rejected(&self, j: usize) -> bool {
        self.rejected.binary_search(&j).is_ok()
    }

    /// Rows `index,adjusted,rejected` with 1-based `index`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["index", "adjusted", "rejected"])?;
        for (j, v) in self.adjusted.iter().enumerate() {
            csv.write_record([
                (j + 1).to_string(),
                v.to_string(),
                u8::from(self.is_rejected(j)).to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    /// JSON summary with 1-based rejected indices. Infinite thresholds are
    /// written as `null`.
    pub fn summary_json(&self) -> serde_json::Value {
        let finite = |v: Option<f64>| v.filter(|x| x.is_finite());
        serde_json::to_value(Summary {
            procedure: self.procedure,
            alpha: self.alpha,
            level: self.level,
            lambda: self.lambda,
            pi0_hat: self.pi0_hat,
            delta0_hat: self.delta0_hat,
            threshold: finite(self.threshold),
            n_rejected: self.rejected.len(),
            rejected: self.rejected.iter().map(|j| j + 1).collect(),
            fallbacks: &self.fallbacks,
        })
        .expect("summary is serializable")
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let f = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let json = serde_json::to_string_pretty(&self.summary_json()).expect("valid json");
        std::fs::write(dir.join(format!("{stem}.json")), json + "\n")?;
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::BadTuning(format!("lambda must lie in (0, 1), got {lambda}")))
    }
}

fn check_extended(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    match v.iter().position(|x| !(*x >= 0.0)) {
        Some(i) => Err(Error::InvalidArgument(format!("entry {i} = {} is not in [0, ∞]", v[i]))),
        None => Ok(()),
    }
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::EmptyInput);
    }
    match p.iter().position(|x| !(0.0..=1.0).contains(x)) {
        Some(i) => Err(Error::InvalidArgument(format!("p-value {i} = {} is not in [0, 1]", p[i]))),
        None => Ok(()),
    }
}

fn check_pair(p1: &[f64], p2: &[f64]) -> Result<()> {
    check_probabilities(p1)?;
    check_probabilities(p2)?;
    if p1.len() != p2.len() {
        return Err(Error::InvalidArgument(format!(
            "paired p-value vectors differ in length ({} vs {})",
            p1.len(),
            p2.len()
        )));
    }
    Ok(())
}

/// `p / s` with `p/0 = ∞` and `p/∞ = 0`.
fn ratio(p: f64, s: f64) -> f64 {
    if s == 0.0 {
        f64::INFINITY
    } else if s.is_infinite() {
        0.0
    } else {
        p / s
    }
}

/// The generic step-up: sorts `values` stably by value and rejects the
/// `j₀` smallest, where `j₀` is the largest `j` (1-based) with
/// `value_(j) ≤ threshold(j)`. Returns the rejected indices in increasing
/// order.
pub fn step_up(values: &[f64], threshold: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut j0 = 0;
    for (pos, &i) in order.iter().enumerate().rev() {
        if values[i] <= threshold(pos + 1) {
            j0 = pos + 1;
            break;
        }
    }
    let mut rejected = order[..j0].to_vec();
    rejected.sort_unstable();
    rejected
}

fn bh_at(values: &[f64], level: f64) -> Vec<usize> {
    let m = values.len() as f64;
    step_up(values, |j| level * j as f64 / m)
}

/// Benjamini–Hochberg at level `α` on an extended-real vector.
pub fn bh(p: &[f64], alpha: f64) -> Result<DecisionReport> {
    check_alpha(alpha)?;
    check_extended(p)?;
    let rejected = bh_at(p, alpha);
    Ok(DecisionReport::new(Procedure::Bh, alpha, alpha, p.to_vec(), rejected))
}

/// `π̂₀ = (1 + #{P_j > λ}) / (m(1 − λ))`, not truncated at 1.
pub fn storey_pi0(p: &[f64], lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_probabilities(p)?;
    let above = p.iter().filter(|&&v| v > lambda).count();
    Ok((1.0 + above as f64) / (p.len() as f64 * (1.0 - lambda)))
}

/// BH at level `α` on `π̂₀ P`.
pub fn storey_bh(p: &[f64], alpha: f64, lambda: f64) -> Result<DecisionReport> {
    check_alpha(alpha)?;
    let pi0 = storey_pi0(p, lambda)?;
    let adjusted: Vec<f64> = p.iter().map(|v| pi0 * v).collect();
    let rejected = bh_at(&adjusted, alpha);
    let mut r = DecisionReport::new(Procedure::StoreyBh, alpha, alpha, adjusted, rejected);
    r.pi0_hat = Some(pi0);
    r.lambda = Some(lambda);
    Ok(r)
}

/// BH at level `α` on `P_j / w_j` for nonnegative weights.
pub fn weighted_bh(p: &[f64], w: &[f64], alpha: f64) -> Result<DecisionReport> {
    check_alpha(alpha)?;
    check_probabilities(p)?;
    check_extended(w)?;
    if w.len() != p.len() {
        return Err(Error::InvalidArgument("weights and p-values differ in length".into()));
    }
    let adjusted: Vec<f64> = p.iter().zip(w).map(|(&pi, &wi)| ratio(pi, wi)).collect();
    let rejected = bh_at(&adjusted, alpha);
    let mut r = DecisionReport::new(Procedure::WeightedBh, alpha, alpha, adjusted, rejected);
    r.weights = Some(w.to_vec());
    Ok(r)
}

/// ep-BH: BH at level `α` on `P_j / e_j`.
pub fn ep_bh(p: &[f64], e: &[f64], alpha: f64) -> Result<DecisionReport> {
    check_alpha(alpha)?;
    check_probabilities(p)?;
    check_extended(e)?;
    if e.len() != p.len() {
        return Err(Error::InvalidArgument("e-values and p-values differ in length".into()));
    }
    let adjusted: Vec<f64> = p.iter().zip(e).map(|(&pi, &ei)| ratio(pi, ei)).collect();
    let rejected = bh_at(&adjusted, alpha);
    let mut r = DecisionReport::new(Procedure::EpBh, alpha, alpha, adjusted, rejected);
    r.evalues = Some(e.to_vec());
    Ok(r)
}

/// Bon-BH: `Q̃_j = 1` if `P₁_j > √α`, else `P₂_j`; BH at level `√α`.
pub fn bon_bh(p1: &[f64], p2: &[f64], alpha: f64) -> Result<DecisionReport> {
    check_alpha(alpha)?;
    check_pair(p1, p2)?;
    let level = alpha.sqrt();
    let adjusted: Vec<f64> = p1
        .iter()
        .zip(p2)
        .map(|(&a, &b)| if a > level { 1.0 } else { b })
        .collect();
    let rejected = bh_at(&adjusted, level);
    Ok(DecisionReport::new(Procedure::BonBh, alpha, level, adjusted, rejected))
}

/// Adaptive Bon-BH with `π̂₀` estimated from `P₂` at `λ ∈ (√α, 1)`.
pub fn adaptive_bon_bh(p1: &[f64], p2: &[f64], alpha: f64, lambda: f64) -> Result<DecisionReport> {
    check_alpha(alpha)?;
    if !(lambda > alpha.sqrt() && lambda < 1.0) {
        return Err(Error::BadTuning(format!(
            "lambda must lie in (√α, 1) = ({}, 1), got {lambda}",
            alpha.sqrt()
        )));
    }
    let pi0 = storey_pi0(p2, lambda)?;
    let mut r = adaptive_bon_bh_with_pi0(p1, p2, alpha, pi0)?;
    r.lambda = Some(lambda);
    Ok(r)
}

/// Adaptive Bon-BH with a given `π̂₀`: `Q*_j = π̂₀ P₂_j` if `P₁_j ≤ √α`,
/// else 1; BH at level `√α`.
pub fn adaptive_bon_bh_with_pi0(p1: &[f64], p2: &[f64], alpha: f64, pi0: f64) -> Result<DecisionReport> {
    check_alpha(alpha)?;
    check_pair(p1, p2)?;
    if !(pi0 > 0.0 && pi0.is_finite()) {
        return Err(Error::BadTuning(format!("pi0 must be positive, got {pi0}")));
    }
    let level = alpha.sqrt();
    let adjusted: Vec<f64> = p1
        .iter()
        .zip(p2)
        .map(|(&a, &b)| if a <= level { pi0 * b } else { 1.0 })
        .collect();
    let rejected = bh_at(&adjusted, level);
    let mut r = DecisionReport::new(Procedure::AdaptiveBonBh, alpha, level, adjusted, rejected);
    r.pi0_hat = Some(pi0);
    Ok(r)
}

/// Method 1: `S = g(P₁)`, BH at level `α` on `P̃ = P₂ / S`.
pub fn method1(p1: &[f64], p2: &[f64], cal: &Calibrator, alpha: f64) -> Result<DecisionReport> {
    check_alpha(alpha)?;
    check_pair(p1, p2)?;
    let s = cal.calibrate_vector(p1)?;
    let adjusted: Vec<f64> = p2.iter().zip(&s).map(|(&p, &e)| ratio(p, e)).collect();
    let rejected = bh_at(&adjusted, alpha);
    let mut r = DecisionReport::new(Procedure::Method1, alpha, alpha, adjusted, rejected);
    r.evalues = Some(s);
    Ok(r)
}

/// Method 2: `P* = π̂₀ P₂ / (𝟙(P₂ ≤ λ) S)` with `π̂₀` from `P₂`; BH at `α`.
pub fn method2(p1: &[f64], p2: &[f64], cal: &Calibrator, alpha: f64, lambda: f64) -> Result<DecisionReport> {
    check_lambda(lambda)?;
    let pi0 = storey_pi0(p2, lambda)?;
    method2_with_pi0(p1, p2, cal, alpha, lambda, pi0)
}

/// Method 2 with a given `π̂₀`.
pub fn method2_with_pi0(
    p1: &[f64],
    p2: &[f64],
    cal: &Calibrator,
    alpha: f64,
    lambda: f64,
    pi0: f64,
) -> Result<DecisionReport> {
    check_alpha(alpha)?;
    check_lambda(lambda)?;
    check_pair(p1, p2)?;
    if !(pi0 > 0.0 && pi0.is_finite()) {
        return Err(Error::BadTuning(format!("pi0 must be positive, got {pi0}")));
    }
    let s = cal.calibrate_vector(p1)?;
    let adjusted: Vec<f64> = p2
        .iter()
        .zip(&s)
        .map(|(&p, &e)| if p <= lambda { ratio(pi0 * p, e) } else { f64::INFINITY })
        .collect();
    let rejected = bh_at(&adjusted, alpha);
    let mut r = DecisionReport::new(Procedure::Method2, alpha, alpha, adjusted, rejected);
    r.pi0_hat = Some(pi0);
    r.lambda = Some(lambda);
    r.evalues = Some(s);
    Ok(r)
}

/// Method 3: weights `W = m S / Σ S`, weighted null proportion
/// `δ̂₀ = (max W + Σ W 𝟙(P₂ > λ)) / (m(1 − λ))`, and step-up of
/// `P⁺ = δ̂₀ P₂ / W` against `min(δ̂₀ λ, jα/m)`.
pub fn method3(p1: &[f64], p2: &[f64], cal: &Calibrator, alpha: f64, lambda: f64) -> Result<DecisionReport> {
    check_pair(p1, p2)?;
    let s = cal.calibrate_vector(p1)?;
    method3_with_evalues(p2, &s, alpha, lambda)
}

/// Method 3 from precomputed e-values.
pub fn method3_with_evalues(p2: &[f64], s: &[f64], alpha: f64, lambda: f64) -> Result<DecisionReport> {
    check_alpha(alpha)?;
    check_lambda(lambda)?;
    check_probabilities(p2)?;
    if s.len() != p2.len() {
        return Err(Error::InvalidArgument("e-values and p-values differ in length".into()));
    }
    let mut fallbacks = Vec::new();
    let w = match normalize_weights(s) {
        Ok(w) => {
            if w.infinite > 0 {
                fallbacks.push(Fallback::InfiniteEvidence { count: w.infinite });
            }
            w.values
        }
        Err(Error::ZeroEvidence) => {
            fallbacks.push(Fallback::UniformWeights);
            vec![1.0; s.len()]
        }
        Err(e) => return Err(e),
    };
    let m = p2.len() as f64;
    let max_w = w.iter().copied().fold(0.0, f64::max);
    let above: f64 = w.iter().zip(p2).filter(|(_, &p)| p > lambda).map(|(wi, _)| wi).sum();
    let delta0 = (max_w + above) / (m * (1.0 - lambda));
    let adjusted: Vec<f64> = p2.iter().zip(&w).map(|(&p, &wi)| ratio(delta0 * p, wi)).collect();
    let cap = delta0 * lambda;
    let rejected = step_up(&adjusted, |j| cap.min(alpha * j as f64 / m));
    let mut r = DecisionReport::new(Procedure::Method3, alpha, alpha, adjusted, rejected);
    r.delta0_hat = Some(delta0);
    r.lambda = Some(lambda);
    r.evalues = Some(s.to_vec());
    r.weights = Some(w);
    r.fallbacks = fallbacks;
    Ok(r)
}
