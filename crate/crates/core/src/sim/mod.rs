//! Monte Carlo harness: AR(1) designs, sparse truths, replications and
//! aggregation of empirical FDR and power.

pub mod rng;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrators::{Calibrator, CalibratorSpec};
use crate::error::{Error, Result};
use crate::filter::{knockoff_select, knockoff_stats, lasso_path, DEFAULT_GRID_RATIO, DEFAULT_GRID_SIZE};
use crate::knockoff::{build_knockoffs, choose_d, standardize, KnockoffModel};
use crate::numerics::Matrix;
use crate::paired::{NoiseScale, PairedInference};
use crate::procedures::{
    adaptive_bon_bh, bon_bh, method1, method2, method3, DecisionReport, Procedure, DEFAULT_LAMBDA,
};
use rng::{replication_seed, stream, stream_seed, NormalStream, DESIGN_STREAM, NOISE_STREAM, TRUTH_STREAM};

/// Rows i.i.d. `N(0, Ω)` with `Ω_ij = ρ^|i−j|`, through the AR(1) recursion
/// `x₁ = z₁`, `x_t = ρ x_{t−1} + √(1 − ρ²) z_t`.
pub fn gen_design(n: usize, m: usize, rho: f64, seed: u64) -> Matrix {
    assert!((0.0..1.0).contains(&rho), "rho must lie in [0, 1)");
    let mut z = NormalStream::new(ChaCha20Rng::seed_from_u64(seed));
    let innov = (1.0 - rho * rho).sqrt();
    let mut x = Matrix::zeros(n, m);
    for i in 0..n {
        let row = x.row_mut(i);
        let mut prev = 0.0;
        for (t, v) in row.iter_mut().enumerate() {
            let e = z.next();
            prev = if t == 0 { e } else { rho * prev + innov * e };
            *v = prev;
        }
    }
    x
}

/// A sparse coefficient vector and its (sorted) support.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    pub beta: Vec<f64>,
    pub support: Vec<usize>,
}

impl Truth {
    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn is_signal(&self, j: usize) -> bool {
        self.support.binary_search(&j).is_ok()
    }
}

/// `k` coordinates chosen uniformly without replacement, each set to `γ`
/// (or `±γ` with fair random signs when `random_signs` is set).
pub fn gen_truth(m: usize, k: usize, gamma: f64, seed: u64, random_signs: bool) -> Truth {
    assert!(k <= m, "k must not exceed m");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut support = index::sample(&mut rng, m, k).into_vec();
    support.sort_unstable();
    let mut beta = vec![0.0; m];
    for &j in &support {
        let sign = if random_signs && rng.random::<bool>() { -1.0 } else { 1.0 };
        beta[j] = sign * gamma;
    }
    Truth { beta, support }
}

/// The compared procedures. `M0` is the knockoff filter, `M1`/`M2` are
/// Bon-BH and its adaptive form, `M3`–`M5` are Methods 1–3 with the
/// configured calibrator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    M0,
    M1,
    M2,
    M3,
    M4,
    M5,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::M0, Method::M1, Method::M2, Method::M3, Method::M4, Method::M5];

    pub fn procedure(&self) -> Procedure {
        match self {
            Method::M0 => Procedure::KnockoffFilter,
            Method::M1 => Procedure::BonBh,
            Method::M2 => Procedure::AdaptiveBonBh,
            Method::M3 => Procedure::Method1,
            Method::M4 => Procedure::Method2,
            Method::M5 => Procedure::Method3,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?} (expected M0..M5)")))
    }
}

fn default_sigma() -> f64 {
    1.0
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

/// One simulation setting. Several signal strengths share each
/// replication's design, support and noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSetting {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub rho: f64,
    pub gammas: Vec<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub alpha: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub reps: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub random_signs: bool,
    #[serde(default)]
    pub calibrator: CalibratorSpec,
}

impl SimSetting {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.m == 0 {
            return bad("m must be ≥ 1".into());
        }
        if self.k > self.m {
            return bad(format!("k = {} exceeds m = {}", self.k, self.m));
        }
        if self.n <= 2 * self.m {
            return bad(format!("n = {} must exceed 2m = {}", self.n, 2 * self.m));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if self.gammas.is_empty() {
            return bad("gammas must not be empty".into());
        }
        if let Some(g) = self.gammas.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return bad(format!("gamma must be finite and ≥ 0, got {g}"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("lambda must lie in (0, 1), got {}", self.lambda));
        }
        if self.methods.contains(&Method::M2) && self.lambda <= self.alpha.sqrt() {
            return bad(format!("M2 needs lambda > sqrt(alpha) = {}", self.alpha.sqrt()));
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if self.reps == 0 {
            return bad("reps must be ≥ 1".into());
        }
        self.calibrator.resolve(self.alpha)?;
        Ok(())
    }

    fn sorted_methods(&self) -> Vec<Method> {
        let mut ms = self.methods.clone();
        ms.sort();
        ms.dedup();
        ms
    }
}

/// False rejections, rejections and true positives of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Counts {
    pub v: usize,
    pub r: usize,
    pub tp: usize,
}

impl Counts {
    pub fn from_rejections(rejected: &[usize], truth: &Truth) -> Self {
        let tp = rejected.iter().filter(|&&j| truth.is_signal(j)).count();
        Counts {
            v: rejected.len() - tp,
            r: rejected.len(),
            tp,
        }
    }

    /// `V / (R ∨ 1)`.
    pub fn fdp(&self) -> f64 {
        self.v as f64 / self.r.max(1) as f64
    }

    /// `TP / k`, and `0` when there are no signals.
    pub fn tpp(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.tp as f64 / k as f64
        }
    }
}

/// Outcome of one replication: `outcomes[g][i]` is for `gammas[g]` and the
/// `i`-th method in sorted order. A failure is kept as its message.
#[derive(Clone, Debug, PartialEq)]
pub struct Replication {
    pub index: usize,
    pub methods: Vec<Method>,
    pub outcomes: Vec<Vec<std::result::Result<Counts, String>>>,
}

/// Runs one method on response `y`. `lambda` is the tuning parameter of
/// `M2`, `M4` and `M5`; `cal` is the calibrator of `M3`–`M5`.
pub fn run_method(
    method: Method,
    model: &KnockoffModel,
    inference: &PairedInference<'_>,
    y: &[f64],
    alpha: f64,
    lambda: f64,
    cal: &Calibrator,
) -> Result<DecisionReport> {
    if method == Method::M0 {
        let path = lasso_path(model, y, DEFAULT_GRID_SIZE, DEFAULT_GRID_RATIO)?;
        return knockoff_select(&knockoff_stats(&path)?, alpha);
    }
    let ev = inference.evidence(y)?;
    let (p1, p2) = (ev.p1(), ev.p2());
    match method {
        Method::M0 => unreachable!(),
        Method::M1 => bon_bh(p1, p2, alpha),
        Method::M2 => adaptive_bon_bh(p1, p2, alpha, lambda),
        Method::M3 => method1(p1, p2, cal, alpha),
        Method::M4 => method2(p1, p2, cal, alpha, lambda),
        Method::M5 => method3(p1, p2, cal, alpha, lambda),
    }
}

/// Design, support and noise for replication `rep`, derived from the master
/// seed alone.
pub fn replication_data(setting: &SimSetting, rep: usize) -> (Matrix, Truth, Vec<f64>) {
    let seed = replication_seed(setting.master_seed, rep as u64);
    let raw = gen_design(setting.n, setting.m, setting.rho, stream_seed(seed, DESIGN_STREAM));
    let truth = gen_truth(setting.m, setting.k, 1.0, stream_seed(seed, TRUTH_STREAM), setting.random_signs);
    let mut noise = vec![0.0; setting.n];
    NormalStream::new(stream(seed, NOISE_STREAM)).fill(&mut noise);
    (raw, truth, noise)
}

/// Runs every method at every signal strength on replication `rep`. Setting
/// validation is the caller's job.
pub fn run_replication(setting: &SimSetting, rep: usize) -> Replication {
    let methods = setting.sorted_methods();
    let fail_all = |e: Error| Replication {
        index: rep,
        methods: methods.clone(),
        outcomes: vec![vec![Err(e.to_string()); methods.len()]; setting.gammas.len()],
    };
    let (raw, unit, noise) = replication_data(setting, rep);
    let cal = match setting.calibrator.resolve(setting.alpha) {
        Ok(c) => c,
        Err(e) => return fail_all(e),
    };
    let prepared = standardize(&raw).and_then(|design| {
        let d = choose_d(&design.gram())?;
        build_knockoffs(&design, &d)
    });
    let model = match prepared {
        Ok(m) => m,
        Err(e) => return fail_all(e),
    };
    let inference = match PairedInference::new(&model, NoiseScale::Augmented) {
        Ok(i) => i,
        Err(e) => return fail_all(e),
    };
    let outcomes = setting
        .gammas
        .iter()
        .map(|&gamma| {
            let beta: Vec<f64> = unit.beta.iter().map(|b| b * gamma).collect();
            let truth = Truth {
                beta,
                support: if gamma > 0.0 { unit.support.clone() } else { Vec::new() },
            };
            let mut y = model.x().mul_vec(&truth.beta);
            for (yi, e) in y.iter_mut().zip(&noise) {
                *yi += setting.sigma * e;
            }
            methods
                .iter()
                .map(|&method| {
                    run_method(method, &model, &inference, &y, setting.alpha, setting.lambda, &cal)
                        .map(|r| Counts::from_rejections(&r.rejected, &truth))
                        .map_err(|e| e.to_string())
                })
                .collect()
        })
        .collect();
    Replication {
        index: rep,
        methods,
        outcomes,
    }
}

/// Mean FDP and TPP over completed replications.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub fdr_hat: f64,
    pub power_hat: f64,
    pub se_fdr: f64,
    pub se_power: f64,
    pub reps_completed: usize,
}

fn binomial_se(rate: f64, n: usize) -> f64 {
    (rate * (1.0 - rate) / n as f64).max(0.0).sqrt()
}

pub fn aggregate(counts: &[Counts], k: usize) -> Result<Aggregate> {
    if counts.is_empty() {
        return Err(Error::NoData);
    }
    let n = counts.len();
    let fdr_hat = counts.iter().map(Counts::fdp).sum::<f64>() / n as f64;
    let power_hat = counts.iter().map(|c| c.tpp(k)).sum::<f64>() / n as f64;
    Ok(Aggregate {
        fdr_hat,
        power_hat,
        se_fdr: binomial_se(fdr_hat, n),
        se_power: binomial_se(power_hat, n),
        reps_completed: n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimRow {
    pub method: Method,
    pub gamma: f64,
    pub fdr_hat: f64,
    pub power_hat: f64,
    pub se_fdr: f64,
    pub se_power: f64,
    pub reps_completed: usize,
    pub reps_failed: usize,
    /// First failure message, if any.
    pub first_failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub setting: SimSetting,
    pub rows: Vec<SimRow>,
}

impl SimResult {
    pub fn row(&self, method: Method, gamma: f64) -> Option<&SimRow> {
        self.rows.iter().find(|r| r.method == method && r.gamma == gamma)
    }

    pub const CSV_HEADER: [&'static str; 18] = [
        "n",
        "m",
        "k",
        "rho",
        "sigma",
        "alpha",
        "lambda",
        "calibrator",
        "master_seed",
        "method",
        "gamma",
        "fdr_hat",
        "power_hat",
        "se_fdr",
        "se_power",
        "reps",
        "reps_completed",
        "reps_failed",
    ];

    /// Long format, one row per (method, γ).
    pub fn write_csv(&self, w: impl Write, header: bool) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        if header {
            csv.write_record(Self::CSV_HEADER)?;
        }
        let s = &self.setting;
        for r in &self.rows {
            csv.write_record([
                s.n.to_string(),
                s.m.to_string(),
                s.k.to_string(),
                s.rho.to_string(),
                s.sigma.to_string(),
                s.alpha.to_string(),
                s.lambda.to_string(),
                s.calibrator.to_string(),
                s.master_seed.to_string(),
                r.method.to_string(),
                r.gamma.to_string(),
                r.fdr_hat.to_string(),
                r.power_hat.to_string(),
                r.se_fdr.to_string(),
                r.se_power.to_string(),
                s.reps.to_string(),
                r.reps_completed.to_string(),
                r.reps_failed.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Reduces replications (in index order) to one row per (method, γ).
pub fn summarize(setting: &SimSetting, reps: &[Replication]) -> SimResult {
    let methods = setting.sorted_methods();
    let mut rows = Vec::new();
    for &method in &methods {
        for (g, &gamma) in setting.gammas.iter().enumerate() {
            let mut done = Vec::new();
            let mut failed = 0;
            let mut first_failure = None;
            for rep in reps {
                let i = rep.methods.iter().position(|&x| x == method).expect("method list");
                match &rep.outcomes[g][i] {
                    Ok(c) => done.push(*c),
                    Err(msg) => {
                        failed += 1;
                        first_failure.get_or_insert_with(|| msg.clone());
                    }
                }
            }
            let k = if gamma > 0.0 { setting.k } else { 0 };
            let agg = aggregate(&done, k).unwrap_or(Aggregate {
                fdr_hat: f64::NAN,
                power_hat: f64::NAN,
                se_fdr: f64::NAN,
                se_power: f64::NAN,
                reps_completed: 0,
            });
            rows.push(SimRow {
                method,
                gamma,
                fdr_hat: agg.fdr_hat,
                power_hat: agg.power_hat,
                se_fdr: agg.se_fdr,
                se_power: agg.se_power,
                reps_completed: agg.reps_completed,
                reps_failed: failed,
                first_failure,
            });
        }
    }
    SimResult {
        setting: setting.clone(),
        rows,
    }
}

/// Runs all replications on at most `threads` workers (all cores if
/// `None`). The result does not depend on the thread count.
pub fn run_simulation(setting: &SimSetting, threads: Option<usize>) -> Result<SimResult> {
    setting.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::InvalidArgument("threads must be ≥ 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let reps: Vec<Replication> = pool.install(|| {
        (0..setting.reps)
            .into_par_iter()
            .map(|rep| run_replication(setting, rep))
            .collect()
    });
    let result = summarize(setting, &reps);
    if result.rows.iter().all(|r| r.reps_completed == 0) {
        return Err(Error::NoData);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(x: &Matrix, a: usize, b: usize) -> f64 {
        let n = x.rows() as f64;
        let (ca, cb) = (x.column(a), x.column(b));
        let ma = ca.iter().sum::<f64>() / n;
        let mb = cb.iter().sum::<f64>() / n;
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (u, v) in ca.iter().zip(&cb) {
            sab += (u - ma) * (v - mb);
            saa += (u - ma) * (u - ma);
            sbb += (v - mb) * (v - mb);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn ar1_correlations() {
        let (n, reps) = (200usize, 100usize);
        let band = 4.0 / ((n * reps) as f64).sqrt();
        let mut lag1 = 0.0;
        let mut lag2 = 0.0;
        for seed in 0..reps as u64 {
            let x = gen_design(n, 6, 0.5, seed);
            lag1 += (0..5).map(|j| corr(&x, j, j + 1)).sum::<f64>() / 5.0;
            lag2 += (0..4).map(|j| corr(&x, j, j + 2)).sum::<f64>() / 4.0;
        }
        assert!((lag1 / reps as f64 - 0.5).abs() < band);
        assert!((lag2 / reps as f64 - 0.25).abs() < band);

        let x = gen_design(n, 4, 0.0, 9);
        for a in 0..4 {
            for b in a + 1..4 {
                assert!(corr(&x, a, b).abs() < 4.0 / (n as f64).sqrt());
            }
        }
        assert_eq!(gen_design(5, 3, 0.5, 1), gen_design(5, 3, 0.5, 1));
    }

    #[test]
    fn truth_edge_cases_and_frequency() {
        assert_eq!(gen_truth(5, 0, 2.0, 1, false).beta, vec![0.0; 5]);
        assert_eq!(gen_truth(5, 5, 2.0, 1, false).beta, vec![2.0; 5]);
        let signed = gen_truth(50, 50, 1.0, 3, true);
        assert!(signed.beta.iter().all(|b| b.abs() == 1.0));
        assert!(signed.beta.iter().any(|&b| b < 0.0));

        let trials = 10_000;
        let mut hits = [0usize; 10];
        for seed in 0..trials {
            let t = gen_truth(10, 3, 1.0, seed, false);
            assert_eq!(t.k(), 3);
            for j in t.support {
                hits[j] += 1;
            }
        }
        let band = 4.0 * (0.3f64 * 0.7 / trials as f64).sqrt();
        for h in hits {
            assert!((h as f64 / trials as f64 - 0.3).abs() < band);
        }
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate(&[Counts { v: 1, r: 4, tp: 3 }], 3).unwrap();
        assert_eq!(a.fdr_hat, 0.25);
        assert_eq!(a.power_hat, 1.0);
        let b = aggregate(&[Counts::default()], 3).unwrap();
        assert_eq!(b.fdr_hat, 0.0);
        let c = aggregate(&[Counts { v: 0, r: 2, tp: 2 }, Counts { v: 1, r: 2, tp: 1 }], 4).unwrap();
        assert_eq!(c.fdr_hat, 0.25);
        assert_eq!(c.power_hat, 0.375);
        assert!((c.se_fdr - (0.25f64 * 0.75 / 2.0).sqrt()).abs() < 1e-15);
        assert!(matches!(aggregate(&[], 3), Err(Error::NoData)));
    }

    fn small(reps: usize) -> SimSetting {
        SimSetting {
            n: 60,
            m: 12,
            k: 3,
            rho: 0.5,
            gammas: vec![0.0, 4.0],
            sigma: 1.0,
            alpha: 0.1,
            lambda: 0.5,
            methods: Method::ALL.to_vec(),
            reps,
            master_seed: 42,
            random_signs: false,
            calibrator: CalibratorSpec::default(),
        }
    }

    #[test]
    fn validation() {
        assert!(small(1).validate().is_ok());
        let mut s = small(0);
        assert!(s.validate().is_err());
        s = small(1);
        s.n = 24;
        assert!(s.validate().is_err());
        s = small(1);
        s.rho = 0.0;
        assert!(s.validate().is_err());
        s = small(1);
        s.alpha = 0.36;
        assert!(s.validate().is_err());
        s.methods = vec![Method::M3];
        assert!(s.validate().is_ok());
    }

    #[test]
    fn null_strength_has_no_true_positives() {
        let s = small(5);
        for rep in 0..5 {
            let r = run_replication(&s, rep);
            for c in &r.outcomes[0] {
                let c = c.as_ref().unwrap();
                assert_eq!(c.tp, 0);
                assert_eq!(c.v, c.r);
            }
        }
    }

    #[test]
    fn noiseless_limit_recovers_support() {
        let mut s = small(10);
        s.sigma = 1e-6;
        s.gammas = vec![10.0];
        s.methods = vec![Method::M1, Method::M2, Method::M3, Method::M4, Method::M5];
        let res = run_simulation(&s, Some(1)).unwrap();
        // null t statistics stay scale free, so only power is pinned down
        for row in &res.rows {
            assert_eq!(row.reps_completed, 10);
            assert_eq!(row.power_hat, 1.0, "{}", row.method);
            assert!(row.fdr_hat < 0.3, "{}", row.method);
        }
    }

    #[test]
    fn deterministic_across_threads() {
        let s = small(12);
        let a = run_simulation(&s, Some(1)).unwrap();
        let b = run_simulation(&s, Some(3)).unwrap();
        assert_eq!(a, b);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        a.write_csv(&mut buf_a, true).unwrap();
        b.write_csv(&mut buf_b, true).unwrap();
        assert_eq!(buf_a, buf_b);
        assert_eq!(a.rows.len(), 12);
        let text = String::from_utf8(buf_a).unwrap();
        assert!(text.starts_with("n,m,k,rho,sigma,alpha,lambda,calibrator,master_seed,method,gamma,"));
    }

    #[test]
    fn setting_json_round_trip() {
        let s = small(3);
        let j = serde_json::to_string(&s).unwrap();
        let back: SimSetting = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        let minimal = r#"{"n":60,"m":12,"k":3,"rho":0.5,"gammas":[2],"alpha":0.1,"reps":1,"master_seed":0}"#;
        let m: SimSetting = serde_json::from_str(minimal).unwrap();
        assert_eq!(m.methods.len(), 6);
        assert_eq!(m.sigma, 1.0);
        let extra = r#"{"n":60,"m":12,"k":3,"rho":0.5,"gammas":[2],"alpha":0.1,"reps":1,"master_seed":0,"bogus":1}"#;
        assert!(serde_json::from_str::<SimSetting>(extra).is_err());
        assert_eq!("m4".parse::<Method>().unwrap(), Method::M4);
    }
}
