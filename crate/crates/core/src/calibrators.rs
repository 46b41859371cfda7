//! p-to-e calibrators: decreasing `g : [0, 1] → [0, ∞]` with `∫₀¹ g ≤ 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numerics::quad_interval;

/// Tolerance of the integral certificate.
pub const CERT_TOL: f64 = 1e-9;
const MONOTONE_SAMPLES: usize = 10_000;

/// A calibrator with every parameter resolved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Calibrator {
    /// `g(t) = α^{−r} 𝟙(t ≤ α^r)`.
    AllOrNothing { r: f64, alpha: f64 },
    /// `g(t) = C(1 − t^a)` with `a = 1/(C − 1)`.
    BoundedPoly { c: f64 },
    /// `g(t) = κ t^{κ−1}`, `0 < κ < 1`.
    Power { kappa: f64 },
    /// `g(t) = ∫₀¹ κ t^{κ−1} dκ`.
    PowerMixture,
    /// `g(t) = t^{−1/2} − 1`.
    InverseSqrt,
    /// `g ≡ c`; admissible only for `c ≤ 1`.
    Constant { c: f64 },
}

impl Calibrator {
    pub fn all_or_nothing(r: f64, alpha: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!("r must be positive, got {r}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(Calibrator::AllOrNothing { r, alpha })
    }

    pub fn bounded_poly(c: f64) -> Result<Self> {
        if !(c > 1.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("C must exceed 1, got {c}")));
        }
        Ok(Calibrator::BoundedPoly { c })
    }

    pub fn power(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::InvalidArgument(format!("kappa must lie in (0, 1), got {kappa}")));
        }
        Ok(Calibrator::Power { kappa })
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("constant must be nonnegative, got {c}")));
        }
        Ok(Calibrator::Constant { c })
    }

    /// `g₂` with `C = 1/α`.
    pub fn default_for(alpha: f64) -> Result<Self> {
        Calibrator::bounded_poly(1.0 / alpha)
    }

    /// Declared upper bound `sup g`; `∞` for unbounded kinds.
    pub fn bound(&self) -> f64 {
        match *self {
            Calibrator::AllOrNothing { .. } => 1.0 / self.cut(),
            Calibrator::BoundedPoly { c } => c,
            Calibrator::Constant { c } => c,
            _ => f64::INFINITY,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.bound().is_finite()
    }

    // α^r, with r = 1/2 routed through sqrt so that the screen matches √α
    // bit for bit
    fn cut(&self) -> f64 {
        match *self {
            Calibrator::AllOrNothing { r, alpha } if r == 0.5 => alpha.sqrt(),
            Calibrator::AllOrNothing { r, alpha } => alpha.powf(r),
            _ => unreachable!(),
        }
    }

    /// `g(t)` without domain checks.
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Calibrator::AllOrNothing { .. } => {
                let cut = self.cut();
                if t <= cut {
                    1.0 / cut
                } else {
                    0.0
                }
            }
            Calibrator::BoundedPoly { c } => c * (1.0 - t.powf(1.0 / (c - 1.0))),
            Calibrator::Power { kappa } => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    kappa * t.powf(kappa - 1.0)
                }
            }
            Calibrator::PowerMixture => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    mixture_in_log(-t.ln())
                }
            }
            Calibrator::InverseSqrt => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / t.sqrt() - 1.0
                }
            }
            Calibrator::Constant { c } => c,
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain { index: 0, value: t });
        }
        Ok(self.value(t))
    }

    /// `e^{−u} g(e^{−u})`, the integrand of `∫₀¹ g` after `t = e^{−u}`.
    /// Written per kind so that it stays finite and smooth where `g` blows up.
    fn log_mass(&self, u: f64) -> f64 {
        match *self {
            Calibrator::AllOrNothing { .. } => {
                let cut = self.cut();
                if u >= -cut.ln() {
                    (-u).exp() / cut
                } else {
                    0.0
                }
            }
            Calibrator::BoundedPoly { c } => {
                let a = 1.0 / (c - 1.0);
                -c * (-a * u).exp_m1() * (-u).exp()
            }
            Calibrator::Power { kappa } => kappa * (-kappa * u).exp(),
            Calibrator::PowerMixture => {
                // (1 − e^{−u}(1 + u)) / u²
                if u < 0.5 {
                    // Σ_j (j + 1)(−u)^j/(j + 2)!
                    let mut term = 0.5;
                    let mut acc = 0.0;
                    for j in 0..20 {
                        acc += (j as f64 + 1.0) * term;
                        term *= -u / (j as f64 + 3.0);
                    }
                    acc
                } else {
                    (1.0 - (-u).exp() * (1.0 + u)) / (u * u)
                }
            }
            Calibrator::InverseSqrt => (-0.5 * u).exp() - (-u).exp(),
            Calibrator::Constant { c } => c * (-u).exp(),
        }
    }

    /// `∫₀¹ g(t) dt` to absolute accuracy `tol`, computed as
    /// `∫₀^∞ e^{−u} g(e^{−u}) du` with `u = v/(1 − v)`.
    pub fn integral(&self, tol: f64) -> Result<f64> {
        let f = |v: f64| {
            if v >= 1.0 {
                return 0.0;
            }
            let w = 1.0 - v;
            let u = v / w;
            let val = self.log_mass(u) / (w * w);
            if val.is_finite() {
                val
            } else {
                0.0
            }
        };
        match *self {
            Calibrator::AllOrNothing { .. } => {
                // integrate from the jump onwards
                let u0 = -self.cut().ln();
                let v0 = u0 / (1.0 + u0);
                quad_interval(f, v0, 1.0, tol)
            }
            Calibrator::PowerMixture => {
                // the tail density tends to 1/v² as v → 1, not to zero
                let g = |v: f64| {
                    if v >= 1.0 {
                        1.0
                    } else {
                        f(v)
                    }
                };
                quad_interval(g, 0.0, 1.0, tol)
            }
            _ => quad_interval(f, 0.0, 1.0, tol),
        }
    }

    /// Numerical certificate of (bounded-)admissibility.
    pub fn certify(&self) -> Result<Certificate> {
        let integral = self.integral(CERT_TOL * 0.1)?;
        let mut violations = 0;
        let mut prev = self.value(0.0);
        for i in 1..=MONOTONE_SAMPLES {
            let t = i as f64 / MONOTONE_SAMPLES as f64;
            let v = self.value(t);
            if v > prev || v < 0.0 || v.is_nan() {
                violations += 1;
            }
            prev = v;
        }
        Ok(Certificate {
            calibrator: *self,
            integral,
            bound: self.bound(),
            value_at_zero: self.value(0.0),
            monotone_violations: violations,
        })
    }

    /// `(S_j) = (g(P_j))`.
    pub fn calibrate_vector(&self, p: &[f64]) -> Result<Vec<f64>> {
        p.iter()
            .enumerate()
            .map(|(index, &t)| {
                if (0.0..=1.0).contains(&t) {
                    Ok(self.value(t))
                } else {
                    Err(Error::Domain { index, value: t })
                }
            })
            .collect()
    }
}

/// `(e^u − u − 1)/u²`, the mixture calibrator at `t = e^{−u}`.
fn mixture_in_log(u: f64) -> f64 {
    if u < 0.5 {
        // Σ_k u^k/(k + 2)!
        let mut term = 0.5;
        let mut acc = 0.0;
        for k in 0..20 {
            acc += term;
            term *= u / (k as f64 + 3.0);
        }
        acc
    } else {
        (u.exp_m1() - u) / (u * u)
    }
}

pub fn calibrate_vector(cal: &Calibrator, p: &[f64]) -> Result<Vec<f64>> {
    cal.calibrate_vector(p)
}

/// Outcome of [`normalize_weights`].
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub values: Vec<f64>,
    /// Number of infinite e-values, if any forced the degenerate split.
    pub infinite: usize,
}

/// `W_j = m S_j / Σ_k S_k`. If some `S_j = ∞`, the total weight `m` is
/// split equally among the infinite entries and the rest get zero.
pub fn normalize_weights(s: &[f64]) -> Result<Weights> {
    if s.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(index) = s.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::Domain {
            index,
            value: s[index],
        });
    }
    let m = s.len() as f64;
    let infinite = s.iter().filter(|v| v.is_infinite()).count();
    if infinite > 0 {
        let share = m / infinite as f64;
        let values = s
            .iter()
            .map(|v| if v.is_infinite() { share } else { 0.0 })
            .collect();
        return Ok(Weights { values, infinite });
    }
    let total: f64 = s.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroEvidence);
    }
    Ok(Weights {
        values: s.iter().map(|v| m * v / total).collect(),
        infinite: 0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    #[serde(serialize_with = "as_display")]
    pub calibrator: Calibrator,
    pub integral: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub bound: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub value_at_zero: f64,
    pub monotone_violations: usize,
}

impl Certificate {
    /// `∫ g ≤ 1 + tol` and monotone on the sample grid.
    pub fn admissible(&self) -> bool {
        self.integral <= 1.0 + CERT_TOL && self.monotone_violations == 0
    }

    /// `g(0) = C` and `∫ g = 1` within tolerance.
    pub fn bounded_admissible(&self) -> bool {
        self.bound.is_finite()
            && self.value_at_zero == self.bound
            && (self.integral - 1.0).abs() <= CERT_TOL
            && self.monotone_violations == 0
    }
}

fn as_display<S: Serializer>(c: &Calibrator, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&c.to_string())
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

impl fmt::Display for Calibrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Calibrator::AllOrNothing { r, alpha } => write!(f, "all_or_nothing:r={r},alpha={alpha}"),
            Calibrator::BoundedPoly { c } => write!(f, "g2:C={c}"),
            Calibrator::Power { kappa } => write!(f, "power:kappa={kappa}"),
            Calibrator::PowerMixture => write!(f, "mixture"),
            Calibrator::InverseSqrt => write!(f, "inverse_sqrt"),
            Calibrator::Constant { c } => write!(f, "constant:c={c}"),
        }
    }
}

/// A calibrator named in configuration, possibly depending on the target
/// level: `g2` without `C` uses `C = 1/α`, `all_or_nothing` always takes
/// its `α` from the procedure.
///
/// Grammar: `name[:key=value[,key=value]]` with names `g2` (`C`),
/// `all_or_nothing` (`r`, default 1/2), `power` (`kappa`), `mixture`,
/// `inverse_sqrt`, `constant` (`c`).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum CalibratorSpec {
    BoundedPoly {
        c: Option<f64>,
    },
    AllOrNothing {
        r: f64,
    },
    Power {
        kappa: f64,
    },
    PowerMixture,
    InverseSqrt,
    Constant {
        c: f64,
    },
    #[default]
    DefaultG2,
}

impl CalibratorSpec {
    pub fn resolve(&self, alpha: f64) -> Result<Calibrator> {
        match *self {
            CalibratorSpec::DefaultG2 | CalibratorSpec::BoundedPoly { c: None } => {
                Calibrator::default_for(alpha)
            }
            CalibratorSpec::BoundedPoly { c: Some(c) } => Calibrator::bounded_poly(c),
            CalibratorSpec::AllOrNothing { r } => Calibrator::all_or_nothing(r, alpha),
            CalibratorSpec::Power { kappa } => Calibrator::power(kappa),
            CalibratorSpec::PowerMixture => Ok(Calibrator::PowerMixture),
            CalibratorSpec::InverseSqrt => Ok(Calibrator::InverseSqrt),
            CalibratorSpec::Constant { c } => Calibrator::constant(c),
        }
    }
}

impl fmt::Display for CalibratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CalibratorSpec::DefaultG2 | CalibratorSpec::BoundedPoly { c: None } => write!(f, "g2"),
            CalibratorSpec::BoundedPoly { c: Some(c) } => write!(f, "g2:C={c}"),
            CalibratorSpec::AllOrNothing { r } => write!(f, "all_or_nothing:r={r}"),
            CalibratorSpec::Power { kappa } => write!(f, "power:kappa={kappa}"),
            CalibratorSpec::PowerMixture => write!(f, "mixture"),
            CalibratorSpec::InverseSqrt => write!(f, "inverse_sqrt"),
            CalibratorSpec::Constant { c } => write!(f, "constant:c={c}"),
        }
    }
}

impl FromStr for CalibratorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n.trim(), r.trim()),
            None => (s, ""),
        };
        let mut params: Vec<(String, f64)> = Vec::new();
        if !rest.is_empty() {
            for kv in rest.split(',') {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got {kv:?}")))?;
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad number in {kv:?}")))?;
                params.push((k.trim().to_string(), v));
            }
        }
        let allowed: &[&str] = match name {
            "g2" | "bounded_poly" => &["C", "c"],
            "all_or_nothing" | "g1" => &["r"],
            "power" => &["kappa"],
            "constant" => &["c"],
            "mixture" | "power_mixture" | "inverse_sqrt" => &[],
            _ => return Err(Error::InvalidArgument(format!("unknown calibrator {name:?}"))),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidArgument(format!("calibrator {name:?} has no parameter {k:?}")));
        }
        let get = |keys: &[&str]| params.iter().find(|(k, _)| keys.contains(&k.as_str())).map(|p| p.1);
        let need = |keys: &[&str]| {
            get(keys).ok_or_else(|| Error::InvalidArgument(format!("calibrator {name:?} needs {}", keys[0])))
        };
        let spec = match name {
            "g2" | "bounded_poly" => match get(&["C", "c"]) {
                None => CalibratorSpec::DefaultG2,
                c => CalibratorSpec::BoundedPoly { c },
            },
            "all_or_nothing" | "g1" => CalibratorSpec::AllOrNothing {
                r: get(&["r"]).unwrap_or(0.5),
            },
            "power" => CalibratorSpec::Power {
                kappa: need(&["kappa"])?,
            },
            "constant" => CalibratorSpec::Constant { c: need(&["c"])? },
            "mixture" | "power_mixture" => CalibratorSpec::PowerMixture,
            _ => CalibratorSpec::InverseSqrt,
        };
        // reject parameter values that can never resolve
        spec.resolve(0.5)?;
        Ok(spec)
    }
}

impl Serialize for CalibratorSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for CalibratorSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quad;
    use proptest::prelude::*;

    fn builtins() -> Vec<Calibrator> {
        vec![
            Calibrator::all_or_nothing(0.5, 0.05).unwrap(),
            Calibrator::all_or_nothing(1.0 / 3.0, 0.1).unwrap(),
            Calibrator::bounded_poly(20.0).unwrap(),
            Calibrator::bounded_poly(10.0).unwrap(),
            Calibrator::power(0.3).unwrap(),
            Calibrator::power(0.9).unwrap(),
            Calibrator::PowerMixture,
            Calibrator::InverseSqrt,
        ]
    }

    #[test]
    fn all_or_nothing_values() {
        let g = Calibrator::all_or_nothing(0.5, 0.05).unwrap();
        assert!((g.eval(0.2).unwrap() - 4.472_135_954_999_58).abs() < 1e-12);
        assert_eq!(g.eval(0.3).unwrap(), 0.0);
    }

    #[test]
    fn g2_values() {
        let g = Calibrator::default_for(0.05).unwrap();
        assert_eq!(g, Calibrator::BoundedPoly { c: 20.0 });
        assert_eq!(g.eval(0.0).unwrap(), 20.0);
        assert_eq!(g.eval(1.0).unwrap(), 0.0);
        // a = 1/19: g(t) = 20(1 − t^{1/19})
        let t: f64 = 0.37;
        assert!((g.eval(t).unwrap() - 20.0 * (1.0 - t.powf(1.0 / 19.0))).abs() < 1e-14);
    }

    #[test]
    fn mixture_matches_quadrature_of_power_family() {
        for &t in &[0.5f64, 0.9, 0.999, 1e-3, 0.2] {
            let direct = quad(|k: f64| k * t.powf(k - 1.0), 1e-12).unwrap();
            let g = Calibrator::PowerMixture.eval(t).unwrap();
            assert!((g - direct).abs() < 1e-9, "{t}: {g} vs {direct}");
        }
        // the κ-average equals ∫₀¹ κ dκ = 1/2 at t = 1
        assert!((Calibrator::PowerMixture.eval(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(Calibrator::PowerMixture.eval(0.0).unwrap(), f64::INFINITY);
        assert!(Calibrator::PowerMixture.eval(1e-300).unwrap() > 1e2);
    }

    #[test]
    fn domain_errors() {
        let g = Calibrator::InverseSqrt;
        assert!(matches!(g.eval(1.5), Err(Error::Domain { .. })));
        assert!(matches!(g.eval(f64::NAN), Err(Error::Domain { .. })));
        assert!(matches!(
            g.calibrate_vector(&[0.1, -0.2]),
            Err(Error::Domain { index: 1, .. })
        ));
    }

    #[test]
    fn calibrate_vector_examples() {
        let g = Calibrator::bounded_poly(20.0).unwrap();
        assert_eq!(g.calibrate_vector(&[1.0; 5]).unwrap(), vec![0.0; 5]);
        assert_eq!(g.calibrate_vector(&[0.0; 5]).unwrap(), vec![20.0; 5]);
    }

    #[test]
    fn certificates() {
        for alpha in [0.05, 0.1] {
            for r in [1.0 / 3.0, 0.5, 2.0 / 3.0] {
                let c = Calibrator::all_or_nothing(r, alpha).unwrap().certify().unwrap();
                assert!(c.bounded_admissible(), "{c:?}");
            }
        }
        for cval in [10.0, 20.0] {
            let c = Calibrator::bounded_poly(cval).unwrap().certify().unwrap();
            assert!(c.bounded_admissible(), "{c:?}");
        }
        for g in [Calibrator::power(0.3).unwrap(), Calibrator::PowerMixture, Calibrator::InverseSqrt] {
            let c = g.certify().unwrap();
            assert!(c.admissible(), "{c:?}");
            assert!((c.integral - 1.0).abs() < 1e-9, "{c:?}");
            assert!(!c.bounded_admissible());
        }
        let two = Calibrator::constant(2.0).unwrap().certify().unwrap();
        assert!((two.integral - 2.0).abs() < 1e-9);
        assert!(!two.admissible());
        assert!(Calibrator::constant(1.0).unwrap().certify().unwrap().admissible());
    }

    #[test]
    fn monte_carlo_mean_is_at_most_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let draws: Vec<f64> = (0..200_000).map(|_| rng.random::<f64>()).collect();
        for g in builtins() {
            if g == Calibrator::InverseSqrt || g == Calibrator::PowerMixture {
                continue; // infinite variance
            }
            let s = g.calibrate_vector(&draws).unwrap();
            let n = s.len() as f64;
            let mean = s.iter().sum::<f64>() / n;
            let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(mean <= 1.0 + 4.0 * (var / n).sqrt(), "{g}: {mean}");
        }
    }

    #[test]
    fn weights() {
        assert_eq!(normalize_weights(&[2.0; 4]).unwrap().values, vec![1.0; 4]);
        assert_eq!(normalize_weights(&[3.0, 1.0]).unwrap().values, vec![1.5, 0.5]);
        let w = normalize_weights(&[0.0, 1.0, 5.0]).unwrap();
        assert_eq!(w.values[0], 0.0);
        assert!((w.values.iter().sum::<f64>() - 3.0).abs() < 1e-12);
        assert!(matches!(normalize_weights(&[0.0, 0.0]), Err(Error::ZeroEvidence)));
        let w = normalize_weights(&[f64::INFINITY, 1.0, 2.0, f64::INFINITY]).unwrap();
        assert_eq!(w.values, vec![2.0, 0.0, 0.0, 2.0]);
        assert_eq!(w.infinite, 2);
    }

    #[test]
    fn grammar_round_trips() {
        for s in ["g2:C=20", "all_or_nothing:r=0.5", "power:kappa=0.3", "mixture", "inverse_sqrt", "constant:c=2", "g2"] {
            let spec: CalibratorSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
            assert_eq!(spec.to_string().parse::<CalibratorSpec>().unwrap(), spec);
        }
        assert!("g2:C=0.5".parse::<CalibratorSpec>().is_err());
        assert!("power".parse::<CalibratorSpec>().is_err());
        assert!("nope".parse::<CalibratorSpec>().is_err());
        assert!("g2:kappa=3".parse::<CalibratorSpec>().is_err());
        let g1: CalibratorSpec = "all_or_nothing".parse().unwrap();
        assert_eq!(g1.resolve(0.1).unwrap(), Calibrator::AllOrNothing { r: 0.5, alpha: 0.1 });
        assert_eq!(CalibratorSpec::default().resolve(0.1).unwrap(), Calibrator::BoundedPoly { c: 10.0 });
    }

    proptest! {
        #[test]
        fn calibrators_are_nonincreasing(a in 0.0f64..=1.0, b in 0.0f64..=1.0, which in 0usize..8) {
            let g = builtins()[which];
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(g.value(lo) >= g.value(hi));
            prop_assert!(g.value(hi) >= 0.0);
            prop_assert!(g.value(lo) <= g.bound());
        }

        #[test]
        fn weights_sum_to_m(s in proptest::collection::vec(0.0f64..50.0, 1..40)) {
            prop_assume!(s.iter().sum::<f64>() > 0.0);
            let w = normalize_weights(&s).unwrap();
            let m = s.len() as f64;
            prop_assert!((w.values.iter().sum::<f64>() - m).abs() <= 1e-9 * m);
            for (wi, si) in w.values.iter().zip(&s) {
                prop_assert_eq!(*wi == 0.0, *si == 0.0);
            }
        }
    }
}
