//! JSON configuration files, one schema per subcommand. Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use epknock::calibrators::CalibratorSpec;
use epknock::paired::NoiseScale;
use epknock::procedures::DEFAULT_LAMBDA;
use epknock::sim::{Method, SimSetting};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

fn yes() -> bool {
    true
}

fn default_alphas() -> Vec<f64> {
    vec![0.05, 0.1]
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_check_alpha() -> f64 {
    0.1
}

fn default_tol() -> f64 {
    epknock::knockoff::GRAM_TOL
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "yes")]
    pub svg: bool,
    pub settings: Vec<SimSetting>,
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.settings.is_empty() {
            bail!("settings must not be empty");
        }
        for (i, s) in self.settings.iter().enumerate() {
            s.validate().with_context(|| format!("settings[{i}]"))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub resistance: PathBuf,
    pub mutations: PathBuf,
    #[serde(default)]
    pub panel: Option<PathBuf>,
    pub drugs: Vec<String>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub calibrator: CalibratorSpec,
    #[serde(default)]
    pub noise_scale: NoiseScale,
    /// Take log10 of the stored response (raw fold change).
    #[serde(default)]
    pub log_transform: bool,
    #[serde(default = "yes")]
    pub svg: bool,
}

impl AnalyzeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.drugs.is_empty() {
            bail!("drugs must not be empty");
        }
        if self.alphas.is_empty() {
            bail!("alphas must not be empty");
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            bail!("alpha must lie in (0, 1), got {a}");
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            bail!("lambda must lie in (0, 1), got {}", self.lambda);
        }
        if self.methods.is_empty() {
            bail!("methods must not be empty");
        }
        if self.methods.contains(&Method::M2) {
            if let Some(a) = self.alphas.iter().find(|a| self.lambda <= a.sqrt()) {
                bail!("M2 needs lambda > sqrt(alpha) = {} (alpha = {a})", a.sqrt());
            }
        }
        for &a in &self.alphas {
            self.calibrator.resolve(a)?;
        }
        if let NoiseScale::Known(s) = self.noise_scale {
            if !(s > 0.0 && s.is_finite()) {
                bail!("known noise scale must be positive, got {s}");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibratorCheckConfig {
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub calibrators: Vec<CalibratorSpec>,
    /// Level used to resolve level-dependent calibrators.
    #[serde(default = "default_check_alpha")]
    pub alpha: f64,
}

impl CalibratorCheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.calibrators.is_empty() {
            bail!("calibrators must not be empty");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1), got {}", self.alpha);
        }
        for c in &self.calibrators {
            c.resolve(self.alpha).with_context(|| format!("calibrator {c}"))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSource {
    /// A standardized AR(1) design with equicorrelated knockoffs.
    Simulated {
        n: usize,
        m: usize,
        rho: f64,
        seed: u64,
    },
    /// A header-less numeric design matrix; knockoffs are built from it.
    Csv { path: PathBuf },
    /// A saved `(X, X̃, D)` triple, checked as is.
    Bundle { dir: PathBuf },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnockoffCheckConfig {
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub source: DesignSource,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Also save the triple to `<out>/bundle`.
    #[serde(default)]
    pub save_bundle: bool,
}

impl KnockoffCheckConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            bail!("tol must be positive, got {}", self.tol);
        }
        if let DesignSource::Simulated { n, m, rho, .. } = self.source {
            if m == 0 || n < 2 * m {
                bail!("simulated design needs m ≥ 1 and n ≥ 2m (got n = {n}, m = {m})");
            }
            if !(0.0..1.0).contains(&rho) {
                bail!("rho must lie in [0, 1), got {rho}");
            }
        }
        Ok(())
    }
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}
