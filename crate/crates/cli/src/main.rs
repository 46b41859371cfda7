mod config;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use epknock::calibrators::CalibratorSpec;
use epknock::dataio::{self, PanelRow};
use epknock::filter::{knockoff_stats, knockoff_threshold, lasso_path, DEFAULT_GRID_RATIO, DEFAULT_GRID_SIZE};
use epknock::knockoff::{self, build_knockoffs, choose_d, standardize, GramResiduals};
use epknock::numerics::Matrix;
use epknock::paired::PairedInference;
use epknock::sim::{self, Method, SimResult};
use epknock::svg;

use config::{AnalyzeConfig, CalibratorCheckConfig, DesignSource, KnockoffCheckConfig, SimulateConfig};

const DEFAULT_OUT: &str = "epknock-out";

#[derive(Parser)]
#[command(name = "epknock", version, about = "Knockoff-assisted, e-value weighted FDR procedures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `out`).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo comparison of the methods on AR(1) designs.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Master seed for every setting.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (results do not depend on it).
        #[arg(long)]
        threads: Option<usize>,
        /// Replications per setting.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Runs every method on a resistance dataset and compares with a panel.
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// Certifies calibrator integrals by quadrature.
    CalibratorCheck {
        #[command(flatten)]
        common: Common,
        /// Calibrator spec such as `g2:C=20` or `power:kappa=0.3` (repeatable).
        #[arg(long = "calibrator")]
        calibrators: Vec<String>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Checks the Gram identities of a knockoff construction.
    KnockoffCheck {
        #[command(flatten)]
        common: Common,
        /// Seed of a simulated design source.
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Exit status 2 for configuration and input problems, 1 for computation.
enum Failure {
    Config(anyhow::Error),
    Compute(anyhow::Error),
}

type Outcome<T> = std::result::Result<T, Failure>;

trait Classify<T> {
    fn config(self) -> Outcome<T>;
    fn compute(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for std::result::Result<T, E> {
    fn config(self) -> Outcome<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn compute(self) -> Outcome<T> {
        self.map_err(|e| Failure::Compute(e.into()))
    }
}

/// Input-shaped library errors count as configuration failures.
fn classify(e: epknock::Error) -> Failure {
    match e {
        epknock::Error::Schema(_) | epknock::Error::Io(_) | epknock::Error::Label(_) => Failure::Config(e.into()),
        other => Failure::Compute(other.into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            common,
            seed,
            threads,
            reps,
        } => simulate(&common, seed, threads, reps),
        Command::Analyze { common } => analyze(&common),
        Command::CalibratorCheck {
            common,
            calibrators,
            alpha,
        } => calibrator_check(&common, &calibrators, alpha),
        Command::KnockoffCheck { common, seed } => knockoff_check(&common, seed),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn need_config<T: serde::de::DeserializeOwned>(common: &Common) -> Outcome<T> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("--config is required"))
        .config()?;
    config::load(path).config()
}

fn out_dir(common: &Common, from_config: &Option<PathBuf>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| from_config.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn create_dir(dir: &Path) -> Outcome<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .config()
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Outcome<()> {
    fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .compute()
}

/// `manifest.json`: the effective configuration, its SHA-256, the seed and
/// the tool version.
fn write_manifest(dir: &Path, subcommand: &str, config: &impl serde::Serialize, seed: Option<u64>, outputs: &[String]) -> Outcome<()> {
    let value = serde_json::to_value(config).compute()?;
    let canonical = serde_json::to_string(&value).compute()?;
    let digest = hex::encode(Sha256::digest(canonical.as_bytes()));
    let manifest = serde_json::json!({
        "tool": "epknock",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "config_sha256": digest,
        "seed": seed,
        "config": value,
        "outputs": outputs,
    });
    write_file(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).compute()? + "\n")
}

fn simulate(common: &Common, seed: Option<u64>, threads: Option<usize>, reps: Option<usize>) -> Outcome<ExitCode> {
    let mut cfg: SimulateConfig = need_config(common)?;
    for s in &mut cfg.settings {
        if let Some(seed) = seed {
            s.master_seed = seed;
        }
        if let Some(r) = reps {
            s.reps = r;
        }
    }
    cfg.validate().config()?;
    if threads == Some(0) {
        return Err(Failure::Config(anyhow!("threads must be ≥ 1")));
    }
    let dir = out_dir(common, &cfg.out);
    create_dir(&dir)?;

    let mut results: Vec<SimResult> = Vec::new();
    for (i, s) in cfg.settings.iter().enumerate() {
        let r = sim::run_simulation(s, threads)
            .with_context(|| format!("setting {i}"))
            .compute()?;
        results.push(r);
    }
    let mut csv = Vec::new();
    for (i, r) in results.iter().enumerate() {
        r.write_csv(&mut csv, i == 0).compute()?;
    }
    let mut outputs = vec!["sim_results.csv".to_string()];
    write_file(&dir.join("sim_results.csv"), &csv)?;
    if cfg.svg {
        for (i, r) in results.iter().enumerate() {
            let name = format!("sim_setting{}.svg", i + 1);
            write_file(&dir.join(&name), svg::sim_chart(r))?;
            outputs.push(name);
        }
    }
    let seeds: BTreeSet<u64> = cfg.settings.iter().map(|s| s.master_seed).collect();
    let seed = if seeds.len() == 1 { seeds.first().copied() } else { None };
    write_manifest(&dir, "simulate", &cfg, seed, &outputs)?;

    for r in &results {
        let s = &r.setting;
        println!(
            "setting n={} m={} k={} rho={} alpha={} reps={} seed={}",
            s.n, s.m, s.k, s.rho, s.alpha, s.reps, s.master_seed
        );
        println!("  {:<6} {:>6} {:>8} {:>8} {:>6}", "method", "gamma", "fdr", "power", "failed");
        for row in &r.rows {
            println!(
                "  {:<6} {:>6} {:>8.4} {:>8.4} {:>6}",
                row.method.to_string(),
                row.gamma,
                row.fdr_hat,
                row.power_hat,
                row.reps_failed
            );
            if let Some(msg) = &row.first_failure {
                println!("         first failure: {msg}");
            }
        }
    }
    println!("wrote {}", dir.join("sim_results.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn analyze(common: &Common) -> Outcome<ExitCode> {
    let cfg: AnalyzeConfig = need_config(common)?;
    cfg.validate().config()?;
    for p in [&cfg.resistance, &cfg.mutations].into_iter().chain(cfg.panel.as_ref()) {
        if !p.is_file() {
            return Err(Failure::Config(anyhow!("input file not found: {}", p.display())));
        }
    }
    let panel = match &cfg.panel {
        Some(p) => Some(dataio::read_panel(p).map_err(classify)?),
        None => None,
    };
    let dir = out_dir(common, &cfg.out);
    create_dir(&dir)?;
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let mut outputs = Vec::new();

    for drug in &cfg.drugs {
        let ds = dataio::load_dataset(&cfg.resistance, &cfg.mutations, drug, cfg.log_transform).map_err(classify)?;
        let (ds, log) = dataio::preprocess(&ds).map_err(classify)?;
        let ddir = dir.join(slug(drug));
        create_dir(&ddir)?;
        write_file(&ddir.join("preprocess.json"), serde_json::to_string_pretty(&log).compute()? + "\n")?;
        if ds.n() <= 2 * ds.p() {
            return Err(Failure::Compute(anyhow!(
                "{drug}: n = {} samples for {} mutations after preprocessing; the procedures need n > 2m",
                ds.n(),
                ds.p()
            )));
        }
        let design = standardize(&ds.covariates).map_err(classify)?;
        let d = choose_d(&design.gram()).map_err(classify)?;
        let model = build_knockoffs(&design, &d).map_err(classify)?;
        let inference = PairedInference::new(&model, cfg.noise_scale).map_err(classify)?;
        let y = &ds.response;
        let evidence = inference.evidence(y).map_err(classify)?;
        evidence.save_csv(&ddir.join("evidence.csv")).map_err(classify)?;
        if methods.contains(&Method::M0) {
            let stats = knockoff_stats(&lasso_path(&model, y, DEFAULT_GRID_SIZE, DEFAULT_GRID_RATIO).map_err(classify)?)
                .map_err(classify)?;
            let mut buf = Vec::new();
            let t = knockoff_threshold(&stats.v, cfg.alphas[0]);
            stats.write_csv(t, &mut buf).map_err(classify)?;
            write_file(&ddir.join("knockoff_stats.csv"), buf)?;
        }
        println!("{drug}: n = {}, m = {} ({} rare, {} duplicate columns removed)", ds.n(), ds.p(), log.rare.len(), log.duplicates.len());

        for &alpha in &cfg.alphas {
            let cal = cfg.calibrator.resolve(alpha).config()?;
            let adir = ddir.join(format!("alpha_{alpha}"));
            create_dir(&adir)?;
            let mut rows = Vec::new();
            for &method in &methods {
                let report = sim::run_method(method, &model, &inference, y, alpha, cfg.lambda, &cal).map_err(classify)?;
                report.save(&adir, &method.to_string()).map_err(classify)?;
                let (in_panel, novel) = match &panel {
                    Some(panel) => {
                        let c = dataio::compare_panel(&report, &ds.labels, panel).map_err(classify)?;
                        (c.in_panel, c.novel)
                    }
                    None => (0, 0),
                };
                rows.push(PanelRow {
                    method: method.to_string(),
                    n_selected: report.n_rejected(),
                    in_panel,
                    novel,
                });
            }
            let mut buf = Vec::new();
            dataio::write_panel_csv(&rows, &mut buf).map_err(classify)?;
            write_file(&adir.join("panel.csv"), buf)?;
            outputs.push(format!("{}/alpha_{alpha}/panel.csv", slug(drug)));
            if cfg.svg && panel.is_some() {
                write_file(&adir.join("panel.svg"), svg::panel_chart(&format!("{drug} (α = {alpha})"), &rows))?;
            }
            let summary: Vec<String> = rows.iter().map(|r| format!("{}={}", r.method, r.n_selected)).collect();
            println!("  alpha {alpha}: selected {}", summary.join(" "));
        }
    }
    write_manifest(&dir, "analyze", &cfg, None, &outputs)?;
    Ok(ExitCode::SUCCESS)
}

fn calibrator_check(common: &Common, flags: &[String], alpha: Option<f64>) -> Outcome<ExitCode> {
    let mut cfg = match &common.config {
        Some(_) => need_config::<CalibratorCheckConfig>(common)?,
        None => CalibratorCheckConfig {
            out: None,
            calibrators: Vec::new(),
            alpha: 0.1,
        },
    };
    for f in flags {
        let spec: CalibratorSpec = f.parse().config()?;
        cfg.calibrators.push(spec);
    }
    if let Some(a) = alpha {
        cfg.alpha = a;
    }
    cfg.validate().config()?;

    let mut certs = Vec::new();
    let mut all_pass = true;
    println!("{:<34} {:>16} {:>10} {:>10} {:>5} {:>8}  result", "calibrator", "integral", "bound", "g(0)", "mono", "bounded");
    for spec in &cfg.calibrators {
        let cal = spec.resolve(cfg.alpha).config()?;
        let cert = cal.certify().with_context(|| format!("certifying {cal}")).compute()?;
        let pass = cert.admissible();
        all_pass &= pass;
        println!(
            "{:<34} {:>16.12} {:>10.4} {:>10.4} {:>5} {:>8}  {}",
            cal.to_string(),
            cert.integral,
            cert.bound,
            cert.value_at_zero,
            cert.monotone_violations,
            if cert.bounded_admissible() { "yes" } else { "no" },
            if pass { "PASS" } else { "FAIL" }
        );
        certs.push(serde_json::json!({ "spec": spec.to_string(), "certificate": cert, "pass": pass }));
    }
    if common.out.is_some() || cfg.out.is_some() {
        let dir = out_dir(common, &cfg.out);
        create_dir(&dir)?;
        write_file(&dir.join("certificates.json"), serde_json::to_string_pretty(&certs).compute()? + "\n")?;
        write_manifest(&dir, "calibrator-check", &cfg, None, &["certificates.json".to_string()])?;
    }
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn knockoff_check(common: &Common, seed: Option<u64>) -> Outcome<ExitCode> {
    let mut cfg: KnockoffCheckConfig = need_config(common)?;
    if let (Some(s), DesignSource::Simulated { seed, .. }) = (seed, &mut cfg.source) {
        *seed = s;
    }
    cfg.validate().config()?;

    // (X, X̃, D) and, when built here, the complement basis
    let (x, x_tilde, d, complement): (Matrix, Matrix, Vec<f64>, Option<Matrix>) = match &cfg.source {
        DesignSource::Bundle { dir } => {
            let (x, xt, d) = knockoff::read_bundle(dir).map_err(classify)?;
            (x, xt, d, None)
        }
        source => {
            let raw = match source {
                DesignSource::Simulated { n, m, rho, seed } => sim::gen_design(*n, *m, *rho, *seed),
                DesignSource::Csv { path } => knockoff::read_matrix_csv(path).map_err(classify)?,
                DesignSource::Bundle { .. } => unreachable!(),
            };
            let design = standardize(&raw).map_err(classify)?;
            let diag = choose_d(&design.gram()).map_err(classify)?;
            let model = build_knockoffs(&design, &diag).map_err(classify)?;
            (
                model.x().clone(),
                model.x_tilde().clone(),
                model.d().to_vec(),
                Some(model.complement().clone()),
            )
        }
    };
    let res = GramResiduals::compute(&x, &x_tilde, &d).map_err(classify)?;
    let tol = cfg.tol;
    let mut checks = vec![
        ("knockoff_gram", res.knockoff_gram, res.knockoff_gram <= tol),
        ("cross_gram", res.cross_gram, res.cross_gram <= tol),
        ("sum_difference", res.independence, res.independence <= tol),
        ("min_d", res.min_d, res.min_d > 0.0),
        ("min_eig_2sigma_minus_d", res.min_eig_2sigma_minus_d, res.min_eig_2sigma_minus_d > 0.0),
    ];
    if let Some(u) = &complement {
        let utu = u.t_matmul(u).max_abs_diff(&Matrix::identity(u.cols()));
        let utx = u.t_matmul(&x).max_abs();
        checks.push(("complement_orthonormal", utu, utu <= tol));
        checks.push(("complement_orthogonal", utx, utx <= tol));
    }
    println!("n = {}, m = {}, tol = {tol:e}", x.rows(), x.cols());
    let mut all = true;
    for (name, value, ok) in &checks {
        all &= ok;
        println!("{name:<24} {value:>12.3e}  {}", if *ok { "PASS" } else { "FAIL" });
    }
    if common.out.is_some() || cfg.out.is_some() {
        let dir = out_dir(common, &cfg.out);
        create_dir(&dir)?;
        let report: serde_json::Map<String, serde_json::Value> = checks
            .iter()
            .map(|(k, v, ok)| (k.to_string(), serde_json::json!({ "value": v, "pass": ok })))
            .collect();
        write_file(&dir.join("residuals.json"), serde_json::to_string_pretty(&report).compute()? + "\n")?;
        let mut outputs = vec!["residuals.json".to_string()];
        if cfg.save_bundle {
            knockoff::write_bundle(&dir.join("bundle"), &x, &x_tilde, &d).map_err(classify)?;
            outputs.push("bundle".to_string());
        }
        let seed = match cfg.source {
            DesignSource::Simulated { seed, .. } => Some(seed),
            _ => None,
        };
        write_manifest(&dir, "knockoff-check", &cfg, seed, &outputs)?;
    }
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
