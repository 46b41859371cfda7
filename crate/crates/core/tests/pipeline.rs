use epknock::calibrators::{Calibrator, CalibratorSpec};
use epknock::filter::{knockoff_select, knockoff_stats, lasso_path};
use epknock::knockoff::{build_knockoffs, choose_d, read_bundle, standardize, DRule, GramResiduals, KnockoffDiag};
use epknock::numerics::sym_eigen;
use epknock::paired::{paired_pvalues, NoiseScale, PairedInference};
use epknock::procedures::{bon_bh, method1, method2, method3, Procedure};
use epknock::sim::rng::NormalStream;
use epknock::sim::{gen_design, gen_truth, run_simulation, Method, SimSetting};
use epknock::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn setting(k: usize, gammas: Vec<f64>, methods: Vec<Method>, reps: usize, seed: u64) -> SimSetting {
    SimSetting {
        n: 60,
        m: 12,
        k,
        rho: 0.5,
        gammas,
        sigma: 1.0,
        alpha: 0.2,
        lambda: 0.5,
        methods,
        reps,
        master_seed: seed,
        random_signs: false,
        calibrator: CalibratorSpec::default(),
    }
}

#[test]
fn null_setting_stays_below_level() {
    let s = setting(0, vec![0.0], vec![Method::M1, Method::M3, Method::M4, Method::M5], 300, 11);
    let res = run_simulation(&s, None).unwrap();
    for row in &res.rows {
        let se = (s.alpha * (1.0 - s.alpha) / s.reps as f64).sqrt();
        assert_eq!(row.power_hat, 0.0);
        assert!(row.fdr_hat <= s.alpha + 3.0 * se, "{} fdr {}", row.method, row.fdr_hat);
    }
}

#[test]
fn knockoff_filter_fdr_on_null_heavy_setting() {
    let s = setting(2, vec![4.0], vec![Method::M0], 200, 12);
    let res = run_simulation(&s, None).unwrap();
    let row = res.row(Method::M0, 4.0).unwrap();
    let se = (s.alpha * (1.0 - s.alpha) / s.reps as f64).sqrt();
    assert_eq!(row.reps_completed, 200);
    assert!(row.fdr_hat <= s.alpha + 3.0 * se, "fdr {}", row.fdr_hat);
}

#[test]
fn power_grows_with_signal_under_paired_seeds() {
    let s = setting(3, vec![1.0, 3.0, 6.0], Method::ALL.to_vec(), 100, 13);
    let res = run_simulation(&s, None).unwrap();
    for method in Method::ALL {
        let rows: Vec<_> = s.gammas.iter().map(|&g| res.row(method, g).unwrap()).collect();
        for w in rows.windows(2) {
            assert!(
                w[1].power_hat >= w[0].power_hat - 2.0 * w[0].se_power.max(w[1].se_power),
                "{method}: {} then {}",
                w[0].power_hat,
                w[1].power_hat
            );
        }
    }
}

#[test]
fn end_to_end_strong_signal() {
    // D = λ_min·I keeps Σ − D ⪰ 0, so the first estimator stays informative
    let design = standardize(&gen_design(150, 20, 0.3, 21)).unwrap();
    let lmin = sym_eigen(&design.gram()).unwrap().min();
    let model = build_knockoffs(&design, &KnockoffDiag::user(vec![lmin; 20])).unwrap();
    assert_eq!(model.rule(), DRule::UserSupplied);
    let truth = gen_truth(20, 4, 12.0, 22, false);
    let mut y = model.x().mul_vec(&truth.beta);
    let mut z = NormalStream::new(ChaCha20Rng::seed_from_u64(23));
    for v in y.iter_mut() {
        *v += z.next();
    }
    let ev = paired_pvalues(&model, &y).unwrap();
    assert_eq!(ev.nu(), 110);
    let cal = Calibrator::default_for(0.1).unwrap();
    for report in [
        bon_bh(ev.p1(), ev.p2(), 0.1).unwrap(),
        method1(ev.p1(), ev.p2(), &cal, 0.1).unwrap(),
        method2(ev.p1(), ev.p2(), &cal, 0.1, 0.5).unwrap(),
        method3(ev.p1(), ev.p2(), &cal, 0.1, 0.5).unwrap(),
    ] {
        for &j in &truth.support {
            assert!(report.is_rejected(j), "{} missed {j}", report.procedure);
        }
    }
    let m0 = knockoff_select(&knockoff_stats(&lasso_path(&model, &y, 100, 1e-3).unwrap()).unwrap(), 0.1).unwrap();
    assert_eq!(m0.procedure, Procedure::KnockoffFilter);
    assert!(m0.threshold.is_some());
}

#[test]
fn noiseless_response_is_a_degenerate_fit() {
    let design = standardize(&gen_design(50, 5, 0.2, 31)).unwrap();
    let model = build_knockoffs(&design, &choose_d(&design.gram()).unwrap()).unwrap();
    let y = model.x().mul_vec(&[1.0, 0.0, 2.0, 0.0, 0.0]);
    assert!(matches!(paired_pvalues(&model, &y), Err(Error::DegenerateFit)));
    let inf = PairedInference::new(&model, NoiseScale::Known(1e-3)).unwrap();
    let ev = inf.evidence(&y).unwrap();
    assert!(ev.p2()[0] < 1e-6);
    assert!((ev.p2()[1] - 1.0).abs() < 1e-9);
}

#[test]
fn bundle_round_trip_preserves_identities() {
    let dir = tempfile::tempdir().unwrap();
    let design = standardize(&gen_design(40, 8, 0.4, 41)).unwrap();
    let model = build_knockoffs(&design, &choose_d(&design.gram()).unwrap()).unwrap();
    model.write_bundle(dir.path()).unwrap();
    let (x, xt, d) = read_bundle(dir.path()).unwrap();
    assert_eq!(&x, model.x());
    assert_eq!(&xt, model.x_tilde());
    assert_eq!(d, model.d());
    assert!(GramResiduals::compute(&x, &xt, &d).unwrap().passes(1e-8));
}

#[test]
fn insufficient_rows_is_refused() {
    let design = standardize(&gen_design(15, 10, 0.2, 51)).unwrap();
    let d = choose_d(&design.gram()).unwrap();
    assert!(matches!(build_knockoffs(&design, &d), Err(Error::InsufficientRows { n: 15, m: 10 })));
}
