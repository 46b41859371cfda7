use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use epknock::calibrators::Calibrator;
use epknock::dataio::{compare_panel, load_dataset, preprocess};
use epknock::knockoff::{build_knockoffs, choose_d, standardize};
use epknock::paired::paired_pvalues;
use epknock::procedures::method1;
use epknock::sim::rng::NormalStream;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Writes a synthetic resistance study: 120 samples, 10 mutations at
/// positions 10..=19 (two variants at position 19, one of them rare), the
/// response driven by positions 10 and 12.
fn write_fixture(dir: &Path) {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut z = NormalStream::new(ChaCha20Rng::seed_from_u64(6));
    let labels = ["10F", "11I", "12V", "13L", "14K", "15M", "16A", "17R", "19P", "19Q"];
    let mut muts = format!("id,{}\n", labels.join(","));
    let mut res = String::from("id,DRV,LPV\n");
    for i in 0..120 {
        let row: Vec<u8> = (0..labels.len())
            .map(|j| match j {
                9 => (i < 2) as u8,
                _ => (rng.random::<f64>() < 0.3) as u8,
            })
            .collect();
        let y = 3.0 * row[0] as f64 + 2.5 * row[2] as f64 + 0.5 * z.next();
        let cells: Vec<String> = row.iter().map(|b| b.to_string()).collect();
        muts.push_str(&format!("s{i},{}\n", cells.join(",")));
        let lpv = if i % 10 == 0 { "NA".to_string() } else { (10f64.powf(y)).to_string() };
        res.push_str(&format!("s{i},{},{lpv}\n", 10f64.powf(y)));
    }
    fs::write(dir.join("resistance.csv"), res).unwrap();
    fs::write(dir.join("mutations.csv"), muts).unwrap();
}

#[test]
fn synthetic_study_recovers_driving_positions() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let r = dir.path().join("resistance.csv");
    let m = dir.path().join("mutations.csv");
    let lpv = load_dataset(&r, &m, "LPV", true).unwrap();
    assert_eq!(lpv.n(), 108);
    let raw = load_dataset(&r, &m, "DRV", true).unwrap();
    let (ds, log) = preprocess(&raw).unwrap();
    assert_eq!(log.rare, vec!["19Q"]);
    assert_eq!(ds.p(), 9);

    let design = standardize(&ds.covariates).unwrap();
    let model = build_knockoffs(&design, &choose_d(&design.gram()).unwrap()).unwrap();
    let ev = paired_pvalues(&model, &ds.response).unwrap();
    let report = method1(ev.p1(), ev.p2(), &Calibrator::default_for(0.1).unwrap(), 0.1).unwrap();
    let panel: BTreeSet<u32> = [10, 12, 30].into_iter().collect();
    let cmp = compare_panel(&report, &ds.labels, &panel).unwrap();
    assert!(cmp.selected_positions.contains(&10) && cmp.selected_positions.contains(&12));
    assert_eq!(cmp.in_panel + cmp.novel, cmp.selected_positions.len());
    assert!(cmp.selected_positions.len() <= report.n_rejected());

    // same inputs, same comparison
    let again = compare_panel(&report, &ds.labels, &panel).unwrap();
    assert_eq!(cmp, again);
}
