//! Regression datasets with binary mutation covariates: loading,
//! frequency and duplicate filtering, and comparison of selections against
//! a panel of known positions.
//!
//! Both input files are CSV with a header row whose first column is the
//! sample id. The resistance file has one column per drug; missing cells are
//! empty, `NA` or `NaN`. The mutation file has one 0/1 column per mutation.
//! A mutation label starts with its integer position (`90M`, `90.M`).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::knockoff::standardize;
use crate::numerics::{Cholesky, Matrix, SymMatrix};
use crate::procedures::DecisionReport;

pub const MIN_MUTATION_COUNT: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub drug: String,
    pub sample_ids: Vec<String>,
    pub response: Vec<f64>,
    /// `n × p`, entries 0 or 1.
    pub covariates: Matrix,
    pub labels: Vec<String>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p(&self) -> usize {
        self.labels.len()
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim().to_ascii_lowercase().as_str(), "" | "na" | "nan" | ".")
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(io) => Error::Io(format!("{}: {io}", path.display())),
            _ => Error::Schema(format!("{}: {e}", path.display())),
        })
}

/// Reads the response for `drug` and the mutation indicators, joined on the
/// sample id in mutation-file order. Samples without a response are dropped.
/// With `log_transform`, the stored fold change is replaced by its base-10
/// logarithm.
pub fn load_dataset(resistance_csv: &Path, mutation_csv: &Path, drug: &str, log_transform: bool) -> Result<Dataset> {
    let mut res = reader(resistance_csv)?;
    let header = res.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Schema(format!(
            "{}: expected a sample id column and at least one drug column",
            resistance_csv.display()
        )));
    }
    let col = header.iter().skip(1).position(|h| h == drug).map(|c| c + 1).ok_or_else(|| {
        Error::Schema(format!("{}: no column for drug {drug:?}", resistance_csv.display()))
    })?;
    let mut response: HashMap<String, Option<f64>> = HashMap::new();
    for (row, rec) in res.records().enumerate() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or("").to_string();
        let cell = rec.get(col).unwrap_or("");
        let value = if is_missing(cell) {
            None
        } else {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Schema(format!(
                    "{}: row {}, column {drug:?}: {cell:?} is not a number",
                    resistance_csv.display(),
                    row + 1
                ))
            })?;
            if log_transform {
                if !(v > 0.0) {
                    return Err(Error::Schema(format!(
                        "{}: row {}, column {drug:?}: fold change {v} cannot be log-transformed",
                        resistance_csv.display(),
                        row + 1
                    )));
                }
                Some(v.log10())
            } else if v.is_finite() {
                Some(v)
            } else {
                None
            }
        };
        if response.insert(id.clone(), value).is_some() {
            return Err(Error::Schema(format!(
                "{}: duplicate sample id {id:?}",
                resistance_csv.display()
            )));
        }
    }

    let mut mut_reader = reader(mutation_csv)?;
    let header = mut_reader.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Schema(format!(
            "{}: expected a sample id column and at least one mutation column",
            mutation_csv.display()
        )));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let p = labels.len();
    let mut seen = HashSet::new();
    let mut sample_ids = Vec::new();
    let mut y = Vec::new();
    let mut cells = Vec::new();
    for (row, rec) in mut_reader.records().enumerate() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or("").to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Schema(format!(
                "{}: duplicate sample id {id:?}",
                mutation_csv.display()
            )));
        }
        let mut row_vals = Vec::with_capacity(p);
        for (c, cell) in rec.iter().skip(1).enumerate() {
            row_vals.push(match cell {
                "0" => 0.0,
                "1" => 1.0,
                other => {
                    return Err(Error::Schema(format!(
                        "{}: row {}, column {:?}: {other:?} is not 0 or 1",
                        mutation_csv.display(),
                        row + 1,
                        labels[c]
                    )))
                }
            });
        }
        if let Some(Some(v)) = response.get(&id) {
            sample_ids.push(id);
            y.push(*v);
            cells.extend(row_vals);
        }
    }
    let n = y.len();
    Ok(Dataset {
        drug: drug.to_string(),
        sample_ids,
        response: y,
        covariates: Matrix::from_row_major(n, p, cells)?,
        labels,
    })
}

/// What preprocessing removed.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PreprocessLog {
    pub rare: Vec<String>,
    /// `(removed, kept)` pairs of identical columns.
    pub duplicates: Vec<(String, String)>,
}

/// Drops mutations seen in fewer than 3 samples, then keeps the first of
/// each group of identical columns. Fails with the offending labels if the
/// remaining design is rank deficient.
pub fn preprocess(ds: &Dataset) -> Result<(Dataset, PreprocessLog)> {
    let x = &ds.covariates;
    let mut log = PreprocessLog::default();
    let mut keep: Vec<usize> = Vec::new();
    let mut first_of: HashMap<Vec<u8>, usize> = HashMap::new();
    for j in 0..ds.p() {
        let col: Vec<u8> = x.column(j).iter().map(|&v| (v != 0.0) as u8).collect();
        if col.iter().filter(|&&b| b == 1).count() < MIN_MUTATION_COUNT {
            log.rare.push(ds.labels[j].clone());
            continue;
        }
        match first_of.get(&col) {
            Some(&k) => log.duplicates.push((ds.labels[j].clone(), ds.labels[k].clone())),
            None => {
                first_of.insert(col, j);
                keep.push(j);
            }
        }
    }
    let out = Dataset {
        drug: ds.drug.clone(),
        sample_ids: ds.sample_ids.clone(),
        response: ds.response.clone(),
        covariates: x.select_columns(&keep),
        labels: keep.iter().map(|&j| ds.labels[j].clone()).collect(),
    };
    if out.p() == 0 {
        return Err(Error::EmptyInput);
    }
    if let Err(e) = standardize(&out.covariates) {
        return Err(match e {
            Error::RankDeficient(_) | Error::DegenerateColumn { .. } => {
                Error::RankDeficient(format!("dependent mutations: {}", dependent_labels(&out).join(", ")))
            }
            other => other,
        });
    }
    Ok((out, log))
}

/// Labels of the first linearly dependent group of columns.
fn dependent_labels(ds: &Dataset) -> Vec<String> {
    let x = &ds.covariates;
    let full_rank = |len: usize| standardize(&x.select_columns(&(0..len).collect::<Vec<_>>())).is_ok();
    if x.rows() < x.cols() {
        return vec![format!("{} columns on {} rows", x.cols(), x.rows())];
    }
    // shortest rank-deficient prefix
    let (mut lo, mut hi) = (1, ds.p());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if full_rank(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let j = lo - 1;
    if j == 0 {
        return vec![ds.labels[0].clone()];
    }
    let prefix = x.select_columns(&(0..j).collect::<Vec<_>>());
    let target = x.column(j);
    let coef = SymMatrix::new(prefix.t_matmul(&prefix))
        .and_then(|g| Cholesky::new(&g))
        .map(|c| c.solve(&prefix.t_mul_vec(&target)));
    let mut out = Vec::new();
    if let Ok(b) = coef {
        let scale = b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        out.extend((0..j).filter(|&i| b[i].abs() > 1e-6 * scale).map(|i| ds.labels[i].clone()));
    }
    out.push(ds.labels[j].clone());
    out
}

/// Leading integer of a mutation label.
pub fn parse_position(label: &str) -> Result<u32> {
    let digits: String = label.trim().chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().map_err(|_| Error::Label(label.to_string()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PanelComparison {
    pub selected_positions: BTreeSet<u32>,
    pub in_panel: usize,
    pub novel: usize,
}

pub fn compare_panel(report: &DecisionReport, labels: &[String], panel: &BTreeSet<u32>) -> Result<PanelComparison> {
    if labels.len() != report.m() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} hypotheses",
            labels.len(),
            report.m()
        )));
    }
    let selected_positions = report
        .rejected
        .iter()
        .map(|&j| parse_position(&labels[j]))
        .collect::<Result<BTreeSet<u32>>>()?;
    let in_panel = selected_positions.iter().filter(|p| panel.contains(p)).count();
    Ok(PanelComparison {
        novel: selected_positions.len() - in_panel,
        in_panel,
        selected_positions,
    })
}

/// Positions separated by whitespace or commas; `#` starts a comment.
pub fn read_panel(path: &Path) -> Result<BTreeSet<u32>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut out = BTreeSet::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let p = tok
                .parse()
                .map_err(|_| Error::Schema(format!("{}: {tok:?} is not a position", path.display())))?;
            out.insert(p);
        }
    }
    Ok(out)
}

/// One line of the per-drug summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PanelRow {
    pub method: String,
    pub n_selected: usize,
    pub in_panel: usize,
    pub novel: usize,
}

pub fn write_panel_csv(rows: &[PanelRow], w: impl Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::procedures::bh;
    use std::fs;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn ds(cols: &[&[u8]], labels: &[&str]) -> Dataset {
        let n = cols[0].len();
        let x = Matrix::from_fn(n, cols.len(), |i, j| cols[j][i] as f64);
        Dataset {
            drug: "D".into(),
            sample_ids: (0..n).map(|i| i.to_string()).collect(),
            response: vec![0.0; n],
            covariates: x,
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn load_passthrough_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(dir.path(), "r.csv", "id,APV,ATV\na,1.5,2\nb,NA,3\nc,10,4\n");
        let m = write(dir.path(), "m.csv", "id,10F,90M\na,1,0\nb,0,1\nc,1,1\n");
        let d = load_dataset(&r, &m, "ATV", false).unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.response, vec![2.0, 3.0, 4.0]);
        let d = load_dataset(&r, &m, "APV", true).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.sample_ids, vec!["a", "c"]);
        assert_eq!(d.response[1], 1.0);
        assert_eq!(d.covariates.row(1), &[1.0, 1.0]);
    }

    #[test]
    fn load_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(dir.path(), "r.csv", "id,APV\na,1\nb,2\n");
        let bad = write(dir.path(), "m.csv", "id,10F,90M\na,1,0\nb,2,1\n");
        match load_dataset(&r, &bad, "APV", false) {
            Err(Error::Schema(msg)) => assert!(msg.contains("row 2") && msg.contains("10F"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let good = write(dir.path(), "g.csv", "id,10F\na,1\nb,0\n");
        assert!(matches!(load_dataset(&r, &good, "XYZ", false), Err(Error::Schema(_))));
        assert!(matches!(
            load_dataset(&dir.path().join("missing.csv"), &good, "APV", false),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn preprocess_filters() {
        let a: &[u8] = &[1, 1, 1, 0, 0, 0];
        let b: &[u8] = &[0, 0, 1, 1, 1, 0];
        let rare: &[u8] = &[1, 1, 0, 0, 0, 0];
        let d = ds(&[a, rare, b, a], &["1A", "2B", "3C", "4D"]);
        let (out, log) = preprocess(&d).unwrap();
        assert_eq!(out.labels, vec!["1A", "3C"]);
        assert_eq!(log.rare, vec!["2B"]);
        assert_eq!(log.duplicates, vec![("4D".to_string(), "1A".to_string())]);
        // idempotent
        let (again, log2) = preprocess(&out).unwrap();
        assert_eq!(again, out);
        assert_eq!(log2, PreprocessLog::default());
        let (same, _) = preprocess(&ds(&[a, b], &["1A", "3C"])).unwrap();
        assert_eq!(same.labels, vec!["1A", "3C"]);
    }

    #[test]
    fn preprocess_reports_dependent_columns() {
        let a: &[u8] = &[1, 1, 1, 0, 0, 0, 0];
        let b: &[u8] = &[0, 0, 0, 1, 1, 1, 0];
        let c: &[u8] = &[1, 0, 1, 0, 1, 0, 1];
        let ab: &[u8] = &[1, 1, 1, 1, 1, 1, 0];
        match preprocess(&ds(&[c, a, b, ab], &["5X", "6Y", "7Z", "8W"])) {
            Err(Error::RankDeficient(msg)) => {
                assert!(msg.contains("6Y") && msg.contains("7Z") && msg.contains("8W"), "{msg}");
                assert!(!msg.contains("5X"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    fn report(rejected: &[usize], m: usize) -> DecisionReport {
        let mut p = vec![0.9; m];
        for &j in rejected {
            p[j] = 1e-9;
        }
        bh(&p, 0.1).unwrap()
    }

    #[test]
    fn panel_comparison() {
        let labels: Vec<String> = ["10F", "90M", "90L", "33V"].iter().map(|s| s.to_string()).collect();
        let panel: BTreeSet<u32> = [90, 54].into_iter().collect();
        let none = compare_panel(&report(&[], 4), &labels, &panel).unwrap();
        assert_eq!((none.in_panel, none.novel), (0, 0));
        let dup = compare_panel(&report(&[1, 2], 4), &labels, &panel).unwrap();
        assert_eq!((dup.in_panel, dup.novel), (1, 0));
        let mixed = compare_panel(&report(&[0, 1], 4), &labels, &panel).unwrap();
        assert_eq!((mixed.in_panel, mixed.novel), (1, 1));
        assert_eq!(parse_position("90.M").unwrap(), 90);
        let bad = vec!["M90".to_string()];
        assert!(matches!(compare_panel(&report(&[0], 1), &bad, &panel), Err(Error::Label(_))));
    }

    #[test]
    fn panel_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "panel.txt", "# PI positions\n10 30, 90\n54\n");
        assert_eq!(read_panel(&p).unwrap(), [10, 30, 54, 90].into_iter().collect());
    }
}
