//! Minimal SVG charts: FDR and power against γ, and per-method bars of
//! panel and novel selections.

use std::fmt::Write as _;

use crate::dataio::PanelRow;
use crate::sim::SimResult;

const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];
const W: f64 = 360.0;
const H: f64 = 260.0;
const PAD: f64 = 42.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Panel<'a> {
    title: &'a str,
    x0: f64,
    y_max: f64,
    x_min: f64,
    x_max: f64,
}

impl Panel<'_> {
    fn px(&self, x: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-12);
        self.x0 + PAD + (x - self.x_min) / span * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - y / self.y_max * (H - 2.0 * PAD)
    }

    fn axes(&self, out: &mut String, xs: &[f64]) {
        let (l, r) = (self.px(self.x_min), self.px(self.x_max));
        let (b, t) = (self.py(0.0), self.py(self.y_max));
        let _ = writeln!(out, r##"<rect x="{:.1}" y="{t:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##, l, r - l, b - t);
        let _ = writeln!(out, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, (l + r) / 2.0, esc(self.title));
        for &x in xs {
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{x}</text>"#, self.px(x), b + 16.0);
        }
        for i in 0..=4 {
            let y = self.y_max * i as f64 / 4.0;
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="11">{y:.2}</text>"#, l - 4.0, self.py(y) + 4.0);
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">γ</text>"#, (l + r) / 2.0, H - 6.0);
    }
}

/// FDR panel (with a dashed line at α) beside a power panel, one line per
/// method.
pub fn sim_chart(result: &SimResult) -> String {
    let s = &result.setting;
    let mut gammas = s.gammas.clone();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    let (x_min, x_max) = (gammas[0], *gammas.last().unwrap());
    let fdr_max = result
        .rows
        .iter()
        .map(|r| r.fdr_hat)
        .filter(|v| v.is_finite())
        .fold(s.alpha * 1.5, f64::max)
        .min(1.0);
    let panels = [
        Panel {
            title: "FDR",
            x0: 0.0,
            y_max: fdr_max,
            x_min,
            x_max,
        },
        Panel {
            title: "Power",
            x0: W,
            y_max: 1.0,
            x_min,
            x_max,
        },
    ];
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif">"#,
        2.0 * W + 90.0,
        H
    );
    let mut methods: Vec<_> = result.rows.iter().map(|r| r.method).collect();
    methods.dedup();
    for (pi, panel) in panels.iter().enumerate() {
        panel.axes(&mut out, &gammas);
        if pi == 0 {
            let y = panel.py(s.alpha);
            let _ = writeln!(
                out,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#888" stroke-dasharray="4 3"/>"##,
                panel.px(x_min),
                panel.px(x_max)
            );
        }
        for (mi, method) in methods.iter().enumerate() {
            let mut pts: Vec<(f64, f64)> = result
                .rows
                .iter()
                .filter(|r| r.method == *method)
                .map(|r| (r.gamma, if pi == 0 { r.fdr_hat } else { r.power_hat }))
                .filter(|(_, v)| v.is_finite())
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let colour = PALETTE[mi % PALETTE.len()];
            let path: Vec<String> = pts
                .iter()
                .map(|&(x, y)| format!("{:.1},{:.1}", panel.px(x), panel.py(y.min(panel.y_max))))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
                path.join(" ")
            );
            for p in &path {
                let (x, y) = p.split_once(',').unwrap();
                let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="3" fill="{colour}"/>"#);
            }
        }
    }
    for (mi, method) in methods.iter().enumerate() {
        let y = 50.0 + 18.0 * mi as f64;
        let colour = PALETTE[mi % PALETTE.len()];
        let _ = writeln!(out, r#"<rect x="{:.1}" y="{:.1}" width="12" height="12" fill="{colour}"/>"#, 2.0 * W + 10.0, y - 10.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}" font-size="12">{method}</text>"#, 2.0 * W + 28.0);
    }
    out.push_str("</svg>\n");
    out
}

/// Stacked bars per method: panel positions at the bottom, novel ones on top.
pub fn panel_chart(drug: &str, rows: &[PanelRow]) -> String {
    let width = PAD * 2.0 + 50.0 * rows.len().max(1) as f64;
    let top = rows.iter().map(|r| r.in_panel + r.novel).max().unwrap_or(0).max(1) as f64;
    let py = |v: f64| H - PAD - v / top * (H - 2.0 * PAD);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{H}" font-family="sans-serif">"#,
        width + 80.0
    );
    let _ = writeln!(out, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, esc(drug));
    for (i, r) in rows.iter().enumerate() {
        let x = PAD + 50.0 * i as f64 + 10.0;
        let base = py(0.0);
        let mid = py(r.in_panel as f64);
        let high = py((r.in_panel + r.novel) as f64);
        let _ = writeln!(out, r##"<rect x="{x:.1}" y="{mid:.1}" width="30" height="{:.1}" fill="#1f77b4"/>"##, base - mid);
        let _ = writeln!(out, r##"<rect x="{x:.1}" y="{high:.1}" width="30" height="{:.1}" fill="#ff7f0e"/>"##, mid - high);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#, x + 15.0, base + 16.0, esc(&r.method));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#, x + 15.0, high - 4.0, r.n_selected);
    }
    let _ = writeln!(out, r##"<line x1="{PAD}" y1="{:.1}" x2="{width:.1}" y2="{:.1}" stroke="#444"/>"##, py(0.0), py(0.0));
    for (j, (name, colour)) in [("panel", "#1f77b4"), ("novel", "#ff7f0e")].iter().enumerate() {
        let y = 50.0 + 18.0 * j as f64;
        let _ = writeln!(out, r#"<rect x="{:.1}" y="{:.1}" width="12" height="12" fill="{colour}"/>"#, width + 10.0, y - 10.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}" font-size="12">{name}</text>"#, width + 28.0);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Method, SimRow, SimSetting};

    #[test]
    fn charts_are_well_formed() {
        let setting = SimSetting {
            n: 30,
            m: 5,
            k: 1,
            rho: 0.5,
            gammas: vec![2.0, 4.0],
            sigma: 1.0,
            alpha: 0.1,
            lambda: 0.5,
            methods: vec![Method::M1],
            reps: 1,
            master_seed: 0,
            random_signs: false,
            calibrator: Default::default(),
        };
        let row = |gamma, power_hat| SimRow {
            method: Method::M1,
            gamma,
            fdr_hat: 0.05,
            power_hat,
            se_fdr: 0.0,
            se_power: 0.0,
            reps_completed: 1,
            reps_failed: 0,
            first_failure: None,
        };
        let res = SimResult {
            setting,
            rows: vec![row(2.0, 0.2), row(4.0, 0.6)],
        };
        let svg = sim_chart(&res);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);

        let bars = panel_chart(
            "A<B",
            &[PanelRow {
                method: "M3".into(),
                n_selected: 4,
                in_panel: 3,
                novel: 1,
            }],
        );
        assert!(bars.contains("A&lt;B"));
        assert_eq!(bars.matches("<rect").count(), 4);
    }
}
