//! Static SVG plots and a text summary of an experiment CSV.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ffrm::FitMethod;
use crate::simlab::ExperimentRecord;

use super::io::fmt_f64;

pub const EXPERIMENT_COLUMNS: [&str; 9] = [
    "method",
    "K",
    "rho",
    "mean_amse",
    "se_amse",
    "mean_amse_p",
    "se_amse_p",
    "mean_fit_seconds",
    "failures",
];

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_experiment_csv(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EXPERIMENT_COLUMNS)?;
    for r in records {
        w.write_record([
            r.method.to_string(),
            r.k.to_string(),
            fmt_f64(r.rho),
            opt(r.mean_amse),
            opt(r.se_amse),
            opt(r.mean_amse_p),
            opt(r.se_amse_p),
            opt(r.mean_fit_seconds),
            r.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_experiment_csv(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != EXPERIMENT_COLUMNS {
        return Err(Error::InvalidInput(format!(
            "{}: expected columns {}, found {}",
            path.display(),
            EXPERIMENT_COLUMNS.join(","),
            header.join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let r: ExperimentRecord = rec.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        out.push(r);
    }
    Ok(out)
}

fn color(m: FitMethod) -> &'static str {
    match m {
        FitMethod::Nipals => "#1f77b4",
        FitMethod::Simpls => "#d62728",
        FitMethod::Ridge => "#2ca02c",
    }
}

struct Series {
    method: FitMethod,
    points: Vec<(usize, f64)>,
}

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 320.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Draws one panel with its top-left corner at `(x0, y0)`. K values are
/// placed at equal spacing; the y axis starts at zero.
fn panel(svg: &mut String, x0: f64, y0: f64, title: &str, ylabel: &str, ks: &[usize], series: &[Series]) {
    let pw = PANEL_W - MARGIN_L - MARGIN_R;
    let ph = PANEL_H - MARGIN_T - MARGIN_B;
    let (ox, oy) = (x0 + MARGIN_L, y0 + MARGIN_T + ph);
    let ymax = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let ymax = if ymax > 0.0 { ymax * 1.05 } else { 1.0 };
    let xpos = |k: usize| -> f64 {
        let i = ks.iter().position(|&v| v == k).unwrap_or(0);
        if ks.len() <= 1 {
            ox + pw / 2.0
        } else {
            ox + pw * i as f64 / (ks.len() - 1) as f64
        }
    };
    let ypos = |v: f64| oy - ph * v / ymax;

    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
        ox + pw / 2.0,
        y0 + MARGIN_T - 15.0,
        esc(title)
    );
    let _ = writeln!(
        svg,
        r#"<g class="axes" stroke="black" fill="none"><line x1="{ox:.2}" y1="{oy:.2}" x2="{:.2}" y2="{oy:.2}"/><line x1="{ox:.2}" y1="{oy:.2}" x2="{ox:.2}" y2="{:.2}"/></g>"#,
        ox + pw,
        oy - ph
    );
    for i in 0..=4 {
        let v = ymax * i as f64 / 4.0;
        let y = ypos(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{ox:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{:.4}</text>"#,
            ox - 4.0,
            ox - 6.0,
            y + 3.0,
            v
        );
    }
    for &k in ks {
        let x = xpos(k);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{oy:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="10">{k}</text>"#,
            oy + 4.0,
            oy + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">K</text>"#,
        ox + pw / 2.0,
        oy + 34.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
        x0 + 16.0,
        oy - ph / 2.0,
        x0 + 16.0,
        oy - ph / 2.0,
        esc(ylabel)
    );
    for s in series {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(k, v)| format!("{:.2},{:.2}", xpos(k), ypos(v)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let c = color(s.method);
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-method="{}" fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#,
            s.method,
            pts.join(" ")
        );
        for p in &pts {
            let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(svg, r#"<circle cx="{x}" cy="{y}" r="3" fill="{c}"/>"#);
        }
    }
}

fn legend(svg: &mut String, x: f64, y: f64, methods: &[FitMethod]) {
    for (i, m) in methods.iter().enumerate() {
        let yy = y + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<g class="legend-entry"><line x1="{x:.2}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="12">{m}</text></g>"#,
            x + 20.0,
            color(*m),
            x + 26.0,
            yy + 4.0
        );
    }
}

fn open(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn methods_of(records: &[&ExperimentRecord]) -> Vec<FitMethod> {
    let mut out: Vec<FitMethod> = Vec::new();
    for m in FitMethod::ALL {
        if records.iter().any(|r| r.method == m) {
            out.push(m);
        }
    }
    out
}

fn ks_of(records: &[&ExperimentRecord]) -> Vec<usize> {
    records.iter().map(|r| r.k).collect::<BTreeSet<_>>().into_iter().collect()
}

fn series(records: &[&ExperimentRecord], methods: &[FitMethod], f: impl Fn(&ExperimentRecord) -> Option<f64>) -> Vec<Series> {
    methods
        .iter()
        .map(|&method| Series {
            method,
            points: records
                .iter()
                .filter(|r| r.method == method)
                .filter_map(|r| f(r).map(|v| (r.k, v)))
                .collect(),
        })
        .collect()
}

/// AMSE and AMSE_p against K for one ρ.
pub fn rho_svg(rho: f64, records: &[&ExperimentRecord]) -> String {
    let methods = methods_of(records);
    let ks = ks_of(records);
    let legend_w = 110.0;
    let mut svg = open(2.0 * PANEL_W + legend_w, PANEL_H);
    panel(&mut svg, 0.0, 0.0, &format!("AMSE, rho = {rho}"), "AMSE", &ks, &series(records, &methods, |r| r.mean_amse));
    panel(
        &mut svg,
        PANEL_W,
        0.0,
        &format!("AMSE_p, rho = {rho}"),
        "AMSE_p",
        &ks,
        &series(records, &methods, |r| r.mean_amse_p),
    );
    legend(&mut svg, 2.0 * PANEL_W + 5.0, MARGIN_T + 10.0, &methods);
    svg.push_str("</svg>\n");
    svg
}

/// Mean fit time against K, averaged over ρ.
pub fn timing_svg(records: &[&ExperimentRecord]) -> String {
    let methods = methods_of(records);
    let ks = ks_of(records);
    let series: Vec<Series> = methods
        .iter()
        .map(|&method| Series {
            method,
            points: ks
                .iter()
                .filter_map(|&k| {
                    let v: Vec<f64> = records
                        .iter()
                        .filter(|r| r.method == method && r.k == k)
                        .filter_map(|r| r.mean_fit_seconds)
                        .collect();
                    (!v.is_empty()).then(|| (k, v.iter().sum::<f64>() / v.len() as f64))
                })
                .collect(),
        })
        .collect();
    let legend_w = 110.0;
    let mut svg = open(PANEL_W + legend_w, PANEL_H);
    panel(&mut svg, 0.0, 0.0, "Mean fit time", "seconds", &ks, &series);
    legend(&mut svg, PANEL_W + 5.0, MARGIN_T + 10.0, &methods);
    svg.push_str("</svg>\n");
    svg
}

fn rho_tag(rho: f64) -> String {
    format!("{rho}")
}

pub fn summary_text(records: &[ExperimentRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<8} {:>4} {:>8} {:>14} {:>14} {:>14} {:>8}", "method", "K", "rho", "mean_amse", "mean_amse_p", "fit_seconds", "failures");
    let show = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "NA".into());
    for r in records {
        let _ = writeln!(
            s,
            "{:<8} {:>4} {:>8} {:>14} {:>14} {:>14} {:>8}",
            r.method.to_string(),
            r.k,
            rho_tag(r.rho),
            show(r.mean_amse),
            show(r.mean_amse_p),
            show(r.mean_fit_seconds),
            r.failures
        );
    }
    let mut cells: Vec<(f64, usize)> = Vec::new();
    for r in records {
        if !cells.iter().any(|c| c.0 == r.rho && c.1 == r.k) {
            cells.push((r.rho, r.k));
        }
    }
    if !cells.is_empty() {
        let _ = writeln!(s, "\nlowest mean AMSE_p per cell:");
    }
    for (rho, k) in cells {
        let best = records
            .iter()
            .filter(|r| r.rho == rho && r.k == k)
            .filter_map(|r| r.mean_amse_p.map(|v| (r.method, v)))
            .fold(None::<(FitMethod, f64)>, |b, c| match b {
                Some(b) if b.1 <= c.1 => Some(b),
                _ => Some(c),
            });
        let name = best.map(|b| b.0.to_string()).unwrap_or_else(|| "NA".into());
        let _ = writeln!(s, "  rho = {:<6} K = {:<4} {name}", rho_tag(rho), k);
    }
    s
}

/// Writes `amse_rho_<rho>.svg` per ρ, `timing.svg` and `summary.txt`.
/// Returns the files written.
pub fn write_report(records: &[ExperimentRecord], out: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut rhos: Vec<f64> = Vec::new();
    for r in records {
        if !rhos.contains(&r.rho) {
            rhos.push(r.rho);
        }
    }
    rhos.sort_by(f64::total_cmp);
    let mut written = Vec::new();
    for rho in rhos {
        let sel: Vec<&ExperimentRecord> = records.iter().filter(|r| r.rho == rho).collect();
        let p = out.join(format!("amse_rho_{}.svg", rho_tag(rho)));
        std::fs::write(&p, rho_svg(rho, &sel))?;
        written.push(p);
    }
    let all: Vec<&ExperimentRecord> = records.iter().collect();
    let p = out.join("timing.svg");
    std::fs::write(&p, timing_svg(&all))?;
    written.push(p);
    let p = out.join("summary.txt");
    std::fs::write(&p, summary_text(records))?;
    written.push(p);
    Ok(written)
}
