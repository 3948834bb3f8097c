//! Run reports as JSON and CSV, sweep tables, and the density plot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use gola_core::data::Dataset;
use gola_core::model::{ModelConfig, ModelKind};
use gola_core::train::{self, FitOutcome, RunReport, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed report: {0}")]
    Malformed(String),
}

type Result<T> = std::result::Result<T, ReportError>;

/// Nine significant digits, scientific notation.
pub fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

/// [`train::fit_with_progress`] with `wall_clock_secs` filled in.
pub fn timed_fit(
    dataset: &Dataset,
    kind: ModelKind,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    progress: impl FnMut(usize, f64),
) -> gola_core::Result<FitOutcome> {
    let start = Instant::now();
    let mut out = train::fit_with_progress(dataset, kind, model_cfg, cfg, progress)?;
    out.report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(out)
}

pub fn report_to_json(report: &RunReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn report_from_json(text: &str) -> Result<RunReport> {
    Ok(serde_json::from_str(text)?)
}

/// One CSV row of a run report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub kind: ModelKind,
    pub pde: String,
    pub seed: u64,
    /// `train_loss` (index = epoch) or `test_rel_l2` (index = density).
    pub record: String,
    pub index: usize,
    pub value: String,
}

/// Per-epoch losses followed by per-density test errors.
pub fn report_to_csv(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let row = |record: &str, index: usize, value: f64| ReportRow {
        kind: report.model_kind,
        pde: report.pde_tag.clone(),
        seed: report.seed,
        record: record.to_string(),
        index,
        value: fmt9(value),
    };
    for (e, &l) in report.epoch_losses.iter().enumerate() {
        w.serialize(row("train_loss", e, l))?;
    }
    for r in &report.eval {
        w.serialize(row("test_rel_l2", r.density, r.test_rel_l2))?;
    }
    into_string(w)
}

/// Loss curve and test errors read back from [`report_to_csv`] output.
pub fn report_from_csv(text: &str) -> Result<(Vec<f64>, Vec<(usize, f64)>)> {
    let mut losses = Vec::new();
    let mut eval = Vec::new();
    for row in csv::Reader::from_reader(text.as_bytes()).deserialize::<ReportRow>() {
        let row = row?;
        let v: f64 = row
            .value
            .parse()
            .map_err(|_| ReportError::Malformed(format!("value `{}`", row.value)))?;
        match row.record.as_str() {
            "train_loss" => losses.push(v),
            "test_rel_l2" => eval.push((row.index, v)),
            other => return Err(ReportError::Malformed(format!("record `{other}`"))),
        }
    }
    Ok((losses, eval))
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| ReportError::Malformed(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ReportError::Malformed(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: ModelKind,
    pub density: usize,
    pub train_size: usize,
    pub test_rel_l2: f64,
    pub seed: u64,
}

/// One row per report and evaluated density.
pub fn sweep_rows(reports: &[RunReport]) -> Vec<SweepRow> {
    reports
        .iter()
        .flat_map(|r| {
            r.eval.iter().map(move |d| SweepRow {
                kind: r.model_kind,
                density: d.density,
                train_size: r.train_size,
                test_rel_l2: d.test_rel_l2,
                seed: r.seed,
            })
        })
        .collect()
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "density", "train_size", "test_rel_l2", "seed"])?;
    for r in rows {
        w.write_record([
            r.kind.to_string(),
            r.density.to_string(),
            r.train_size.to_string(),
            fmt9(r.test_rel_l2),
            r.seed.to_string(),
        ])?;
    }
    into_string(w)
}

pub fn sweep_from_csv(text: &str) -> Result<Vec<SweepRow>> {
    let rows: std::result::Result<Vec<SweepRow>, _> =
        csv::Reader::from_reader(text.as_bytes()).deserialize().collect();
    Ok(rows?)
}

/// Mean error per model and density, densities ascending.
pub fn mean_curves(rows: &[SweepRow]) -> BTreeMap<ModelKind, Vec<(usize, f64)>> {
    let mut acc: BTreeMap<ModelKind, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(r.kind).or_default().entry(r.density).or_insert((0.0, 0));
        e.0 += r.test_rel_l2;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, m)| (k, m.into_iter().map(|(d, (s, n))| (d, s / n as f64)).collect()))
        .collect()
}

const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

/// Static line plot of mean test error against density, one polyline per
/// model, both axes logarithmic.
pub fn sweep_svg(rows: &[SweepRow]) -> String {
    let curves = mean_curves(rows);
    let (w, h, m) = (640.0, 420.0, 60.0);
    let pts: Vec<(f64, f64)> = curves
        .values()
        .flatten()
        .map(|&(d, e)| ((d as f64).log10(), e.max(1e-12).log10()))
        .collect();
    let range = |f: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-9 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(|p| p.0);
    let (y0, y1) = range(|p| p.1);
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">sample density (log)</text>"#,
        w / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 18 {})">test relative L2 (log)</text>"#,
        h / 2.0,
        h / 2.0
    );
    let mut ticks: Vec<usize> = curves.values().flatten().map(|p| p.0).collect();
    ticks.sort_unstable();
    ticks.dedup();
    for d in ticks {
        let x = sx((d as f64).log10());
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle" font-size="11">{d}</text>"#,
            h - m + 16.0
        );
    }
    for (k, y) in [(y0, sy(y0)), (y1, sy(y1))] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y:.2}" text-anchor="end" font-size="11">{:.3}</text>"#,
            m - 4.0,
            10f64.powf(k)
        );
    }
    for (i, (kind, curve)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = curve
            .iter()
            .map(|&(d, e)| format!("{:.2},{:.2}", sx((d as f64).log10()), sy(e.max(1e-12).log10())))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"><title>{kind}</title></polyline>"#,
            points.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{kind}</text>"#,
            w - m + 6.0,
            m + 16.0 * i as f64
        );
    }
    s.push_str("</svg>\n");
    s
}
