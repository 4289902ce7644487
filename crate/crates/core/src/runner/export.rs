//! CSV/JSON export of tracking logs, sweep tables and CDFs, plus optional SVG plots.
//!
//! JSON files are wrapped in `{"schema_version": 1, "kind": ..., "data": ...}`.
//! CSV files use the fixed column orders in [`TRACKING_CSV_HEADER`],
//! [`SWEEP_CSV_HEADER`] and [`CDF_CSV_HEADER`]; missing values are empty cells.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{BenchRow, SchemeComparison, SweepTable, TrackingLog};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const TRACKING_CSV_HEADER: &str =
    "n,truth_px,truth_py,truth_vx,truth_vy,pred_px,pred_py,pred_vx,pred_vy,\
est_px,est_py,est_vx,est_vy,sum_rate,crlb_trace,position_error,design_status,flagged";

pub const SWEEP_CSV_HEADER: &str =
    "axis,value,scheme,seed,peak_rate,average_rate,min_crlb,average_crlb,position_rmse,max_position_error,flagged,infeasible,error";

pub const CDF_CSV_HEADER: &str = "variant,scheme,metric,value,cdf";

pub const BENCH_CSV_HEADER: &str =
    "index,eta,sdr_rate,penalty_rate,nonopt_rate,gap,sdr_crlb,penalty_crlb,\
rank_ratio,kappa,penalty_iterations,sdr_seconds,penalty_seconds,infeasible,error";

/// Output file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl ExportFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            _ => None,
        }
    }

    fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    schema_version: u32,
    kind: String,
    data: T,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, kind: &str, data: &T) -> Result<()> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        kind: kind.to_string(),
        data,
    };
    write_file(path, &serde_json::to_string_pretty(&env)?)
}

/// Read a JSON file written by this module, checking its kind and schema version.
pub fn read_json_envelope<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let env: Envelope<T> = serde_json::from_str(&text)?;
    if env.schema_version != SCHEMA_VERSION || env.kind != kind {
        return Err(Error::ConfigParse(format!(
            "{}: expected {kind} v{SCHEMA_VERSION}, found {} v{}",
            path.display(),
            env.kind,
            env.schema_version
        )));
    }
    Ok(env.data)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_text(header: &str, rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header.split(','))?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io {
        path: "<memory>".into(),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Write a tracking log as `tracking_<scheme>_seed<seed>.<ext>` in `dir` (plus a
/// rate/error plot when `plot`). Returns the written paths.
pub fn export_log(
    log: &TrackingLog,
    dir: &Path,
    format: ExportFormat,
    plot: bool,
) -> Result<Vec<PathBuf>> {
    let stem = format!("tracking_{}_seed{}", log.scheme.name(), log.seed);
    let path = dir.join(format!("{stem}.{}", format.extension()));
    match format {
        ExportFormat::Json => write_json(&path, "tracking_log", log)?,
        ExportFormat::Csv => {
            let rows = log
                .records
                .iter()
                .map(|r| {
                    let mut row = vec![r.n.to_string()];
                    for s in [&r.truth, &r.predicted, &r.estimate] {
                        row.extend(s.to_vector().iter().map(|x| x.to_string()));
                    }
                    row.push(r.sum_rate.to_string());
                    row.push(opt(r.crlb_trace));
                    row.push(r.position_error.to_string());
                    row.push(
                        r.design
                            .as_ref()
                            .map(|d| serde_json::to_value(d.status).expect("status serializes"))
                            .and_then(|v| v.as_str().map(str::to_string))
                            .unwrap_or_default(),
                    );
                    row.push(r.flags.any().to_string());
                    row
                })
                .collect();
            write_file(&path, &csv_text(TRACKING_CSV_HEADER, rows)?)?;
        }
    }
    let mut out = vec![path];
    if plot {
        let svg_path = dir.join(format!("{stem}.svg"));
        let rate: Vec<(f64, f64)> = log
            .records
            .iter()
            .map(|r| (r.n as f64, r.sum_rate))
            .collect();
        let err: Vec<(f64, f64)> = log
            .records
            .iter()
            .map(|r| (r.n as f64, r.position_error))
            .collect();
        let svg = [
            line_plot(
                "Sum rate",
                "TTS",
                "bits/s/Hz",
                &[(log.scheme.name().to_string(), rate)],
            ),
            line_plot(
                "Position error",
                "TTS",
                "m",
                &[(log.scheme.name().to_string(), err)],
            ),
        ];
        write_file(&svg_path, &stack_svgs(&svg))?;
        out.push(svg_path);
    }
    Ok(out)
}

/// Write a sweep table as `sweep_<axis>.<ext>` (plus a plot of the seed-averaged
/// average rate and average `tr(C)` per scheme when `plot`).
pub fn export_sweep(
    table: &SweepTable,
    dir: &Path,
    format: ExportFormat,
    plot: bool,
) -> Result<Vec<PathBuf>> {
    let stem = format!("sweep_{}", table.axis.name());
    let path = dir.join(format!("{stem}.{}", format.extension()));
    match format {
        ExportFormat::Json => write_json(&path, "sweep_table", table)?,
        ExportFormat::Csv => {
            let rows = table
                .rows
                .iter()
                .map(|r| {
                    vec![
                        table.axis.name().to_string(),
                        r.value.to_string(),
                        r.scheme.name().to_string(),
                        r.seed.to_string(),
                        opt(r.peak_rate),
                        opt(r.average_rate),
                        opt(r.min_crlb),
                        opt(r.average_crlb),
                        opt(r.position_rmse),
                        opt(r.max_position_error),
                        r.flagged.to_string(),
                        r.infeasible.to_string(),
                        r.error.clone().unwrap_or_default(),
                    ]
                })
                .collect();
            write_file(&path, &csv_text(SWEEP_CSV_HEADER, rows)?)?;
        }
    }
    let mut out = vec![path];
    if plot {
        let series =
            |metric: fn(&super::SweepRow) -> Option<f64>| -> Vec<(String, Vec<(f64, f64)>)> {
                table
                    .schemes()
                    .into_iter()
                    .map(|s| {
                        let pts = table
                            .values()
                            .into_iter()
                            .filter_map(|v| table.mean(v, s, metric).map(|m| (v, m)))
                            .collect();
                        (s.name().to_string(), pts)
                    })
                    .collect()
            };
        let svg = [
            line_plot(
                "Average rate",
                table.axis.name(),
                "bits/s/Hz",
                &series(|r| r.average_rate),
            ),
            line_plot(
                "Average tr(C)",
                table.axis.name(),
                "m^2",
                &series(|r| r.average_crlb),
            ),
        ];
        let svg_path = dir.join(format!("{stem}.svg"));
        write_file(&svg_path, &stack_svgs(&svg))?;
        out.push(svg_path);
    }
    Ok(out)
}

/// Write CDF tables as `cdf.<ext>` (plus one CDF plot per metric and layout when `plot`).
pub fn export_cdfs(
    cmp: &SchemeComparison,
    dir: &Path,
    format: ExportFormat,
    plot: bool,
) -> Result<Vec<PathBuf>> {
    let path = dir.join(format!("cdf.{}", format.extension()));
    match format {
        ExportFormat::Json => write_json(&path, "scheme_comparison", cmp)?,
        ExportFormat::Csv => {
            let mut rows = Vec::new();
            for t in &cmp.tables {
                for (x, f) in t.cdf.points() {
                    rows.push(vec![
                        t.variant.name().to_string(),
                        t.scheme.name().to_string(),
                        t.metric.name().to_string(),
                        x.to_string(),
                        f.to_string(),
                    ]);
                }
            }
            write_file(&path, &csv_text(CDF_CSV_HEADER, rows)?)?;
        }
    }
    let mut out = vec![path];
    if plot {
        let mut svgs = Vec::new();
        let mut keys: Vec<(super::Variant, super::Metric)> = Vec::new();
        for t in &cmp.tables {
            if !keys.contains(&(t.variant, t.metric)) {
                keys.push((t.variant, t.metric));
            }
        }
        for (variant, metric) in keys {
            let series: Vec<(String, Vec<(f64, f64)>)> = cmp
                .tables
                .iter()
                .filter(|t| t.variant == variant && t.metric == metric)
                .map(|t| (t.scheme.name().to_string(), t.cdf.points()))
                .collect();
            let title = format!("CDF of {} ({})", metric.name(), variant.name());
            svgs.push(line_plot(&title, metric.name(), "CDF", &series));
        }
        let svg_path = dir.join("cdf.svg");
        write_file(&svg_path, &stack_svgs(&svgs))?;
        out.push(svg_path);
    }
    Ok(out)
}

/// Write solver benchmark rows as `bench.<ext>`.
pub fn export_bench(rows: &[BenchRow], dir: &Path, format: ExportFormat) -> Result<PathBuf> {
    let path = dir.join(format!("bench.{}", format.extension()));
    match format {
        ExportFormat::Json => write_json(&path, "bench", &rows)?,
        ExportFormat::Csv => {
            let rows = rows
                .iter()
                .map(|r| {
                    vec![
                        r.index.to_string(),
                        r.eta.to_string(),
                        opt(r.sdr_rate),
                        opt(r.penalty_rate),
                        r.nonopt_rate.to_string(),
                        opt(r.gap),
                        opt(r.sdr_crlb),
                        opt(r.penalty_crlb),
                        opt(r.rank_ratio),
                        opt(r.kappa),
                        r.penalty_iterations
                            .map(|i| i.to_string())
                            .unwrap_or_default(),
                        r.sdr_seconds.to_string(),
                        r.penalty_seconds.to_string(),
                        r.infeasible.to_string(),
                        r.error.clone().unwrap_or_default(),
                    ]
                })
                .collect();
            write_file(&path, &csv_text(BENCH_CSV_HEADER, rows)?)?;
        }
    }
    Ok(path)
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 360.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// One line chart as an SVG `<g>` fragment of size `PLOT_W x PLOT_H`.
fn line_plot(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let pts = series
        .iter()
        .flat_map(|(_, p)| p.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 <= 0.0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (PLOT_W - 2.0 * MARGIN);
    let sy = |y: f64| PLOT_H - MARGIN - (y - y0) / (y1 - y0) * (PLOT_H - 2.0 * MARGIN);
    let mut g = String::new();
    let _ = write!(
        g,
        r#"<rect x="0" y="0" width="{PLOT_W}" height="{PLOT_H}" fill="white"/><text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        PLOT_W / 2.0,
        escape(title)
    );
    let _ = write!(
        g,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        PLOT_W - 2.0 * MARGIN,
        PLOT_H - 2.0 * MARGIN
    );
    let _ = write!(
        g,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text><text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
        PLOT_W / 2.0,
        PLOT_H - 12.0,
        escape(xlabel),
        PLOT_H / 2.0,
        PLOT_H / 2.0,
        escape(ylabel)
    );
    for (v, x, anchor) in [(x0, MARGIN, "start"), (x1, PLOT_W - MARGIN, "end")] {
        let _ = write!(
            g,
            r#"<text x="{x}" y="{}" text-anchor="{anchor}" font-size="10">{v:.4}</text>"#,
            PLOT_H - MARGIN + 14.0
        );
    }
    for (v, y) in [(y0, PLOT_H - MARGIN), (y1, MARGIN)] {
        let _ = write!(
            g,
            r#"<text x="{}" y="{y}" text-anchor="end" font-size="10">{v:.4}</text>"#,
            MARGIN - 4.0
        );
    }
    for (i, (name, p)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = p
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = write!(
            g,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/><text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            path.join(" "),
            PLOT_W - MARGIN + 4.0,
            MARGIN + 14.0 * (i as f64 + 1.0),
            escape(name)
        );
    }
    g
}

/// Stack chart fragments vertically into one SVG document.
fn stack_svgs(parts: &[String]) -> String {
    let h = PLOT_H * parts.len() as f64;
    let mut s = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{h}" viewBox="0 0 {} {h}">"#,
        PLOT_W + 80.0,
        PLOT_W + 80.0
    );
    for (i, p) in parts.iter().enumerate() {
        let _ = write!(
            s,
            r#"<g transform="translate(0 {})">{p}</g>"#,
            PLOT_H * i as f64
        );
    }
    s.push_str("</svg>\n");
    s
}
