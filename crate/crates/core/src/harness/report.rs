use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use plotters::prelude::*;

use super::{ExperimentConfig, ReportRow};
use crate::error::{usage, Error, Result};

/// Column order of every CSV report.
pub const CSV_COLUMNS: [&str; 11] =
    ["experiment_id", "seed", "n", "m", "k", "epsilon", "ell_or_l", "metric", "measured", "bound", "pass"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    /// SVG chart of the measured values against the margin or the round budget.
    Plot,
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}

pub fn write_csv<W: std::io::Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Format(format!("unexpected report header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

/// Writes `rows` to `path` as CSV or as an SVG plot.
pub fn emit_report(rows: &[ReportRow], path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    if rows.is_empty() {
        return usage("cannot emit an empty report");
    }
    let path = path.as_ref();
    match format {
        ReportFormat::Csv => write_csv(rows, std::io::BufWriter::new(std::fs::File::create(path)?)),
        ReportFormat::Plot => plot(rows, path),
    }
}

pub(super) fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Run metadata, kept out of the CSV so the report itself stays reproducible.
pub(super) fn write_sidecar(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = serde_json::json!({
        "created_unix": created,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
    });
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(sidecar_path(path), text)?;
    Ok(())
}

fn plot_error<E: std::fmt::Debug>(e: E) -> Error {
    Error::Format(format!("plot: {e:?}"))
}

fn x_of(row: &ReportRow, index: usize) -> (f64, &'static str) {
    if row.metric == "recovery_rate" {
        if let Some(margin) = row.epsilon {
            return (margin, "margin c - e");
        }
    }
    match row.ell_or_l {
        Some(ell) => (ell as f64, "rounds / list exponent"),
        None => (index as f64, "instance"),
    }
}

fn plot(rows: &[ReportRow], path: &Path) -> Result<()> {
    let metric = rows[0].metric.clone();
    let mut points: Vec<(f64, f64, f64)> = Vec::new();
    let mut x_desc = "";
    for (i, row) in rows.iter().filter(|r| r.metric == metric).enumerate() {
        let (x, desc) = x_of(row, i);
        x_desc = desc;
        points.push((x, row.measured, row.bound));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut x0, mut x1) = (points[0].0, points[points.len() - 1].0);
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let ys = points.iter().flat_map(|p| [p.1, p.2]);
    let y0 = ys.clone().fold(f64::INFINITY, f64::min);
    let y1 = ys.fold(f64::NEG_INFINITY, f64::max);
    let pad = ((y1 - y0) * 0.1).max(1e-3);

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_error)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{} ({metric})", rows[0].experiment_id), ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))
        .map_err(plot_error)?;
    chart.configure_mesh().x_desc(x_desc).y_desc(metric.as_str()).draw().map_err(plot_error)?;
    chart
        .draw_series(LineSeries::new(points.iter().map(|p| (p.0, p.1)), &BLUE))
        .map_err(plot_error)?
        .label("measured")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));
    chart
        .draw_series(points.iter().map(|p| Circle::new((p.0, p.1), 3, BLUE.filled())))
        .map_err(plot_error)?;
    chart
        .draw_series(LineSeries::new(points.iter().map(|p| (p.0, p.2)), &RED))
        .map_err(plot_error)?
        .label("bound")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
    chart.configure_series_labels().border_style(BLACK).draw().map_err(plot_error)?;
    root.present().map_err(plot_error)?;
    Ok(())
}
