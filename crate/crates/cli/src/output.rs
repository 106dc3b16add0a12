//! CSV, SVG and atomic file output.

use std::io::Write;
use std::path::Path;

use pg_limits::sim::{EstimatorMethod, Figure1Row};

use crate::error::{CliError, CliResult};

/// 17 significant digits; `NaN`, `inf` and `-inf` for non-finite values.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// Comma-separated table with a header row and LF line endings.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Io(format!("csv: {e}"));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::Io(format!("csv: {e}")))
}

pub const FIGURE1_HEADER: [&str; 6] = ["b", "method", "error_std", "n_failures", "n_samples", "seed"];

pub fn figure1_csv(rows: &[Figure1Row]) -> CliResult<Vec<u8>> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_float(r.b),
                r.method.to_string(),
                fmt_float(r.error_std),
                r.n_failures.to_string(),
                r.n_samples.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect();
    csv_table(&FIGURE1_HEADER, &body)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path.display(), e))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.flush())
        .map_err(|e| CliError::io(path.display(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path.display(), e.error))?;
    Ok(())
}

/// Single-panel line plot of `error_std` against `b` with a log-scaled vertical
/// axis, one polyline per estimator.
pub fn figure1_svg(rows: &[Figure1Row]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 150.0;
    const TOP: f64 = 20.0;
    const BOTTOM: f64 = 50.0;
    let usable: Vec<&Figure1Row> = rows
        .iter()
        .filter(|r| r.error_std.is_finite() && r.error_std > 0.0)
        .collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    );
    let (x0, x1) = (LEFT, W - RIGHT);
    let (y0, y1) = (H - BOTTOM, TOP);
    svg += &format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">b</text>\n\
         <text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">gradient error std (log scale)</text>\n",
        (x0 + x1) / 2.0,
        H - 12.0,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    if usable.is_empty() {
        svg += "</svg>\n";
        return svg;
    }
    let bmin = usable.iter().map(|r| r.b).fold(f64::INFINITY, f64::min);
    let bmax = usable.iter().map(|r| r.b).fold(f64::NEG_INFINITY, f64::max);
    let lmin = usable.iter().map(|r| r.error_std.log10()).fold(f64::INFINITY, f64::min).floor();
    let mut lmax = usable.iter().map(|r| r.error_std.log10()).fold(f64::NEG_INFINITY, f64::max).ceil();
    if lmax <= lmin {
        lmax = lmin + 1.0;
    }
    let span_b = if bmax > bmin { bmax - bmin } else { 1.0 };
    let px = |b: f64| x0 + (b - bmin) / span_b * (x1 - x0);
    let py = |v: f64| y0 - (v.log10() - lmin) / (lmax - lmin) * (y0 - y1);

    for decade in lmin as i32..=lmax as i32 {
        let y = py(10f64.powi(decade));
        svg += &format!(
            "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{x0}\" y2=\"{y:.2}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">1e{decade}</text>\n",
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0
        );
    }
    let mut ticks: Vec<f64> = usable.iter().map(|r| r.b).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for b in ticks {
        let x = px(b);
        svg += &format!(
            "<line x1=\"{x:.2}\" y1=\"{y0}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{x:.2}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{b}</text>\n",
            y0 + 5.0,
            y0 + 18.0
        );
    }
    let styles = [
        (EstimatorMethod::PluginLs, "#1f77b4", "plug-in least squares"),
        (EstimatorMethod::ZerothOrder, "#d62728", "zeroth order"),
    ];
    for (i, (method, color, label)) in styles.iter().enumerate() {
        let mut pts: Vec<(f64, f64)> = usable
            .iter()
            .filter(|r| r.method == *method)
            .map(|r| (px(r.b), py(r.error_std)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        svg += &format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        );
        let ly = TOP + 20.0 + 20.0 * i as f64;
        svg += &format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"12\">{label}</text>\n",
            x1 + 10.0,
            x1 + 30.0,
            x1 + 35.0,
            ly + 4.0
        );
    }
    svg += "</svg>\n";
    svg
}
