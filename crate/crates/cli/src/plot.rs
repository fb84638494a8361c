//! Minimal self-contained SVG emission for sweep comparisons and spectrum
//! histograms: empirical means as dots with ±1 std whiskers, asymptotic
//! predictions as lines. Output is a pure function of the input rows.

use std::fmt::Write as _;

use tensor_deflation::SemicircleLaw;
use tensor_deflation::SpectrumReport;

use crate::sweep::{SweepRow, CSV_HEADER};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Alignments,
    Eigenvalues,
    Eta,
}

impl PlotKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "alignments" => Some(Self::Alignments),
            "eigenvalues" => Some(Self::Eigenvalues),
            "eta" => Some(Self::Eta),
            _ => None,
        }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 48.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Series<'a> {
    label: &'a str,
    mean: fn(&SweepRow) -> f64,
    std: fn(&SweepRow) -> f64,
    pred: fn(&SweepRow) -> Option<f64>,
}

fn series_for(kind: PlotKind) -> Vec<Series<'static>> {
    match kind {
        PlotKind::Alignments => vec![
            Series {
                label: "rho11",
                mean: |r| r.rho11_mean,
                std: |r| r.rho11_std,
                pred: |r| r.rho11_pred,
            },
            Series {
                label: "rho12",
                mean: |r| r.rho12_mean,
                std: |r| r.rho12_std,
                pred: |r| r.rho12_pred,
            },
            Series {
                label: "rho21",
                mean: |r| r.rho21_mean,
                std: |r| r.rho21_std,
                pred: |r| r.rho21_pred,
            },
            Series {
                label: "rho22",
                mean: |r| r.rho22_mean,
                std: |r| r.rho22_std,
                pred: |r| r.rho22_pred,
            },
        ],
        PlotKind::Eigenvalues => vec![
            Series {
                label: "lambda1",
                mean: |r| r.lambda1_mean,
                std: |r| r.lambda1_std,
                pred: |r| r.lambda1_pred,
            },
            Series {
                label: "lambda2",
                mean: |r| r.lambda2_mean,
                std: |r| r.lambda2_std,
                pred: |r| r.lambda2_pred,
            },
        ],
        PlotKind::Eta => vec![Series {
            label: "eta12",
            mean: |r| r.eta12_mean,
            std: |r| r.eta12_std,
            pred: |r| r.eta12_pred,
        }],
    }
}

fn axis_label(kind: PlotKind) -> &'static str {
    match kind {
        PlotKind::Alignments => "alignment",
        PlotKind::Eigenvalues => "eigenvalue",
        PlotKind::Eta => "eta12",
    }
}

/// Nice round ticks covering [lo, hi].
fn ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / count as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| (hi - lo) / s <= count as f64)
        .unwrap_or(mag * 10.0);
    let first = (lo / step).ceil() * step;
    let mut out = Vec::new();
    let mut v = first;
    while v <= hi + 1e-12 {
        out.push(v);
        v += step;
    }
    out
}

/// Static comparison figure for a sweep. Errors on an empty row set and
/// writes nothing in that case.
pub fn sweep_plot_svg(rows: &[SweepRow], kind: PlotKind) -> Result<String, CliError> {
    if rows.is_empty() {
        return Err(CliError::EmptyPlot);
    }
    let series = series_for(kind);

    let xs: Vec<f64> = rows.iter().map(|r| r.beta1).collect();
    let (x_lo, x_hi) = (
        xs.iter().cloned().fold(f64::INFINITY, f64::min),
        xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let x_span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };

    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for r in rows {
        for s in &series {
            let m = (s.mean)(r);
            let sd = (s.std)(r);
            if m.is_finite() {
                y_lo = y_lo.min(m - sd);
                y_hi = y_hi.max(m + sd);
            }
            if let Some(p) = (s.pred)(r) {
                y_lo = y_lo.min(p);
                y_hi = y_hi.max(p);
            }
        }
    }
    if !y_lo.is_finite() || !y_hi.is_finite() {
        return Err(CliError::EmptyPlot);
    }
    let pad = 0.08 * (y_hi - y_lo).max(1e-9);
    y_lo -= pad;
    y_hi += pad;

    let px = |x: f64| MARGIN_L + (x - x_lo) / x_span * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );

    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="1"/>"#,
        MARGIN_L,
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="1"/>"#,
        MARGIN_L,
        MARGIN_T,
        MARGIN_L,
        HEIGHT - MARGIN_B
    );
    for t in ticks(x_lo, x_hi, 6) {
        let x = px(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" font-size="12" text-anchor="middle">{t:.1}</text>"#,
            HEIGHT - MARGIN_B + 18.0
        );
    }
    for t in ticks(y_lo, y_hi, 6) {
        let y = py(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#,
            MARGIN_L - 5.0,
            MARGIN_L
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{t:.2}</text>"#,
            MARGIN_L - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">beta1</text>"#,
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0,
        MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0,
        axis_label(kind)
    );

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        // prediction line over converged points
        let pts: Vec<String> = rows
            .iter()
            .filter_map(|r| (s.pred)(r).map(|p| format!("{:.2},{:.2}", px(r.beta1), py(p))))
            .collect();
        if pts.len() >= 2 {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
        }
        // empirical dots with ±1 std whiskers
        for r in rows {
            let m = (s.mean)(r);
            if !m.is_finite() {
                continue;
            }
            let sd = (s.std)(r);
            let (x, y) = (px(r.beta1), py(m));
            let (y0, y1) = (py(m - sd), py(m + sd));
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="{color}" stroke-width="1"/>"#
            );
            let _ = writeln!(
                svg,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#
            );
        }
        // legend
        let lx = WIDTH - MARGIN_R - 90.0;
        let ly = MARGIN_T + 16.0 * si as f64;
        let _ = writeln!(
            svg,
            r#"<circle cx="{lx:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
            ly - 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}" font-size="12">{}</text>"#,
            lx + 8.0,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Histogram of a spectrum report with the semicircle density overlay.
pub fn spectrum_plot_svg(report: &SpectrumReport, bins: usize) -> Result<String, CliError> {
    if report.eigenvalues.is_empty() {
        return Err(CliError::EmptyPlot);
    }
    let bins = bins.max(4);
    let lo = report
        .eigenvalues
        .first()
        .copied()
        .unwrap()
        .min(-report.gamma * 1.1);
    let hi = report
        .eigenvalues
        .last()
        .copied()
        .unwrap()
        .max(report.gamma * 1.1);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &e in &report.eigenvalues {
        let k = (((e - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let total = report.eigenvalues.len() as f64;
    let density: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / (total * width))
        .collect();

    let law = SemicircleLaw::new(report.gamma);
    let y_max = density
        .iter()
        .cloned()
        .fold(law.density(0.0), f64::max)
        * 1.1;

    let px = |x: f64| MARGIN_L + (x - lo) / (hi - lo) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - y / y_max * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    const BAR_FILL: &str = "#9ecae1";
    const BAR_EDGE: &str = "#4292c6";
    const CURVE: &str = "#d62728";
    for (k, &d) in density.iter().enumerate() {
        let x0 = px(lo + k as f64 * width);
        let x1 = px(lo + (k + 1) as f64 * width);
        let y = py(d);
        let _ = writeln!(
            svg,
            r#"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{BAR_FILL}" stroke="{BAR_EDGE}" stroke-width="0.5"/>"#,
            x1 - x0,
            HEIGHT - MARGIN_B - y
        );
    }
    let curve: Vec<String> = (0..=200)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / 200.0;
            format!("{:.2},{:.2}", px(x), py(law.density(x)))
        })
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="{CURVE}" stroke-width="2"/>"#,
        curve.join(" ")
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="1"/>"#,
        MARGIN_L,
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">eigenvalue (ks = {:.4}, {} outliers)</text>"#,
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        HEIGHT - 10.0,
        report.ks_distance,
        report.outliers.len()
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn parse_field(token: &str, what: &str) -> Result<f64, CliError> {
    token
        .parse::<f64>()
        .map_err(|_| CliError::CsvParse(format!("bad {what}: {token:?}")))
}

fn parse_opt(token: &str, what: &str) -> Result<Option<f64>, CliError> {
    if token.is_empty() {
        return Ok(None);
    }
    parse_field(token, what).map(Some)
}

/// Reads back a sweep CSV written by [`crate::sweep::rows_to_csv`].
pub fn parse_rows_csv(text: &str) -> Result<Vec<SweepRow>, CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::CsvParse("empty document".into()))?;
    if header != CSV_HEADER {
        return Err(CliError::CsvParse("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 24 {
            return Err(CliError::CsvParse(format!(
                "line {}: expected 24 fields, got {}",
                ln + 2,
                fields.len()
            )));
        }
        rows.push(SweepRow {
            beta1: parse_field(fields[0], "beta1")?,
            lambda1_mean: parse_field(fields[1], "lambda1_mean")?,
            lambda1_std: parse_field(fields[2], "lambda1_std")?,
            lambda2_mean: parse_field(fields[3], "lambda2_mean")?,
            lambda2_std: parse_field(fields[4], "lambda2_std")?,
            rho11_mean: parse_field(fields[5], "rho11_mean")?,
            rho11_std: parse_field(fields[6], "rho11_std")?,
            rho12_mean: parse_field(fields[7], "rho12_mean")?,
            rho12_std: parse_field(fields[8], "rho12_std")?,
            rho21_mean: parse_field(fields[9], "rho21_mean")?,
            rho21_std: parse_field(fields[10], "rho21_std")?,
            rho22_mean: parse_field(fields[11], "rho22_mean")?,
            rho22_std: parse_field(fields[12], "rho22_std")?,
            eta12_mean: parse_field(fields[13], "eta12_mean")?,
            eta12_std: parse_field(fields[14], "eta12_std")?,
            lambda1_pred: parse_opt(fields[15], "lambda1_pred")?,
            lambda2_pred: parse_opt(fields[16], "lambda2_pred")?,
            rho11_pred: parse_opt(fields[17], "rho11_pred")?,
            rho12_pred: parse_opt(fields[18], "rho12_pred")?,
            rho21_pred: parse_opt(fields[19], "rho21_pred")?,
            rho22_pred: parse_opt(fields[20], "rho22_pred")?,
            eta12_pred: parse_opt(fields[21], "eta12_pred")?,
            residual: parse_opt(fields[22], "residual")?,
            converged: fields[23] == "true",
        });
    }
    Ok(rows)
}
