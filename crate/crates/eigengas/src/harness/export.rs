//! File formats: trace and curve CSVs, JSONL run records, and a small
//! self-contained SVG chart writer.
//!
//! Column layouts:
//! - trace CSV: `lambda,x_0,...,x_{d-1}` (levels in label order);
//! - gaps CSV: `lambda,gap_0,...,gap_{d-2}` (signed adjacent gaps in label
//!   order, so a sign flip marks an exact crossing);
//! - curve CSV: `axis,mean_success,stderr,mean_fidelity,fidelity_stderr`;
//! - JSONL: one ensemble result per line, carrying its config hash and
//!   every realization record, so aggregates can be recomputed on reload.

use std::fmt::Write as _;
use std::path::Path;

use super::run::{CurvePoint, EnsembleResult};
use crate::error::{Error, Result};
use crate::gas::SpectrumTrace;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn trace_csv(trace: &SpectrumTrace) -> String {
    let dim = trace.dim();
    let mut out = String::new();
    out.push_str("lambda");
    for n in 0..dim {
        let _ = write!(out, ",x_{n}");
    }
    out.push('\n');
    for (i, lam) in trace.lambdas.iter().enumerate() {
        let _ = write!(out, "{lam}");
        for n in 0..dim {
            let _ = write!(out, ",{}", trace.levels[i][n]);
        }
        out.push('\n');
    }
    out
}

pub fn gaps_csv(trace: &SpectrumTrace) -> String {
    let dim = trace.dim();
    let mut out = String::new();
    out.push_str("lambda");
    for n in 0..dim - 1 {
        let _ = write!(out, ",gap_{n}");
    }
    out.push('\n');
    for (i, lam) in trace.lambdas.iter().enumerate() {
        let _ = write!(out, "{lam}");
        for n in 0..dim - 1 {
            let _ = write!(out, ",{}", trace.gap(i, n));
        }
        out.push('\n');
    }
    out
}

pub fn write_trace_csv(trace: &SpectrumTrace, path: &Path) -> Result<()> {
    write_file(path, &trace_csv(trace))
}

pub fn write_gaps_csv(trace: &SpectrumTrace, path: &Path) -> Result<()> {
    write_file(path, &gaps_csv(trace))
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("axis,mean_success,stderr,mean_fidelity,fidelity_stderr\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.x, p.mean_success, p.stderr_success, p.mean_fidelity, p.stderr_fidelity
        );
    }
    out
}

pub fn write_curve_csv(points: &[CurvePoint], path: &Path) -> Result<()> {
    write_file(path, &curve_csv(points))
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<CurvePoint>> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 5 {
            return Err(Error::InvalidConfig(format!(
                "curve CSV line {} has {} fields, expected 5",
                lineno + 1,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", lineno + 1)))
        };
        points.push(CurvePoint {
            x: parse(fields[0])?,
            mean_success: parse(fields[1])?,
            stderr_success: parse(fields[2])?,
            mean_fidelity: parse(fields[3])?,
            stderr_fidelity: parse(fields[4])?,
            n_ok: 0,
            n_failed: 0,
        });
    }
    Ok(points)
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurvePoint>> {
    parse_curve_csv(&read_file(path)?)
}

pub fn write_jsonl(results: &[EnsembleResult], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<EnsembleResult>> {
    let text = read_file(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// One labelled curve for the chart writer.
pub struct SvgSeries<'a> {
    pub label: &'a str,
    pub points: &'a [CurvePoint],
}

/// Render sweep curves with error bars into a standalone SVG string.
/// `log_x` selects a log10 abscissa (speed sweeps); the ordinate is linear
/// probability in [0, 1].
pub fn svg_chart(series: &[SvgSeries<'_>], title: &str, log_x: bool) -> String {
    const W: f64 = 800.0;
    const H: f64 = 560.0;
    const ML: f64 = 70.0;
    const MR: f64 = 30.0;
    const MT: f64 = 50.0;
    const MB: f64 = 60.0;
    const COLORS: [&str; 6] = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
    ];

    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.x))
        .collect();
    let (mut x_lo, mut x_hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if !x_lo.is_finite() || x_lo == x_hi {
        x_lo = if log_x { 1e-3 } else { 0.0 };
        x_hi = 1.0;
    }
    let map_x = |x: f64| -> f64 {
        let (a, b, v) = if log_x {
            (x_lo.log10(), x_hi.log10(), x.log10())
        } else {
            (x_lo, x_hi, x)
        };
        ML + (v - a) / (b - a) * (W - ML - MR)
    };
    let map_y = |y: f64| -> f64 { H - MB - y.clamp(0.0, 1.0) * (H - MT - MB) };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="30" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>"#,
        W / 2.0
    );

    // Axes.
    let _ = writeln!(
        svg,
        r#"<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{}" stroke="black"/>"#,
        H - MB
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{ML}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - MB,
        W - MR,
        H - MB
    );
    // Y ticks every 0.2.
    for k in 0..=5 {
        let y = k as f64 * 0.2;
        let py = map_y(y);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{py}" x2="{ML}" y2="{py}" stroke="black"/><text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{y:.1}</text>"#,
            ML - 5.0,
            ML - 8.0,
            py + 4.0
        );
    }
    // X ticks: decades when logarithmic, five uniform ticks otherwise.
    if log_x {
        let lo = x_lo.log10().floor() as i32;
        let hi = x_hi.log10().ceil() as i32;
        for d in lo..=hi {
            let x = 10f64.powi(d);
            if x < x_lo * 0.999 || x > x_hi * 1.001 {
                continue;
            }
            let px = map_x(x);
            let _ = writeln!(
                svg,
                r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">1e{d}</text>"#,
                H - MB,
                H - MB + 5.0,
                H - MB + 20.0
            );
        }
    } else {
        for k in 0..=5 {
            let x = x_lo + (x_hi - x_lo) * k as f64 / 5.0;
            let px = map_x(x);
            let _ = writeln!(
                svg,
                r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{x:.3}</text>"#,
                H - MB,
                H - MB + 5.0,
                H - MB + 20.0
            );
        }
    }

    for (si, s) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        let mut path = String::new();
        for (i, p) in s.points.iter().enumerate() {
            let _ = write!(
                path,
                "{}{:.2},{:.2} ",
                if i == 0 { "M" } else { "L" },
                map_x(p.x),
                map_y(p.mean_success)
            );
        }
        let _ = writeln!(
            svg,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.trim_end()
        );
        for p in s.points {
            let px = map_x(p.x);
            let lo = map_y(p.mean_success - p.stderr_success);
            let hi = map_y(p.mean_success + p.stderr_success);
            let _ = writeln!(
                svg,
                r#"<line x1="{px}" y1="{lo:.2}" x2="{px}" y2="{hi:.2}" stroke="{color}" stroke-width="1"/><circle cx="{px}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                map_y(p.mean_success)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            W - MR - 160.0,
            MT + 18.0 * si as f64 + 6.0,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_svg(series: &[SvgSeries<'_>], title: &str, log_x: bool, path: &Path) -> Result<()> {
    write_file(path, &svg_chart(series, title, log_x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::TraceDiagnostics;
    use nalgebra::{DMatrix, DVector};

    fn tiny_trace() -> SpectrumTrace {
        let lambdas = vec![1.0, 0.5, 0.0];
        let levels = vec![
            DVector::from_vec(vec![0.0, 1.0, 2.0]),
            DVector::from_vec(vec![0.1, 0.9, 2.1]),
            DVector::from_vec(vec![0.2, 0.8, 2.2]),
        ];
        let couplings = vec![DMatrix::zeros(3, 3); 3];
        SpectrumTrace {
            dh_traces: vec![0.0; 3],
            velocity_sums: vec![0.0; 3],
            lambdas,
            levels,
            couplings,
            diagnostics: TraceDiagnostics::default(),
        }
    }

    #[test]
    fn trace_csv_has_one_row_per_grid_point() {
        let csv = trace_csv(&tiny_trace());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "lambda,x_0,x_1,x_2");
        assert!(lines[1].starts_with("1,0,1,2"));
    }

    #[test]
    fn gaps_csv_keeps_signs() {
        let mut trace = tiny_trace();
        trace.levels[2][0] = 1.5; // label 0 above label 1 at the end
        let csv = gaps_csv(&trace);
        let last = csv.lines().last().unwrap();
        assert!(last.starts_with("0,"));
        assert!(last.contains("-0.7"), "signed gap expected: {last}");
    }

    #[test]
    fn curve_csv_round_trips() {
        let points = vec![
            CurvePoint {
                x: 1e-3,
                mean_success: 0.25,
                stderr_success: 0.01,
                mean_fidelity: 0.99,
                stderr_fidelity: 0.001,
                n_ok: 100,
                n_failed: 0,
            },
            CurvePoint {
                x: 1e-2,
                mean_success: 0.05,
                stderr_success: 0.005,
                mean_fidelity: 0.99,
                stderr_fidelity: 0.001,
                n_ok: 100,
                n_failed: 0,
            },
        ];
        let csv = curve_csv(&points);
        assert_eq!(csv.lines().count(), 3);
        let back = parse_curve_csv(&csv).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in points.iter().zip(&back) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.mean_success, b.mean_success);
            assert_eq!(a.stderr_success, b.stderr_success);
            assert_eq!(a.mean_fidelity, b.mean_fidelity);
            assert_eq!(a.stderr_fidelity, b.stderr_fidelity);
        }
    }

    #[test]
    fn svg_is_well_formed_and_marks_log_decades() {
        let points: Vec<CurvePoint> = (0..10)
            .map(|k| CurvePoint {
                x: 10f64.powf(-4.0 + k as f64 / 3.0),
                mean_success: 0.1 * k as f64 / 10.0,
                stderr_success: 0.01,
                mean_fidelity: 0.9,
                stderr_fidelity: 0.0,
                n_ok: 10,
                n_failed: 0,
            })
            .collect();
        let svg = svg_chart(
            &[SvgSeries {
                label: "sweep",
                points: &points,
            }],
            "success vs speed",
            true,
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("1e-4"));
        assert!(svg.contains("sweep"));
    }
}
