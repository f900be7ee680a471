//! CSV export and import of sweep rows, and plot-ready text and SVG.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::config::SweepAxis;
use super::sweep::{CurvePoint, SweepResult, SweepRow};

pub const CSV_HEADER: [&str; 12] = [
    "sweep_axis",
    "axis_value",
    "p",
    "replicate",
    "M",
    "N",
    "lambda",
    "rel_sq_error",
    "train_residual",
    "wall_ms",
    "seed",
    "error_msg",
];

/// Floats are written in shortest round-trip form, so import is exact.
pub fn write_csv<W: std::io::Write>(result: &SweepResult, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &result.rows {
        w.write_record([
            r.sweep_axis.as_str().to_string(),
            r.axis_value.to_string(),
            r.p.to_string(),
            r.replicate.to_string(),
            r.m.to_string(),
            r.n.to_string(),
            fmt_float(r.lambda),
            fmt_float(r.rel_sq_error),
            fmt_float(r.train_residual),
            fmt_float(r.wall_ms),
            r.seed.to_string(),
            r.error_msg.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip text, in exponent form outside `[1e-4, 1e15)`.
fn fmt_float(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

pub fn export_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(result, std::io::BufWriter::new(file)).map_err(|e| csv_error(path, e))
}

pub fn read_csv<R: std::io::Read>(input: R, path: &Path) -> Result<SweepResult> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::format(path, format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let bad = |what: &str| Error::format(path, format!("row {}: bad {what}", line + 1));
        let int = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(CSV_HEADER[i]));
        let float = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(CSV_HEADER[i]));
        rows.push(SweepRow {
            sweep_axis: SweepAxis::parse(&rec[0]).map_err(|_| bad("sweep_axis"))?,
            axis_value: int(1)?,
            p: int(2)?,
            replicate: int(3)?,
            m: int(4)?,
            n: int(5)?,
            lambda: float(6)?,
            rel_sq_error: float(7)?,
            train_residual: float(8)?,
            wall_ms: float(9)?,
            seed: rec[10].parse().map_err(|_| bad("seed"))?,
            error_msg: rec[11].to_string(),
        });
    }
    Ok(SweepResult { rows })
}

pub fn import_csv(path: &Path) -> Result<SweepResult> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file), path)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::format(path, e.to_string())
    }
}

/// Whitespace-separated columns, one block per grid separated by two blank
/// lines so gnuplot's `index` selects a grid. Error bars are two standard
/// deviations around the mean.
pub fn gnuplot_text(result: &SweepResult) -> String {
    let mut out = String::from("# p axis_value median mean std lo hi n_ok n_failed\n");
    let curve = result.curve();
    let mut last_p = None;
    for c in &curve {
        if last_p.is_some_and(|p| p != c.p) {
            out.push_str("\n\n");
        }
        last_p = Some(c.p);
        let (lo, hi) = error_bar(c);
        let _ = writeln!(
            out,
            "{} {} {:e} {:e} {:e} {:e} {:e} {} {}",
            c.p, c.axis_value, c.median, c.mean, c.std, lo, hi, c.succeeded, c.failed
        );
    }
    out
}

fn error_bar(c: &CurvePoint) -> (f64, f64) {
    (c.mean - 2.0 * c.std, c.mean + 2.0 * c.std)
}

const SVG_W: f64 = 480.0;
const SVG_H: f64 = 360.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Log-log plot of the median error per grid with two-standard-deviation
/// bars, clipped at the smallest positive value.
pub fn svg_plot(result: &SweepResult, title: &str) -> String {
    let curve = result.curve();
    let axis = result.rows.first().map(|r| r.sweep_axis.as_str()).unwrap_or("");
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        SVG_W / 2.0,
        escape(title)
    );
    let positive: Vec<f64> = curve
        .iter()
        .flat_map(|c| [c.median, error_bar(c).0, error_bar(c).1])
        .filter(|v| *v > 0.0 && v.is_finite())
        .collect();
    if curve.is_empty() || positive.is_empty() {
        svg.push_str("<text x=\"50%\" y=\"50%\" text-anchor=\"middle\">no data</text>\n</svg>\n");
        return svg;
    }
    let floor = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let (x0, x1) = decade_span(curve.iter().map(|c| c.axis_value as f64));
    let (y0, y1) = decade_span(positive.iter().copied());
    let px = |x: f64| MARGIN + (x.log10() - x0) / (x1 - x0) * (SVG_W - 2.0 * MARGIN);
    let py = |y: f64| SVG_H - MARGIN - (y.log10() - y0) / (y1 - y0) * (SVG_H - 2.0 * MARGIN);
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        SVG_W - 2.0 * MARGIN,
        SVG_H - 2.0 * MARGIN
    );
    for d in x0 as i32..=x1 as i32 {
        let x = px(10f64.powi(d));
        let _ = writeln!(
            svg,
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">1e{d}</text>",
            SVG_H - MARGIN + 14.0
        );
    }
    for d in y0 as i32..=y1 as i32 {
        let y = py(10f64.powi(d));
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1e{d}</text>",
            MARGIN - 4.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">relative squared error</text>",
        SVG_W / 2.0,
        SVG_H - 12.0,
        escape(axis),
        SVG_H / 2.0,
        SVG_H / 2.0
    );
    let mut grids: Vec<usize> = curve.iter().map(|c| c.p).collect();
    grids.dedup();
    for (i, p) in grids.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<&CurvePoint> = curve.iter().filter(|c| c.p == *p).collect();
        let path: Vec<String> = pts
            .iter()
            .filter(|c| c.median > 0.0)
            .map(|c| format!("{:.1},{:.1}", px(c.axis_value as f64), py(c.median)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            path.join(" ")
        );
        for c in &pts {
            let (lo, hi) = error_bar(c);
            let x = px(c.axis_value as f64);
            let _ = writeln!(
                svg,
                "<line x1=\"{x:.1}\" x2=\"{x:.1}\" y1=\"{:.1}\" y2=\"{:.1}\" stroke=\"{color}\"/>",
                py(lo.max(floor)),
                py(hi.max(floor))
            );
            if c.median > 0.0 {
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{x:.1}\" cy=\"{:.1}\" r=\"2.5\" fill=\"{color}\"/>",
                    py(c.median)
                );
            }
        }
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">p = {p}</text>",
            SVG_W - MARGIN - 60.0,
            MARGIN + 14.0 * (i + 1) as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Enclosing whole decades in log10, at least one decade wide.
fn decade_span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v.log10()), hi.max(v.log10()))
    });
    let (lo, hi) = (lo.floor(), hi.ceil());
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
