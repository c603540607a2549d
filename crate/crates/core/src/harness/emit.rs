//! CSV and SVG artifacts.

use std::fmt::Write as _;
use std::path::Path;

use super::{SweepRecord, Transform};
use crate::error::{Error, Result};
use crate::numerics::linear_fit;
use crate::trajectory::TrajectoryRecord;
use crate::types::ParticleCloud;

const CSV_HEADER: &str = "parameter,estimate,stderr,error,runtime_ms,seed";

/// 17 significant digits: enough to round-trip any double.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn render_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{},{},{},{},{},{}", num(r.parameter), num(r.value_estimate), num(r.stderr), num(r.error), r.runtime_ms, r.seed);
    }
    out
}

pub fn emit_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    write(path, &render_csv(records))
}

/// Parses CSV produced by [`render_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<SweepRecord>> {
    let bad = |line: usize| Error::config("csv", format!("malformed row {line}"));
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::config("csv", "missing header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(i + 1));
            }
            let real = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1));
            let int = |s: &str| s.parse::<u64>().map_err(|_| bad(i + 1));
            Ok(SweepRecord {
                parameter: real(f[0])?,
                value_estimate: real(f[1])?,
                stderr: real(f[2])?,
                error: real(f[3])?,
                runtime_ms: int(f[4])?,
                seed: int(f[5])?,
            })
        })
        .collect()
}

/// Scatter of error against `transform(parameter)` with its least-squares line.
pub fn render_svg_scatter(records: &[SweepRecord], transform: Transform) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const PAD: f64 = 60.0;
    let xs: Vec<f64> = records.iter().map(|r| transform.apply(r.parameter)).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.error).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#, b = H - PAD, r = W - PAD);
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#, b = H - PAD);
    for (x, y) in xs.iter().zip(&ys) {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#, sx(*x), sy(*y));
    }
    let mut title = format!("error vs {}", transform.label());
    if let Ok(fit) = linear_fit(&xs, &ys) {
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="crimson" stroke-width="1.5"/>"#,
            sx(x0),
            sy(fit.predict(x0)),
            sx(x1),
            sy(fit.predict(x1))
        );
        let _ = write!(title, "  (slope {:.4}, intercept {:.4}, RMSE {:.3e}, R2 {:.4})", fit.slope, fit.intercept, fit.rmse, fit.r2);
    }
    let _ = writeln!(s, r#"<text x="{PAD}" y="30" font-family="sans-serif" font-size="13">{title}</text>"#);
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}" font-family="sans-serif" font-size="11">{x0:.4e}</text>"#, H - PAD + 18.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{x1:.4e}</text>"#, W - PAD, H - PAD + 18.0);
    let _ = writeln!(s, r#"<text x="4" y="{}" font-family="sans-serif" font-size="11">{y0:.3e}</text>"#, H - PAD);
    let _ = writeln!(s, r#"<text x="4" y="{}" font-family="sans-serif" font-size="11">{y1:.3e}</text>"#, PAD);
    s.push_str("</svg>\n");
    s
}

pub fn emit_svg_scatter(records: &[SweepRecord], transform: Transform, path: &Path) -> Result<()> {
    write(path, &render_svg_scatter(records, transform))
}

/// Writes the particle positions at each requested time as
/// `time,particle,x0,..` rows. Intermediate times need recorded states.
pub fn emit_snapshots(record: &TrajectoryRecord, times: &[f64], path: &Path) -> Result<()> {
    let d = record.initial.dim();
    let mut out = String::from("time,particle");
    for j in 0..d {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    for &t in times {
        let cloud = record.snapshot(t).ok_or(Error::Empty("trajectory states were not recorded"))?;
        for (i, p) in cloud.iter().enumerate() {
            let _ = write!(out, "{},{i}", num(t));
            for v in p {
                let _ = write!(out, ",{}", num(*v));
            }
            out.push('\n');
        }
    }
    write(path, &out)
}

/// Parses snapshot CSV back into `(time, cloud)` pairs in file order.
pub fn parse_snapshots(text: &str) -> Result<Vec<(f64, ParticleCloud)>> {
    let bad = || Error::config("snapshot", "malformed snapshot file");
    let mut lines = text.lines();
    let d = lines.next().ok_or_else(bad)?.split(',').count().checked_sub(2).ok_or_else(bad)?;
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != d + 2 {
            return Err(bad());
        }
        let t: f64 = f[0].parse().map_err(|_| bad())?;
        let coords = f[2..].iter().map(|s| s.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
        match out.last_mut() {
            Some((last, flat)) if last.to_bits() == t.to_bits() => flat.extend(coords),
            _ => out.push((t, coords)),
        }
    }
    out.into_iter()
        .map(|(t, flat)| Ok((t, ParticleCloud::from_flat(d, flat)?)))
        .collect()
}
