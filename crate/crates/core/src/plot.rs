//! Plot data: per-figure CSV files and small static SVG renderings.
//!
//! Output depends only on the input records, so identical runs produce identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::{Condition, RunRecord, ScalingPoint};

pub const BASIN_CSV: &str = "fig1_basin.csv";
pub const BASIN_SVG: &str = "fig1_basin.svg";
pub const SCALING_CSV: &str = "fig2_scaling.csv";
pub const SCALING_SVG: &str = "fig2_scaling.svg";

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 50.0;

/// `(noise_scale, final_error)` per record, sorted by scale then seed.
pub fn basin_series(records: &[RunRecord]) -> Vec<(f64, f64)> {
    let mut rows: Vec<(f64, u64, f64)> = records
        .iter()
        .map(|r| {
            let err = r
                .final_bit_error
                .or(r.rel_frobenius_error)
                .unwrap_or(r.final_test_error);
            (r.noise_scale, r.seed, err)
        })
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    rows.into_iter().map(|(s, _, e)| (s, e)).collect()
}

/// Scaling points recovered from scaling-study records.
pub fn scaling_points(records: &[RunRecord]) -> Vec<ScalingPoint> {
    let mut points: Vec<ScalingPoint> = records
        .iter()
        .filter_map(|r| {
            let b = r.budgeted?;
            Some(ScalingPoint {
                n: r.task.n(),
                condition: r.condition,
                l0: b.l0,
                rel_error: b.rel_error,
                scaling_factor: r.scaling_factor?,
            })
        })
        .collect();
    points.sort_by_key(|p| (condition_rank(p.condition), p.n));
    points
}

fn condition_rank(c: Condition) -> u8 {
    match c {
        Condition::Handcoded => 0,
        Condition::Near => 1,
        Condition::Far => 2,
        Condition::Perturbed => 3,
        Condition::Masked => 4,
    }
}

fn is_scaling(r: &RunRecord) -> bool {
    matches!(r.condition, Condition::Handcoded | Condition::Near | Condition::Far)
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes the figure files that apply to `records` into `dir` and returns their paths.
///
/// Basin-sweep records produce `fig1_basin.{csv,svg}`; scaling-study records produce
/// `fig2_scaling.{csv,svg}`. Empty input writes nothing.
pub fn emit_plot_data(records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        log::warn!("no records; skipping plot data");
        return Ok(Vec::new());
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (scaling, basin): (Vec<RunRecord>, Vec<RunRecord>) =
        records.iter().cloned().partition(is_scaling);
    let mut written = Vec::new();
    if !basin.is_empty() {
        let series = basin_series(&basin);
        write(dir.join(BASIN_CSV), &basin_csv(&series), &mut written)?;
        write(dir.join(BASIN_SVG), &basin_svg(&series), &mut written)?;
    }
    if !scaling.is_empty() {
        let points = scaling_points(&scaling);
        write(dir.join(SCALING_CSV), &scaling_csv(&points), &mut written)?;
        write(dir.join(SCALING_SVG), &scaling_svg(&points), &mut written)?;
    }
    Ok(written)
}

pub fn basin_csv(series: &[(f64, f64)]) -> String {
    let mut s = String::from("noise_scale,final_error\n");
    for (x, y) in series {
        let _ = writeln!(s, "{x},{y}");
    }
    s
}

pub fn scaling_csv(points: &[ScalingPoint]) -> String {
    let mut s = String::from("n,condition,scaling_factor\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.n, p.condition.as_str(), p.scaling_factor);
    }
    s
}

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        let t = if self.x1 > self.x0 { (x - self.x0) / (self.x1 - self.x0) } else { 0.5 };
        MARGIN + t * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        let t = if self.y1 > self.y0 { (y - self.y0) / (self.y1 - self.y0) } else { 0.5 };
        HEIGHT - MARGIN - t * (HEIGHT - 2.0 * MARGIN)
    }
}

fn svg_frame(title: &str, xlabel: &str, ylabel: &str, axes: &Axes, xticks: &[(f64, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{title}</text>"#, WIDTH / 2.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, WIDTH / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{0}" text-anchor="middle" transform="rotate(-90 14 {0})">{ylabel}</text>"#,
        HEIGHT / 2.0
    );
    for (x, label) in xticks {
        let px = axes.px(*x);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, b + 14.0);
    }
    for k in 0..=4 {
        let y = axes.y0 + (axes.y1 - axes.y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            l - 4.0,
            axes.py(y) + 4.0,
            fmt_tick(y)
        );
    }
    s
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" { "0".into() } else { s.to_string() }
}

/// Scatter of final error against noise scale on a log x axis.
pub fn basin_svg(series: &[(f64, f64)]) -> String {
    let floor = series
        .iter()
        .map(|p| p.0)
        .filter(|x| *x > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor / 2.0 } else { 1e-3 };
    let lx = |x: f64| x.max(floor).log10();
    let xmax = series.iter().map(|p| lx(p.0)).fold(f64::NEG_INFINITY, f64::max);
    let ymax = series.iter().map(|p| p.1).fold(0.5f64, f64::max);
    let axes = Axes { x0: lx(floor), x1: xmax, y0: 0.0, y1: ymax };
    let mut scales: Vec<f64> = series.iter().map(|p| p.0).collect();
    scales.dedup();
    let ticks: Vec<(f64, String)> = scales.iter().map(|&x| (lx(x), fmt_tick(x))).collect();
    let mut s = svg_frame("Final error vs initialization noise", "noise scale", "final error", &axes, &ticks);
    for &(x, y) in series {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4" fill-opacity="0.7"/>"##,
            axes.px(lx(x)),
            axes.py(y)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One line per condition of scaling factor against n on a log2 x axis.
pub fn scaling_svg(points: &[ScalingPoint]) -> String {
    let lx = |n: usize| (n as f64).log2();
    let xs: Vec<f64> = points.iter().map(|p| lx(p.n)).collect();
    let x0 = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x1 = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ymax = points.iter().map(|p| p.scaling_factor).fold(1.0f64, f64::max) * 1.1;
    let axes = Axes { x0, x1, y0: 0.0, y1: ymax };
    let mut ns: Vec<usize> = points.iter().map(|p| p.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let ticks: Vec<(f64, String)> = ns.iter().map(|&n| (lx(n), n.to_string())).collect();
    let mut s = svg_frame("L0 / (n log2 n) after sparsification", "n", "scaling factor", &axes, &ticks);
    let series = [
        (Condition::Handcoded, "#d62728"),
        (Condition::Near, "#1f77b4"),
        (Condition::Far, "#2ca02c"),
    ];
    for (i, (cond, color)) in series.iter().enumerate() {
        let pts: Vec<&ScalingPoint> = points.iter().filter(|p| p.condition == *cond).collect();
        if pts.is_empty() {
            continue;
        }
        let path: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", axes.px(lx(p.n)), axes.py(p.scaling_factor)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" stroke="{color}" stroke-width="2" fill="none"/>"#,
            path.join(" ")
        );
        let ly = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 70.0,
            cond.as_str()
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(n: usize, condition: Condition, f: f64) -> ScalingPoint {
        ScalingPoint { n, condition, l0: 0, rel_error: 0.0, scaling_factor: f }
    }

    #[test]
    fn basin_csv_is_two_columns() {
        let csv = basin_csv(&[(0.01, 0.0), (2.0, 0.5)]);
        assert_eq!(csv, "noise_scale,final_error\n0.01,0\n2,0.5\n");
    }

    #[test]
    fn scaling_csv_has_three_series() {
        let pts = [
            point(8, Condition::Handcoded, 2.33),
            point(8, Condition::Near, 2.4),
            point(8, Condition::Far, 4.0),
        ];
        let csv = scaling_csv(&pts);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,condition,scaling_factor");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("8,far,"));
        let svg = scaling_svg(&pts);
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg, scaling_svg(&pts));
    }

    #[test]
    fn empty_records_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plot_data(&[], dir.path()).unwrap().is_empty());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn basin_svg_is_deterministic() {
        let series = [(0.0, 0.1), (0.01, 0.0), (2.0, 0.5)];
        let a = basin_svg(&series);
        assert_eq!(a, basin_svg(&series));
        assert_eq!(a.matches("<circle").count(), 3);
        assert!(!a.contains("NaN"));
    }
}
