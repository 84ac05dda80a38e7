//! Minimal SVG line charts for the delay CDF and the cognizant-over-time
//! series. Plotting is best-effort; callers must treat failures as warnings.

use std::fmt::Write as _;
use std::path::Path;

use crate::metrics::MetricsLog;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn svg_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    points: &[(f64, f64)],
    y_max_hint: f64,
) -> String {
    let x_max = points.iter().map(|p| p.0).fold(1.0_f64, f64::max);
    let y_max = points.iter().map(|p| p.1).fold(y_max_hint, f64::max);
    let sx = |x: f64| MARGIN + x / x_max * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - y / y_max * (H - 2.0 * MARGIN);

    let mut path = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        let cmd = if i == 0 { 'M' } else { 'L' };
        write!(path, "{cmd}{:.1},{:.1} ", sx(*x), sy(*y)).expect("string write");
    }

    let mut out = String::new();
    write!(
        out,
        concat!(
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"##,
            r##"<rect width="{w}" height="{h}" fill="white"/>"##,
            r##"<text x="{tx}" y="20" text-anchor="middle" font-size="14">{title}</text>"##,
            r##"<line x1="{m}" y1="{ybase}" x2="{xe}" y2="{ybase}" stroke="black"/>"##,
            r##"<line x1="{m}" y1="{m}" x2="{m}" y2="{ybase}" stroke="black"/>"##,
            r##"<text x="{tx}" y="{h_label}" text-anchor="middle" font-size="12">{x_label}</text>"##,
            r##"<text x="14" y="{ty}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {ty})">{y_label}</text>"##,
            r##"<text x="{m}" y="{h_label}" font-size="10">0</text>"##,
            r##"<text x="{xe}" y="{h_label}" text-anchor="end" font-size="10">{xmax:.0}</text>"##,
            r##"<text x="{m2}" y="{m}" font-size="10">{ymax:.2}</text>"##,
            r##"<path d="{path}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##,
            "</svg>\n",
        ),
        w = W,
        h = H,
        m = MARGIN,
        m2 = 4.0,
        tx = W / 2.0,
        ty = H / 2.0,
        xe = W - MARGIN,
        ybase = H - MARGIN,
        h_label = H - 14.0,
        title = title,
        x_label = x_label,
        y_label = y_label,
        xmax = x_max,
        ymax = y_max,
        path = path.trim_end(),
    )
    .expect("string write");
    out
}

pub fn write_run_plots(log: &MetricsLog, out_dir: &Path, tag: &str) -> Result<(), String> {
    // Delay CDF over measured vehicles that completed acquisition.
    let mut delays: Vec<f64> = log
        .vehicles
        .iter()
        .filter(|v| v.kind.measured())
        .filter_map(|v| v.delay_us().map(|d| d as f64 / 1e6))
        .collect();
    delays.sort_by(f64::total_cmp);
    if !delays.is_empty() {
        let n = delays.len() as f64;
        let points: Vec<(f64, f64)> = delays
            .iter()
            .enumerate()
            .map(|(i, d)| (*d, (i + 1) as f64 / n))
            .collect();
        let svg = svg_chart(
            &format!("Acquisition delay CDF ({tag})"),
            "delay (s)",
            "fraction of vehicles",
            &points,
            1.0,
        );
        std::fs::write(out_dir.join(format!("delay_cdf_{tag}.svg")), svg)
            .map_err(|e| e.to_string())?;
    }

    let points: Vec<(f64, f64)> = log
        .cognizant_series
        .iter()
        .map(|(t, c, _)| (*t as f64, *c as f64))
        .collect();
    if !points.is_empty() {
        let svg = svg_chart(
            &format!("Cognizant vehicles over time ({tag})"),
            "time (s)",
            "cognizant vehicles",
            &points,
            1.0,
        );
        std::fs::write(out_dir.join(format!("cognizant_{tag}.svg")), svg)
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}
