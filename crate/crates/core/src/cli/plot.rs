//! Static SVG 1.1 line and bar plots of CSV artifacts.

use std::fmt::Write as _;
use std::path::Path;

use super::output::{read_numeric_csv, NumericCsv};
use super::{CliResult, Failure};
use crate::env::Environment;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Env,
    Eigenfunctions,
    Density,
    HistogramOverlay,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Env => "env",
            PlotKind::Eigenfunctions => "eigenfunctions",
            PlotKind::Density => "density",
            PlotKind::HistogramOverlay => "histogram-overlay",
        }
    }
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

struct Bars {
    label: String,
    /// `(lo, hi, height)`
    bins: Vec<(f64, f64, f64)>,
}

struct Figure {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
    bars: Option<Bars>,
}

/// Render `input` as an SVG of the given kind.
pub fn plot(input: &Path, out: &Path, kind: PlotKind) -> CliResult<()> {
    let figure = match kind {
        PlotKind::Env => env_figure(input)?,
        PlotKind::Eigenfunctions => curves(read_numeric_csv(input)?, "eigenfunctions", "phi")?,
        PlotKind::Density => curves(read_numeric_csv(input)?, "transition density", "p")?,
        PlotKind::HistogramOverlay => overlay(read_numeric_csv(input)?)?,
    };
    std::fs::write(out, render(&figure)).map_err(|e| Failure::Io(format!("{}: {e}", out.display())))
}

fn env_figure(input: &Path) -> CliResult<Figure> {
    let points: Vec<(f64, f64)> = if input.extension().is_some_and(|e| e == "json") {
        let env = Environment::load(input)?;
        env.grid().iter().copied().zip(env.w().iter().copied()).collect()
    } else {
        let csv = read_numeric_csv(input)?;
        if csv.headers.len() < 2 {
            return Err(Failure::Io(format!("{}: need columns x, w", input.display())));
        }
        csv.column_at(0).into_iter().zip(csv.column_at(1)).collect()
    };
    Ok(Figure {
        title: "environment".into(),
        x_label: "x".into(),
        y_label: "W".into(),
        series: vec![Series {
            label: "W".into(),
            points,
        }],
        bars: None,
    })
}

/// First column against every other column.
fn curves(csv: NumericCsv, title: &str, y_label: &str) -> CliResult<Figure> {
    if csv.headers.len() < 2 {
        return Err(Failure::Io("need at least two columns".into()));
    }
    let x = csv.column_at(0);
    let series = (1..csv.headers.len())
        .map(|k| Series {
            label: csv.headers[k].clone(),
            points: x.iter().copied().zip(csv.column_at(k)).collect(),
        })
        .collect();
    Ok(Figure {
        title: title.into(),
        x_label: csv.headers[0].clone(),
        y_label: y_label.into(),
        series,
        bars: None,
    })
}

fn overlay(csv: NumericCsv) -> CliResult<Figure> {
    let need = |name: &str| {
        csv.column(name)
            .ok_or_else(|| Failure::Io(format!("histogram CSV lacks column '{name}'")))
    };
    let lo = need("bin_lo")?;
    let hi = need("bin_hi")?;
    let dens = need("density")?;
    let bins = lo.iter().zip(&hi).zip(&dens).map(|((&l, &h), &d)| (l, h, d)).collect();
    let series = csv
        .column("spectral")
        .map(|s| {
            vec![Series {
                label: "spectral".into(),
                points: lo.iter().zip(&hi).zip(&s).map(|((&l, &h), &v)| (0.5 * (l + h), v)).collect(),
            }]
        })
        .unwrap_or_default();
    Ok(Figure {
        title: "Monte Carlo histogram".into(),
        x_label: "x".into(),
        y_label: "density".into(),
        series,
        bars: Some(Bars {
            label: "Monte Carlo".into(),
            bins,
        }),
    })
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac < 1.5 {
        1.0
    } else if frac < 3.5 {
        2.0
    } else if frac < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let r = (v * 1e9).round() / 1e9;
    if r == 0.0 {
        "0".into()
    } else if r.abs() >= 1e4 || r.abs() < 1e-3 {
        format!("{r:.1e}")
    } else {
        format!("{r}")
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render(fig: &Figure) -> String {
    let mut xs: Vec<f64> = fig.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let mut ys: Vec<f64> = fig.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    if let Some(b) = &fig.bars {
        xs.extend(b.bins.iter().flat_map(|&(l, h, _)| [l, h]));
        ys.extend(b.bins.iter().map(|&(_, _, d)| d));
        ys.push(0.0);
    }
    let finite = |v: &Vec<f64>| v.iter().copied().filter(|x| x.is_finite()).collect::<Vec<_>>();
    let (xs, ys) = (finite(&xs), finite(&ys));
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (x0, x1) = if xs.is_empty() { (0.0, 1.0) } else { (min(&xs), max(&xs)) };
    let (x0, x1) = if x1 > x0 { (x0, x1) } else { padded(x0, x1) };
    let (y0, y1) = if ys.is_empty() { (0.0, 1.0) } else { padded(min(&ys), max(&ys)) };

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&fig.title)
    );

    if let Some(b) = &fig.bars {
        let base = sy(0.0_f64.clamp(y0, y1));
        for &(l, h, d) in &b.bins {
            let (top, bottom) = if sy(d) < base { (sy(d), base) } else { (base, sy(d)) };
            let _ = writeln!(
                svg,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#aec7e8" stroke="#4a6f9c" stroke-width="0.5"/>"##,
                sx(l),
                top,
                sx(h) - sx(l),
                bottom - top
            );
        }
    }

    // axes and ticks
    let _ = writeln!(
        svg,
        r#"<path d="M{:.2} {:.2} H{:.2} M{:.2} {:.2} V{:.2}" stroke="black" fill="none"/>"#,
        LEFT,
        TOP + ph,
        LEFT + pw,
        LEFT,
        TOP + ph,
        TOP
    );
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            tick_label(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT,
            LEFT - 8.0,
            y + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(&fig.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&fig.y_label)
    );

    for (k, s) in fig.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        for (x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = write!(d, "{}{:.2},{:.2}", if d.is_empty() { "" } else { " " }, sx(*x), sy(*y));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
        );
    }

    // legend
    let mut entries: Vec<(String, &str, bool)> = Vec::new();
    if let Some(b) = &fig.bars {
        entries.push((b.label.clone(), "#aec7e8", true));
    }
    for (k, s) in fig.series.iter().enumerate() {
        entries.push((s.label.clone(), PALETTE[k % PALETTE.len()], false));
    }
    let lx = LEFT + pw + 15.0;
    for (k, (label, color, bar)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * k as f64;
        if *bar {
            let _ = writeln!(
                svg,
                r##"<rect x="{lx:.2}" y="{:.2}" width="20" height="10" fill="{color}" stroke="#4a6f9c" stroke-width="0.5"/>"##,
                y - 5.0
            );
        } else {
            let _ = writeln!(
                svg,
                r#"<line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"#,
                lx + 20.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            y + 4.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
