//! Line charts from the report CSV: one SVG per metric, rpm on the x
//! axis, one polyline per (sensor, lux) series. Cells without a value
//! leave a gap instead of dropping to zero.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sweep;

/// Report columns that get a chart, in emission order.
const PLOTTED: &[&str] = &[
    "event_rate",
    "drop_fraction",
    "omega_rel_err",
    "thickness_px",
    "tss_norm",
    "gm_norm",
    "var_norm",
    "gradvar_norm",
    "precision",
    "recall",
    "f1",
    "flow_rel_err",
];

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
    "#bcbd22", "#7f7f7f",
];

const W: f64 = 720.0;
const H: f64 = 460.0;
const ML: f64 = 72.0;
const MR: f64 = 176.0;
const MT: f64 = 40.0;
const MB: f64 = 52.0;

struct Series {
    label: String,
    /// One entry per report row of this series, in row order; None is a
    /// gap.
    points: Vec<(f64, Option<f64>)>,
}

/// Emits one SVG per plottable metric that has any data. An empty report
/// produces no files.
pub fn emit_plots(report: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let (header, rows) = sweep::read_report(report)?;
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(format!("report lacks column `{name}`")))
    };
    let (c_sensor, c_lux, c_rpm) = (col("sensor")?, col("lux")?, col("rpm")?);
    let lux_values: Vec<&str> = {
        let mut v: Vec<&str> = rows.iter().map(|r| r[c_lux].as_str()).collect();
        v.dedup();
        v.sort_unstable();
        v.dedup();
        v
    };

    let mut written = Vec::new();
    fs::create_dir_all(out_dir)?;
    for metric in PLOTTED {
        let Ok(c_val) = col(metric) else { continue };
        let mut series: Vec<Series> = Vec::new();
        for row in &rows {
            let label = if lux_values.len() > 1 {
                format!("{} @ {} lux", row[c_sensor], row[c_lux])
            } else {
                row[c_sensor].clone()
            };
            let rpm: f64 = match row[c_rpm].parse() {
                Ok(v) => v,
                Err(_) => continue,
            };
            let val = row[c_val].parse::<f64>().ok().filter(|v| v.is_finite());
            match series.iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push((rpm, val)),
                None => series.push(Series { label, points: vec![(rpm, val)] }),
            }
        }
        if series.iter().all(|s| s.points.iter().all(|(_, v)| v.is_none())) {
            continue;
        }
        let path = out_dir.join(format!("{metric}.svg"));
        fs::write(&path, chart_svg(metric, &series))?;
        written.push(path);
    }
    Ok(written)
}

fn chart_svg(title: &str, series: &[Series]) -> String {
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, v) in &s.points {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            if let Some(y) = v {
                y_lo = y_lo.min(y);
                y_hi = y_hi.max(y);
            }
        }
    }
    if x_lo >= x_hi {
        x_lo -= 1.0;
        x_hi += 1.0;
    }
    if y_lo >= y_hi {
        let pad = y_lo.abs().max(0.5) * 0.1 + 0.1;
        y_lo -= pad;
        y_hi += pad;
    } else {
        let pad = (y_hi - y_lo) * 0.05;
        y_lo -= pad;
        y_hi += pad;
    }
    let px = |x: f64| ML + (x - x_lo) / (x_hi - x_lo) * (W - ML - MR);
    let py = |y: f64| H - MB - (y - y_lo) / (y_hi - y_lo) * (H - MT - MB);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!("<rect width=\"{W}\" height=\"{H}\" fill=\"#ffffff\"/>\n"));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-size=\"16\" fill=\"#222222\">{}</text>\n",
        ML,
        xml_escape(title)
    ));

    // axes and ticks
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let x = x_lo + f * (x_hi - x_lo);
        let y = y_lo + f * (y_hi - y_lo);
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>\n",
            px(x),
            py(y_lo),
            px(x),
            py(y_hi)
        ));
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>\n",
            px(x_lo),
            py(y),
            px(x_hi),
            py(y)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"#444444\" \
             text-anchor=\"middle\">{}</text>\n",
            px(x),
            H - MB + 16.0,
            tick(x)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"#444444\" \
             text-anchor=\"end\">{}</text>\n",
            ML - 6.0,
            py(y) + 4.0,
            tick(y)
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#222222\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{:.1}\" stroke=\"#222222\"/>\n",
        H - MB
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"#222222\" \
         text-anchor=\"middle\">rpm</text>\n",
        (ML + W - MR) / 2.0,
        H - 14.0
    ));

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        // split into contiguous runs so gaps stay gaps
        let mut run: Vec<(f64, f64)> = Vec::new();
        let flush = |run: &mut Vec<(f64, f64)>, svg: &mut String| {
            if run.len() > 1 {
                let pts: Vec<String> =
                    run.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
                svg.push_str(&format!(
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" \
                     stroke-width=\"1.8\"/>\n",
                    pts.join(" ")
                ));
            }
            for &(x, y) in run.iter() {
                svg.push_str(&format!(
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                    px(x),
                    py(y)
                ));
            }
            run.clear();
        };
        for &(x, v) in &s.points {
            match v {
                Some(y) => run.push((x, y)),
                None => flush(&mut run, &mut svg),
            }
        }
        flush(&mut run, &mut svg);

        let ly = MT + 14.0 + si as f64 * 18.0;
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
            W - MR + 12.0,
            ly - 10.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"#222222\">{}</text>\n",
            W - MR + 30.0,
            ly,
            xml_escape(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
