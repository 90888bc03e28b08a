//! Static SVG figures built from previously emitted data files. The report
//! layer reads CSV/JSON artifacts only — it never touches a model — and its
//! output is a pure function of the input bytes.

use std::fmt::Write as _;

use thiserror::Error;

use crate::evaluation::{AttentionProfile, ProbeRow, ProbeTable};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("bad csv: {0}")]
    Csv(String),
    #[error("bad profile json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Parse the probe-suite CSV emitted by `evaluation::ProbeTable::write_csv`.
pub fn parse_probe_csv(text: &str) -> Result<ProbeTable, ReportError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| ReportError::Csv("empty".into()))?;
    if header != "probe,recall_at_1_t2i,recall_at_1_i2t,delta_t2i,delta_i2t,n_queries" {
        return Err(ReportError::Csv(format!("unexpected header: {header}")));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(ReportError::Csv(format!("line {}: {} fields", ln + 2, parts.len())));
        }
        let num = |s: &str| -> Result<f64, ReportError> {
            s.parse().map_err(|_| ReportError::Csv(format!("bad number {s}")))
        };
        rows.push(ProbeRow {
            probe: parts[0].to_string(),
            recall_at_1_t2i: num(parts[1])?,
            recall_at_1_i2t: num(parts[2])?,
            delta_t2i: num(parts[3])?,
            delta_i2t: num(parts[4])?,
            n_queries: parts[5]
                .parse()
                .map_err(|_| ReportError::Csv(format!("bad count {}", parts[5])))?,
        });
    }
    Ok(ProbeTable { rows })
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        WIDTH / 2.0
    )
}

/// Bar chart of T2I recall deltas per probe.
pub fn probe_chart_svg(table: &ProbeTable) -> String {
    let mut s = svg_open("Probe recall@1 T2I delta vs keep");
    let rows = &table.rows;
    let max_abs = rows
        .iter()
        .map(|r| r.delta_t2i.abs())
        .fold(0.05f64, f64::max);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let zero_y = MARGIN + plot_h / 2.0;
    let scale = plot_h / 2.0 / max_abs;
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN}\" y1=\"{zero_y:.2}\" x2=\"{:.2}\" y2=\"{zero_y:.2}\" stroke=\"#888\"/>",
        WIDTH - MARGIN
    );
    let n = rows.len().max(1);
    let band = plot_w / n as f64;
    for (i, r) in rows.iter().enumerate() {
        let x = MARGIN + i as f64 * band + band * 0.15;
        let w = band * 0.7;
        let h = r.delta_t2i.abs() * scale;
        let y = if r.delta_t2i >= 0.0 { zero_y - h } else { zero_y };
        let fill = if r.delta_t2i >= 0.0 { "#4477aa" } else { "#cc6677" };
        let _ = writeln!(
            s,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>"
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            x + w / 2.0,
            HEIGHT - MARGIN / 2.0,
            r.probe
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"10\">{:+.3}</text>",
            x + w / 2.0,
            (y - 4.0).min(zero_y + h + 12.0),
            r.delta_t2i
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Line chart of the mean pre-softmax attention profile with the occupancy
/// histogram underneath. No smoothing: raw means.
pub fn attention_chart_svg(profile: &AttentionProfile) -> String {
    let mut s = svg_open("Output-token attention profile (pre-softmax mean)");
    let l = profile.mean_pre_softmax.len();
    let occupied: Vec<(usize, f64)> = profile
        .mean_pre_softmax
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(p, &v)| (p, v))
        .collect();
    if occupied.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(_, v) in &occupied {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN - 40.0;
    let x_of = |p: usize| MARGIN + p as f64 / (l.max(2) - 1) as f64 * plot_w;
    let y_of = |v: f64| MARGIN + (hi - v) / (hi - lo) * plot_h;
    let mut points = String::new();
    for &(p, v) in &occupied {
        let _ = write!(points, "{:.2},{:.2} ", x_of(p), y_of(v));
    }
    let _ = writeln!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#4477aa\" stroke-width=\"1.5\"/>",
        points.trim_end()
    );
    // occupancy strip
    let occ_max = profile.occupancy.iter().copied().max().unwrap_or(1).max(1) as f64;
    let strip_y = HEIGHT - MARGIN - 30.0;
    for (p, &o) in profile.occupancy.iter().enumerate() {
        if o == 0 {
            continue;
        }
        let h = o as f64 / occ_max * 24.0;
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"#ddccbb\"/>",
            x_of(p),
            strip_y + 24.0 - h,
            (plot_w / l as f64).max(1.0)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{MARGIN}\" y=\"{:.2}\" font-size=\"10\">flatness(p&#8805;20) = {:.5}; SOT post-softmax mean = {:.3}</text>",
        HEIGHT - 8.0,
        profile.flatness,
        profile.sot_post_softmax_mean
    );
    s.push_str("</svg>\n");
    s
}
