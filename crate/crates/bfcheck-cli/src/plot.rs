//! Hand-emitted SVG line and step charts. No timestamps or random ids, so
//! identical inputs produce byte-identical files.

use bfcheck::stats::{ecdf_band, pav_recalibrate, GammaNullTable};
use bfcheck::rng::stream_rng;
use rand::Rng;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 40.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN_L + (v - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN_B - (v - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn svg_open(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        tx = WIDTH / 2.0,
        title = title
    )
}

fn axes(frame: &Frame, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let (left, right) = (frame.x(frame.x0), frame.x(frame.x1));
    let (bottom, top) = (frame.y(frame.y0), frame.y(frame.y1));
    s.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = fmt(left),
        b = fmt(bottom),
        r = fmt(right)
    ));
    s.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{l}\" y2=\"{t}\" stroke=\"black\"/>\n",
        l = fmt(left),
        b = fmt(bottom),
        t = fmt(top)
    ));
    for k in 0..=4 {
        let xv = frame.x0 + (frame.x1 - frame.x0) * k as f64 / 4.0;
        let yv = frame.y0 + (frame.y1 - frame.y0) * k as f64 / 4.0;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            fmt(frame.x(xv)),
            fmt(HEIGHT - MARGIN_B + 16.0),
            trim_num(xv)
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_L - 6.0),
            fmt(frame.y(yv) + 4.0),
            trim_num(yv)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n",
        fmt((frame.x(frame.x0) + frame.x(frame.x1)) / 2.0),
        fmt(HEIGHT - 6.0)
    ));
    s.push_str(&format!(
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{y_label}</text>\n",
        fmt((frame.y(frame.y0) + frame.y(frame.y1)) / 2.0),
        fmt((frame.y(frame.y0) + frame.y(frame.y1)) / 2.0)
    ));
    s
}

fn trim_num(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.3}")
    }
}

fn polyline(frame: &Frame, points: &[(f64, f64)], style: &str) -> String {
    if points.is_empty() {
        return String::new();
    }
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{},{}", fmt(frame.x(x)), fmt(frame.y(y))))
        .collect();
    format!("<polyline points=\"{}\" fill=\"none\" {style}/>\n", coords.join(" "))
}

/// ECDF-minus-uniform plot with the simultaneous band from the null table.
pub fn plot_ecdf_diff(ranks: &[u32], m: usize, table: &GammaNullTable, title: &str) -> String {
    let s = ranks.len();
    let band = ecdf_band(table, 128);
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    // ECDF difference at each band grid point.
    let mut curve = Vec::with_capacity(band.len());
    for &(z, _, _) in &band {
        let j = (z * (m as f64 + 1.0)).round() as u32;
        let below = sorted.partition_point(|&r| r < j);
        curve.push((z, below as f64 / s as f64 - z));
    }
    let mut y_ext = 0.0f64;
    for &(_, lo, hi) in &band {
        y_ext = y_ext.max(lo.abs()).max(hi.abs());
    }
    for &(_, d) in &curve {
        y_ext = y_ext.max(d.abs());
    }
    y_ext = (y_ext * 1.15).max(1e-3);
    let frame = Frame {
        x0: 0.0,
        x1: 1.0,
        y0: -y_ext,
        y1: y_ext,
    };
    let mut svg = svg_open(title);
    // Band polygon.
    let mut pts: Vec<String> = band
        .iter()
        .map(|&(z, _, hi)| format!("{},{}", fmt(frame.x(z)), fmt(frame.y(hi))))
        .collect();
    for &(z, lo, _) in band.iter().rev() {
        pts.push(format!("{},{}", fmt(frame.x(z)), fmt(frame.y(lo))));
    }
    svg.push_str(&format!(
        "<polygon points=\"{}\" fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\"/>\n",
        pts.join(" ")
    ));
    svg.push_str(&polyline(
        &frame,
        &[(0.0, 0.0), (1.0, 0.0)],
        "stroke=\"#888888\" stroke-dasharray=\"4 3\"",
    ));
    svg.push_str(&polyline(&frame, &curve, "stroke=\"#d95f02\" stroke-width=\"1.5\""));
    svg.push_str(&axes(&frame, "rank quantile", "ECDF - uniform"));
    svg.push_str("</svg>\n");
    svg
}

/// Reliability diagram: isotonic recalibration curve against the diagonal,
/// with a pointwise consistency band from resampled outcomes.
pub fn plot_calibration(probs: &[f64], outcomes: &[f64], seed: u64, title: &str) -> String {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    let sorted_probs: Vec<f64> = order.iter().map(|&i| probs[i]).collect();
    let fit = pav_recalibrate(probs, outcomes).expect("validated by caller");
    let fitted_sorted: Vec<f64> = order.iter().map(|&i| fit[i]).collect();

    // Pointwise 95% band from outcomes resampled under the forecasts.
    let b = 200usize;
    let n = probs.len();
    let stride = (n / 64).max(1);
    let grid_idx: Vec<usize> = (0..n).step_by(stride).chain([n - 1]).collect();
    let mut per_point: Vec<Vec<f64>> = vec![Vec::with_capacity(b); grid_idx.len()];
    for rep in 0..b as u64 {
        let mut rng = stream_rng(seed, rep);
        let resampled: Vec<f64> = sorted_probs
            .iter()
            .map(|&p| f64::from(rng.random::<f64>() < p))
            .collect();
        let rep_fit = pav_recalibrate(&sorted_probs, &resampled).expect("valid probs");
        for (slot, &gi) in per_point.iter_mut().zip(&grid_idx) {
            slot.push(rep_fit[gi]);
        }
    }
    let frame = Frame {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };
    let mut svg = svg_open(title);
    let mut upper = Vec::with_capacity(grid_idx.len());
    let mut lower = Vec::with_capacity(grid_idx.len());
    for (slot, &gi) in per_point.iter_mut().zip(&grid_idx) {
        slot.sort_unstable_by(f64::total_cmp);
        let lo = slot[((0.025 * b as f64).floor() as usize).min(b - 1)];
        let hi = slot[((0.975 * b as f64).ceil() as usize - 1).min(b - 1)];
        lower.push((sorted_probs[gi], lo));
        upper.push((sorted_probs[gi], hi));
    }
    let mut pts: Vec<String> = upper
        .iter()
        .map(|&(x, y)| format!("{},{}", fmt(frame.x(x)), fmt(frame.y(y))))
        .collect();
    for &(x, y) in lower.iter().rev() {
        pts.push(format!("{},{}", fmt(frame.x(x)), fmt(frame.y(y))));
    }
    svg.push_str(&format!(
        "<polygon points=\"{}\" fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\"/>\n",
        pts.join(" ")
    ));
    svg.push_str(&polyline(
        &frame,
        &[(0.0, 0.0), (1.0, 1.0)],
        "stroke=\"#888888\" stroke-dasharray=\"4 3\"",
    ));
    let curve: Vec<(f64, f64)> = sorted_probs
        .iter()
        .zip(&fitted_sorted)
        .map(|(&p, &f)| (p, f))
        .collect();
    svg.push_str(&polyline(&frame, &curve, "stroke=\"#d95f02\" stroke-width=\"1.5\""));
    svg.push_str(&axes(&frame, "forecast probability", "observed frequency"));
    svg.push_str("</svg>\n");
    svg
}

/// All histories of one check as semi-transparent lines, the rejection
/// threshold as a horizontal rule, and the first-80%-power point as a
/// vertical rule when attained.
pub fn plot_history(
    grid: &[usize],
    values: &[Vec<Option<f64>>],
    threshold: f64,
    first_80: Option<usize>,
    title: &str,
    y_label: &str,
) -> String {
    assert!(!grid.is_empty(), "history plot needs a non-empty grid");
    let mut y_min = threshold;
    let mut y_max = threshold;
    for row in values {
        for v in row.iter().flatten() {
            y_min = y_min.min(*v);
            y_max = y_max.max(*v);
        }
    }
    if y_min == y_max {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    let frame = Frame {
        x0: grid[0] as f64,
        x1: *grid.last().unwrap() as f64,
        y0: y_min - pad,
        y1: y_max + pad,
    };
    let mut svg = svg_open(title);
    for row in values {
        let pts: Vec<(f64, f64)> = grid
            .iter()
            .zip(row)
            .filter_map(|(&n, v)| v.map(|y| (n as f64, y)))
            .collect();
        svg.push_str(&polyline(
            &frame,
            &pts,
            "stroke=\"#444444\" stroke-opacity=\"0.25\"",
        ));
    }
    svg.push_str(&polyline(
        &frame,
        &[(frame.x0, threshold), (frame.x1, threshold)],
        "stroke=\"#1f78b4\" stroke-width=\"1.5\"",
    ));
    if let Some(n80) = first_80 {
        svg.push_str(&polyline(
            &frame,
            &[(n80 as f64, frame.y0), (n80 as f64, frame.y1)],
            "stroke=\"#ff7f00\" stroke-width=\"1.5\"",
        ));
    }
    svg.push_str(&axes(&frame, "simulations", y_label));
    svg.push_str("</svg>\n");
    svg
}
