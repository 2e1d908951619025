//! Minimal static SVG 1.1 line charts: axes, ticks, legend and polylines.

use std::fmt::Write;

use crate::modal::Side;
use crate::output::OutputFile;
use crate::response::sweep::SweepResult;
use crate::response::ResponseTrace;

const W: f64 = 640.0;
const H: f64 = 360.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 45.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"];

pub struct Series<'a> {
    pub name: String,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

fn short(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if (1e-3..1e4).contains(&x.abs()) {
        let s = format!("{x:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{x:.2e}")
    }
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
        let pad = if hi == 0.0 { 1.0 } else { hi.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders one chart. Output depends only on the data.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = range(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = range(series.iter().flat_map(|s| s.y.iter().copied()));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (gx, gy) = (px(xv), py(yv));
        let _ = writeln!(s, r##"<line x1="{gx:.2}" y1="{TOP}" x2="{gx:.2}" y2="{:.2}" stroke="#dddddd"/>"##, TOP + ph);
        let _ = writeln!(s, r#"<text x="{gx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 15.0, short(xv));
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{gy:.2}" x2="{:.2}" y2="{gy:.2}" stroke="#dddddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 5.0, gy + 4.0, short(yv));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 8.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{0}" text-anchor="middle" transform="rotate(-90 14 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(y_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut pts = String::new();
        for (x, y) in ser.x.iter().zip(ser.y) {
            if x.is_finite() && y.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", px(*x), py(*y));
            }
        }
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.trim_end());
        let ly = TOP + 12.0 + 16.0 * k as f64;
        let lx = LEFT + pw + 10.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 24.0, ly + 4.0, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

/// Per-bus, per-mode and power panels of one trace.
pub fn trace_panels(t: &ResponseTrace) -> Vec<OutputFile> {
    let side = t.side.to_string();
    let (quantity, values, unit) = match t.side {
        Side::Frequency => ("omega", &t.rate, "frequency deviation (p.u.)"),
        Side::Voltage => ("v", &t.x, "voltage deviation dV/Ve (p.u.)"),
    };
    let power_name = match t.side {
        Side::Frequency => "active power (p.u.)",
        Side::Voltage => "virtual reactive power (p.u.)",
    };
    let bus_series: Vec<Series> = t
        .bus_ids
        .iter()
        .zip(values)
        .map(|(b, y)| Series { name: format!("bus {b}"), x: &t.t, y })
        .collect();
    let mut files = vec![OutputFile {
        name: format!("{side}-buses.svg"),
        contents: line_chart(&format!("{side} response per bus ({})", t.engine), "t (s)", unit, &bus_series),
    }];
    // mode components observed at the first bus carrying dynamics
    if !t.modes.is_empty() && !t.power_buses.is_empty() {
        let mode_series: Vec<Series> = t
            .modes
            .iter()
            .map(|m| Series {
                name: m.label.clone(),
                x: &t.t,
                y: match t.side {
                    Side::Frequency => &m.rate[0],
                    Side::Voltage => &m.x[0],
                },
            })
            .collect();
        files.push(OutputFile {
            name: format!("{side}-modes.svg"),
            contents: line_chart(
                &format!("{side} modal components at bus {}", t.power_buses[0]),
                "t (s)",
                &format!("{quantity} (p.u.)"),
                &mode_series,
            ),
        });
    }
    let power_series: Vec<Series> = t
        .power_buses
        .iter()
        .zip(&t.power)
        .map(|(b, y)| Series { name: format!("bus {b}"), x: &t.t, y })
        .collect();
    files.push(OutputFile {
        name: format!("{side}-power.svg"),
        contents: line_chart(&format!("{side} device power"), "t (s)", power_name, &power_series),
    });
    files
}

pub fn sweep_panel(s: &SweepResult) -> OutputFile {
    let mut labels: Vec<String> = Vec::new();
    for p in &s.points {
        for sp in &p.springs {
            if !labels.contains(&sp.label) {
                labels.push(sp.label.clone());
            }
        }
    }
    let data: Vec<(String, Vec<f64>, Vec<f64>)> = labels
        .iter()
        .map(|l| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = s
                .points
                .iter()
                .filter_map(|p| p.springs.iter().find(|sp| &sp.label == l).map(|sp| (p.value, sp.k)))
                .unzip();
            (l.clone(), xs, ys)
        })
        .collect();
    let series: Vec<Series> = data.iter().map(|(n, x, y)| Series { name: n.clone(), x, y }).collect();
    OutputFile {
        name: "sweep-springs.svg".into(),
        contents: line_chart(&format!("modal springs over {}", s.path), &s.path, "modal spring K", &series),
    }
}
