//! CSV tables. Numbers use `.` decimals and shortest round-trip formatting;
//! infinities are written as `inf`, missing values as empty cells.

use std::fmt::Write;

use crate::metrics::StrengthReport;
use crate::modal::Side;
use crate::response::sweep::SweepResult;
use crate::response::ResponseTrace;
use crate::run::RunReport;

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x == 0.0 {
        "0".into()
    } else if (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn names(side: Side) -> (&'static str, &'static str, &'static str) {
    match side {
        Side::Frequency => ("theta", "omega", "p"),
        Side::Voltage => ("v", "dv", "virtual_q"),
    }
}

/// Columns: `t`, per-bus quantities, per-mode quantities, device powers
/// (per-bus totals, then per mode). All traces share the time grid.
pub fn traces(traces: &[ResponseTrace]) -> String {
    let mut header = vec!["t".to_string()];
    let mut cols: Vec<&[f64]> = Vec::new();
    for tr in traces {
        let (x, r, _) = names(tr.side);
        for (i, b) in tr.bus_ids.iter().enumerate() {
            header.push(format!("{x}_{b}"));
            cols.push(&tr.x[i]);
            header.push(format!("{r}_{b}"));
            cols.push(&tr.rate[i]);
        }
    }
    for tr in traces {
        let (x, r, _) = names(tr.side);
        let buses = &tr.power_buses;
        for m in &tr.modes {
            for (i, b) in buses.iter().enumerate() {
                header.push(format!("{}_{x}_{b}", m.label));
                cols.push(&m.x[i]);
                header.push(format!("{}_{r}_{b}", m.label));
                cols.push(&m.rate[i]);
            }
        }
    }
    for tr in traces {
        let (_, _, p) = names(tr.side);
        for (i, b) in tr.power_buses.iter().enumerate() {
            header.push(format!("{p}_{b}"));
            cols.push(&tr.power[i]);
        }
        for m in &tr.modes {
            for (i, b) in tr.power_buses.iter().enumerate() {
                header.push(format!("{}_{p}_{b}", m.label));
                cols.push(&m.power[i]);
            }
        }
    }
    let t = traces.iter().max_by_key(|t| t.t.len()).map(|t| t.t.as_slice()).unwrap_or(&[]);
    let mut out = header.join(",");
    out.push('\n');
    for (k, tk) in t.iter().enumerate() {
        out.push_str(&num(*tk));
        for c in &cols {
            out.push(',');
            if let Some(v) = c.get(k) {
                out.push_str(&num(*v));
            }
        }
        out.push('\n');
    }
    out
}

fn strength_rows(s: &StrengthReport, out: &mut String) {
    for m in &s.modes {
        let side = m.side.to_string();
        let row = |out: &mut String, q: &str, v: String| {
            let _ = writeln!(out, "mode,{side},{},{},,,{q},{v}", m.number, m.label);
        };
        row(out, "lambda", num(m.lambda));
        if !m.infinite {
            row(out, "s_m", num(m.s_m));
            row(out, "l_m", num(m.l_m));
        }
        if m.side == Side::Frequency {
            row(out, "j", opt(m.j));
        }
        row(out, "d", num(m.d));
        row(out, "k", num(m.k));
        row(out, "collapse", (m.collapse as u8).to_string());
    }
    for e in &s.bus_specific {
        let side = e.side.to_string();
        let label = s
            .modes
            .iter()
            .find(|m| m.side == e.side && m.number == e.mode)
            .map(|m| m.label.clone())
            .unwrap_or_default();
        if let Some(j) = e.j {
            let _ = writeln!(out, "bus_specific,{side},{},{label},{},{},j,{}", e.mode, e.observe, e.disturb, num(j));
        }
        let _ = writeln!(out, "bus_specific,{side},{},{label},{},{},d,{}", e.mode, e.observe, e.disturb, num(e.d));
        let _ = writeln!(out, "bus_specific,{side},{},{label},{},{},k,{}", e.mode, e.observe, e.disturb, num(e.k));
    }
    for n in &s.nodal_inertia {
        let _ = writeln!(out, "nodal_inertia,frequency,,,{},{},j,{}", n.observe, n.disturb, num(n.value));
    }
    if let Some(v) = s.cm_v_spring_estimate {
        let _ = writeln!(out, "metric,voltage,,,,,cm_v_spring_estimate,{}", num(v));
    }
    if let Some(v) = s.gscr {
        let _ = writeln!(out, "metric,voltage,,,,,gscr,{}", num(v));
    }
    if let Some(b) = &s.bridge {
        for (q, v) in [
            ("bridge_k_mv", b.k_mv),
            ("bridge_gscr_form", b.gscr_form),
            ("bridge_quadratic_form", b.quadratic_form),
            ("bridge_relative_gap", b.relative_gap),
        ] {
            let _ = writeln!(out, "metric,voltage,{},,,,{q},{}", b.mode, num(v));
        }
    }
    if let Some(m) = s.first_dm_v {
        let _ = writeln!(out, "metric,voltage,{m},,,,first_dm,{m}");
    }
}

/// Long-format strength report: `section,side,mode,label,observe,disturb,quantity,value`.
pub fn report(r: &RunReport) -> String {
    let mut out = String::from("section,side,mode,label,observe,disturb,quantity,value\n");
    strength_rows(&r.strength, &mut out);
    for f in &r.final_values {
        let side = f.side.to_string();
        for m in &f.modes {
            for (i, b) in f.buses.iter().enumerate() {
                let v = m.values.as_ref().map(|v| num(v[i])).unwrap_or_default();
                let _ = writeln!(out, "final_value,{side},{},{},{b},,x,{v}", m.number, m.label);
            }
            if m.divergent {
                let _ = writeln!(out, "final_value,{side},{},{},,,divergent,1", m.number, m.label);
            }
        }
        for (i, b) in f.buses.iter().enumerate() {
            let v = f.total.as_ref().map(|v| num(v[i])).unwrap_or_default();
            let _ = writeln!(out, "final_value,{side},,total,{b},,x,{v}");
        }
    }
    for g in &r.gaps {
        let _ = writeln!(out, "engine_gap,{},,{}-vs-{},,,max_gap,{}", g.side, g.engine, g.oracle, num(g.max_gap));
    }
    for t in &r.traces {
        if let Some(at) = t.truncated_at {
            let _ = writeln!(out, "trace,{},,{},,,truncated_at,{}", t.side, t.engine, num(at));
        }
    }
    let _ = writeln!(out, "network,,,,,,flow_residual,{}", num(r.flow_residual));
    out
}

/// One row per sweep value with every tracked spring.
pub fn sweep(s: &SweepResult) -> String {
    let mut labels: Vec<&str> = Vec::new();
    for p in &s.points {
        for sp in &p.springs {
            if !labels.contains(&sp.label.as_str()) {
                labels.push(&sp.label);
            }
        }
    }
    let mut out = String::from("value");
    for l in &labels {
        let _ = write!(out, ",k_{l}");
    }
    out.push_str(",first_dm,error\n");
    for p in &s.points {
        out.push_str(&num(p.value));
        for l in &labels {
            out.push(',');
            if let Some(sp) = p.springs.iter().find(|sp| sp.label == *l) {
                out.push_str(&num(sp.k));
            }
        }
        let err = p.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(out, ",{},{err}", p.first_dm.as_deref().unwrap_or(""));
    }
    out
}

pub fn crossings(s: &SweepResult) -> String {
    let mut out = String::from("label,kind,lower,upper,at,direction\n");
    for c in &s.crossings {
        let kind = match c.kind {
            crate::modal::ModeKind::Common => "CM",
            crate::modal::ModeKind::Differential => "DM",
        };
        let dir = match c.direction {
            crate::response::sweep::Direction::ToNonPositive => "to-non-positive",
            crate::response::sweep::Direction::ToPositive => "to-positive",
        };
        let _ = writeln!(out, "{},{kind},{},{},{},{dir}", c.label, num(c.lower), num(c.upper), num(c.at));
    }
    out
}
