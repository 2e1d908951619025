//! Modal superposition: every mode contributes `phi_k (psi_k^T u) y_k(t)`.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::BusId;
use crate::modal::{Mode, Side, SideDecomposition};
use crate::response::closed_form::ModeResponse;
use crate::response::{Disturbance, ModeTrace, ResponseEngine, ResponseTrace, SideModel, SimulationSettings};

pub struct ModalEngine;

fn mode_response(side: Side, m: &Mode) -> Result<ModeResponse> {
    match side {
        Side::Frequency => ModeResponse::second_order(m.params.j, m.params.d, m.params.k),
        Side::Voltage => ModeResponse::first_order(m.params.d, m.params.k),
    }
}

/// Modal input amplitudes `psi_k^T u_eff` for each relevant disturbance.
fn amplitudes(model: &SideModel, dist: &[&Disturbance]) -> Vec<Vec<f64>> {
    let dec = &model.decomposition;
    dist.iter()
        .map(|d| {
            let mut u = DVector::zeros(model.bus_ids.len());
            let k = model.bus_ids.iter().position(|&b| b == d.bus).unwrap();
            u[k] = d.magnitude;
            let ue = dec.effective_input(&u);
            dec.modes.iter().map(|m| m.psi.dot(&ue)).collect()
        })
        .collect()
}

impl ResponseEngine for ModalEngine {
    fn name(&self) -> &'static str {
        "modal"
    }

    fn simulate(&self, model: &SideModel, disturbances: &[Disturbance], settings: &SimulationSettings) -> Result<ResponseTrace> {
        settings.validate()?;
        model.check_disturbances(disturbances)?;
        let dec = &model.decomposition;
        if dec.static_only {
            return Err(Error::Regime(
                "springs-only voltage analysis has no modal time response; use the direct engine".into(),
            ));
        }
        let t = settings.output_grid();
        let ns = t.len();
        let na = dec.active.len();
        let dist = model.relevant(disturbances);
        let amp = amplitudes(model, &dist);
        let responses = dec
            .modes
            .iter()
            .map(|m| mode_response(model.side, m))
            .collect::<Result<Vec<_>>>()?;

        let mut modes = Vec::with_capacity(dec.modes.len());
        for (k, m) in dec.modes.iter().enumerate() {
            // modal coordinate q (x = phi q), its rate and the input a(t)
            let mut q = vec![0.0; ns];
            let mut qr = vec![0.0; ns];
            let mut a = vec![0.0; ns];
            for (n, &tn) in t.iter().enumerate() {
                for (di, d) in dist.iter().enumerate() {
                    let ak = amp[di][k];
                    if ak == 0.0 || tn < d.start_time {
                        continue;
                    }
                    let r = responses[k].at(tn - d.start_time);
                    q[n] += model.gain * ak * r.y;
                    qr[n] += ak * r.h;
                    a[n] += ak;
                }
            }
            let x = (0..na).map(|i| q.iter().map(|v| m.phi[i] * v).collect()).collect();
            let rate = (0..na).map(|i| qr.iter().map(|v| m.phi[i] * v).collect()).collect();
            // device power of mode k: -S_i phi_i (a - l_m q) / s_m
            let power = (0..na)
                .map(|i| {
                    let c = -dec.s[i] * m.phi[i] / m.s_m;
                    (0..ns).map(|n| c * (a[n] - m.l_m * q[n])).collect()
                })
                .collect();
            modes.push(ModeTrace {
                number: m.number,
                label: m.label(model.side),
                x,
                rate,
                power,
            });
        }

        let sum = |pick: fn(&ModeTrace) -> &Vec<Vec<f64>>, i: usize, n: usize| -> f64 {
            modes.iter().map(|mt| pick(mt)[i][n]).sum()
        };
        let mut x_active: Vec<Vec<f64>> = (0..na).map(|i| (0..ns).map(|n| sum(|m| &m.x, i, n)).collect()).collect();
        let mut r_active: Vec<Vec<f64>> = (0..na).map(|i| (0..ns).map(|n| sum(|m| &m.rate, i, n)).collect()).collect();
        let power: Vec<Vec<f64>> = (0..na).map(|i| (0..ns).map(|n| sum(|m| &m.power, i, n)).collect()).collect();

        let nb = model.bus_ids.len();
        let mut x = vec![vec![0.0; ns]; nb];
        let mut rate = vec![vec![0.0; ns]; nb];
        for (i, bus) in dec.active.iter().enumerate() {
            let b = model.bus_ids.iter().position(|x| x == bus).unwrap();
            x[b] = std::mem::take(&mut x_active[i]);
            rate[b] = std::mem::take(&mut r_active[i]);
        }
        if !dec.passive.is_empty() {
            let pos: Vec<usize> = dec
                .passive
                .iter()
                .map(|p| model.bus_ids.iter().position(|x| x == p).unwrap())
                .collect();
            let active_pos: Vec<usize> = dec
                .active
                .iter()
                .map(|p| model.bus_ids.iter().position(|x| x == p).unwrap())
                .collect();
            for n in 0..ns {
                let u = model.input_at(disturbances, t[n]);
                let xa = DVector::from_fn(na, |i, _| x[active_pos[i]][n]);
                let ra = DVector::from_fn(na, |i, _| rate[active_pos[i]][n]);
                let xp = dec.passive_response(&xa, &u);
                let rp = dec.passive_response(&ra, &DVector::zeros(nb));
                for (j, &p) in pos.iter().enumerate() {
                    x[p][n] = xp[j];
                    rate[p][n] = rp[j];
                }
            }
        }
        let mut trace = ResponseTrace {
            side: model.side,
            engine: self.name(),
            t,
            bus_ids: model.bus_ids.clone(),
            x,
            rate,
            power_buses: dec.active.clone(),
            power,
            modes,
            truncated_at: None,
        };
        trace.apply_truncation();
        Ok(trace)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeFinalValue {
    pub number: usize,
    pub label: String,
    /// Per active bus; `None` when the mode diverges or has no final value.
    pub values: Option<Vec<f64>>,
    pub divergent: bool,
}

/// Steady-state frequency (rate) or voltage deviation per mode and per bus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalValues {
    pub side: Side,
    pub buses: Vec<BusId>,
    pub modes: Vec<ModeFinalValue>,
    /// Sum over modes; `None` if any excited mode has no final value.
    pub total: Option<Vec<f64>>,
}

/// Final-value theorem applied mode by mode to the summed step inputs.
///
/// Frequency: `phi a / D_M` when `K_M = 0`, else 0. Voltage: `phi a / K_MV`.
pub fn final_values(decomp: &SideDecomposition, bus_ids: &[BusId], disturbances: &[Disturbance]) -> Result<FinalValues> {
    let side = decomp.side;
    let mut u = DVector::zeros(bus_ids.len());
    for d in disturbances.iter().filter(|d| d.quantity.side() == side) {
        let k = bus_ids
            .iter()
            .position(|&b| b == d.bus)
            .ok_or_else(|| Error::input(format!("disturbance at bus {} which is not a terminal bus", d.bus)))?;
        u[k] += d.magnitude;
    }
    let ue = decomp.effective_input(&u);
    let na = decomp.active.len();
    let mut total = Some(vec![0.0; na]);
    let mut modes = Vec::new();
    for m in &decomp.modes {
        let a = m.psi.dot(&ue);
        let p = m.params;
        let scale = p.j.abs().max(p.d.abs()).max(p.k.abs()).max(f64::MIN_POSITIVE);
        let k_zero = p.k.abs() <= 1e-13 * scale;
        let (coef, divergent) = match side {
            Side::Frequency if k_zero && p.d > 0.0 => (Some(a / p.d), false),
            Side::Frequency if k_zero => (None, true),
            Side::Frequency if p.k > 0.0 && p.d >= 0.0 && p.j >= 0.0 => (Some(0.0), false),
            Side::Frequency => (None, true),
            Side::Voltage if p.k > 0.0 && !k_zero && p.d >= 0.0 => (Some(a / p.k), false),
            Side::Voltage => (None, true),
        };
        let values = coef.map(|c| (0..na).map(|i| m.phi[i] * c).collect::<Vec<f64>>());
        match (&mut total, &values) {
            (Some(t), Some(v)) => t.iter_mut().zip(v).for_each(|(t, v)| *t += v),
            (Some(_), None) if a.abs() > 1e-15 => total = None,
            _ => {}
        }
        modes.push(ModeFinalValue {
            number: m.number,
            label: m.label(side),
            values,
            divergent: divergent && a.abs() > 1e-15,
        });
    }
    Ok(FinalValues {
        side,
        buses: decomp.active.clone(),
        modes,
        total,
    })
}
