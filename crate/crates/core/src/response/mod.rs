//! Time responses to step power disturbances: per-mode closed forms summed
//! over modes, and direct integration of the coupled closed loop.

pub mod closed_form;
pub mod direct;
pub mod modal;
pub mod sweep;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BusId;
use crate::modal::{Side, SideDecomposition};
use crate::registry::Registry;

pub use direct::DirectEngine;
pub use modal::{final_values, FinalValues, ModalEngine};

/// Traces stop once any |frequency| or |voltage| deviation exceeds this (p.u.).
pub const TRUNCATION_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Active,
    Reactive,
}

impl Quantity {
    pub fn side(&self) -> Side {
        match self {
            Quantity::Active => Side::Frequency,
            Quantity::Reactive => Side::Voltage,
        }
    }
}

/// Ideal step of `magnitude` p.u. injected at `bus` from `start_time` on.
/// A load increase of 0.2 p.u. is a magnitude of -0.2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub bus: BusId,
    pub quantity: Quantity,
    pub magnitude: f64,
    #[serde(default)]
    pub start_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_output_dt")]
    pub output_dt: f64,
    /// Uniform damping used to give springs-only voltage models dynamics.
    #[serde(default = "default_voltage_damping")]
    pub voltage_damping: f64,
}

fn default_t_end() -> f64 {
    20.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_output_dt() -> f64 {
    1e-2
}
fn default_voltage_damping() -> f64 {
    1.0
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings {
            t_end: default_t_end(),
            dt: default_dt(),
            output_dt: default_output_dt(),
            voltage_damping: default_voltage_damping(),
        }
    }
}

impl SimulationSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.t_end) || !ok(self.dt) || !ok(self.output_dt) || !ok(self.voltage_damping) {
            return Err(Error::input("t_end, dt, output_dt and voltage_damping must be positive"));
        }
        if self.output_dt > self.t_end {
            return Err(Error::input("output_dt exceeds t_end"));
        }
        Ok(())
    }

    pub fn output_grid(&self) -> Vec<f64> {
        let n = (self.t_end / self.output_dt).round() as usize;
        (0..=n).map(|k| k as f64 * self.output_dt).collect()
    }
}

/// Optional first-order governor kept out of the unified reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Governor {
    pub k_p: f64,
    pub k_s: f64,
    pub t_g: f64,
}

/// Per-bus device dynamics `J s^2 + D s + K` (voltage: `D s + K`).
/// With a governor, `d` and `k` exclude its gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusDynamics {
    pub j: f64,
    pub d: f64,
    pub k: f64,
    pub governor: Option<Governor>,
}

impl BusDynamics {
    pub fn is_zero(&self) -> bool {
        self.j == 0.0 && self.d == 0.0 && self.k == 0.0 && self.governor.is_none()
    }
}

/// Everything needed to compute responses of one side.
#[derive(Debug, Clone, PartialEq)]
pub struct SideModel {
    pub side: Side,
    pub bus_ids: Vec<BusId>,
    /// Network matrix over all terminal buses, infinite ones included.
    pub l: DMatrix<f64>,
    pub infinite: Vec<BusId>,
    pub dynamics: Vec<BusDynamics>,
    /// `omega0` on the frequency side, 1 on the voltage side.
    pub gain: f64,
    pub decomposition: SideDecomposition,
}

impl SideModel {
    /// Disturbance vector over terminal buses active at time `t`.
    pub fn input_at(&self, disturbances: &[Disturbance], t: f64) -> DVector<f64> {
        let mut u = DVector::zeros(self.bus_ids.len());
        for d in disturbances.iter().filter(|d| d.quantity.side() == self.side && t >= d.start_time) {
            if let Some(k) = self.bus_ids.iter().position(|&b| b == d.bus) {
                u[k] += d.magnitude;
            }
        }
        u
    }

    pub fn check_disturbances(&self, disturbances: &[Disturbance]) -> Result<()> {
        for d in disturbances {
            if !d.magnitude.is_finite() || !d.start_time.is_finite() || d.start_time < 0.0 {
                return Err(Error::input(format!(
                    "disturbance at bus {} needs a finite magnitude and start_time >= 0",
                    d.bus
                )));
            }
            if d.quantity.side() == self.side && !self.bus_ids.contains(&d.bus) {
                return Err(Error::input(format!("disturbance at bus {} which is not a terminal bus", d.bus)));
            }
        }
        Ok(())
    }

    /// Disturbances relevant to this side, in start-time order.
    pub fn relevant<'a>(&self, disturbances: &'a [Disturbance]) -> Vec<&'a Disturbance> {
        let mut v: Vec<&Disturbance> = disturbances.iter().filter(|d| d.quantity.side() == self.side).collect();
        v.sort_by(|a, b| a.start_time.total_cmp(&b.start_time));
        v
    }
}

/// Series of one mode, indexed `[bus][sample]` over the decomposition's active buses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeTrace {
    pub number: usize,
    pub label: String,
    pub x: Vec<Vec<f64>>,
    pub rate: Vec<Vec<f64>>,
    pub power: Vec<Vec<f64>>,
}

/// `x` is the angle (rad) or relative voltage deviation; `rate` is the
/// frequency deviation (p.u.) or the voltage rate; `power` is device active
/// power or virtual reactive power, over `power_buses`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseTrace {
    pub side: Side,
    pub engine: &'static str,
    pub t: Vec<f64>,
    pub bus_ids: Vec<BusId>,
    pub x: Vec<Vec<f64>>,
    pub rate: Vec<Vec<f64>>,
    pub power_buses: Vec<BusId>,
    pub power: Vec<Vec<f64>>,
    pub modes: Vec<ModeTrace>,
    /// Time of the first sample beyond the truncation limit.
    pub truncated_at: Option<f64>,
}

impl ResponseTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn bus_index(&self, bus: BusId) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == bus)
    }

    /// Cuts all series after sample `n` (exclusive).
    pub(crate) fn truncate(&mut self, n: usize) {
        self.t.truncate(n);
        for s in self.x.iter_mut().chain(self.rate.iter_mut()).chain(self.power.iter_mut()) {
            s.truncate(n);
        }
        for m in self.modes.iter_mut() {
            for s in m.x.iter_mut().chain(m.rate.iter_mut()).chain(m.power.iter_mut()) {
                s.truncate(n);
            }
        }
    }

    /// Applies the truncation rule to per-bus `rate` (frequency) or `x` (voltage).
    pub(crate) fn apply_truncation(&mut self) {
        let watched = match self.side {
            Side::Frequency => &self.rate,
            Side::Voltage => &self.x,
        };
        let first = (0..self.t.len()).find(|&k| watched.iter().any(|s| !(s[k].abs() <= TRUNCATION_LIMIT)));
        if let Some(k) = first {
            self.truncated_at = Some(self.t[k]);
            self.truncate(k + 1);
        }
    }

    /// Largest absolute gap between two traces of the same side and grid over
    /// `x` (voltage only), `rate` and `power`.
    pub fn max_gap(&self, other: &ResponseTrace) -> Result<f64> {
        if self.side != other.side || self.bus_ids != other.bus_ids || self.t.len() != other.t.len() {
            return Err(Error::input("traces are not comparable"));
        }
        let mut gap = 0.0f64;
        let mut cmp = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| {
            for (sa, sb) in a.iter().zip(b) {
                for (x, y) in sa.iter().zip(sb) {
                    gap = gap.max((x - y).abs());
                }
            }
        };
        if self.side == Side::Voltage {
            cmp(&self.x, &other.x);
        }
        cmp(&self.rate, &other.rate);
        cmp(&self.power, &other.power);
        Ok(gap)
    }
}

pub trait ResponseEngine: Send + Sync {
    fn name(&self) -> &'static str;
    fn simulate(&self, model: &SideModel, disturbances: &[Disturbance], settings: &SimulationSettings) -> Result<ResponseTrace>;
}

pub fn default_registry() -> Registry<dyn ResponseEngine> {
    let mut reg: Registry<dyn ResponseEngine> = Registry::new("response engine");
    reg.register("modal", Arc::new(ModalEngine));
    reg.register("direct", Arc::new(DirectEngine));
    reg
}
