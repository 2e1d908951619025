//! Scenario documents: network, devices, operating point, disturbances and
//! analysis options in one JSON file.

pub mod builtin;

use serde::{Deserialize, Serialize};

use crate::device::{
    DeviceEntry, DeviceKind, DeviceSet, FullDeviceParams, NominalFrequency, NominalVoltage, UnifiedDeviceParams,
    DEFAULT_OMEGA0,
};
use crate::error::{Error, Result};
use crate::grid::{Branch, Bus, BusId, BusKind};
use crate::powerflow::Injection;
use crate::response::{Disturbance, SimulationSettings};

pub const SCHEMA: &str = "modal-strength/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub bus: BusId,
    pub kind: DeviceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_v: Option<f64>,
    /// Consumed reactive power of a CRPL.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_load: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<UnifiedDeviceParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full: Option<FullDeviceParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NominalSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<NominalFrequency>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage: Option<NominalVoltage>,
    /// Unreduced nominal controls; the unified triple is derived from them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full: Option<FullDeviceParams>,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
}

fn default_omega0() -> f64 {
    DEFAULT_OMEGA0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatingMode {
    #[default]
    Flat,
    Newton,
}

impl OperatingMode {
    pub fn name(&self) -> &'static str {
        match self {
            OperatingMode::Flat => "flat",
            OperatingMode::Newton => "newton",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPointSpec {
    #[serde(default)]
    pub mode: OperatingMode,
    #[serde(default)]
    pub injections: Vec<Injection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<BusId>,
    #[serde(default = "default_slack_voltage")]
    pub slack_voltage: f64,
}

fn default_slack_voltage() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideSelection {
    Frequency,
    Voltage,
    #[default]
    Both,
}

impl SideSelection {
    pub fn frequency(&self) -> bool {
        matches!(self, SideSelection::Frequency | SideSelection::Both)
    }

    pub fn voltage(&self) -> bool {
        matches!(self, SideSelection::Voltage | SideSelection::Both)
    }
}

/// How the voltage side is modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoltageModel {
    /// Scaled copies of `G_QV0(s) = D s + K`; `s_v` are capacity ratios.
    #[default]
    Homogeneous,
    /// `G_QV0 = 1` at `s = 0`: each bus contributes its effective spring.
    StaticSprings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub side: SideSelection,
    #[serde(default)]
    pub voltage_model: VoltageModel,
    #[serde(default = "default_solver")]
    pub solver: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn default_solver() -> String {
    "auto".into()
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            side: SideSelection::Both,
            voltage_model: VoltageModel::Homogeneous,
            solver: default_solver(),
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub devices: Vec<DeviceSpec>,
    pub nominal: NominalSpec,
    #[serde(default)]
    pub operating_point: OperatingPointSpec,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    #[serde(default)]
    pub simulation: SimulationSettings,
    #[serde(default)]
    pub analysis: AnalysisSpec,
}

/// Parses and validates a scenario; schema errors carry the JSON path.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Input(format!("scenario at '{path}': {}", e.inner()))
    })?;
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Notes flagged as modeling assumptions (`"assumption: ..."`).
    pub fn assumptions(&self) -> impl Iterator<Item = &str> {
        self.notes
            .iter()
            .filter_map(|n| n.strip_prefix("assumption:").map(str::trim))
    }

    pub fn device_bus_ids(&self) -> Vec<BusId> {
        self.buses
            .iter()
            .filter(|b| b.kind == BusKind::Device)
            .map(|b| b.id)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::input(format!(
                "unsupported schema '{}' (expected '{SCHEMA}')",
                self.schema
            )));
        }
        if self.devices.is_empty() {
            return Err(Error::input("scenario has no devices"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for b in &self.buses {
            if !seen.insert(b.id) {
                return Err(Error::input(format!("duplicate bus id {}", b.id)));
            }
        }
        let terminal = self.device_bus_ids();
        for d in &self.devices {
            match self.buses.iter().find(|b| b.id == d.bus) {
                None => return Err(Error::input(format!("device references unknown bus {}", d.bus))),
                Some(b) if b.kind != BusKind::Device => {
                    return Err(Error::input(format!("device at bus {} which is an interior bus", d.bus)))
                }
                _ => {}
            }
            match d.kind {
                DeviceKind::Unified => {
                    if d.q_load.is_some() {
                        return Err(Error::input(format!("q_load given for generation device at bus {}", d.bus)));
                    }
                }
                DeviceKind::Crpl => {
                    if d.q_load.is_none() {
                        return Err(Error::input(format!("CRPL at bus {} needs q_load", d.bus)));
                    }
                    if d.s_theta.is_some_and(|s| s != 0.0) || d.s_v.is_some_and(|s| s != 0.0) {
                        return Err(Error::input(format!("CRPL at bus {} cannot carry scalings", d.bus)));
                    }
                }
                DeviceKind::Infinite => {
                    if d.s_theta.is_some() || d.s_v.is_some() || d.q_load.is_some() {
                        return Err(Error::input(format!(
                            "infinite bus {} takes no scalings or load",
                            d.bus
                        )));
                    }
                }
            }
        }
        for d in &self.disturbances {
            if !terminal.contains(&d.bus) {
                return Err(Error::input(format!("disturbance at bus {} which is not a device bus", d.bus)));
            }
        }
        if self.nominal.frequency.is_none() && self.nominal.full.is_none() {
            return Err(Error::input("nominal needs 'frequency' or 'full'"));
        }
        if self.nominal.voltage.is_none() && self.nominal.full.is_none() {
            return Err(Error::input("nominal needs 'voltage' or 'full'"));
        }
        if !(self.nominal.omega0.is_finite() && self.nominal.omega0 > 0.0) {
            return Err(Error::input("omega0 must be positive"));
        }
        if let Some(f) = &self.nominal.full {
            f.validate()?;
        }
        self.simulation.validate()?;
        if let Some(s) = &self.analysis.sweep {
            if s.values.is_empty() {
                return Err(Error::input("sweep needs at least one value"));
            }
        }
        Ok(())
    }

    /// Nominal frequency dynamics, reduced from the full controls when given.
    pub fn nominal_frequency(&self) -> NominalFrequency {
        match (&self.nominal.frequency, &self.nominal.full) {
            (Some(f), _) => *f,
            (None, Some(full)) => {
                let u = crate::device::reduce_to_unified(full);
                NominalFrequency { j: u.j_ptheta, d: u.d_ptheta, k: u.k_ptheta }
            }
            (None, None) => NominalFrequency::default(),
        }
    }

    pub fn nominal_voltage(&self) -> NominalVoltage {
        match (&self.nominal.voltage, &self.nominal.full) {
            (Some(v), _) => *v,
            (None, Some(full)) => {
                let u = crate::device::reduce_to_unified(full);
                NominalVoltage { d: u.d_qv, k: u.k_qv }
            }
            (None, None) => NominalVoltage::default(),
        }
    }

    pub fn device_set(&self) -> DeviceSet {
        let entries = self
            .devices
            .iter()
            .map(|d| DeviceEntry {
                bus: d.bus,
                kind: d.kind,
                s_theta: d.s_theta.unwrap_or(if d.kind == DeviceKind::Unified { 1.0 } else { 0.0 }),
                s_v: d.s_v.unwrap_or(if d.kind == DeviceKind::Unified { 1.0 } else { 0.0 }),
                q_load: d.q_load.unwrap_or(0.0),
                params: d.params,
                full: d.full,
            })
            .collect();
        let mut set = DeviceSet::new(entries, self.nominal_frequency(), self.nominal_voltage());
        set.omega0 = self.nominal.omega0;
        set
    }

    /// Sets the scalar addressed by `path` to `value`.
    ///
    /// Paths: `crpl.q`, `crpl.<bus>.q`, `nominal.frequency.{j,d,k}`,
    /// `nominal.voltage.{d,k}`, `device.<bus>.{s_theta,s_v}`.
    pub fn set_parameter(&mut self, path: &str, value: f64) -> Result<()> {
        let parts: Vec<&str> = path.split('.').collect();
        let bad = || Error::input(format!("unknown sweep path '{path}'"));
        let bus_of = |s: &str| s.parse::<BusId>().map_err(|_| bad());
        match parts.as_slice() {
            ["crpl", "q"] => {
                let mut any = false;
                for d in self.devices.iter_mut().filter(|d| d.kind == DeviceKind::Crpl) {
                    d.q_load = Some(value);
                    any = true;
                }
                if !any {
                    return Err(Error::input("sweep path 'crpl.q' but the scenario has no CRPL"));
                }
            }
            ["crpl", bus, "q"] => {
                let bus = bus_of(bus)?;
                let d = self
                    .devices
                    .iter_mut()
                    .find(|d| d.bus == bus && d.kind == DeviceKind::Crpl)
                    .ok_or_else(|| Error::input(format!("no CRPL at bus {bus}")))?;
                d.q_load = Some(value);
            }
            ["nominal", "frequency", field] => {
                let mut f = self.nominal_frequency();
                match *field {
                    "j" => f.j = value,
                    "d" => f.d = value,
                    "k" => f.k = value,
                    _ => return Err(bad()),
                }
                self.nominal.frequency = Some(f);
            }
            ["nominal", "voltage", field] => {
                let mut v = self.nominal_voltage();
                match *field {
                    "d" => v.d = value,
                    "k" => v.k = value,
                    _ => return Err(bad()),
                }
                self.nominal.voltage = Some(v);
            }
            ["device", bus, field] => {
                let bus = bus_of(bus)?;
                let d = self
                    .devices
                    .iter_mut()
                    .find(|d| d.bus == bus && d.kind == DeviceKind::Unified)
                    .ok_or_else(|| Error::input(format!("no generation device at bus {bus}")))?;
                match *field {
                    "s_theta" => d.s_theta = Some(value),
                    "s_v" => d.s_v = Some(value),
                    _ => return Err(bad()),
                }
                d.params = None;
            }
            _ => return Err(bad()),
        }
        Ok(())
    }
}
