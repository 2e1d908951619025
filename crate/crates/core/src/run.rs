//! End-to-end orchestration: scenario to network blocks, device matrices,
//! side models, strength report, traces and sweeps.

use nalgebra::DVector;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::device::{
    assemble_device_matrices, shift_load_spring, Capacity, DeviceKind, DeviceMatrices, DeviceSet,
};
use crate::error::{Error, Result};
use crate::grid::{build_admittance, build_jacobian_blocks, check_flow_invariance, kron_reduce, BusId, JacobianBlocks};
use crate::metrics::{cm_voltage_spring_estimate, gscr, gscr_spring_bridge, StrengthReport};
use crate::modal::{decompose_side, decompose_static_voltage, NominalDynamics, Side, SideDecomposition};
use crate::powerflow::{solve_power_flow, Injection, PowerFlowSpec};
use crate::response::sweep::{spring_sweep, SweepResult};
use crate::response::{
    default_registry, final_values, BusDynamics, FinalValues, Governor, ResponseTrace, SideModel,
};
use crate::scenario::{builtin, parse_scenario, Scenario, SideSelection, VoltageModel};

pub const TOOL: &str = "modal-strength";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const FLOW_TOL: f64 = 1e-8;
const SHIFT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Analyze,
    Simulate,
    Sweep,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the scenario's side selection.
    pub side: Option<SideSelection>,
    /// Primary response engine; the other registered engine is the oracle.
    pub engine: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Warning {
    pub code: &'static str,
    pub message: String,
}

impl Warning {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Warning { code, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub scenario: String,
    pub scenario_sha256: String,
    pub tool: &'static str,
    pub version: &'static str,
}

/// Largest gap between the primary trace and the oracle engine's trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineGap {
    pub side: Side,
    pub engine: &'static str,
    pub oracle: &'static str,
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: Command,
    pub provenance: Provenance,
    pub warnings: Vec<Warning>,
    pub flow_residual: f64,
    pub strength: StrengthReport,
    pub final_values: Vec<FinalValues>,
    #[serde(skip)]
    pub traces: Vec<ResponseTrace>,
    pub gaps: Vec<EngineGap>,
    pub sweep: Option<SweepResult>,
}

/// Everything derived from a scenario before any response is computed.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub bus_ids: Vec<BusId>,
    pub blocks: JacobianBlocks,
    pub devices: DeviceSet,
    pub matrices: DeviceMatrices,
    pub frequency: Option<SideModel>,
    pub voltage: Option<SideModel>,
    pub flow_residual: f64,
    pub warnings: Vec<Warning>,
}

impl SystemModel {
    pub fn side(&self, side: Side) -> Option<&SideModel> {
        match side {
            Side::Frequency => self.frequency.as_ref(),
            Side::Voltage => self.voltage.as_ref(),
        }
    }
}

/// Reads `builtin:<name>` or a file path; returns the scenario and its text.
pub fn load_scenario(source: &str) -> Result<(Scenario, String)> {
    let text = match source.strip_prefix(builtin::PREFIX) {
        Some(name) => builtin::text(name)?.to_string(),
        None => std::fs::read_to_string(source).map_err(|e| Error::Io {
            path: source.to_string(),
            message: e.to_string(),
        })?,
    };
    let scenario = parse_scenario(&text)?;
    Ok((scenario, text))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Network blocks at the scenario's operating point, in device-bus order.
fn network(scenario: &Scenario) -> Result<(Vec<BusId>, JacobianBlocks, f64)> {
    let adm = build_admittance(&scenario.buses, &scenario.branches)?;
    let ids = scenario.device_bus_ids();
    let y = kron_reduce(&adm, &ids)?;
    let mut injections = scenario.operating_point.injections.clone();
    for d in scenario.devices.iter().filter(|d| d.kind == DeviceKind::Crpl) {
        injections.push(Injection { bus: d.bus, p: 0.0, q: -d.q_load.unwrap_or(0.0), v: None });
    }
    let spec = PowerFlowSpec {
        injections,
        slack: scenario.operating_point.slack,
        slack_voltage: scenario.operating_point.slack_voltage,
    };
    let op = solve_power_flow(&y, &spec, scenario.operating_point.mode.name())?;
    let blocks = build_jacobian_blocks(&y, &op)?;
    let residual = check_flow_invariance(&blocks);
    if residual > FLOW_TOL {
        return Err(Error::Consistency(format!(
            "network blocks violate zero row sums (residual {residual:.3e})"
        )));
    }
    Ok((ids, blocks, residual))
}

fn infinite_buses(ids: &[BusId], caps: &[Capacity]) -> Vec<BusId> {
    ids.iter()
        .zip(caps)
        .filter(|(_, c)| matches!(c, Capacity::Infinite))
        .map(|(&b, _)| b)
        .collect()
}

fn frequency_side(scenario: &Scenario, ids: &[BusId], blocks: &JacobianBlocks, devices: &DeviceSet, m: &DeviceMatrices, warnings: &mut Vec<Warning>) -> Result<SideModel> {
    let nf = m.nominal_freq;
    let nominal = NominalDynamics { j: nf.j, d: nf.d, k: nf.k, gain: m.omega0 };
    let decomposition = decompose_side(Side::Frequency, ids, &blocks.l, &m.s_theta, nominal, &scenario.analysis.solver)?;
    let mut lagged = Vec::new();
    let dynamics = ids
        .iter()
        .map(|&bus| match devices.entry(bus) {
            Some(e) if e.kind == DeviceKind::Unified => {
                match devices.full_of(e, scenario.nominal.full.as_ref()) {
                    Some(f) if f.t_g > 0.0 => {
                        lagged.push(bus);
                        BusDynamics {
                            j: f.j,
                            d: f.d,
                            k: 0.0,
                            governor: Some(Governor { k_p: f.k_p, k_s: f.k_s, t_g: f.t_g }),
                        }
                    }
                    _ => {
                        let p = devices.params_of(e);
                        BusDynamics { j: p.j_ptheta, d: p.d_ptheta, k: p.k_ptheta, governor: None }
                    }
                }
            }
            _ => BusDynamics { j: 0.0, d: 0.0, k: 0.0, governor: None },
        })
        .collect();
    if !lagged.is_empty() {
        warnings.push(Warning::new(
            "W-GOVERNOR-LAG",
            format!("governor lag at buses {lagged:?} is reduced in the modal model and kept in direct simulation"),
        ));
    }
    Ok(SideModel {
        side: Side::Frequency,
        bus_ids: ids.to_vec(),
        l: blocks.l.clone(),
        infinite: infinite_buses(ids, &m.s_theta),
        dynamics,
        gain: m.omega0,
        decomposition,
    })
}

/// The common spring shift `c` with `2 q_e,i = c s_v,i`, if one exists.
fn homogeneous_shift(ids: &[BusId], m: &DeviceMatrices, q_e: &[f64]) -> Option<f64> {
    let mut c: Option<f64> = None;
    for (i, _) in ids.iter().enumerate() {
        let shift = 2.0 * q_e[i];
        match m.s_v[i] {
            Capacity::Infinite => {}
            Capacity::Finite(s) if s == 0.0 => {
                if shift.abs() > SHIFT_TOL {
                    return None;
                }
            }
            Capacity::Finite(s) => {
                let ci = shift / s;
                match c {
                    None => c = Some(ci),
                    Some(c0) if (c0 - ci).abs() > SHIFT_TOL * (1.0 + c0.abs()) => return None,
                    _ => {}
                }
            }
        }
    }
    Some(c.unwrap_or(0.0))
}

fn voltage_side(scenario: &Scenario, ids: &[BusId], blocks: &JacobianBlocks, devices: &DeviceSet, m: &DeviceMatrices, force_static: bool, warnings: &mut Vec<Warning>) -> Result<SideModel> {
    let q_e: Vec<f64> = blocks.q_e.iter().copied().collect();
    let has_crpl = devices.entries.iter().any(|e| e.kind == DeviceKind::Crpl);
    let shift = if force_static || scenario.analysis.voltage_model == VoltageModel::StaticSprings {
        None
    } else if has_crpl {
        warnings.push(Warning::new(
            "W-HETEROGENEOUS-VOLTAGE",
            "constant reactive power loads make the voltage side heterogeneous; springs-only results",
        ));
        None
    } else {
        let c = homogeneous_shift(ids, m, &q_e);
        if c.is_none() {
            warnings.push(Warning::new(
                "W-HETEROGENEOUS-VOLTAGE",
                "2 Q_e is not proportional to S_V; springs-only results",
            ));
        }
        c
    };
    let infinite = infinite_buses(ids, &m.s_v);
    let (decomposition, dynamics) = match shift {
        Some(c) => {
            let nv = m.nominal_volt;
            let nominal = NominalDynamics { j: 0.0, d: nv.d, k: nv.k + c, gain: 1.0 };
            let dec = decompose_side(Side::Voltage, ids, &blocks.l, &m.s_v, nominal, &scenario.analysis.solver)?;
            let dyn_ = ids
                .iter()
                .enumerate()
                .map(|(i, &bus)| match devices.entry(bus) {
                    Some(e) if e.kind == DeviceKind::Unified => {
                        let p = devices.params_of(e);
                        BusDynamics { j: 0.0, d: p.d_qv, k: p.k_qv + 2.0 * q_e[i], governor: None }
                    }
                    _ => BusDynamics { j: 0.0, d: 0.0, k: 0.0, governor: None },
                })
                .collect();
            (dec, dyn_)
        }
        None => {
            let springs = shift_load_spring(devices, ids, &q_e)?;
            let caps: Vec<Capacity> = springs
                .iter()
                .zip(&m.s_v)
                .map(|(s, c)| match c {
                    Capacity::Infinite => Capacity::Infinite,
                    Capacity::Finite(_) => Capacity::Finite(s.k_eff),
                })
                .collect();
            let dec = decompose_static_voltage(ids, &blocks.l, &caps, &scenario.analysis.solver)?;
            let damping = scenario.simulation.voltage_damping;
            let dyn_ = springs
                .iter()
                .map(|s| BusDynamics {
                    j: 0.0,
                    d: if s.k_eff != 0.0 { damping } else { 0.0 },
                    k: s.k_eff,
                    governor: None,
                })
                .collect();
            (dec, dyn_)
        }
    };
    Ok(SideModel {
        side: Side::Voltage,
        bus_ids: ids.to_vec(),
        l: blocks.l.clone(),
        infinite,
        dynamics,
        gain: 1.0,
        decomposition,
    })
}

/// Builds the requested sides. `static_voltage` forces the springs-only path.
pub fn build_model(scenario: &Scenario, sides: SideSelection, static_voltage: bool) -> Result<SystemModel> {
    let (ids, blocks, flow_residual) = network(scenario)?;
    let devices = scenario.device_set();
    let matrices = assemble_device_matrices(&devices, &ids)?;
    let mut warnings = Vec::new();
    let frequency = if sides.frequency() {
        Some(frequency_side(scenario, &ids, &blocks, &devices, &matrices, &mut warnings).map_err(|e| e.context("frequency side"))?)
    } else {
        None
    };
    let voltage = if sides.voltage() {
        Some(
            voltage_side(scenario, &ids, &blocks, &devices, &matrices, static_voltage, &mut warnings)
                .map_err(|e| e.context("voltage side"))?,
        )
    } else {
        None
    };
    Ok(SystemModel { bus_ids: ids, blocks, devices, matrices, frequency, voltage, flow_residual, warnings })
}

/// Decomposition of one side at a swept parameter value. Voltage is springs-only.
pub fn sweep_decomposition(scenario: &Scenario, path: &str, value: f64, side: Side) -> Result<SideDecomposition> {
    let mut s = scenario.clone();
    s.set_parameter(path, value)?;
    let sel = match side {
        Side::Frequency => SideSelection::Frequency,
        Side::Voltage => SideSelection::Voltage,
    };
    let model = build_model(&s, sel, true)?;
    Ok(model.side(side).expect("requested side is built").decomposition.clone())
}

pub fn sweep_side(path: &str) -> Side {
    if path.starts_with("nominal.frequency") || path.ends_with(".s_theta") {
        Side::Frequency
    } else {
        Side::Voltage
    }
}

fn voltage_extras(model: &SystemModel, report: &mut StrengthReport) -> Result<()> {
    let Some(v) = &model.voltage else { return Ok(()) };
    let dec = &v.decomposition;
    let has_crpl = model.devices.entries.iter().any(|e| e.kind == DeviceKind::Crpl);
    if dec.static_only || has_crpl {
        let k_qv: Vec<f64> = model
            .devices
            .entries
            .iter()
            .filter(|e| e.kind == DeviceKind::Unified)
            .map(|e| model.devices.params_of(e).k_qv)
            .collect();
        let q_loads: Vec<f64> = model
            .bus_ids
            .iter()
            .enumerate()
            .filter(|(_, b)| !dec.infinite.contains(b))
            .map(|(i, _)| -model.blocks.q_e[i])
            .collect();
        report.cm_v_spring_estimate = Some(cm_voltage_spring_estimate(&k_qv, &q_loads));
    }
    // loads-only pencil behind infinite generator buses: gSCR and its spring bridge
    let loads_only = !dec.infinite.is_empty()
        && dec.passive.is_empty()
        && dec
            .active
            .iter()
            .all(|b| model.devices.entry(*b).is_some_and(|e| e.kind == DeviceKind::Crpl && e.q_load > 0.0));
    if dec.static_only && loads_only {
        let q = DVector::from_iterator(
            dec.active.len(),
            dec.active.iter().map(|b| model.devices.entry(*b).unwrap().q_load),
        );
        let g = gscr(&dec.l, &q)?;
        report.gscr = Some(g);
        report.bridge = Some(gscr_spring_bridge(dec, g)?);
    }
    Ok(())
}

/// Runs one command on a parsed scenario; `text` is hashed for provenance.
pub fn run(scenario: &Scenario, text: &str, command: Command, opts: &RunOptions) -> Result<RunReport> {
    let ctx = format!("scenario '{}'", scenario.name);
    run_inner(scenario, text, command, opts).map_err(|e| e.context(&ctx))
}

fn run_inner(scenario: &Scenario, text: &str, command: Command, opts: &RunOptions) -> Result<RunReport> {
    let sides = opts.side.unwrap_or(scenario.analysis.side);
    let mut warnings: Vec<Warning> = scenario
        .assumptions()
        .map(|a| Warning::new("W-ASSUMPTION", a))
        .collect();
    let model = build_model(scenario, sides, false)?;
    warnings.extend(model.warnings.iter().cloned());

    let mut strength = StrengthReport::default();
    let mut finals = Vec::new();
    for sm in [&model.frequency, &model.voltage].into_iter().flatten() {
        strength.add_side(&sm.decomposition)?;
        if sm.decomposition.has_infinite_cm() {
            warnings.push(Warning::new(
                "W-INFINITE-CM",
                format!("{} common mode is pinned by an infinite bus and reported as unbounded", sm.side),
            ));
        }
        if scenario.disturbances.iter().any(|d| d.quantity.side() == sm.side) {
            finals.push(final_values(&sm.decomposition, &sm.bus_ids, &scenario.disturbances)?);
        }
    }
    voltage_extras(&model, &mut strength)?;

    let mut traces = Vec::new();
    let mut gaps = Vec::new();
    if command == Command::Simulate {
        let registry = default_registry();
        for sm in [&model.frequency, &model.voltage].into_iter().flatten() {
            let requested = opts.engine.as_deref();
            let primary = match requested {
                Some(name) => name,
                None if sm.decomposition.static_only => {
                    warnings.push(Warning::new(
                        "W-STATIC-VOLTAGE",
                        format!(
                            "springs-only voltage model simulated directly with uniform damping {}",
                            scenario.simulation.voltage_damping
                        ),
                    ));
                    "direct"
                }
                None => "modal",
            };
            let engine = registry.get(primary)?;
            let trace = engine
                .simulate(sm, &scenario.disturbances, &scenario.simulation)
                .map_err(|e| e.context(&format!("{} side", sm.side)))?;
            if let Some(t) = trace.truncated_at {
                warnings.push(Warning::new(
                    "W-TRUNCATED",
                    format!("{} trace diverged past the truncation limit at t = {t} s", sm.side),
                ));
            }
            if !sm.decomposition.static_only {
                for name in registry.names() {
                    if name == primary {
                        continue;
                    }
                    let oracle = registry.get(name)?;
                    let other = oracle.simulate(sm, &scenario.disturbances, &scenario.simulation)?;
                    if other.len() == trace.len() {
                        gaps.push(EngineGap {
                            side: sm.side,
                            engine: engine.name(),
                            oracle: oracle.name(),
                            max_gap: trace.max_gap(&other)?,
                        });
                    }
                }
            }
            traces.push(trace);
        }
    }

    let sweep = if command == Command::Sweep {
        let spec = scenario
            .analysis
            .sweep
            .as_ref()
            .ok_or_else(|| Error::input("scenario has no analysis.sweep"))?;
        let side = sweep_side(&spec.path);
        let result = spring_sweep(side, &spec.path, &spec.values, |v| {
            sweep_decomposition(scenario, &spec.path, v, side)
        })?;
        for p in result.points.iter().filter(|p| p.error.is_some()) {
            warnings.push(Warning::new(
                "W-SWEEP-POINT",
                format!("{} = {}: {}", spec.path, p.value, p.error.as_deref().unwrap_or_default()),
            ));
        }
        Some(result)
    } else {
        None
    };

    Ok(RunReport {
        command,
        provenance: Provenance {
            scenario: scenario.name.clone(),
            scenario_sha256: sha256_hex(text.as_bytes()),
            tool: TOOL,
            version: VERSION,
        },
        warnings,
        flow_residual: model.flow_residual,
        strength,
        final_values: finals,
        traces,
        gaps,
        sweep,
    })
}
