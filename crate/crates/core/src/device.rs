//! Grid-connected devices in the unified inertia-damper-spring form.
//!
//! Each device contributes `G_Ptheta(s) = (J s^2 + D s + K) / omega0` on the
//! frequency side and `G_QV(s) = D s + K` on the voltage side. Under the
//! homogeneous assumption every device is a scaled copy of one nominal device,
//! with per-device capacities `s_theta` and `s_v`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BusId;

pub const DEFAULT_OMEGA0: f64 = 2.0 * std::f64::consts::PI * 50.0;
const HOMOGENEITY_TOL: f64 = 1e-9;

/// Device control parameters before reduction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullDeviceParams {
    pub j: f64,
    pub d: f64,
    #[serde(default)]
    pub k_p: f64,
    #[serde(default)]
    pub k_s: f64,
    #[serde(default)]
    pub t_g: f64,
    #[serde(default)]
    pub k_qv: f64,
    #[serde(default)]
    pub t_m: f64,
}

impl FullDeviceParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.j, self.d, self.k_p, self.k_s, self.t_g, self.k_qv, self.t_m];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("device parameters must be finite"));
        }
        if self.t_g < 0.0 || self.t_m < 0.0 {
            return Err(Error::input("time constants t_g and t_m must be non-negative"));
        }
        if self.k_qv < 0.0 {
            return Err(Error::input("k_qv must be non-negative for generation devices"));
        }
        Ok(())
    }

    fn scaled(&self, s: f64) -> Self {
        FullDeviceParams {
            j: self.j * s,
            d: self.d * s,
            k_p: self.k_p * s,
            k_s: self.k_s * s,
            t_g: self.t_g,
            k_qv: self.k_qv,
            t_m: self.t_m,
        }
    }
}

/// Unified inertia-damper-spring parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnifiedDeviceParams {
    pub j_ptheta: f64,
    pub d_ptheta: f64,
    pub k_ptheta: f64,
    pub d_qv: f64,
    pub k_qv: f64,
}

impl UnifiedDeviceParams {
    fn approx_eq(&self, other: &Self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= HOMOGENEITY_TOL * (1.0 + a.abs().max(b.abs()));
        close(self.j_ptheta, other.j_ptheta)
            && close(self.d_ptheta, other.d_ptheta)
            && close(self.k_ptheta, other.k_ptheta)
            && close(self.d_qv, other.d_qv)
            && close(self.k_qv, other.k_qv)
    }
}

/// Maps full controls onto the unified structure.
///
/// The governor branch `(k_p s + k_s)/(t_g s + 1)` is replaced by its DC gain
/// and its high-frequency derivative gain: damping `d + k_p`, spring `k_s`.
/// With `t_g = 0` the mapping is exact.
pub fn reduce_to_unified(full: &FullDeviceParams) -> UnifiedDeviceParams {
    UnifiedDeviceParams {
        j_ptheta: full.j,
        d_ptheta: full.d + full.k_p,
        k_ptheta: full.k_s,
        d_qv: full.t_m * full.k_qv,
        k_qv: full.k_qv,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    /// Generation device (SG, VSG, IBR) in unified form.
    Unified,
    /// Constant reactive power load.
    Crpl,
    /// Fixed angle and voltage; removed from the pencil.
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NominalFrequency {
    pub j: f64,
    pub d: f64,
    #[serde(default)]
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NominalVoltage {
    #[serde(default)]
    pub d: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceEntry {
    pub bus: BusId,
    pub kind: DeviceKind,
    pub s_theta: f64,
    pub s_v: f64,
    /// Consumed reactive power of a CRPL (positive = consumption).
    pub q_load: f64,
    /// Explicit per-device unified parameters; `None` means scaling x nominal.
    pub params: Option<UnifiedDeviceParams>,
    /// Unreduced controls, kept for exact simulation of the governor lag.
    pub full: Option<FullDeviceParams>,
}

impl DeviceEntry {
    pub fn unified(bus: BusId, s_theta: f64, s_v: f64) -> Self {
        DeviceEntry {
            bus,
            kind: DeviceKind::Unified,
            s_theta,
            s_v,
            q_load: 0.0,
            params: None,
            full: None,
        }
    }

    pub fn crpl(bus: BusId, q_load: f64) -> Self {
        DeviceEntry {
            bus,
            kind: DeviceKind::Crpl,
            s_theta: 0.0,
            s_v: 0.0,
            q_load,
            params: None,
            full: None,
        }
    }

    pub fn infinite(bus: BusId) -> Self {
        DeviceEntry {
            bus,
            kind: DeviceKind::Infinite,
            s_theta: 0.0,
            s_v: 0.0,
            q_load: 0.0,
            params: None,
            full: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSet {
    pub entries: Vec<DeviceEntry>,
    pub nominal_freq: NominalFrequency,
    pub nominal_volt: NominalVoltage,
    pub omega0: f64,
}

impl DeviceSet {
    pub fn new(entries: Vec<DeviceEntry>, nominal_freq: NominalFrequency, nominal_volt: NominalVoltage) -> Self {
        DeviceSet {
            entries,
            nominal_freq,
            nominal_volt,
            omega0: DEFAULT_OMEGA0,
        }
    }

    pub fn entry(&self, bus: BusId) -> Option<&DeviceEntry> {
        self.entries.iter().find(|e| e.bus == bus)
    }

    /// The nominal device scaled by the entry's capacities.
    pub fn expected_params(&self, e: &DeviceEntry) -> UnifiedDeviceParams {
        match e.kind {
            DeviceKind::Unified => UnifiedDeviceParams {
                j_ptheta: e.s_theta * self.nominal_freq.j,
                d_ptheta: e.s_theta * self.nominal_freq.d,
                k_ptheta: e.s_theta * self.nominal_freq.k,
                d_qv: e.s_v * self.nominal_volt.d,
                k_qv: e.s_v * self.nominal_volt.k,
            },
            DeviceKind::Crpl | DeviceKind::Infinite => UnifiedDeviceParams::default(),
        }
    }

    /// Parameters the device actually carries.
    pub fn params_of(&self, e: &DeviceEntry) -> UnifiedDeviceParams {
        e.params.unwrap_or_else(|| self.expected_params(e))
    }

    /// Full controls of a device when the nominal device was given unreduced.
    pub fn full_of(&self, e: &DeviceEntry, nominal_full: Option<&FullDeviceParams>) -> Option<FullDeviceParams> {
        e.full.or_else(|| match (e.kind, nominal_full) {
            (DeviceKind::Unified, Some(f)) => Some(f.scaled(e.s_theta)),
            _ => None,
        })
    }
}

/// Per-bus capacity on one side of the decoupled model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Capacity {
    /// Finite scaling; zero marks a passive bus without support on this side.
    Finite(f64),
    /// Infinite bus: eliminated from the pencil as a boundary condition.
    Infinite,
}

impl Capacity {
    pub fn value(&self) -> Option<f64> {
        match self {
            Capacity::Finite(s) => Some(*s),
            Capacity::Infinite => None,
        }
    }
}

/// Diagonal capacity matrices in terminal-bus order plus the nominal dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceMatrices {
    pub bus_ids: Vec<BusId>,
    pub s_theta: Vec<Capacity>,
    pub s_v: Vec<Capacity>,
    pub nominal_freq: NominalFrequency,
    pub nominal_volt: NominalVoltage,
    pub omega0: f64,
}

/// Builds `S_theta` and `S_V` in bus order, checking the homogeneous invariant.
pub fn assemble_device_matrices(devices: &DeviceSet, bus_order: &[BusId]) -> Result<DeviceMatrices> {
    let mut by_bus: BTreeMap<BusId, &DeviceEntry> = BTreeMap::new();
    for e in &devices.entries {
        if !bus_order.contains(&e.bus) {
            return Err(Error::input(format!("device at bus {} which is not a device bus", e.bus)));
        }
        if by_bus.insert(e.bus, e).is_some() {
            return Err(Error::input(format!("more than one device at bus {}", e.bus)));
        }
        if !(e.s_theta.is_finite() && e.s_v.is_finite() && e.q_load.is_finite()) {
            return Err(Error::input(format!("device at bus {} has non-finite scalings", e.bus)));
        }
        if let Some(f) = &e.full {
            f.validate()?;
        }
    }
    let offenders: Vec<BusId> = devices
        .entries
        .iter()
        .filter(|e| e.kind == DeviceKind::Unified)
        .filter(|e| e.params.is_some_and(|p| !p.approx_eq(&devices.expected_params(e))))
        .map(|e| e.bus)
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Consistency(format!(
            "devices at buses {offenders:?} are not scaled copies of the nominal device"
        )));
    }

    let mut s_theta = Vec::with_capacity(bus_order.len());
    let mut s_v = Vec::with_capacity(bus_order.len());
    for id in bus_order {
        let (f, v) = match by_bus.get(id) {
            None => (Capacity::Finite(0.0), Capacity::Finite(0.0)),
            Some(e) => match e.kind {
                DeviceKind::Unified => (Capacity::Finite(e.s_theta), Capacity::Finite(e.s_v)),
                DeviceKind::Crpl => (Capacity::Finite(0.0), Capacity::Finite(0.0)),
                DeviceKind::Infinite => (Capacity::Infinite, Capacity::Infinite),
            },
        };
        s_theta.push(f);
        s_v.push(v);
    }
    Ok(DeviceMatrices {
        bus_ids: bus_order.to_vec(),
        s_theta,
        s_v,
        nominal_freq: devices.nominal_freq,
        nominal_volt: devices.nominal_volt,
        omega0: devices.omega0,
    })
}

/// Voltage dynamics of one bus after the `2 Q_e` term moves to the device side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveVoltage {
    pub bus: BusId,
    pub kind: Option<DeviceKind>,
    pub d_qv: f64,
    pub k_eff: f64,
}

/// Shifts `2 q_e` (injection convention) into each device's voltage spring.
///
/// `q_e` is indexed like `bus_order`. A CRPL consuming `Q` therefore ends up
/// with the negative spring `-2 Q`. Buses without a device get `k_eff = 2 q_e`.
pub fn shift_load_spring(devices: &DeviceSet, bus_order: &[BusId], q_e: &[f64]) -> Result<Vec<EffectiveVoltage>> {
    if q_e.len() != bus_order.len() {
        return Err(Error::input(format!(
            "q_e has {} entries, expected {}",
            q_e.len(),
            bus_order.len()
        )));
    }
    Ok(bus_order
        .iter()
        .zip(q_e)
        .map(|(&bus, &q)| match devices.entry(bus) {
            Some(e) => {
                let p = devices.params_of(e);
                EffectiveVoltage {
                    bus,
                    kind: Some(e.kind),
                    d_qv: p.d_qv,
                    k_eff: p.k_qv + 2.0 * q,
                }
            }
            None => EffectiveVoltage {
                bus,
                kind: None,
                d_qv: 0.0,
                k_eff: 2.0 * q,
            },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn nominal() -> (NominalFrequency, NominalVoltage) {
        (
            NominalFrequency { j: 10.0, d: 10.0, k: 0.0 },
            NominalVoltage { d: 5.0, k: 10.0 },
        )
    }

    #[test]
    fn inertia_and_damping_pass_through() {
        let u = reduce_to_unified(&FullDeviceParams { j: 10.0, d: 10.0, ..Default::default() });
        assert_eq!((u.j_ptheta, u.d_ptheta, u.k_ptheta), (10.0, 10.0, 0.0));
    }

    #[test]
    fn voltage_filter_becomes_damping() {
        let u = reduce_to_unified(&FullDeviceParams { k_qv: 10.0, t_m: 0.5, ..Default::default() });
        assert_eq!((u.d_qv, u.k_qv), (5.0, 10.0));
    }

    #[test]
    fn primary_response_adds_to_damping() {
        let u = reduce_to_unified(&FullDeviceParams { j: 1.0, d: 2.0, k_p: 3.0, ..Default::default() });
        assert_eq!(u.d_ptheta, 5.0);
    }

    fn full_tf(p: &FullDeviceParams, s: Complex64) -> Complex64 {
        s * s * p.j + s * p.d + (s * p.k_p + p.k_s) / (s * p.t_g + 1.0)
    }

    fn unified_tf(u: &UnifiedDeviceParams, s: Complex64) -> Complex64 {
        s * s * u.j_ptheta + s * u.d_ptheta + u.k_ptheta
    }

    proptest! {
        #[test]
        fn reduction_exact_without_governor_lag(
            j in 0.0f64..20.0, d in 0.0f64..20.0, k_p in 0.0f64..20.0, k_s in 0.0f64..5.0,
            re in -3.0f64..3.0, im in -30.0f64..30.0,
        ) {
            let full = FullDeviceParams { j, d, k_p, k_s, ..Default::default() };
            let u = reduce_to_unified(&full);
            let s = Complex64::new(re, im);
            let (a, b) = (full_tf(&full, s), unified_tf(&u, s));
            prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }

        #[test]
        fn reduction_matches_governor_limits(
            d in 0.0f64..20.0, k_p in 0.0f64..20.0, k_s in 0.0f64..5.0, t_g in 0.01f64..5.0,
        ) {
            let full = FullDeviceParams { j: 1.0, d, k_p, k_s, t_g, ..Default::default() };
            let u = reduce_to_unified(&full);
            // DC: spring term k_s
            let s0 = Complex64::new(0.0, 0.0);
            prop_assert!((full_tf(&full, s0) - unified_tf(&u, s0)).norm() < 1e-12);
            // d/ds at s = 0 with t_g -> 0 equals d + k_p; the unified model keeps that limit
            prop_assert_eq!(u.d_ptheta, d + k_p);
            prop_assert_eq!(u.k_ptheta, k_s);
        }
    }

    #[test]
    fn identical_devices_give_unit_scalings() {
        let (f, v) = nominal();
        let set = DeviceSet::new(vec![DeviceEntry::unified(1, 1.0, 1.0), DeviceEntry::unified(2, 1.0, 1.0)], f, v);
        let m = assemble_device_matrices(&set, &[1, 2]).unwrap();
        assert_eq!(m.s_theta, vec![Capacity::Finite(1.0); 2]);
    }

    #[test]
    fn four_vsg_frequency_scalings() {
        let (f, v) = nominal();
        let s = [1.0, 1.0, 2.0, 1.0];
        let entries = (0..4).map(|k| DeviceEntry::unified(k as u32 + 1, s[k], 1.0)).collect();
        let m = assemble_device_matrices(&DeviceSet::new(entries, f, v), &[1, 2, 3, 4]).unwrap();
        let got: Vec<f64> = m.s_theta.iter().map(|c| c.value().unwrap()).collect();
        assert_eq!(got, s.to_vec());
    }

    #[test]
    fn single_device_identity() {
        let (f, v) = nominal();
        let m = assemble_device_matrices(&DeviceSet::new(vec![DeviceEntry::unified(4, 1.0, 1.0)], f, v), &[4]).unwrap();
        assert_eq!(m.s_theta, vec![Capacity::Finite(1.0)]);
        assert_eq!(m.s_v, vec![Capacity::Finite(1.0)]);
    }

    #[test]
    fn infinite_bus_is_flagged_not_numeric() {
        let (f, v) = nominal();
        let set = DeviceSet::new(vec![DeviceEntry::unified(1, 1.0, 1.0), DeviceEntry::infinite(2)], f, v);
        let m = assemble_device_matrices(&set, &[1, 2]).unwrap();
        assert_eq!(m.s_theta[1], Capacity::Infinite);
        assert_eq!(m.s_v[1], Capacity::Infinite);
    }

    #[test]
    fn bus_order_permutation_round_trip() {
        let (f, v) = nominal();
        let entries = vec![
            DeviceEntry::unified(1, 1.0, 3.0),
            DeviceEntry::unified(2, 2.0, 4.0),
            DeviceEntry::unified(3, 5.0, 6.0),
        ];
        let set = DeviceSet::new(entries, f, v);
        let a = assemble_device_matrices(&set, &[1, 2, 3]).unwrap();
        let b = assemble_device_matrices(&set, &[3, 1, 2]).unwrap();
        for (k, id) in b.bus_ids.iter().enumerate() {
            let ka = a.bus_ids.iter().position(|x| x == id).unwrap();
            assert_eq!(a.s_theta[ka], b.s_theta[k]);
            assert_eq!(a.s_v[ka], b.s_v[k]);
        }
    }

    #[test]
    fn heterogeneous_entries_are_listed() {
        let (f, v) = nominal();
        let mut odd = DeviceEntry::unified(2, 1.0, 1.0);
        odd.params = Some(UnifiedDeviceParams { j_ptheta: 3.0, d_ptheta: 10.0, k_ptheta: 0.0, d_qv: 5.0, k_qv: 10.0 });
        let mut fine = DeviceEntry::unified(1, 2.0, 1.0);
        fine.params = Some(UnifiedDeviceParams { j_ptheta: 20.0, d_ptheta: 20.0, k_ptheta: 0.0, d_qv: 5.0, k_qv: 10.0 });
        let err = assemble_device_matrices(&DeviceSet::new(vec![fine, odd], f, v), &[1, 2]).unwrap_err();
        match err {
            Error::Consistency(msg) => assert!(msg.contains("[2]")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_spring_shift() {
        let (f, v) = nominal();
        let mut set = DeviceSet::new(
            vec![DeviceEntry::unified(1, 1.0, 1.0), DeviceEntry::crpl(2, 0.4), DeviceEntry::unified(3, 1.0, 1.0)],
            f,
            v,
        );
        set.nominal_volt.d = 5.0;
        let eff = shift_load_spring(&set, &[1, 2, 3], &[0.0, -0.4, 0.2]).unwrap();
        assert_eq!(eff[0].k_eff, 10.0);
        assert_relative_eq!(eff[1].k_eff, -0.8);
        assert_relative_eq!(eff[2].k_eff, 10.4);
        // damping untouched
        assert_eq!(eff[0].d_qv, 5.0);
        assert_eq!(eff[1].d_qv, 0.0);
    }
}
