//! Common-mode / differential-mode decomposition of one side (frequency or
//! voltage) of the decoupled closed loop `(S G0(s) + L) x = u`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::device::Capacity;
use crate::error::{Error, Result};
use crate::grid::BusId;
use crate::pencil::{solve_pencil, PencilSolution};

const ZERO_TOL: f64 = 1e-8;
const CM_VECTOR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Frequency,
    Voltage,
}

impl Side {
    pub fn tag(&self) -> &'static str {
        match self {
            Side::Frequency => "F",
            Side::Voltage => "V",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Frequency => "frequency",
            Side::Voltage => "voltage",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeKind {
    #[serde(rename = "CM")]
    Common,
    #[serde(rename = "DM")]
    Differential,
}

/// Nominal device dynamics `J s^2 + D s + K` and the factor multiplying
/// `l_m` in the modal spring (`omega0` for frequency, 1 for voltage).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalDynamics {
    pub j: f64,
    pub d: f64,
    pub k: f64,
    pub gain: f64,
}

/// Second-order modal parameters; voltage modes carry `j = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalParams {
    pub j: f64,
    pub d: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    /// 1-based mode number; the common mode, when present, is mode 1.
    pub number: usize,
    pub kind: ModeKind,
    pub lambda: f64,
    pub phi: DVector<f64>,
    pub psi: DVector<f64>,
    pub s_m: f64,
    pub l_m: f64,
    pub params: ModalParams,
}

impl Mode {
    pub fn label(&self, side: Side) -> String {
        match self.kind {
            ModeKind::Common => format!("CM-{}", side.tag()),
            ModeKind::Differential => format!("DM{}-{}", self.number - 1, side.tag()),
        }
    }
}

/// Passive buses (no support on this side) folded into the active ones by
/// a Schur complement.
#[derive(Debug, Clone, PartialEq)]
pub struct PassiveElimination {
    pub lpp_inv: DMatrix<f64>,
    pub l_pa: DMatrix<f64>,
    pub l_ap: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideDecomposition {
    pub side: Side,
    pub bus_ids: Vec<BusId>,
    pub active: Vec<BusId>,
    pub passive: Vec<BusId>,
    pub infinite: Vec<BusId>,
    /// Network matrix over the active buses after eliminations.
    pub l: DMatrix<f64>,
    pub s: DVector<f64>,
    pub nominal: NominalDynamics,
    pub modes: Vec<Mode>,
    pub solver: &'static str,
    pub elimination: Option<PassiveElimination>,
    /// Springs-only analysis at `s = 0` for heterogeneous voltage devices.
    pub static_only: bool,
}

fn positions(ids: &[BusId], of: &[BusId]) -> Vec<usize> {
    of.iter().map(|b| ids.iter().position(|x| x == b).unwrap()).collect()
}

fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

impl SideDecomposition {
    pub fn common_mode(&self) -> Option<&Mode> {
        self.modes.iter().find(|m| m.kind == ModeKind::Common)
    }

    pub fn differential_modes(&self) -> impl Iterator<Item = &Mode> {
        self.modes.iter().filter(|m| m.kind == ModeKind::Differential)
    }

    /// An infinite bus pins the common mode: it is reported with unbounded inertia.
    pub fn has_infinite_cm(&self) -> bool {
        !self.infinite.is_empty()
    }

    pub fn active_index(&self, bus: BusId) -> Option<usize> {
        self.active.iter().position(|&b| b == bus)
    }

    /// Maps a disturbance over all terminal buses onto the active buses.
    /// Entries at infinite buses are absorbed by the stiff source.
    pub fn effective_input(&self, u: &DVector<f64>) -> DVector<f64> {
        let a = positions(&self.bus_ids, &self.active);
        let ua = DVector::from_fn(a.len(), |i, _| u[a[i]]);
        match &self.elimination {
            None => ua,
            Some(e) => {
                let p = positions(&self.bus_ids, &self.passive);
                let up = DVector::from_fn(p.len(), |i, _| u[p[i]]);
                ua - &e.l_ap * (&e.lpp_inv * up)
            }
        }
    }

    /// Passive-bus response implied by the active response and the input.
    pub fn passive_response(&self, x_active: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match &self.elimination {
            None => DVector::zeros(0),
            Some(e) => {
                let p = positions(&self.bus_ids, &self.passive);
                let up = DVector::from_fn(p.len(), |i, _| u[p[i]]);
                &e.lpp_inv * (up - &e.l_pa * x_active)
            }
        }
    }

    /// `u_eff = E u` as a matrix over all terminal buses.
    pub fn input_map(&self) -> DMatrix<f64> {
        let n = self.bus_ids.len();
        let mut e = DMatrix::zeros(self.active.len(), n);
        for j in 0..n {
            let mut unit = DVector::zeros(n);
            unit[j] = 1.0;
            e.set_column(j, &self.effective_input(&unit));
        }
        e
    }
}

/// Decomposes one side of a homogeneous device set.
pub fn decompose_side(
    side: Side,
    bus_ids: &[BusId],
    l_full: &DMatrix<f64>,
    caps: &[Capacity],
    nominal: NominalDynamics,
    solver: &str,
) -> Result<SideDecomposition> {
    let n = bus_ids.len();
    if l_full.nrows() != n || l_full.ncols() != n || caps.len() != n {
        return Err(Error::input(format!(
            "side dimensions differ: {} buses, L {}x{}, {} capacities",
            n,
            l_full.nrows(),
            l_full.ncols(),
            caps.len()
        )));
    }
    let mut active = Vec::new();
    let mut passive = Vec::new();
    let mut infinite = Vec::new();
    for (id, c) in bus_ids.iter().zip(caps) {
        match c {
            Capacity::Infinite => infinite.push(*id),
            Capacity::Finite(s) if *s == 0.0 => passive.push(*id),
            Capacity::Finite(_) => active.push(*id),
        }
    }
    if active.is_empty() {
        return Err(Error::Degenerate(format!("no bus carries {side} support")));
    }
    let a = positions(bus_ids, &active);
    let p = positions(bus_ids, &passive);
    let s = DVector::from_fn(a.len(), |i, _| caps[a[i]].value().unwrap());
    let l_aa = sub(l_full, &a, &a);
    let (l, elimination) = if p.is_empty() {
        (l_aa, None)
    } else {
        let l_pp = sub(l_full, &p, &p);
        let lpp_inv = l_pp.try_inverse().ok_or_else(|| {
            Error::Degenerate(format!(
                "passive buses {passive:?} are not connected through the network on the {side} side"
            ))
        })?;
        let l_ap = sub(l_full, &a, &p);
        let l_pa = sub(l_full, &p, &a);
        let l = &l_aa - &l_ap * &lpp_inv * &l_pa;
        (l, Some(PassiveElimination { lpp_inv, l_pa, l_ap }))
    };

    let sol = solve_pencil(&l, &s, solver)?;
    let modes = classify(&sol, &l, &s, nominal)?;
    Ok(SideDecomposition {
        side,
        bus_ids: bus_ids.to_vec(),
        active,
        passive,
        infinite,
        l,
        s,
        nominal,
        modes,
        solver: sol.solver,
        elimination,
        static_only: false,
    })
}

/// Springs-only voltage decomposition: `S = diag(k_eff)`, `G0 = 1`.
pub fn decompose_static_voltage(
    bus_ids: &[BusId],
    l_full: &DMatrix<f64>,
    springs: &[Capacity],
    solver: &str,
) -> Result<SideDecomposition> {
    let nominal = NominalDynamics {
        j: 0.0,
        d: 0.0,
        k: 1.0,
        gain: 1.0,
    };
    let mut d = decompose_side(Side::Voltage, bus_ids, l_full, springs, nominal, solver)?;
    d.static_only = true;
    Ok(d)
}

fn classify(sol: &PencilSolution, l: &DMatrix<f64>, s: &DVector<f64>, nominal: NominalDynamics) -> Result<Vec<Mode>> {
    let n = sol.len();
    let lam_max = sol.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = ZERO_TOL * lam_max.max(1.0);
    let zeros: Vec<usize> = (0..n).filter(|&k| sol.eigenvalues[k].abs() <= tol).collect();
    if zeros.len() > 1 {
        return Err(Error::Degenerate(format!(
            "{} eigenvalues within {tol:.1e} of zero; the network is split into islands",
            zeros.len()
        )));
    }
    let cm = zeros
        .first()
        .copied()
        .filter(|&k| sol.phi(k).iter().all(|x| (x - 1.0).abs() <= CM_VECTOR_TOL));

    let mut order: Vec<usize> = cm.into_iter().collect();
    order.extend((0..n).filter(|&k| Some(k) != cm));
    let mut modes = Vec::with_capacity(n);
    for (pos, k) in order.into_iter().enumerate() {
        let (phi, psi) = (sol.phi(k), sol.psi(k));
        let s_m = psi.component_mul(s).dot(&phi);
        let mut l_m = psi.dot(&(l * &phi));
        let mut lambda = sol.eigenvalues[k];
        let kind = if Some(k) == cm { ModeKind::Common } else { ModeKind::Differential };
        if kind == ModeKind::Common {
            l_m = 0.0;
            lambda = 0.0;
        }
        modes.push(Mode {
            number: pos + 1,
            kind,
            lambda,
            phi,
            psi,
            s_m,
            l_m,
            // `+ 0.0` folds the -0.0 of a zero nominal term times a negative s_m
            params: ModalParams {
                j: s_m * nominal.j + 0.0,
                d: s_m * nominal.d + 0.0,
                k: s_m * nominal.k + nominal.gain * l_m,
            },
        });
    }
    if cm.is_none() {
        for (pos, m) in modes.iter_mut().enumerate() {
            m.number = pos + 2;
        }
    }
    Ok(modes)
}
