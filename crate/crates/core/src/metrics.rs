//! Strength metrics built on a side decomposition: modal and bus-specific
//! inertia/damping/spring, nodal inertia, the common-mode voltage spring
//! estimate and the gSCR link.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::BusId;
use crate::modal::{ModalParams, Mode, ModeKind, Side, SideDecomposition};

/// Below this `|phi_i psi_j|` a mode neither observes `i` nor is excited from `j`.
pub const OBSERVABILITY_TOL: f64 = 1e-9;

fn mode_of(decomp: &SideDecomposition, number: usize) -> Result<&Mode> {
    decomp
        .modes
        .iter()
        .find(|m| m.number == number)
        .ok_or_else(|| Error::input(format!("{} side has no mode {number}", decomp.side)))
}

fn active_pos(decomp: &SideDecomposition, bus: BusId) -> Result<usize> {
    decomp.active_index(bus).ok_or_else(|| {
        Error::input(format!(
            "bus {bus} is not an active {} bus (active: {:?})",
            decomp.side, decomp.active
        ))
    })
}

/// Modal parameters seen from observation bus `i` for a disturbance at bus `j`.
pub fn bus_modal_params(decomp: &SideDecomposition, mode: usize, observe: BusId, disturb: BusId) -> Result<ModalParams> {
    let m = mode_of(decomp, mode)?;
    let w = m.phi[active_pos(decomp, observe)?] * m.psi[active_pos(decomp, disturb)?];
    if w.abs() < OBSERVABILITY_TOL {
        return Err(Error::Unobservable {
            mode,
            observe,
            disturb,
        });
    }
    Ok(ModalParams {
        j: m.params.j / w,
        d: m.params.d / w,
        k: m.params.k / w,
    })
}

/// Harmonic composition of bus-specific modal inertias. Modes that do not
/// link the pair, and a common mode pinned by an infinite bus, add nothing.
pub fn nodal_inertia(decomp: &SideDecomposition, observe: BusId, disturb: BusId) -> Result<f64> {
    let (i, j) = (active_pos(decomp, observe)?, active_pos(decomp, disturb)?);
    let mut inv = 0.0;
    for m in &decomp.modes {
        let w = m.phi[i] * m.psi[j];
        if m.params.j == 0.0 && w.abs() < OBSERVABILITY_TOL {
            continue;
        }
        if m.params.j == 0.0 {
            return Err(Error::Division(format!("mode {} has zero modal inertia", m.number)));
        }
        inv += w / m.params.j;
    }
    Ok(if inv.abs() < 1e-15 { f64::INFINITY } else { 1.0 / inv })
}

/// Nodal inertia from the initial rate of change: `dw/dt(0+) = (S J0)^-1 dP`.
pub fn nodal_inertia_direct(decomp: &SideDecomposition, observe: BusId, disturb: BusId) -> Result<f64> {
    let (i, j) = (active_pos(decomp, observe)?, active_pos(decomp, disturb)?);
    let m = DMatrix::from_diagonal(&(decomp.s.clone() * decomp.nominal.j));
    let minv = m
        .try_inverse()
        .ok_or_else(|| Error::Division("inertia matrix is singular".into()))?;
    let x = minv[(i, j)];
    Ok(if x.abs() < 1e-15 { f64::INFINITY } else { 1.0 / x })
}

/// Total device spring minus twice the total load: the common-mode voltage
/// spring under `psi_1 ~ phi_1 ~ 1`.
pub fn cm_voltage_spring_estimate(k_qv: &[f64], q_loads: &[f64]) -> f64 {
    k_qv.iter().sum::<f64>() - 2.0 * q_loads.iter().sum::<f64>()
}

/// Smallest eigenvalue of `Q^-1 L22` for loads consuming `q > 0`.
pub fn gscr(l22: &DMatrix<f64>, q: &DVector<f64>) -> Result<f64> {
    if l22.nrows() != q.len() || l22.ncols() != q.len() || q.is_empty() {
        return Err(Error::input("gSCR needs a square load block matching the load vector"));
    }
    if q.iter().any(|&x| x <= 0.0) {
        return Err(Error::input("gSCR needs strictly positive load reactive power"));
    }
    let m = DMatrix::from_fn(q.len(), q.len(), |i, j| l22[(i, j)] / q[i]);
    let eig = m.complex_eigenvalues();
    let min = eig
        .iter()
        .min_by(|a, b| a.re.total_cmp(&b.re))
        .copied()
        .unwrap();
    if min.im.abs() > 1e-9 * min.re.abs().max(1.0) {
        return Err(Error::Regime(format!(
            "smallest eigenvalue of Q^-1 L22 is complex ({:.6}{:+.6}i)",
            min.re, min.im
        )));
    }
    Ok(min.re)
}

/// The differential mode closest to collapse: the negative eigenvalue nearest
/// zero when one exists, otherwise the smallest positive one.
pub fn first_dm(decomp: &SideDecomposition) -> Option<&Mode> {
    let dms: Vec<&Mode> = decomp.differential_modes().collect();
    let neg = dms
        .iter()
        .filter(|m| m.lambda < 0.0)
        .max_by(|a, b| a.lambda.total_cmp(&b.lambda).then(b.number.cmp(&a.number)));
    neg.or_else(|| {
        dms.iter()
            .filter(|m| m.lambda >= 0.0)
            .min_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.number.cmp(&b.number)))
    })
    .copied()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeRecord {
    pub mode: usize,
    pub gscr: f64,
    /// Modal spring of the first DM from the decomposition.
    pub k_mv: f64,
    /// `(gSCR - 2) psi^T L22 phi`.
    pub gscr_form: f64,
    pub quadratic_form: f64,
    pub relative_gap: f64,
}

/// Compares the first-DM modal spring of a loads-only voltage decomposition
/// (generators infinite) with the gSCR expression. Signs must agree.
pub fn gscr_spring_bridge(decomp: &SideDecomposition, gscr: f64) -> Result<BridgeRecord> {
    if decomp.side != Side::Voltage {
        return Err(Error::input("the gSCR bridge applies to the voltage side"));
    }
    let m = first_dm(decomp).ok_or_else(|| Error::Bridge("no differential mode".into()))?;
    let quad = m.psi.dot(&(&decomp.l * &m.phi));
    let form = (gscr - 2.0) * quad;
    let k = m.params.k;
    let scale = k.abs().max(form.abs()).max(f64::MIN_POSITIVE);
    let tol = 1e-9 * (1.0 + quad.abs());
    if k.abs() > tol && form.abs() > tol && k.signum() != form.signum() {
        return Err(Error::Bridge(format!(
            "K_MV = {k:.6e} but (gSCR - 2) psi^T L22 phi = {form:.6e}"
        )));
    }
    Ok(BridgeRecord {
        mode: m.number,
        gscr,
        k_mv: k,
        gscr_form: form,
        quadratic_form: quad,
        relative_gap: (k - form).abs() / scale,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeReport {
    pub side: Side,
    pub number: usize,
    pub label: String,
    pub kind: ModeKind,
    pub lambda: f64,
    pub s_m: f64,
    pub l_m: f64,
    /// `None` on the voltage side.
    pub j: Option<f64>,
    pub d: f64,
    pub k: f64,
    /// Non-positive voltage spring, or negative frequency spring. The
    /// frequency common mode has no spring by construction.
    pub collapse: bool,
    /// Common mode pinned by an infinite bus; parameters are unbounded.
    pub infinite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusSpecificEntry {
    pub side: Side,
    pub mode: usize,
    pub observe: BusId,
    pub disturb: BusId,
    pub j: Option<f64>,
    pub d: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodalInertiaEntry {
    pub observe: BusId,
    pub disturb: BusId,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct StrengthReport {
    pub modes: Vec<ModeReport>,
    pub bus_specific: Vec<BusSpecificEntry>,
    pub nodal_inertia: Vec<NodalInertiaEntry>,
    pub cm_v_spring_estimate: Option<f64>,
    pub gscr: Option<f64>,
    pub bridge: Option<BridgeRecord>,
    pub first_dm_v: Option<usize>,
}

fn mode_reports(decomp: &SideDecomposition) -> Vec<ModeReport> {
    let freq = decomp.side == Side::Frequency;
    let mut out = Vec::new();
    if decomp.has_infinite_cm() {
        out.push(ModeReport {
            side: decomp.side,
            number: 1,
            label: format!("CM-{}", decomp.side.tag()),
            kind: ModeKind::Common,
            lambda: 0.0,
            s_m: f64::INFINITY,
            l_m: 0.0,
            j: freq.then_some(f64::INFINITY),
            d: f64::INFINITY,
            k: f64::INFINITY,
            collapse: false,
            infinite: true,
        });
    }
    out.extend(decomp.modes.iter().map(|m| ModeReport {
        side: decomp.side,
        number: m.number,
        label: m.label(decomp.side),
        kind: m.kind,
        lambda: m.lambda,
        s_m: m.s_m,
        l_m: m.l_m,
        j: freq.then_some(m.params.j),
        d: m.params.d,
        k: m.params.k,
        collapse: if freq { m.params.k < 0.0 } else { m.params.k <= 0.0 },
        infinite: false,
    }));
    out
}

impl StrengthReport {
    /// Adds modes and all observable bus-specific entries of one side.
    pub fn add_side(&mut self, decomp: &SideDecomposition) -> Result<()> {
        self.modes.extend(mode_reports(decomp));
        let freq = decomp.side == Side::Frequency;
        for m in &decomp.modes {
            for &i in &decomp.active {
                for &j in &decomp.active {
                    match bus_modal_params(decomp, m.number, i, j) {
                        Ok(p) => self.bus_specific.push(BusSpecificEntry {
                            side: decomp.side,
                            mode: m.number,
                            observe: i,
                            disturb: j,
                            j: freq.then_some(p.j),
                            d: p.d,
                            k: p.k,
                        }),
                        Err(Error::Unobservable { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        if freq && decomp.nominal.j != 0.0 {
            for &i in &decomp.active {
                for &j in &decomp.active {
                    self.nodal_inertia.push(NodalInertiaEntry {
                        observe: i,
                        disturb: j,
                        value: nodal_inertia(decomp, i, j)?,
                    });
                }
            }
        }
        if !freq {
            self.first_dm_v = first_dm(decomp).map(|m| m.number);
        }
        Ok(())
    }
}
