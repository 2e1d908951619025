//! Network model: nodal admittance assembly, Kron reduction to device
//! terminals and the linearized network Jacobian blocks `L` and `N`.
//!
//! Conventions: all quantities are per unit, power injected into the network
//! is positive, and `G_ij`/`B_ij` denote the real/imaginary parts of the
//! off-diagonal admittance matrix entry `Y_ij`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type BusId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Device,
    Interior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    #[serde(default)]
    pub shunt_g: f64,
    #[serde(default)]
    pub shunt_b: f64,
}

impl Bus {
    pub fn device(id: BusId) -> Self {
        Bus {
            id,
            kind: BusKind::Device,
            shunt_g: 0.0,
            shunt_b: 0.0,
        }
    }

    pub fn interior(id: BusId) -> Self {
        Bus {
            id,
            kind: BusKind::Interior,
            shunt_g: 0.0,
            shunt_b: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    #[serde(default)]
    pub r: f64,
    pub x: f64,
}

impl Branch {
    pub fn lossless(from: BusId, to: BusId, x: f64) -> Self {
        Branch { from, to, r: 0.0, x }
    }

    fn admittance(&self) -> Complex64 {
        Complex64::new(1.0, 0.0) / Complex64::new(self.r, self.x)
    }
}

/// A complex admittance matrix together with the bus ids labelling its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Admittance {
    pub ids: Vec<BusId>,
    pub y: DMatrix<Complex64>,
}

impl Admittance {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: BusId) -> Option<usize> {
        self.ids.iter().position(|&b| b == id)
    }
}

/// Steady-state bus quantities in the order of the matrix they accompany.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub theta_e: DVector<f64>,
    pub v_e: DVector<f64>,
    pub p_e: DVector<f64>,
    pub q_e: DVector<f64>,
}

impl OperatingPoint {
    pub fn flat(p_e: DVector<f64>, q_e: DVector<f64>) -> Self {
        let n = p_e.len();
        OperatingPoint {
            theta_e: DVector::zeros(n),
            v_e: DVector::from_element(n, 1.0),
            p_e,
            q_e,
        }
    }

    pub fn len(&self) -> usize {
        self.theta_e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_e.is_empty()
    }
}

/// Linearized network Jacobian blocks around an operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBlocks {
    pub l: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub p_e: DVector<f64>,
    pub q_e: DVector<f64>,
    pub v_e: DVector<f64>,
}

fn validate_topology(buses: &[Bus], branches: &[Branch]) -> Result<BTreeMap<BusId, usize>> {
    let mut index = BTreeMap::new();
    for (k, bus) in buses.iter().enumerate() {
        if index.insert(bus.id, k).is_some() {
            return Err(Error::input(format!("duplicate bus id {}", bus.id)));
        }
        if !bus.shunt_g.is_finite() || !bus.shunt_b.is_finite() {
            return Err(Error::input(format!("bus {} has a non-finite shunt", bus.id)));
        }
    }
    let mut seen = BTreeSet::new();
    for br in branches {
        if br.from == br.to {
            return Err(Error::input(format!("branch {}-{} is a self loop", br.from, br.to)));
        }
        if !index.contains_key(&br.from) || !index.contains_key(&br.to) {
            return Err(Error::input(format!(
                "branch {}-{} references an unknown bus",
                br.from, br.to
            )));
        }
        if br.x == 0.0 || !br.x.is_finite() || !br.r.is_finite() {
            return Err(Error::input(format!(
                "branch {}-{} has zero or invalid reactance",
                br.from, br.to
            )));
        }
        let key = (br.from.min(br.to), br.from.max(br.to));
        if !seen.insert(key) {
            return Err(Error::input(format!("duplicate branch {}-{}", key.0, key.1)));
        }
    }
    if buses.is_empty() {
        return Err(Error::input("network has no buses"));
    }
    // connectivity
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); buses.len()];
    for br in branches {
        let (a, b) = (index[&br.from], index[&br.to]);
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut visited = vec![false; buses.len()];
    let mut queue = VecDeque::from([0usize]);
    visited[0] = true;
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if !visited[w] {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    let isolated: Vec<BusId> = buses
        .iter()
        .zip(&visited)
        .filter(|(_, &v)| !v)
        .map(|(b, _)| b.id)
        .collect();
    if !isolated.is_empty() {
        return Err(Error::Topology(format!(
            "network is disconnected; buses {isolated:?} are unreachable from bus {}",
            buses[0].id
        )));
    }
    Ok(index)
}

/// Assembles the nodal admittance matrix, shunts included, in the given bus order.
pub fn build_admittance(buses: &[Bus], branches: &[Branch]) -> Result<Admittance> {
    let index = validate_topology(buses, branches)?;
    let n = buses.len();
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for br in branches {
        let (a, b) = (index[&br.from], index[&br.to]);
        let yb = br.admittance();
        y[(a, a)] += yb;
        y[(b, b)] += yb;
        y[(a, b)] -= yb;
        y[(b, a)] -= yb;
    }
    for (k, bus) in buses.iter().enumerate() {
        y[(k, k)] += Complex64::new(bus.shunt_g, bus.shunt_b);
    }
    Ok(Admittance {
        ids: buses.iter().map(|b| b.id).collect(),
        y,
    })
}

/// Eliminates every bus not listed in `retained` by a Schur complement,
/// `Y_red = Y_tt - Y_ti Y_ii^-1 Y_it`. Retained buses keep the requested order.
pub fn kron_reduce(adm: &Admittance, retained: &[BusId]) -> Result<Admittance> {
    let mut t_idx = Vec::with_capacity(retained.len());
    for &id in retained {
        let k = adm
            .index_of(id)
            .ok_or_else(|| Error::input(format!("retained bus {id} is not in the network")))?;
        if t_idx.contains(&k) {
            return Err(Error::input(format!("retained bus {id} listed twice")));
        }
        t_idx.push(k);
    }
    let i_idx: Vec<usize> = (0..adm.len()).filter(|k| !t_idx.contains(k)).collect();
    let y_tt = adm.y.select_rows(&t_idx).select_columns(&t_idx);
    if i_idx.is_empty() {
        return Ok(Admittance {
            ids: retained.to_vec(),
            y: y_tt,
        });
    }
    let y_ti = adm.y.select_rows(&t_idx).select_columns(&i_idx);
    let y_it = adm.y.select_rows(&i_idx).select_columns(&t_idx);
    let y_ii = adm.y.select_rows(&i_idx).select_columns(&i_idx);

    let lu = y_ii.clone().lu();
    let u = lu.u();
    let scale = y_ii.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let min_pivot = u.diagonal().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let solved = if min_pivot > 1e-12 * scale {
        lu.solve(&y_it)
    } else {
        None
    };
    let Some(x) = solved else {
        return Err(Error::Reduction {
            buses: floating_interior(adm, &t_idx, &i_idx),
        });
    };
    Ok(Admittance {
        ids: retained.to_vec(),
        y: y_tt - y_ti * x,
    })
}

/// Interior islands that touch no retained bus and carry no shunt admittance.
fn floating_interior(adm: &Admittance, t_idx: &[usize], i_idx: &[usize]) -> Vec<BusId> {
    let n = adm.len();
    let mut comp = vec![usize::MAX; n];
    let mut offenders = Vec::new();
    for &start in i_idx {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut members = vec![start];
        comp[start] = start;
        let mut touches_retained = false;
        let mut shunt = Complex64::new(0.0, 0.0);
        let mut q = VecDeque::from([start]);
        while let Some(u) = q.pop_front() {
            let row_sum: Complex64 = (0..n).map(|c| adm.y[(u, c)]).sum();
            shunt += row_sum;
            for w in 0..n {
                if w == u || adm.y[(u, w)].norm() == 0.0 {
                    continue;
                }
                if t_idx.contains(&w) {
                    touches_retained = true;
                } else if comp[w] == usize::MAX {
                    comp[w] = start;
                    members.push(w);
                    q.push_back(w);
                }
            }
        }
        if !touches_retained && shunt.norm() < 1e-12 {
            offenders.extend(members.iter().map(|&k| adm.ids[k]));
        }
    }
    if offenders.is_empty() {
        offenders = i_idx.iter().map(|&k| adm.ids[k]).collect();
    }
    offenders.sort_unstable();
    offenders
}

/// Evaluates `L` and `N` entry by entry from the reduced admittance and the
/// operating point; the diagonals are minus the off-diagonal row sums.
pub fn build_jacobian_blocks(y_red: &Admittance, op: &OperatingPoint) -> Result<JacobianBlocks> {
    let n = y_red.len();
    if op.len() != n || op.v_e.len() != n || op.p_e.len() != n || op.q_e.len() != n {
        return Err(Error::input(format!(
            "operating point has {} entries but the reduced network has {n} buses",
            op.len()
        )));
    }
    if op.v_e.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::input("operating point voltages must be positive"));
    }
    let mut l = DMatrix::zeros(n, n);
    let mut nm = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let g = y_red.y[(i, j)].re;
            let b = y_red.y[(i, j)].im;
            let th = op.theta_e[i] - op.theta_e[j];
            let vv = op.v_e[i] * op.v_e[j];
            let (s, c) = th.sin_cos();
            l[(i, j)] = -vv * (b * c - g * s);
            nm[(i, j)] = -vv * (-b * s - g * c);
        }
        let l_row: f64 = (0..n).filter(|&j| j != i).map(|j| l[(i, j)]).sum();
        let n_row: f64 = (0..n).filter(|&j| j != i).map(|j| nm[(i, j)]).sum();
        l[(i, i)] = -l_row;
        nm[(i, i)] = -n_row;
    }
    Ok(JacobianBlocks {
        l,
        n: nm,
        p_e: op.p_e.clone(),
        q_e: op.q_e.clone(),
        v_e: op.v_e.clone(),
    })
}

/// Largest absolute row sum over `L` and `N`; zero for a power-flow invariant pair.
pub fn check_flow_invariance(blocks: &JacobianBlocks) -> f64 {
    let worst = |m: &DMatrix<f64>| {
        m.row_iter()
            .map(|r| r.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    };
    worst(&blocks.l).max(worst(&blocks.n))
}
