//! Seeded random lossless networks and the structural checks run on them.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::device::Capacity;
use crate::error::Result;
use crate::grid::{build_admittance, build_jacobian_blocks, kron_reduce, Branch, Bus, BusId, OperatingPoint};
use crate::metrics::{nodal_inertia, nodal_inertia_direct};
use crate::modal::{decompose_side, ModeKind, NominalDynamics, Side};

/// Connected lossless network on buses `1..=n`: a random tree plus extra edges.
pub fn random_network<R: Rng>(rng: &mut R, n: usize) -> (Vec<Bus>, Vec<Branch>) {
    let buses: Vec<Bus> = (1..=n as BusId).map(Bus::device).collect();
    let mut edges: Vec<(BusId, BusId)> = Vec::new();
    for k in 2..=n as BusId {
        edges.push((rng.random_range(1..k), k));
    }
    let extra = rng.random_range(0..=n);
    for _ in 0..extra {
        let a = rng.random_range(1..=n as BusId);
        let b = rng.random_range(1..=n as BusId);
        let e = (a.min(b), a.max(b));
        if a != b && !edges.iter().any(|&(x, y)| (x.min(y), x.max(y)) == e) {
            edges.push(e);
        }
    }
    let branches = edges
        .into_iter()
        .map(|(a, b)| Branch::lossless(a, b, rng.random_range(0.05..1.0)))
        .collect();
    (buses, branches)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub n: usize,
    pub row_sum: f64,
    pub zero_eigenvalues: usize,
    pub cm_vector_gap: f64,
    pub biorthogonality: f64,
    pub nodal_inertia_gap: f64,
    pub resolvent_gap: f64,
    pub pass: bool,
}

/// Runs the structural checks on `count` random networks with up to `n_max` buses.
pub fn check_random(seed: u64, count: usize, n_max: usize) -> Result<Vec<InvariantCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let n = rng.random_range(2..=n_max.max(2));
        let (buses, branches) = random_network(&mut rng, n);
        let ids: Vec<BusId> = buses.iter().map(|b| b.id).collect();
        let y = kron_reduce(&build_admittance(&buses, &branches)?, &ids)?;
        let op = OperatingPoint::flat(DVector::zeros(n), DVector::zeros(n));
        let l = build_jacobian_blocks(&y, &op)?.l;
        let caps: Vec<Capacity> = (0..n).map(|_| Capacity::Finite(rng.random_range(0.1..10.0))).collect();
        let nominal = NominalDynamics { j: rng.random_range(1.0..20.0), d: rng.random_range(1.0..20.0), k: 0.0, gain: 1.0 };
        let dec = decompose_side(Side::Frequency, &ids, &l, &caps, nominal, "auto")?;
        out.push(check_one(&l, &dec, &mut rng)?);
    }
    Ok(out)
}

fn check_one<R: Rng>(l: &DMatrix<f64>, dec: &crate::modal::SideDecomposition, rng: &mut R) -> Result<InvariantCheck> {
    let n = l.nrows();
    let row_sum = l.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max);
    let scale = dec.modes.iter().fold(1.0f64, |m, md| m.max(md.lambda.abs()));
    let zero_eigenvalues = dec.modes.iter().filter(|m| m.lambda.abs() <= 1e-8 * scale).count();
    let cm_vector_gap = dec
        .common_mode()
        .map(|m| m.phi.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY);

    let phi = DMatrix::from_columns(&dec.modes.iter().map(|m| m.phi.clone()).collect::<Vec<_>>());
    let psi = DMatrix::from_columns(&dec.modes.iter().map(|m| m.psi.clone()).collect::<Vec<_>>());
    let s = DMatrix::from_diagonal(&dec.s);
    let off = |m: DMatrix<f64>| {
        let diag = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    worst = worst.max(m[(i, j)].abs());
                }
            }
        }
        worst / diag
    };
    let biorthogonality = off(psi.transpose() * &s * &phi).max(off(psi.transpose() * l * &phi));

    // inverse inertias, compared against the largest one
    let mut pairs = Vec::new();
    for &i in &dec.active {
        for &j in &dec.active {
            pairs.push((1.0 / nodal_inertia(dec, i, j)?, 1.0 / nodal_inertia_direct(dec, i, j)?));
        }
    }
    let scale = pairs.iter().fold(0.0f64, |m, (a, b)| m.max(a.abs()).max(b.abs()));
    let nodal_inertia_gap = pairs.iter().fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / scale));

    let mut resolvent_gap = 0.0f64;
    for _ in 0..20 {
        let g = rng.random_range(0.1..10.0);
        let direct = (&s * g + l).try_inverse().unwrap_or_else(|| DMatrix::zeros(n, n));
        let mut modal = DMatrix::zeros(n, n);
        for m in &dec.modes {
            modal += &m.phi * m.psi.transpose() / (m.s_m * g + m.l_m);
        }
        resolvent_gap = resolvent_gap.max((&modal - &direct).norm() / direct.norm());
    }
    let cm_count = dec.modes.iter().filter(|m| m.kind == ModeKind::Common).count();
    let pass = row_sum <= 1e-10
        && zero_eigenvalues == 1
        && cm_count == 1
        && cm_vector_gap <= 1e-9
        && biorthogonality <= 1e-8
        && nodal_inertia_gap <= 1e-9
        && resolvent_gap <= 1e-8;
    Ok(InvariantCheck {
        n,
        row_sum,
        zero_eigenvalues,
        cm_vector_gap,
        biorthogonality,
        nodal_inertia_gap,
        resolvent_gap,
        pass,
    })
}
