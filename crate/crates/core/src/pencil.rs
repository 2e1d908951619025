//! Generalized eigenproblem `L phi = lambda S phi`, `psi^T L = lambda psi^T S`
//! for a real network matrix `L` and a diagonal scaling `S`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::registry::Registry;

/// Relative tolerance below which two eigenvalues form one cluster.
const CLUSTER_TOL: f64 = 1e-7;
/// Imaginary parts above this (relative) make the pencil unsupported.
const COMPLEX_TOL: f64 = 1e-7;
const DEFECT_TOL: f64 = 1e-8;
const TIE_TOL: f64 = 1e-9;
const NULL_TOL: f64 = 1e-6;

/// Eigenpairs sorted by ascending eigenvalue, vectors normalized so that
/// their largest-magnitude entry equals +1.
#[derive(Debug, Clone, PartialEq)]
pub struct PencilSolution {
    pub eigenvalues: Vec<f64>,
    /// Right eigenvectors as columns.
    pub right: DMatrix<f64>,
    /// Left eigenvectors as columns.
    pub left: DMatrix<f64>,
    pub solver: &'static str,
}

impl PencilSolution {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn phi(&self, k: usize) -> DVector<f64> {
        self.right.column(k).into_owned()
    }

    pub fn psi(&self, k: usize) -> DVector<f64> {
        self.left.column(k).into_owned()
    }
}

pub trait PencilSolver: Send + Sync {
    fn name(&self) -> &'static str;
    /// Whether the solver's preconditions hold for this pencil.
    fn accepts(&self, l: &DMatrix<f64>, s: &DVector<f64>) -> bool;
    fn solve(&self, l: &DMatrix<f64>, s: &DVector<f64>) -> Result<PencilSolution>;
}

fn check_shapes(l: &DMatrix<f64>, s: &DVector<f64>) -> Result<()> {
    if l.nrows() != l.ncols() || l.nrows() != s.len() {
        return Err(Error::input(format!(
            "pencil dimensions differ: L is {}x{}, S has {} entries",
            l.nrows(),
            l.ncols(),
            s.len()
        )));
    }
    if l.iter().chain(s.iter()).any(|x| !x.is_finite()) {
        return Err(Error::input("pencil contains non-finite entries"));
    }
    if let Some(k) = s.iter().position(|&x| x == 0.0) {
        return Err(Error::Regime(format!(
            "zero scaling at position {k}; passive buses must be eliminated first"
        )));
    }
    Ok(())
}

pub fn is_symmetric(l: &DMatrix<f64>) -> bool {
    let scale = l.amax().max(1.0);
    (0..l.nrows()).all(|i| (0..i).all(|j| (l[(i, j)] - l[(j, i)]).abs() <= 1e-10 * scale))
}

/// Index of the largest-magnitude entry; near-ties go to the lowest index.
pub fn dominant_index(v: &DVector<f64>) -> usize {
    let m = v.amax();
    v.iter().position(|x| (x.abs() - m).abs() <= TIE_TOL * m).unwrap_or(0)
}

/// Scales `v` so its dominant entry is exactly +1.
pub fn normalize_max(v: &mut DVector<f64>) {
    let k = dominant_index(v);
    if v[k] != 0.0 {
        let p = v[k];
        *v /= p;
        v[k] = 1.0;
    }
}

fn finish(
    mut pairs: Vec<(f64, DVector<f64>, DVector<f64>)>,
    l: &DMatrix<f64>,
    s: &DVector<f64>,
    solver: &'static str,
) -> Result<PencilSolution> {
    let n = s.len();
    for (lam, phi, psi) in pairs.iter_mut() {
        normalize_max(phi);
        normalize_max(psi);
        let sm: f64 = psi.iter().zip(phi.iter()).zip(s.iter()).map(|((a, b), c)| a * b * c).sum();
        let scale = psi.norm() * phi.norm() * s.amax();
        if sm.abs() <= DEFECT_TOL * scale {
            return Err(Error::Defective(format!(
                "left and right eigenvectors of eigenvalue {lam:.6e} are S-orthogonal"
            )));
        }
        *lam = psi.dot(&(l * &*phi)) / sm;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut right = DMatrix::zeros(n, n);
    let mut left = DMatrix::zeros(n, n);
    for (k, (_, phi, psi)) in pairs.iter().enumerate() {
        right.set_column(k, phi);
        left.set_column(k, psi);
    }
    Ok(PencilSolution {
        eigenvalues: pairs.iter().map(|p| p.0).collect(),
        right,
        left,
        solver,
    })
}

/// Symmetric route: cyclic Jacobi on `S^-1/2 L S^-1/2`, requires symmetric `L`
/// and positive `S`. Left and right eigenvectors coincide.
pub struct JacobiSymmetric;

impl PencilSolver for JacobiSymmetric {
    fn name(&self) -> &'static str {
        "jacobi-symmetric"
    }

    fn accepts(&self, l: &DMatrix<f64>, s: &DVector<f64>) -> bool {
        s.iter().all(|&x| x > 0.0) && is_symmetric(l)
    }

    fn solve(&self, l: &DMatrix<f64>, s: &DVector<f64>) -> Result<PencilSolution> {
        check_shapes(l, s)?;
        if !self.accepts(l, s) {
            return Err(Error::Regime(
                "jacobi-symmetric needs a symmetric L and positive S".into(),
            ));
        }
        let n = s.len();
        let r: Vec<f64> = s.iter().map(|x| 1.0 / x.sqrt()).collect();
        let mut a = DMatrix::from_fn(n, n, |i, j| 0.5 * (l[(i, j)] + l[(j, i)]) * r[i] * r[j]);
        let (w, u) = jacobi_eigen(&mut a)?;
        let pairs = (0..n)
            .map(|k| {
                let phi = DVector::from_fn(n, |i, _| u[(i, k)] * r[i]);
                (w[k], phi.clone(), phi)
            })
            .collect();
        finish(pairs, l, s, self.name())
    }
}

/// Cyclic Jacobi rotations on a symmetric matrix; returns eigenvalues and
/// eigenvectors (columns).
pub fn jacobi_eigen(a: &mut DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let mut v = DMatrix::identity(n, n);
    let total = a.norm().max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total {
            return Ok(((0..n).map(|i| a[(i, i)]).collect(), v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::Degenerate("jacobi rotations did not converge".into()))
}

/// General route: real Schur eigenvalues of `S^-1 L`, then left and right
/// null spaces of `L - lambda S` from an SVD, biorthogonalized per cluster.
pub struct DenseGeneral;

impl PencilSolver for DenseGeneral {
    fn name(&self) -> &'static str {
        "dense-general"
    }

    fn accepts(&self, _l: &DMatrix<f64>, s: &DVector<f64>) -> bool {
        s.iter().all(|&x| x != 0.0)
    }

    fn solve(&self, l: &DMatrix<f64>, s: &DVector<f64>) -> Result<PencilSolution> {
        check_shapes(l, s)?;
        let n = s.len();
        let sd = DMatrix::from_diagonal(s);
        let m = DMatrix::from_fn(n, n, |i, j| l[(i, j)] / s[i]);
        let scale = m.amax().max(1.0);
        let eig = m.clone().complex_eigenvalues();
        if let Some(z) = eig.iter().find(|z| z.im.abs() > COMPLEX_TOL * scale) {
            return Err(Error::Regime(format!(
                "pencil has complex eigenvalue {:.6}{:+.6}i",
                z.re, z.im
            )));
        }
        let mut vals: Vec<f64> = eig.iter().map(|z| z.re).collect();
        vals.sort_by(f64::total_cmp);

        let mut clusters: Vec<Vec<f64>> = Vec::new();
        for v in vals {
            match clusters.last_mut() {
                Some(c) if (v - c[c.len() - 1]).abs() <= CLUSTER_TOL * scale => c.push(v),
                _ => clusters.push(vec![v]),
            }
        }

        let mut pairs = Vec::with_capacity(n);
        for c in clusters {
            let mult = c.len();
            let lam = c.iter().sum::<f64>() / mult as f64;
            let a = l - &sd * lam;
            let null_tol = NULL_TOL * l.amax().max(lam.abs() * s.amax()).max(f64::MIN_POSITIVE);
            let phi_c = null_space(&a, mult, null_tol);
            let psi_c = null_space(&a.transpose(), mult, null_tol);
            let (Some(mut phi_c), Some(psi_c)) = (phi_c, psi_c) else {
                return Err(Error::Defective(format!(
                    "eigenvalue {lam:.6e} (multiplicity {mult}) lacks a full set of eigenvectors"
                )));
            };
            let gram = psi_c.transpose() * &sd * &phi_c;
            let gsv = gram.clone().singular_values();
            if gsv.min() <= DEFECT_TOL * gsv.max().max(s.amax()) {
                return Err(Error::Defective(format!(
                    "eigenvalue {lam:.6e} (multiplicity {mult}) lacks a full set of eigenvectors"
                )));
            }
            if mult > 1 {
                let inv = gram.try_inverse().ok_or_else(|| {
                    Error::Defective(format!("eigenvalue {lam:.6e} cluster is not biorthogonalizable"))
                })?;
                phi_c *= inv;
            }
            for k in 0..mult {
                pairs.push((lam, phi_c.column(k).into_owned(), psi_c.column(k).into_owned()));
            }
        }
        finish(pairs, l, s, self.name())
    }
}

/// Right singular vectors of the `dim` smallest singular values, provided all
/// of them are below `tol`.
fn null_space(a: &DMatrix<f64>, dim: usize, tol: f64) -> Option<DMatrix<f64>> {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
    if order[..dim].iter().any(|&k| svd.singular_values[k] > tol) {
        return None;
    }
    Some(DMatrix::from_fn(n, dim, |i, k| vt[(order[k], i)]))
}

pub fn default_registry() -> Registry<dyn PencilSolver> {
    let mut reg: Registry<dyn PencilSolver> = Registry::new("pencil solver");
    reg.register("jacobi-symmetric", Arc::new(JacobiSymmetric));
    reg.register("dense-general", Arc::new(DenseGeneral));
    reg
}

/// Solves the pencil with the named solver; `"auto"` prefers the symmetric
/// route when it applies.
pub fn solve_pencil(l: &DMatrix<f64>, s: &DVector<f64>, solver: &str) -> Result<PencilSolution> {
    let reg = default_registry();
    if solver == "auto" {
        let sym = reg.get("jacobi-symmetric")?;
        if sym.accepts(l, s) {
            return sym.solve(l, s);
        }
        return reg.get("dense-general")?.solve(l, s);
    }
    reg.get(solver)?.solve(l, s)
}
