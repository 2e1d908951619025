//! Operating-point solvers over the Kron-reduced network.
//!
//! Interior buses carry no injection, so solving on the reduced admittance is
//! exact for the linear network and yields values at the device terminals only.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Admittance, BusId, OperatingPoint};
use crate::registry::Registry;

pub const NEWTON_TOLERANCE: f64 = 1e-8;
pub const NEWTON_MAX_ITER: usize = 50;

/// Declared injection at a terminal bus. A voltage setpoint makes the bus PV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub bus: BusId,
    #[serde(default)]
    pub p: f64,
    #[serde(default)]
    pub q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PowerFlowSpec {
    pub injections: Vec<Injection>,
    pub slack: Option<BusId>,
    pub slack_voltage: f64,
}

impl PowerFlowSpec {
    fn injection_vectors(&self, y: &Admittance) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = y.len();
        let mut p = DVector::zeros(n);
        let mut q = DVector::zeros(n);
        for inj in &self.injections {
            let k = y.index_of(inj.bus).ok_or_else(|| {
                Error::input(format!("injection at bus {} which is not a terminal bus", inj.bus))
            })?;
            p[k] += inj.p;
            q[k] += inj.q;
        }
        Ok((p, q))
    }
}

pub trait PowerFlowMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, y: &Admittance, spec: &PowerFlowSpec) -> Result<OperatingPoint>;
}

/// Flat start: zero angles, unit voltages, declared injections.
pub struct FlatStart;

impl PowerFlowMethod for FlatStart {
    fn name(&self) -> &'static str {
        "flat"
    }

    fn solve(&self, y: &Admittance, spec: &PowerFlowSpec) -> Result<OperatingPoint> {
        let (p, q) = spec.injection_vectors(y)?;
        Ok(OperatingPoint::flat(p, q))
    }
}

/// Polar Newton-Raphson with full Jacobian refactorization per iteration.
pub struct NewtonRaphson {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for NewtonRaphson {
    fn default() -> Self {
        NewtonRaphson {
            tolerance: NEWTON_TOLERANCE,
            max_iter: NEWTON_MAX_ITER,
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum BusType {
    Slack,
    Pv,
    Pq,
}

/// Complex power injections `S_i = V_i conj(sum_j Y_ij V_j)`.
pub fn injected_power(y: &Admittance, theta: &DVector<f64>, v: &DVector<f64>) -> Vec<Complex64> {
    let n = y.len();
    let phasor: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(v[k], theta[k])).collect();
    (0..n)
        .map(|i| {
            let current: Complex64 = (0..n).map(|j| y.y[(i, j)] * phasor[j]).sum();
            phasor[i] * current.conj()
        })
        .collect()
}

impl NewtonRaphson {
    fn classify(&self, y: &Admittance, spec: &PowerFlowSpec) -> Result<Vec<BusType>> {
        let slack = spec
            .slack
            .ok_or_else(|| Error::input("newton power flow requires a slack bus"))?;
        let s = y
            .index_of(slack)
            .ok_or_else(|| Error::input(format!("slack bus {slack} is not a terminal bus")))?;
        let mut types = vec![BusType::Pq; y.len()];
        for inj in &spec.injections {
            if inj.v.is_some() {
                if let Some(k) = y.index_of(inj.bus) {
                    types[k] = BusType::Pv;
                }
            }
        }
        types[s] = BusType::Slack;
        Ok(types)
    }
}

impl PowerFlowMethod for NewtonRaphson {
    fn name(&self) -> &'static str {
        "newton"
    }

    fn solve(&self, y: &Admittance, spec: &PowerFlowSpec) -> Result<OperatingPoint> {
        let n = y.len();
        let types = self.classify(y, spec)?;
        let (p_spec, q_spec) = spec.injection_vectors(y)?;
        let mut theta = DVector::zeros(n);
        let mut v = DVector::from_element(n, 1.0);
        for inj in &spec.injections {
            if let (Some(vs), Some(k)) = (inj.v, y.index_of(inj.bus)) {
                if vs <= 0.0 {
                    return Err(Error::input(format!("voltage setpoint at bus {} must be positive", inj.bus)));
                }
                v[k] = vs;
            }
        }
        let slack_idx = types.iter().position(|t| *t == BusType::Slack).unwrap();
        v[slack_idx] = if spec.slack_voltage > 0.0 { spec.slack_voltage } else { 1.0 };

        let ang: Vec<usize> = (0..n).filter(|&k| types[k] != BusType::Slack).collect();
        let mag: Vec<usize> = (0..n).filter(|&k| types[k] == BusType::Pq).collect();
        let dim = ang.len() + mag.len();

        let mut mismatch = f64::INFINITY;
        for iter in 0..=self.max_iter {
            let s = injected_power(y, &theta, &v);
            let mut f = DVector::zeros(dim);
            for (r, &i) in ang.iter().enumerate() {
                f[r] = s[i].re - p_spec[i];
            }
            for (r, &i) in mag.iter().enumerate() {
                f[ang.len() + r] = s[i].im - q_spec[i];
            }
            mismatch = f.amax();
            if mismatch < self.tolerance {
                let p = DVector::from_iterator(n, s.iter().map(|z| z.re));
                let q = DVector::from_iterator(n, s.iter().map(|z| z.im));
                return Ok(OperatingPoint { theta_e: theta, v_e: v, p_e: p, q_e: q });
            }
            if iter == self.max_iter || dim == 0 {
                break;
            }
            let jac = polar_jacobian(y, &theta, &v, &s, &ang, &mag);
            let Some(dx) = jac.lu().solve(&f) else {
                break;
            };
            for (r, &i) in ang.iter().enumerate() {
                theta[i] -= dx[r];
            }
            for (r, &i) in mag.iter().enumerate() {
                v[i] -= dx[ang.len() + r];
            }
            if v.iter().any(|x| !x.is_finite() || *x <= 0.0) || theta.iter().any(|x| !x.is_finite()) {
                break;
            }
        }
        Err(Error::Divergence {
            iterations: self.max_iter,
            mismatch,
        })
    }
}

fn polar_jacobian(
    y: &Admittance,
    theta: &DVector<f64>,
    v: &DVector<f64>,
    s: &[Complex64],
    ang: &[usize],
    mag: &[usize],
) -> DMatrix<f64> {
    let dp_dth = |i: usize, j: usize| {
        if i == j {
            -s[i].im - y.y[(i, i)].im * v[i] * v[i]
        } else {
            let (sn, cs) = (theta[i] - theta[j]).sin_cos();
            v[i] * v[j] * (y.y[(i, j)].re * sn - y.y[(i, j)].im * cs)
        }
    };
    let dp_dv = |i: usize, j: usize| {
        if i == j {
            s[i].re / v[i] + y.y[(i, i)].re * v[i]
        } else {
            let (sn, cs) = (theta[i] - theta[j]).sin_cos();
            v[i] * (y.y[(i, j)].re * cs + y.y[(i, j)].im * sn)
        }
    };
    let dq_dth = |i: usize, j: usize| {
        if i == j {
            s[i].re - y.y[(i, i)].re * v[i] * v[i]
        } else {
            let (sn, cs) = (theta[i] - theta[j]).sin_cos();
            -v[i] * v[j] * (y.y[(i, j)].re * cs + y.y[(i, j)].im * sn)
        }
    };
    let dq_dv = |i: usize, j: usize| {
        if i == j {
            s[i].im / v[i] - y.y[(i, i)].im * v[i]
        } else {
            let (sn, cs) = (theta[i] - theta[j]).sin_cos();
            v[i] * (y.y[(i, j)].re * sn - y.y[(i, j)].im * cs)
        }
    };
    let na = ang.len();
    let dim = na + mag.len();
    let mut jac = DMatrix::zeros(dim, dim);
    for (r, &i) in ang.iter().enumerate() {
        for (c, &j) in ang.iter().enumerate() {
            jac[(r, c)] = dp_dth(i, j);
        }
        for (c, &j) in mag.iter().enumerate() {
            jac[(r, na + c)] = dp_dv(i, j);
        }
    }
    for (r, &i) in mag.iter().enumerate() {
        for (c, &j) in ang.iter().enumerate() {
            jac[(na + r, c)] = dq_dth(i, j);
        }
        for (c, &j) in mag.iter().enumerate() {
            jac[(na + r, na + c)] = dq_dv(i, j);
        }
    }
    jac
}

pub fn default_registry() -> Registry<dyn PowerFlowMethod> {
    let mut reg: Registry<dyn PowerFlowMethod> = Registry::new("power-flow method");
    reg.register("flat", Arc::new(FlatStart));
    reg.register("newton", Arc::new(NewtonRaphson::default()));
    reg
}

/// Convenience wrapper: look the method up by name and solve.
pub fn solve_power_flow(y: &Admittance, spec: &PowerFlowSpec, mode: &str) -> Result<OperatingPoint> {
    default_registry().get(mode)?.solve(y, spec)
}
