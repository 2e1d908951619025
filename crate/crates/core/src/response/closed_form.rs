//! Analytic step and impulse responses of the eigen-subsystems
//! `1 / (J s^2 + D s + K)` and `1 / (D s + K)`.

use crate::error::{Error, Result};

const CRITICAL_TOL: f64 = 1e-10;

/// Unit-step response `y(t)` and its derivative `h(t)` (the impulse response).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPair {
    pub y: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    /// `J = 0`: first order, or static when `D = 0`.
    FirstOrder { d: f64, k: f64 },
    /// `K = 0`, `J > 0`.
    FreeIntegrator { j: f64, d: f64 },
    /// Two real roots `r1 > r2`.
    Real { k: f64, r1: f64, r2: f64, sigma: f64, beta: f64 },
    Critical { j: f64, k: f64, sigma: f64 },
    Oscillatory { j: f64, k: f64, sigma: f64, nu: f64 },
}

/// Precomputed response of one eigen-subsystem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeResponse {
    shape: Shape,
}

impl ModeResponse {
    pub fn second_order(j: f64, d: f64, k: f64) -> Result<Self> {
        if !(j.is_finite() && d.is_finite() && k.is_finite()) {
            return Err(Error::Degenerate("non-finite modal parameters".into()));
        }
        if j == 0.0 {
            return Self::first_order(d, k);
        }
        let scale = k.abs().max(d.abs()).max(j.abs());
        if k.abs() <= 1e-13 * scale {
            return Ok(ModeResponse { shape: Shape::FreeIntegrator { j, d } });
        }
        let sigma = -d / (2.0 * j);
        let disc = d * d - 4.0 * j * k;
        let disc_scale = (d * d).max((4.0 * j * k).abs());
        let shape = if disc.abs() <= CRITICAL_TOL * disc_scale {
            Shape::Critical { j, k, sigma }
        } else if disc > 0.0 {
            let beta = disc.sqrt() / (2.0 * j.abs());
            let (a, b) = (sigma + beta, sigma - beta);
            Shape::Real { k, r1: a.max(b), r2: a.min(b), sigma, beta }
        } else {
            Shape::Oscillatory { j, k, sigma, nu: (-disc).sqrt() / (2.0 * j) }
        };
        Ok(ModeResponse { shape })
    }

    pub fn first_order(d: f64, k: f64) -> Result<Self> {
        if d == 0.0 && k == 0.0 {
            return Err(Error::Degenerate("mode has zero damping and zero spring".into()));
        }
        if !(d.is_finite() && k.is_finite()) {
            return Err(Error::Degenerate("non-finite modal parameters".into()));
        }
        Ok(ModeResponse { shape: Shape::FirstOrder { d, k } })
    }

    /// Response at time `t` after the step; zero for `t < 0`.
    pub fn at(&self, t: f64) -> StepPair {
        if t < 0.0 {
            return StepPair { y: 0.0, h: 0.0 };
        }
        match self.shape {
            Shape::FirstOrder { d, k } => {
                if d == 0.0 {
                    StepPair { y: 1.0 / k, h: 0.0 }
                } else if k == 0.0 {
                    StepPair { y: t / d, h: 1.0 / d }
                } else {
                    let e = (-k * t / d).exp();
                    StepPair { y: (1.0 - e) / k, h: e / d }
                }
            }
            Shape::FreeIntegrator { j, d } => {
                if d == 0.0 {
                    StepPair { y: t * t / (2.0 * j), h: t / j }
                } else {
                    let e = -(-d * t / j).exp_m1();
                    StepPair { y: t / d - j / (d * d) * e, h: e / d }
                }
            }
            Shape::Real { k, r1, r2, sigma, beta } => {
                let (e1, e2) = ((r1 * t).exp(), (r2 * t).exp());
                let ratio = sigma / beta;
                let ep = if r1 == sigma + beta { e1 } else { e2 };
                let em = if r1 == sigma + beta { e2 } else { e1 };
                let mix = 0.5 * (1.0 - ratio) * ep + 0.5 * (1.0 + ratio) * em;
                // e^{sigma t} sinh(beta t) / (J beta) with J beta = (r1 - r2) J / 2 and 1/J = r1 r2 / K
                let h = (r1 * r2 / k) * (e1 - e2) / (r1 - r2);
                StepPair { y: (1.0 - mix) / k, h }
            }
            Shape::Critical { j, k, sigma } => {
                let e = (sigma * t).exp();
                StepPair { y: (1.0 - e * (1.0 - sigma * t)) / k, h: t * e / j }
            }
            Shape::Oscillatory { j, k, sigma, nu } => {
                let e = (sigma * t).exp();
                let (s, c) = (nu * t).sin_cos();
                StepPair { y: (1.0 - e * (c - sigma / nu * s)) / k, h: e * s / (j * nu) }
            }
        }
    }
}
