//! Closed-form decomposition of the two-device system with
//! `L = [L11, -L11; -L22, L22]` and `S = diag(S1, S2)`.
//!
//! Eigenvectors here are in their raw algebraic scaling, not max-normalized;
//! compare through scale-free quantities (eigenvalues, `phi psi^T / s_m`,
//! bus-specific parameters).

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::modal::{ModalParams, NominalDynamics};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoDeviceOracle {
    pub l11: f64,
    pub l22: f64,
    pub s1: f64,
    pub s2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMode {
    pub lambda: f64,
    pub phi: Vector2<f64>,
    pub psi: Vector2<f64>,
    pub s_m: f64,
    pub l_m: f64,
}

impl TwoDeviceOracle {
    pub fn new(l11: f64, l22: f64, s1: f64, s2: f64) -> Result<Self> {
        if s1 == 0.0 {
            return Err(Error::Division("S1 = 0".into()));
        }
        if l11 == 0.0 || l22 == 0.0 {
            return Err(Error::Division("L11 and L22 must be nonzero".into()));
        }
        Ok(TwoDeviceOracle { l11, l22, s1, s2 })
    }

    pub fn symmetric(l: f64, s1: f64, s2: f64) -> Result<Self> {
        Self::new(l, l, s1, s2)
    }

    /// `S_L = L22 S1 + L11 S2`.
    pub fn s_l(&self) -> f64 {
        self.l22 * self.s1 + self.l11 * self.s2
    }

    pub fn common(&self) -> OracleMode {
        OracleMode {
            lambda: 0.0,
            phi: Vector2::new(1.0, 1.0),
            psi: Vector2::new(self.l22 / self.l11, 1.0),
            s_m: self.s_l() / self.l11,
            l_m: 0.0,
        }
    }

    pub fn differential(&self) -> OracleMode {
        let sl = self.s_l();
        OracleMode {
            lambda: sl / (self.s1 * self.s2),
            phi: Vector2::new(-self.l11 * self.s2 / (self.l22 * self.s1), 1.0),
            psi: Vector2::new(-self.s2 / self.s1, 1.0),
            s_m: sl * self.s2 / (self.l22 * self.s1),
            l_m: sl * sl / (self.l22 * self.s1 * self.s1),
        }
    }

    pub fn modal_params(&self, nominal: NominalDynamics) -> [ModalParams; 2] {
        [self.common(), self.differential()].map(|m| ModalParams {
            j: m.s_m * nominal.j,
            d: m.s_m * nominal.d,
            k: m.s_m * nominal.k + nominal.gain * m.l_m,
        })
    }

    /// Bus-1 modal inertias `J^(1,1)` for nominal inertia `j0`.
    pub fn bus1_inertia(&self, j0: f64) -> [f64; 2] {
        [
            j0 * self.s_l() / self.l22,
            j0 * self.s_l() * self.s1 / (self.l11 * self.s2),
        ]
    }
}

/// Modal voltage springs of the symmetric pair with `G_QV0 = 1`:
/// `(S_sum, S1^-2 S_sum (S1 S2 + S_sum L))`.
pub fn symmetric_voltage_springs(l: f64, s1: f64, s2: f64) -> Result<[f64; 2]> {
    if s1 == 0.0 {
        return Err(Error::Division("S1 = 0".into()));
    }
    let sum = s1 + s2;
    Ok([sum, sum * (s1 * s2 + sum * l) / (s1 * s1)])
}

/// Load spring at which the differential voltage mode of the symmetric pair
/// loses its stiffness: `-L / (L / S1 + 1)`.
pub fn dm_voltage_threshold(l: f64, s1: f64) -> Result<f64> {
    if s1 == 0.0 {
        return Err(Error::Division("S1 = 0".into()));
    }
    Ok(-l / (l / s1 + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix2;

    #[test]
    fn equal_devices_table_values() {
        let o = TwoDeviceOracle::symmetric(3.0, 1.0, 1.0).unwrap();
        assert_eq!(o.bus1_inertia(10.0), [20.0, 20.0]);
    }

    #[test]
    fn threshold_examples() {
        assert_relative_eq!(dm_voltage_threshold(3.0, 10.0).unwrap(), -3.0 / 1.3, epsilon = 1e-12);
        assert_relative_eq!(dm_voltage_threshold(3.0, 1e12).unwrap(), -3.0, epsilon = 1e-9);
        assert!(dm_voltage_threshold(3.0, 0.0).is_err());
    }

    #[test]
    fn unit_pair_springs() {
        assert_eq!(symmetric_voltage_springs(3.0, 1.0, 1.0).unwrap(), [2.0, 14.0]);
    }

    #[test]
    fn threshold_zeroes_dm_spring() {
        let s2 = dm_voltage_threshold(3.0, 10.0).unwrap();
        assert!(symmetric_voltage_springs(3.0, 10.0, s2).unwrap()[1].abs() < 1e-12);
    }

    #[test]
    fn closed_form_satisfies_eigen_equations() {
        let o = TwoDeviceOracle::new(2.0, 5.0, 1.5, 0.7).unwrap();
        let l = Matrix2::new(o.l11, -o.l11, -o.l22, o.l22);
        let s = Matrix2::new(o.s1, 0.0, 0.0, o.s2);
        for m in [o.common(), o.differential()] {
            assert!((l * m.phi - s * m.phi * m.lambda).amax() < 1e-12);
            assert!((m.psi.transpose() * l - m.psi.transpose() * s * m.lambda).amax() < 1e-12);
            assert_relative_eq!((m.psi.transpose() * s * m.phi)[0], m.s_m, epsilon = 1e-12);
            assert_relative_eq!((m.psi.transpose() * l * m.phi)[0], m.l_m, epsilon = 1e-12);
        }
    }
}
