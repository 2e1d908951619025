//! Direct fixed-step RK4 integration of the coupled closed loop, built from
//! per-bus device dynamics without any modal transform.
//!
//! Frequency states per dynamic bus: angle `theta` (rad), frequency `w`
//! (p.u., `theta' = omega0 w`) and an optional governor output. Voltage
//! states: relative deviation `x`. Buses without dynamics are algebraic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::modal::Side;
use crate::response::{BusDynamics, Disturbance, ResponseEngine, ResponseTrace, SideModel, SimulationSettings, TRUNCATION_LIMIT};

/// RK4 is stable on the real axis up to about 2.78; leave margin.
const RK4_STABILITY: f64 = 2.7;

pub struct DirectEngine;

struct StateSpace {
    /// Indices (into the non-infinite bus list) of dynamic and algebraic buses.
    dynamic: Vec<usize>,
    algebraic: Vec<usize>,
    /// `z' = A z + E u`, with `u` over the non-infinite buses.
    a: DMatrix<f64>,
    e: DMatrix<f64>,
    /// Algebraic coordinates: `x_alg = Cz z + Cu u`.
    alg_z: DMatrix<f64>,
    alg_u: DMatrix<f64>,
    nd: usize,
}

fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn build(side: Side, l: &DMatrix<f64>, dyns: &[BusDynamics], omega0: f64) -> Result<StateSpace> {
    let n = dyns.len();
    let is_dynamic = |b: &BusDynamics| match side {
        Side::Frequency => b.j != 0.0,
        Side::Voltage => b.d != 0.0,
    };
    for (i, b) in dyns.iter().enumerate() {
        match side {
            Side::Frequency if b.j == 0.0 && (b.d != 0.0 || b.governor.is_some()) => {
                return Err(Error::Regime(format!(
                    "direct engine needs inertia at bus position {i} with damping or governor"
                )));
            }
            Side::Frequency if b.j < 0.0 => return Err(Error::Regime("negative inertia".into())),
            Side::Voltage if b.d < 0.0 => return Err(Error::Regime("negative voltage damping".into())),
            _ => {}
        }
    }
    let dynamic: Vec<usize> = (0..n).filter(|&i| is_dynamic(&dyns[i])).collect();
    let algebraic: Vec<usize> = (0..n).filter(|&i| !is_dynamic(&dyns[i])).collect();
    let nd = dynamic.len();
    if nd == 0 {
        return Err(Error::Degenerate("no bus carries dynamics".into()));
    }
    // spring scale: K/omega0 on frequency side
    let ks = |b: &BusDynamics| match side {
        Side::Frequency => b.k / omega0,
        Side::Voltage => b.k,
    };
    let mut m = l.clone();
    for (i, b) in dyns.iter().enumerate() {
        m[(i, i)] += ks(b);
    }
    // network + springs seen by dynamic buses after algebraic elimination
    let m_dd = sub(&m, &dynamic, &dynamic);
    let (k_red, u_map, alg_x, alg_u) = if algebraic.is_empty() {
        (m_dd, DMatrix::identity(nd, n), DMatrix::zeros(0, nd), DMatrix::zeros(0, n))
    } else {
        let m_aa = sub(&m, &algebraic, &algebraic);
        let inv = m_aa.try_inverse().ok_or_else(|| {
            Error::Degenerate("algebraic buses are not tied to any dynamic bus".into())
        })?;
        let m_da = sub(&m, &dynamic, &algebraic);
        let m_ad = sub(&m, &algebraic, &dynamic);
        let k_red = &m_dd - &m_da * &inv * &m_ad;
        // selection matrices onto dynamic / algebraic inputs
        let sel_d = DMatrix::from_fn(nd, n, |i, j| if dynamic[i] == j { 1.0 } else { 0.0 });
        let sel_a = DMatrix::from_fn(algebraic.len(), n, |i, j| if algebraic[i] == j { 1.0 } else { 0.0 });
        let u_map = &sel_d - &m_da * &inv * &sel_a;
        let alg_x = -(&inv * &m_ad);
        let alg_u = &inv * &sel_a;
        (k_red, u_map, alg_x, alg_u)
    };

    let gov: Vec<usize> = (0..nd)
        .filter(|&i| dyns[dynamic[i]].governor.is_some_and(|g| g.t_g > 0.0))
        .collect();
    let (nz, a, e) = match side {
        Side::Voltage => {
            let dinv = DVector::from_fn(nd, |i, _| 1.0 / dyns[dynamic[i]].d);
            let a = DMatrix::from_fn(nd, nd, |i, j| -dinv[i] * k_red[(i, j)]);
            let e = DMatrix::from_fn(nd, n, |i, j| dinv[i] * u_map[(i, j)]);
            (nd, a, e)
        }
        Side::Frequency => {
            let ng = gov.len();
            let nz = 2 * nd + ng;
            let mut a = DMatrix::zeros(nz, nz);
            let mut e = DMatrix::zeros(nz, n);
            for i in 0..nd {
                let b = dyns[dynamic[i]];
                a[(i, nd + i)] = omega0;
                // effective damping and spring including algebraic governors
                let (mut d, mut k_extra) = (b.d, 0.0);
                if let Some(g) = b.governor {
                    if g.t_g == 0.0 {
                        d += g.k_p;
                        k_extra = g.k_s / omega0;
                    }
                }
                for j in 0..nd {
                    a[(nd + i, j)] = -k_red[(i, j)] / b.j;
                }
                a[(nd + i, i)] -= k_extra / b.j;
                a[(nd + i, nd + i)] = -d / b.j;
                for c in 0..n {
                    e[(nd + i, c)] = u_map[(i, c)] / b.j;
                }
            }
            for (r, &i) in gov.iter().enumerate() {
                let b = dyns[dynamic[i]];
                let g = b.governor.unwrap();
                let row = 2 * nd + r;
                a[(nd + i, row)] = -1.0 / b.j;
                a[(row, nd + i)] = g.k_p / g.t_g;
                a[(row, i)] = g.k_s / omega0 / g.t_g;
                a[(row, row)] = -1.0 / g.t_g;
            }
            (nz, a, e)
        }
    };
    let alg_z = {
        let mut c = DMatrix::zeros(algebraic.len(), nz);
        c.view_mut((0, 0), (algebraic.len(), nd)).copy_from(&alg_x);
        c
    };
    Ok(StateSpace {
        dynamic,
        algebraic,
        a,
        e,
        alg_z,
        alg_u,
        nd,
    })
}

fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl ResponseEngine for DirectEngine {
    fn name(&self) -> &'static str {
        "direct"
    }

    fn simulate(&self, model: &SideModel, disturbances: &[Disturbance], settings: &SimulationSettings) -> Result<ResponseTrace> {
        settings.validate()?;
        model.check_disturbances(disturbances)?;
        let side = model.side;
        let keep: Vec<usize> = (0..model.bus_ids.len())
            .filter(|&i| !model.infinite.contains(&model.bus_ids[i]))
            .collect();
        let l = sub(&model.l, &keep, &keep);
        let dyns: Vec<BusDynamics> = keep.iter().map(|&i| model.dynamics[i]).collect();
        let ss = build(side, &l, &dyns, model.gain)?;
        let rho = spectral_radius(&ss.a);
        if rho * settings.dt > RK4_STABILITY {
            return Err(Error::Integrator(format!(
                "dt = {} s is outside the RK4 stability region (spectral radius {rho:.3e}); use dt < {:.3e}",
                settings.dt,
                RK4_STABILITY / rho
            )));
        }

        let t_out = settings.output_grid();
        let ns = t_out.len();
        let nk = keep.len();
        let u_keep = |t: f64| -> DVector<f64> {
            let u = model.input_at(disturbances, t);
            DVector::from_fn(nk, |i, _| u[keep[i]])
        };
        let mut breaks: Vec<f64> = t_out.clone();
        breaks.extend(
            model
                .relevant(disturbances)
                .iter()
                .map(|d| d.start_time)
                .filter(|&s| s > 0.0 && s < settings.t_end),
        );
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

        let nz = ss.a.nrows();
        let mut z = DVector::zeros(nz);
        let nb = model.bus_ids.len();
        let mut x = vec![vec![0.0; ns]; nb];
        let mut rate = vec![vec![0.0; ns]; nb];
        let power_buses = model.decomposition.active.clone();
        let mut power = vec![vec![0.0; ns]; power_buses.len()];
        let power_pos: Vec<usize> = power_buses
            .iter()
            .map(|b| keep.iter().position(|&k| model.bus_ids[k] == *b).unwrap())
            .collect();

        let mut truncated_at = None;
        let mut out_k = 0usize;
        let record = |k: usize, t: f64, z: &DVector<f64>, x: &mut Vec<Vec<f64>>, rate: &mut Vec<Vec<f64>>, power: &mut Vec<Vec<f64>>| -> bool {
            let u = u_keep(t);
            let zd = &ss.a * z + &ss.e * &u;
            let xs = z.rows(0, ss.nd).into_owned();
            let xa = &ss.alg_z * z + &ss.alg_u * &u;
            let (rd, ra) = match side {
                Side::Frequency => {
                    let w = z.rows(ss.nd, ss.nd).into_owned();
                    let wa = (&ss.alg_z * &zd) / model.gain;
                    (w, wa)
                }
                Side::Voltage => (zd.rows(0, ss.nd).into_owned(), &ss.alg_z * &zd),
            };
            let mut xfull = DVector::zeros(nk);
            for (i, &p) in ss.dynamic.iter().enumerate() {
                xfull[p] = xs[i];
                x[keep[p]][k] = xs[i];
                rate[keep[p]][k] = rd[i];
            }
            for (i, &p) in ss.algebraic.iter().enumerate() {
                xfull[p] = xa[i];
                x[keep[p]][k] = xa[i];
                rate[keep[p]][k] = ra[i];
            }
            let lx = &l * &xfull;
            for (r, &p) in power_pos.iter().enumerate() {
                power[r][k] = lx[p] - u[p];
            }
            match side {
                Side::Frequency => (0..nb).any(|b| !(rate[b][k].abs() <= TRUNCATION_LIMIT)),
                Side::Voltage => (0..nb).any(|b| !(x[b][k].abs() <= TRUNCATION_LIMIT)),
            }
        };

        let mut t = 0.0;
        if record(0, 0.0, &z, &mut x, &mut rate, &mut power) {
            truncated_at = Some(0.0);
        }
        out_k += 1;
        let mut bi = 1;
        while truncated_at.is_none() && bi < breaks.len() {
            let t1 = breaks[bi];
            let span = t1 - t;
            let steps = ((span / settings.dt) - 1e-9).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            let u = u_keep(0.5 * (t + t1));
            let eu = &ss.e * &u;
            let f = |z: &DVector<f64>| &ss.a * z + &eu;
            for _ in 0..steps {
                let k1 = f(&z);
                let k2 = f(&(&z + &k1 * (0.5 * h)));
                let k3 = f(&(&z + &k2 * (0.5 * h)));
                let k4 = f(&(&z + &k3 * h));
                z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
            t = t1;
            if out_k < ns && (t_out[out_k] - t).abs() < 1e-9 {
                if record(out_k, t_out[out_k], &z, &mut x, &mut rate, &mut power) {
                    truncated_at = Some(t_out[out_k]);
                }
                out_k += 1;
            }
            bi += 1;
        }
        let mut trace = ResponseTrace {
            side,
            engine: self.name(),
            t: t_out,
            bus_ids: model.bus_ids.clone(),
            x,
            rate,
            power_buses,
            power,
            modes: Vec::new(),
            truncated_at,
        };
        trace.truncate(out_k);
        Ok(trace)
    }
}
