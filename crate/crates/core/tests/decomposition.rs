use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use modal_strength::device::Capacity;
use modal_strength::grid::{build_admittance, build_jacobian_blocks, kron_reduce, Branch, Bus, BusId, OperatingPoint};
use modal_strength::modal::{decompose_side, ModeKind, NominalDynamics, Side};
use modal_strength::pencil::solve_pencil;

fn laplacian(n: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for &(a, b, x) in edges {
        l[(a, a)] += 1.0 / x;
        l[(b, b)] += 1.0 / x;
        l[(a, b)] -= 1.0 / x;
        l[(b, a)] -= 1.0 / x;
    }
    l
}

// Connected graph: a tree from the parent choices plus the extra pairs.
fn network() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
    (2usize..10).prop_flat_map(|n| {
        let tree = (1..n).map(|k| (0..k, 0.05f64..1.0).prop_map(move |(p, x)| (p, k, x))).collect::<Vec<_>>();
        let extra = proptest::collection::vec((0..n, 0..n, 0.05f64..1.0), 0..n);
        (Just(n), tree, extra).prop_map(|(n, mut edges, extra)| {
            for (a, b, x) in extra {
                if a != b && !edges.iter().any(|&(p, q, _)| (p, q) == (a, b) || (p, q) == (b, a)) {
                    edges.push((a, b, x));
                }
            }
            (n, edges)
        })
    })
}

fn caps(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.1f64..10.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solvers_agree_on_eigenvalues(((n, edges), s) in network().prop_flat_map(|(n, e)| (Just((n, e)), caps(n)))) {
        let l = laplacian(n, &edges);
        let s = DVector::from_vec(s);
        let a = solve_pencil(&l, &s, "jacobi-symmetric").unwrap();
        let b = solve_pencil(&l, &s, "dense-general").unwrap();
        let mut ea = a.eigenvalues.clone();
        let mut eb = b.eigenvalues.clone();
        ea.sort_by(f64::total_cmp);
        eb.sort_by(f64::total_cmp);
        let scale = ea.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for (x, y) in ea.iter().zip(&eb) {
            prop_assert!((x - y).abs() <= 1e-9 * scale, "{:?} vs {:?}", ea, eb);
        }
    }

    #[test]
    fn modes_reconstruct_the_resolvent(
        ((n, edges), s) in network().prop_flat_map(|(n, e)| (Just((n, e)), caps(n))),
        g in 0.05f64..20.0,
    ) {
        let l = laplacian(n, &edges);
        let ids: Vec<BusId> = (1..=n as BusId).collect();
        let c: Vec<Capacity> = s.iter().map(|&v| Capacity::Finite(v)).collect();
        let nominal = NominalDynamics { j: 1.0, d: 1.0, k: 0.0, gain: 1.0 };
        let dec = decompose_side(Side::Frequency, &ids, &l, &c, nominal, "auto").unwrap();
        prop_assert_eq!(dec.modes.iter().filter(|m| m.kind == ModeKind::Common).count(), 1);
        let sd = DMatrix::from_diagonal(&DVector::from_vec(s));
        let direct = (&sd * g + &l).lu().try_inverse().unwrap();
        let mut modal = DMatrix::zeros(n, n);
        for m in &dec.modes {
            modal += &m.phi * m.psi.transpose() / (m.s_m * g + m.l_m);
        }
        prop_assert!((&modal - &direct).norm() <= 1e-8 * direct.norm());
    }

    #[test]
    fn kron_reduction_preserves_terminal_behavior(
        (n, edges) in network(),
        keep_mask in proptest::collection::vec(any::<bool>(), 10),
    ) {
        let ids: Vec<BusId> = (1..=n as BusId).collect();
        let mut keep: Vec<BusId> = ids.iter().copied().filter(|i| keep_mask[*i as usize - 1]).collect();
        if keep.is_empty() {
            keep.push(1);
        }
        let buses: Vec<Bus> = ids.iter().map(|&i| if keep.contains(&i) { Bus::device(i) } else { Bus::interior(i) }).collect();
        let branches: Vec<Branch> = edges.iter().map(|&(a, b, x)| Branch::lossless(a as BusId + 1, b as BusId + 1, x)).collect();
        let y = kron_reduce(&build_admittance(&buses, &branches).unwrap(), &keep).unwrap();
        let k = keep.len();
        let l = build_jacobian_blocks(&y, &OperatingPoint::flat(DVector::zeros(k), DVector::zeros(k))).unwrap().l;

        // inject currents at the kept buses, solve the full Laplacian with
        // bus 1 grounded, and compare voltage differences
        let full = laplacian(n, &edges);
        let pos: Vec<usize> = keep.iter().map(|&b| b as usize - 1).collect();
        let mut inj = DVector::zeros(k);
        for i in 0..k {
            inj[i] = (i as f64 + 1.0) - (k as f64 + 1.0) / 2.0;
        }
        let mut rhs = DVector::zeros(n);
        for (i, &p) in pos.iter().enumerate() {
            rhs[p] = inj[i];
        }
        let grounded = full.clone().remove_row(0).remove_column(0);
        let v = grounded.lu().solve(&rhs.clone().remove_row(0)).unwrap().insert_row(0, 0.0);
        let vk = DVector::from_fn(k, |i, _| v[pos[i]]);
        prop_assert!((&l * &vk - &inj).amax() <= 1e-8 * (1.0 + inj.amax()));
        prop_assert!((&l * DVector::from_element(k, 1.0)).amax() <= 1e-9);
    }
}

#[test]
fn asymmetric_pencil_uses_the_general_solver() {
    let l = DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -5.0, 5.0]);
    let s = DVector::from_vec(vec![1.0, 3.0]);
    let sol = solve_pencil(&l, &s, "auto").unwrap();
    assert_eq!(sol.solver, "dense-general");
    assert!(solve_pencil(&l, &s, "jacobi-symmetric").is_err());
    let mut ev = sol.eigenvalues.clone();
    ev.sort_by(f64::total_cmp);
    // (L22 S1 + L11 S2) / (S1 S2)
    assert!(ev[0].abs() <= 1e-12);
    assert!((ev[1] - (5.0 * 1.0 + 2.0 * 3.0) / 3.0).abs() <= 1e-12);
}

#[test]
fn islanded_network_is_rejected() {
    let l = laplacian(4, &[(0, 1, 0.1), (2, 3, 0.2)]);
    let ids: Vec<BusId> = vec![1, 2, 3, 4];
    let c = vec![Capacity::Finite(1.0); 4];
    let nominal = NominalDynamics { j: 1.0, d: 1.0, k: 0.0, gain: 1.0 };
    let err = decompose_side(Side::Frequency, &ids, &l, &c, nominal, "auto").unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
