//! Invariants that must hold for arbitrary valid inputs.

use nalgebra::DMatrix;
use proptest::prelude::*;
use sshchain::estimation::rms_mismatch;
use sshchain::microwave::{
    ladder_s21, linear_grid, mode_linewidths, nanowire_inductance, BoxMode, GateModel, Junction, Ladder,
};
use sshchain::model::{build_tb_hamiltonian, chiral_defect, map_circuit_to_tb};
use sshchain::spectral::{classify_eigenvalues, eigendecompose, sweep_coupling};
use sshchain::topology::{ipr, winding_number_k_space, winding_number_real_space};
use sshchain::{ChainSpec, CircuitSpec};

fn chain() -> impl Strategy<Value = ChainSpec> {
    (1usize..12).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(4.0..9.0f64, 2 * n),
            prop::collection::vec(0.0..1.0f64, n),
            prop::collection::vec(0.0..1.0f64, n - 1),
        )
            .prop_map(|(n, eps, v, w)| ChainSpec::new(n, eps, v, w).unwrap())
    })
}

fn circuit() -> impl Strategy<Value = CircuitSpec> {
    (1usize..7).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(150.0..300.0f64, 2 * n),
            prop::collection::vec(2.0..4.0f64, 2 * n),
            prop::collection::vec(prop_oneof![4 => 5.0..80.0f64, 1 => Just(f64::INFINITY)], n),
            prop::collection::vec(15.0..40.0f64, n + 1),
        )
            .prop_map(|(n, c0, l0, lv, cw)| CircuitSpec::new(n, c0, l0, lv, cw).unwrap())
    })
}

fn uniform_circuit() -> impl Strategy<Value = CircuitSpec> {
    (2usize..12, 150.0..300.0f64, 2.0..4.0f64, 5.0..80.0f64, 15.0..40.0f64)
        .prop_map(|(n, c0, l0, lv, cw)| CircuitSpec::uniform(n, c0, l0, lv, cw).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamiltonian_is_exactly_symmetric_and_tridiagonal(spec in chain()) {
        let h = build_tb_hamiltonian(&spec);
        let n = h.nrows();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(h[(i, j)].to_bits(), h[(j, i)].to_bits());
                if i.abs_diff(j) > 1 {
                    prop_assert_eq!(h[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn spectrum_invariants(spec in chain()) {
        let h = build_tb_hamiltonian(&spec);
        let s = eigendecompose(&h).unwrap();
        prop_assert_eq!(s.len(), spec.n_sites());
        prop_assert!(s.eigenvalues.windows(2).all(|p| p[0] <= p[1]));
        prop_assert!(s.orthonormality_error() < 1e-9);
        prop_assert!(s.reconstruction_error(&h) < 1e-8);
        for k in 0..s.len() {
            let x = ipr(s.mode(k).as_slice()).unwrap();
            prop_assert!(x >= 1.0 / s.len() as f64 - 1e-12 && x <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn uniform_onsite_is_chiral(n in 1usize..15, eps in 4.0..9.0f64, v in 0.0..1.0f64, w in 0.0..1.0f64) {
        let h = build_tb_hamiltonian(&ChainSpec::uniform(n, eps, v, w).unwrap());
        prop_assert!(chiral_defect(&h, eps).unwrap() < 1e-12);
    }

    #[test]
    fn uniform_circuit_spectrum_is_mirror_symmetric(spec in uniform_circuit()) {
        let chain = map_circuit_to_tb(&spec).unwrap();
        let eps = chain.mean_eps();
        let ev = eigendecompose(&build_tb_hamiltonian(&chain)).unwrap().eigenvalues;
        let n = ev.len();
        for k in 0..n {
            prop_assert!(((ev[k] - eps) + (ev[n - 1 - k] - eps)).abs() < 1e-9);
        }
    }

    #[test]
    fn hops_follow_the_coupling_inductance(spec in uniform_circuit(), ratio in 0.2..0.95f64) {
        let lv = spec.lv()[0];
        let tighter = spec.with_lv(lv * ratio, None).unwrap();
        let (a, b) = (map_circuit_to_tb(&spec).unwrap(), map_circuit_to_tb(&tighter).unwrap());
        // smaller L_v: larger v, w no smaller
        prop_assert!(b.v().iter().zip(a.v()).all(|(x, y)| x > y));
        prop_assert!(b.w().iter().zip(a.w()).all(|(x, y)| x >= y));
    }

    #[test]
    fn classification_is_shift_invariant(spec in chain(), shift in -3.0..3.0f64) {
        prop_assume!(spec.n_sites() >= 4);
        let ev = eigendecompose(&build_tb_hamiltonian(&spec)).unwrap().eigenvalues;
        let eps = spec.mean_eps();
        let a = classify_eigenvalues(&ev, eps).unwrap();
        let shifted: Vec<f64> = ev.iter().map(|e| e + shift).collect();
        let b = classify_eigenvalues(&shifted, eps + shift).unwrap();
        prop_assert_eq!(&a.labels, &b.labels);
        prop_assert!((a.fsr_edge_bulk - b.fsr_edge_bulk).abs() < 1e-9);
        prop_assert!((a.fsr_edge_edge - b.fsr_edge_edge).abs() < 1e-9);
        let two_edges = a.labels.iter().filter(|l| **l == sshchain::ModeLabel::Edge).count();
        prop_assert_eq!(two_edges, 2);
    }

    #[test]
    fn k_space_winding_follows_the_hop_ordering(v in 0.0..2.0f64, w in 0.0..2.0f64) {
        prop_assume!((v - w).abs() > 1e-3);
        let r = winding_number_k_space(v, w).unwrap();
        prop_assert_eq!(r.nu, if v < w { 1.0 } else { 0.0 });
        prop_assert!((r.raw - r.nu).abs() < 1e-6);
    }

    #[test]
    fn transmission_is_passive_and_reciprocal(spec in circuit(), f in 3.0..10.0f64, with_box in any::<bool>()) {
        let ladder = Ladder::from_circuit(&spec, None);
        let box_mode = with_box.then(BoxMode::default);
        let forward = ladder.s21(f, 50.0, box_mode.as_ref()).unwrap();
        let backward = ladder.reversed().s21(f, 50.0, box_mode.as_ref()).unwrap();
        prop_assert!(forward.norm() <= 1.0 + 1e-6, "|s21| = {}", forward.norm());
        prop_assert!((forward.norm() - backward.norm()).abs() < 1e-9, "{} vs {}", forward, backward);
    }

    #[test]
    fn nanowire_inductance_is_monotone(
        v_p in -1.0..1.0f64, span in 0.2..3.0f64, l_min in 1.0..50.0f64, i_star in 0.1..5.0f64,
        v1 in -2.0..5.0f64, v2 in -2.0..5.0f64, i1 in 0.0..10.0f64, i2 in 0.0..10.0f64,
    ) {
        let m = GateModel::parametric(vec![Junction { v_p, v_o: v_p + span, l_min, i_star }]).unwrap();
        let (vl, vh) = (v1.min(v2), v1.max(v2));
        let (il, ih) = (i1.min(i2), i1.max(i2));
        prop_assert!(nanowire_inductance(&m, 0, vh, il).unwrap() <= nanowire_inductance(&m, 0, vl, il).unwrap());
        prop_assert!(nanowire_inductance(&m, 0, vl, ih).unwrap() >= nanowire_inductance(&m, 0, vl, il).unwrap());
    }

    #[test]
    fn linewidths_sum_to_twice_the_port_rate(spec in chain(), kappa in 0.1..10.0f64) {
        prop_assume!(spec.n_sites() >= 2);
        let s = eigendecompose(&build_tb_hamiltonian(&spec)).unwrap();
        let total: f64 = mode_linewidths(&s, kappa).iter().sum();
        prop_assert!((total - 2.0 * kappa).abs() < 1e-9 * kappa);
    }

    #[test]
    fn fit_objective_ignores_target_order(spec in uniform_circuit(), seed in any::<u64>()) {
        let chain = map_circuit_to_tb(&spec).unwrap();
        let mut targets: Vec<f64> = eigendecompose(&build_tb_hamiltonian(&chain)).unwrap()
            .eigenvalues.iter().map(|e| e + 1e-3).collect();
        let sorted = rms_mismatch(&spec, &targets).unwrap();
        // deterministic shuffle
        let n = targets.len();
        for k in 0..n {
            let j = (seed.rotate_left(k as u32) as usize) % n;
            targets.swap(k, j);
        }
        prop_assert_eq!(rms_mismatch(&spec, &targets).unwrap(), sorted);
    }
}

#[test]
fn sweep_is_continuous_on_a_fine_grid() {
    // adjacent points may move by at most the operator norm of the Hamiltonian
    // change, bounded here by its largest absolute row sum
    let circuit = CircuitSpec::reference_device();
    let grid: Vec<f64> = (0..=400).map(|k| 10.0 + 0.1 * k as f64).collect();
    let points = sweep_coupling(&circuit, &grid, None).unwrap();
    let hams: Vec<DMatrix<f64>> = grid
        .iter()
        .map(|&lv| build_tb_hamiltonian(&map_circuit_to_tb(&circuit.with_lv(lv, None).unwrap()).unwrap()))
        .collect();
    for k in 1..points.len() {
        let dh = &hams[k] - &hams[k - 1];
        let bound = dh.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        let (a, b) = (&points[k - 1].spectrum.eigenvalues, &points[k].spectrum.eigenvalues);
        assert_eq!(a.len(), circuit.n_sites());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= bound + 1e-12);
        }
    }
}

#[test]
fn fsr_trends_through_the_transition() {
    // descending L_v: edge-edge opens up, edge-bulk closes
    let circuit = CircuitSpec::reference_device();
    let grid: Vec<f64> = (0..=60).map(|k| 30.0 - 0.25 * k as f64).collect();
    let points = sweep_coupling(&circuit, &grid, None).unwrap();
    for p in points.windows(2) {
        let (a, b) = (&p[0].classification, &p[1].classification);
        assert!(b.fsr_edge_edge >= a.fsr_edge_edge - 1e-12);
        assert!(b.fsr_edge_bulk <= a.fsr_edge_bulk + 1e-12);
    }
    // decreasing L_v raises the mean eigenvalue
    let means: Vec<f64> = points.iter().map(|p| p.spectrum.eigenvalues.iter().sum::<f64>()).collect();
    assert!(means.windows(2).all(|m| m[1] > m[0]));
}

#[test]
fn pinched_sweep_point_is_topological() {
    let points = sweep_coupling(&CircuitSpec::reference_device(), &[f64::INFINITY], None).unwrap();
    assert_eq!(points.len(), 1);
    assert!(points[0].classification.fsr_edge_edge.abs() < 1e-12);
    assert_eq!(points[0].classification.phase_tag, sshchain::PhaseTag::Topological);
}

#[test]
fn real_space_winding_converges_with_length() {
    for ratio in [0.1, 2.0] {
        let nu_k = winding_number_k_space(ratio * 0.5, 0.5).unwrap().nu;
        let nu = |n: usize| {
            let h = build_tb_hamiltonian(&ChainSpec::uniform(n, 6.5, ratio * 0.5, 0.5).unwrap());
            winding_number_real_space(&h, 6.5).unwrap().nu
        };
        assert!((nu(200) - nu_k).abs() < (nu(20) - nu_k).abs(), "v/w = {ratio}");
    }
}

#[test]
fn trace_grid_is_passive_for_the_device() {
    let circuit = CircuitSpec::reference_device().with_lv(25.0, None).unwrap();
    let ladder = Ladder::from_circuit(&circuit, None);
    let s = ladder_s21(&ladder, &linear_grid(4.0, 9.0, 5001), 50.0, Some(&BoxMode::default())).unwrap();
    assert!(s.iter().all(|z| z.norm() <= 1.0 + 1e-6));
}
