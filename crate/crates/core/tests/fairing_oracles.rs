mod common;

use common::*;
use gfcn_core::fairing::{
    condition_bound, fair_direct, fair_jacobi, fairing_energy, fairing_energy_gradient, transfer,
};
use gfcn_core::synth::{random_graph, random_matrix};
use gfcn_core::{DenseMatrix, Error, FairingConfig, NormKind};
use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn direct_matches_spectral_filter_on_fifty_nodes() {
    let g = random_graph(50, 120, 1);
    let x = random_matrix(50, 3, 2);
    let (h, _) = fair_direct(&g, &x, &FairingConfig::new(2.0)).unwrap();
    assert!(relative_error(&h, &spectral_filter(&g, &x, 2.0)) <= 1e-8);
}

#[test]
fn both_solvers_match_spectral_filter() {
    for (k, g) in graph_family(15, 100, 40).into_iter().enumerate() {
        let x = random_matrix(g.num_nodes(), 3, 1000 + k as u64);
        for s in [0.1, 1.0, 10.0] {
            let oracle = spectral_filter(&g, &x, s);
            let (hd, _) = fair_direct(&g, &x, &FairingConfig::new(s)).unwrap();
            let (hj, _) = fair_jacobi(&g, &x, &FairingConfig::new(s)).unwrap();
            assert!(relative_error(&hd, &oracle) <= 1e-8, "direct k={k} s={s}");
            assert!(relative_error(&hj, &oracle) <= 1e-8, "jacobi k={k} s={s}");
        }
    }
}

#[test]
fn solvers_agree_up_to_two_hundred_nodes() {
    for (k, g) in graph_family(10, 200, 77).into_iter().enumerate() {
        let x = random_matrix(g.num_nodes(), 2, k as u64);
        for s in [0.1, 1.0, 10.0] {
            let (hd, rd) = fair_direct(&g, &x, &FairingConfig::new(s)).unwrap();
            let (hj, rj) = fair_jacobi(&g, &x, &FairingConfig::new(s)).unwrap();
            assert!(rd.final_residual <= 1e-10 && rj.final_residual <= 1e-10);
            assert!(relative_error(&hj, &hd) <= 1e-8);
        }
    }
}

#[test]
fn jacobi_contraction_bounded_by_iteration_radius() {
    let g = random_graph(50, 150, 8);
    let x = random_matrix(50, 2, 9);
    let s = 3.0;
    let rho = s / (1.0 + s);
    let (exact, _) = fair_direct(&g, &x, &FairingConfig::new(s).with_tol(1e-14)).unwrap();
    let op = g.normalize(NormKind::AdjacencyNorm);
    let mut h = x.clone();
    let mut prev_err = h.sub(&exact).unwrap().frobenius_norm();
    let mut checked = 0;
    for _ in 0..60 {
        h = gfcn_core::fairing::jacobi_step(&op, &h, &x, s).unwrap();
        let err = h.sub(&exact).unwrap().frobenius_norm();
        // Stop while the reference error (≈1e-14) is still negligible.
        if err < 1e-6 * x.frobenius_norm() {
            break;
        }
        assert!(err / prev_err <= rho + 1e-6, "ratio {}", err / prev_err);
        prev_err = err;
        checked += 1;
    }
    assert!(checked > 10);

    let (_, report) = fair_jacobi(&g, &x, &FairingConfig::new(s)).unwrap();
    assert!(!report.contraction_estimates.is_empty());
    assert!(report.contraction_estimates.iter().all(|&r| r <= rho + 1e-6));
}

#[test]
fn sqrt_degree_signal_is_preserved() {
    for g in graph_family(10, 150, 5) {
        let w = DenseMatrix::from_fn(g.num_nodes(), 1, |i, _| g.degrees()[i].sqrt());
        if w.frobenius_norm() == 0.0 {
            continue;
        }
        let (h, _) = fair_direct(&g, &w, &FairingConfig::new(4.0)).unwrap();
        assert!(relative_error(&h, &w) <= 1e-10);
    }
}

#[test]
fn solution_is_stationary_point_of_energy() {
    let g = random_graph(80, 200, 12);
    let x = random_matrix(80, 3, 13);
    for s in [0.1, 1.0, 10.0] {
        let cfg = FairingConfig::new(s);
        let (h, _) = fair_direct(&g, &x, &cfg).unwrap();
        let grad = fairing_energy_gradient(&g, &h, &x, s).unwrap();
        assert!(grad.max_abs() <= cfg.tol * x.frobenius_norm());
    }
}

#[test]
fn solution_minimizes_energy_against_perturbations() {
    let g = random_graph(30, 70, 14);
    let x = random_matrix(30, 2, 15);
    let s = 1.5;
    let (h, _) = fair_direct(&g, &x, &FairingConfig::new(s)).unwrap();
    let e_star = fairing_energy(&g, &h, &x, s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for k in 0..100 {
        let scale = 10f64.powi(-(k % 4) - 1);
        let delta = DenseMatrix::from_fn(30, 2, |_, _| scale * rng.gen_range(-1.0..1.0));
        let e = fairing_energy(&g, &h.add(&delta).unwrap(), &x, s).unwrap();
        assert!(e_star < e, "perturbation {k}");
    }
}

#[test]
fn condition_number_within_bound() {
    for g in graph_family(20, 100, 60) {
        let eig = laplacian_eigen(&g);
        for s in [0.1, 0.5, 1.0, 10.0] {
            let lmax = eig.eigenvalues.max();
            let lmin = eig.eigenvalues.min();
            let kappa = (1.0 + s * lmax) / (1.0 + s * lmin);
            assert!(kappa <= condition_bound(s) + 1e-9);
        }
    }
}

#[test]
fn condition_bound_tight_on_paths() {
    for n in [2, 3, 6, 11] {
        let g = path_graph(n);
        for s in [0.5, 1.0, 7.0] {
            let m = nalgebra::DMatrix::<f64>::identity(n, n) + dense_laplacian(&g) * s;
            let eig = SymmetricEigen::new(m);
            let kappa = eig.eigenvalues.max() / eig.eigenvalues.min();
            assert!((kappa - condition_bound(s)).abs() <= 1e-9, "n={n} s={s} κ={kappa}");
        }
    }
}

#[test]
fn large_scale_approaches_ideal_low_pass() {
    // Connected toy graph: a cycle with one chord.
    let mut edges: Vec<_> = (0..8).map(|i| (i, (i + 1) % 8)).collect();
    edges.push((0, 4));
    let g = gfcn_core::SparseGraph::from_edges(8, &edges).unwrap();
    let x = random_matrix(8, 2, 3);
    let s = 1e9;
    // κ ≈ 2s puts a 1e-10 residual out of reach in double precision.
    let cfg = FairingConfig::new(s).with_tol(1e-7).with_max_iters(1000);
    let (h, _) = fair_direct(&g, &x, &cfg).unwrap();
    // Ideal low-pass output: projection of X on the λ = 0 eigenvector √d.
    let d = g.degrees();
    let w: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
    let wn: f64 = w.iter().map(|v| v * v).sum();
    let ideal = DenseMatrix::from_fn(8, 2, |i, j| {
        let coef: f64 = (0..8).map(|k| w[k] * x.get(k, j)).sum::<f64>() / wn;
        coef * w[i]
    });
    assert!(relative_error(&h, &ideal) < 1e-6);
    assert!(relative_error(&h, &spectral_filter(&g, &x, s)) < 1e-6);
    // Degree-normalized rows are nearly constant.
    for j in 0..2 {
        let c: Vec<f64> = (0..8).map(|i| h.get(i, j) / w[i]).collect();
        let spread = c.iter().cloned().fold(f64::MIN, f64::max) - c.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-6);
    }
}

#[test]
fn transfer_is_in_unit_interval() {
    for s in [1e-3, 0.5, 1.0, 10.0, 1e6] {
        for k in 0..=20 {
            let l = k as f64 * 0.1;
            let h = transfer(s, l);
            assert!(h > 0.0 && h <= 1.0);
        }
    }
}

#[test]
fn direct_non_convergence_is_reported() {
    let g = random_graph(60, 200, 2);
    let x = random_matrix(60, 2, 3);
    match fair_direct(&g, &x, &FairingConfig::new(10.0).with_max_iters(2)) {
        Err(Error::NotConverged(r)) => {
            assert_eq!(r.iterations, 2);
            assert!(r.final_residual > 1e-10);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}
