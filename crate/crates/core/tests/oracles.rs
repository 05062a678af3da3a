//! Special functions and dense linear algebra against independent libraries
//! and tabulated values.

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use riesz_flow_core::linalg::{linear_fit, solve_dense, symmetric_eigen};
use riesz_flow_core::special::*;

#[test]
fn gamma_matches_statrs() {
    for &x in &[0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.75, 2.5, 3.3, 7.0] {
        assert_relative_eq!(gamma(x), statrs::function::gamma::gamma(x), max_relative = 1e-13);
    }
}

#[test]
fn zeta_matches_tabulated_values() {
    // Reference values computed to 30 digits and rounded.
    let table = [
        (0.5, -1.4603545088095868),
        (0.25, -0.8132784052618917),
        (0.75, -3.4412853869452229),
        (1.5, 2.612_375_348_685_488),
        (3.0, 1.2020569031595943),
    ];
    for (s, z) in table {
        assert_relative_eq!(riemann_zeta(s), z, max_relative = 1e-13);
    }
}

#[test]
fn pole_constant_circle_and_sphere() {
    assert_relative_eq!(pole_constant(1, 0.25), 1.0 / (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-14);
    assert_relative_eq!(pole_constant(2, 0.5), 1.0 / (2.0 * std::f64::consts::PI), max_relative = 1e-14);
}

#[test]
fn constant_eigenvalue_matches_gamma_ratio() {
    let g = statrs::function::gamma::gamma;
    assert_relative_eq!(intertwining_constant_eigenvalue(1, 0.25), g(0.25) / g(0.75), max_relative = 1e-13);
    assert_relative_eq!(intertwining_constant_eigenvalue(2, 0.5), g(0.5) / g(1.5), max_relative = 1e-13);
}

#[test]
fn sphere_measures() {
    assert_relative_eq!(sphere_area(1), 2.0 * std::f64::consts::PI, max_relative = 1e-15);
    assert_relative_eq!(sphere_area(2), 4.0 * std::f64::consts::PI, max_relative = 1e-15);
    assert_relative_eq!(ball_volume(2), std::f64::consts::PI, max_relative = 1e-15);
}

#[test]
fn composite_gauss_integrates_exponential() {
    let (x, w) = composite_gauss(0.0, 2.0, 8, 4);
    let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.exp()).sum();
    assert_relative_eq!(s, 2f64.exp() - 1.0, max_relative = 1e-10);
}

fn random_symmetric(n: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = rng.gen_range(-1.0..1.0);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    a
}

#[test]
fn eigen_matches_nalgebra() {
    for (n, seed) in [(5, 1), (17, 2), (60, 3)] {
        let a = random_symmetric(n, seed);
        let (vals, vecs) = symmetric_eigen(&a, n);
        let mut oracle: Vec<f64> = DMatrix::from_row_slice(n, n, &a).symmetric_eigen().eigenvalues.iter().cloned().collect();
        oracle.sort_by(|x, y| y.total_cmp(x));
        for (v, o) in vals.iter().zip(&oracle) {
            assert!((v - o).abs() <= 1e-12 * oracle[0].abs().max(1.0), "{v} vs {o}");
        }
        // A v = λ v column by column.
        for c in 0..n {
            for r in 0..n {
                let av: f64 = (0..n).map(|k| a[r * n + k] * vecs[k * n + c]).sum();
                assert!((av - vals[c] * vecs[r * n + c]).abs() < 1e-11);
            }
        }
    }
}

#[test]
fn solve_matches_nalgebra() {
    let n = 12;
    let mut a = random_symmetric(n, 9);
    for i in 0..n {
        a[i * n + i] += 5.0;
    }
    let b: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
    let x = solve_dense(&a, &b, n).unwrap();
    let oracle = DMatrix::from_row_slice(n, n, &a).lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
    for (x, o) in x.iter().zip(oracle.iter()) {
        assert_relative_eq!(*x, *o, max_relative = 1e-12, epsilon = 1e-14);
    }
}

#[test]
fn linear_fit_recovers_line() {
    let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|x| 3.0 - 0.5 * x).collect();
    let (a, b) = linear_fit(&x, &y);
    assert_relative_eq!(a, 3.0, max_relative = 1e-13);
    assert_relative_eq!(b, -0.5, max_relative = 1e-13);
}
