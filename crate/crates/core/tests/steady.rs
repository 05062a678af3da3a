mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riesz_flow_core::steady::*;
use riesz_flow_core::*;

fn random_field(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| 0.2 + rng.gen::<f64>()).collect()
}

#[test]
fn j_is_scale_invariant() {
    let k = tilted_kernel(64, 0.3);
    let f: Vec<f64> = (0..64).map(|i| 1.0 + 0.4 * theta(i, 64).sin()).collect();
    for m in [0.5, 1.0, 2.0, 3.5] {
        let j = j_functional(&k, &f, m);
        let cf: Vec<f64> = f.iter().map(|x| 7.5 * x).collect();
        assert!((j_functional(&k, &cf, m) - j).abs() <= 1e-12 * j);
    }
}

#[test]
fn constant_critical_quotient() {
    let g = statrs::function::gamma::gamma;
    let k = build_intertwining_kernel(circle(1024), SIGMA).unwrap();
    let pi2 = 2.0 * std::f64::consts::PI;
    let expected = pi2.powf(-1.5) * pi2 * g(0.25) / g(0.75);
    let j = j_functional(&k, &vec![1.0; 1024], critical_exponent(1, SIGMA));
    assert!((j - expected).abs() <= 1e-8 * expected);
    assert_eq!(j, hls_constant_of(&k));
}

#[test]
fn constants_are_fixed_by_the_sphere_kernel() {
    let k = build_intertwining_kernel(circle(128), SIGMA).unwrap();
    for m in [0.6, 2.0] {
        let sol = solve_extremal(&k, m, &vec![3.0; 128], &ExtremalOptions::default()).unwrap();
        assert_eq!(sol.status, SteadyStatus::Converged);
        assert!(sol.iterations <= 1);
        let hi = sol.field.iter().cloned().fold(0.0, f64::max);
        let lo = sol.field.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hi / lo - 1.0 < 1e-13);
    }
}

#[test]
fn cubic_power_is_unique_across_random_starts() {
    let k = tilted_kernel(128, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut fields: Vec<Vec<f64>> = Vec::new();
    for _ in 0..10 {
        let sol = solve_extremal(&k, 2.0, &random_field(&mut rng, 128), &ExtremalOptions::default()).unwrap();
        assert_eq!(sol.status, SteadyStatus::Converged);
        assert!((j_functional(&k, &sol.field, 2.0) - sol.j_bar).abs() <= 1e-14 * sol.j_bar);
        for p in sol.j_history.windows(2).skip(1) {
            assert!(p[1] >= p[0] * (1.0 - 1e-12), "J decreased");
        }
        assert!(sol.field.iter().all(|v| *v > 0.0));
        let s = steady_from_extremal(&sol).unwrap();
        assert!(s.residual <= 1e-8);
        fields.push(s.field);
    }
    for f in &fields[1..] {
        assert!(sup_rel(f, &fields[0]) <= 1e-8);
    }
}

#[test]
fn sublinear_power_converges_with_damping() {
    let k = tilted_kernel(128, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sol = solve_extremal(&k, 0.6, &random_field(&mut rng, 128), &ExtremalOptions::default()).unwrap();
    assert_eq!(sol.status, SteadyStatus::Converged);
    assert!(sol.residual <= 1e-8);
    let s = steady_from_extremal(&sol).unwrap();
    let ks = k.apply(&s.field);
    assert!(steady_residual(&ks, &s.field, 0.6, 1.0) <= 1e-10);
}

#[test]
fn steady_rescalings() {
    let k = tilted_kernel(96, 0.2);
    let sol = solve_extremal(&k, 2.0, &vec![1.0; 96], &ExtremalOptions::default()).unwrap();
    let s = steady_from_extremal(&sol).unwrap();
    // S = J f when m = 2.
    for (a, b) in s.field.iter().zip(&sol.field) {
        assert!((a - sol.j_bar * b).abs() <= 1e-14 * a);
    }
    assert!((j_functional(&k, &s.field, 2.0) - sol.j_bar).abs() <= 1e-13 * sol.j_bar);

    // β = 2 at m = 2, so φ = S / 2 solves K φ = 2 φ².
    let phi = rescaled_steady(&s).unwrap();
    for (a, b) in phi.field.iter().zip(&s.field) {
        assert!((a - 0.5 * b).abs() <= 1e-15 * b);
    }
    let kp = k.apply(&phi.field);
    assert!(steady_residual(&kp, &phi.field, 2.0, 2.0) <= 1e-10);

    // β = 1 at m = 1/2.
    let sol = solve_extremal(&k, 0.5, &vec![1.0; 96], &ExtremalOptions::default()).unwrap();
    let s = steady_from_extremal(&sol).unwrap();
    assert_eq!(rescaled_steady(&s).unwrap().field, s.field);
}

#[test]
fn kernel_scaling_homogeneity() {
    let k = tilted_kernel(64, 0.3);
    let c = 1.7;
    let kc = k.scaled(c);
    let opts = ExtremalOptions::default();
    let a = solve_extremal(&k, 2.0, &vec![1.0; 64], &opts).unwrap();
    let b = solve_extremal(&kc, 2.0, &vec![1.0; 64], &opts).unwrap();
    assert!((b.j_bar - c * a.j_bar).abs() <= 1e-12 * b.j_bar);
    let (sa, sb) = (steady_from_extremal(&a).unwrap(), steady_from_extremal(&b).unwrap());
    for (x, y) in sa.field.iter().zip(&sb.field) {
        assert!((y - c * x).abs() <= 1e-12 * y);
    }
}

#[test]
fn hls_constant_stabilizes_under_refinement() {
    let vals: Vec<f64> = [256, 512, 1024].iter().map(|&n| hls_constant(circle(n), SIGMA).unwrap()).collect();
    assert!((vals[2] - vals[1]).abs() < (vals[1] - vals[0]).abs());
    assert!((vals[2] - vals[1]).abs() < 1e-8 * vals[2]);
}

#[test]
fn aubin_comparison() {
    let k = build_intertwining_kernel(circle(256), SIGMA).unwrap();
    let r = aubin_check(&k, &ExtremalOptions::default()).unwrap();
    assert_eq!(r.sign, GapSign::Zero);
    assert!(r.gap.abs() <= 1e-12 * r.hls);

    let c = riesz_flow_core::special::pole_constant(1, SIGMA);
    let big = build_power_kernel(circle(256), SIGMA, move |_: &[f64], _: &[f64], _| 1.5 * c).unwrap();
    let r = aubin_check(&big, &ExtremalOptions::default()).unwrap();
    assert_eq!(r.sign, GapSign::Positive);
    assert!(r.gap > 0.4 * r.hls);
}

#[test]
fn statuses_are_reported() {
    let k = tilted_kernel(64, 0.3);
    let init: Vec<f64> = (0..64).map(|i| 1.0 + 0.5 * theta(i, 64).cos()).collect();
    let opts = ExtremalOptions { max_iter: 2, ..Default::default() };
    assert_eq!(solve_extremal(&k, 2.0, &init, &opts).unwrap().status, SteadyStatus::MaxIterations);
    let opts = ExtremalOptions { concentration_limit: 1.5, ..Default::default() };
    let m = critical_exponent(1, SIGMA);
    let spiky: Vec<f64> = (0..64).map(|i| if i == 0 { 10.0 } else { 1.0 }).collect();
    assert_eq!(solve_extremal(&k, m, &spiky, &opts).unwrap().status, SteadyStatus::Concentration);
}

#[test]
fn bad_inputs_are_config_errors() {
    let k = tilted_kernel(16, 0.3);
    let opts = ExtremalOptions::default();
    assert!(solve_extremal(&k, 0.0, &vec![1.0; 16], &opts).unwrap_err().is_config());
    assert!(solve_extremal(&k, 2.0, &vec![1.0; 15], &opts).unwrap_err().is_config());
    let mut bad = vec![1.0; 16];
    bad[4] = -1.0;
    assert!(solve_extremal(&k, 2.0, &bad, &opts).unwrap_err().is_config());
}
