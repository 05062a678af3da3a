use std::f64::consts::PI;

use proptest::prelude::*;
use riesz_flow_core::kernel::{dual_q, total_q_functional, validate_kernel, KernelHeader};
use riesz_flow_core::special::pole_constant;
use riesz_flow_core::steady::{j_functional, solve_extremal, steady_from_extremal, ExtremalOptions};
use riesz_flow_core::*;

fn gamma_ratio(n: f64, sigma: f64) -> f64 {
    let g = statrs::function::gamma::gamma;
    g(n / 2.0 - sigma) / g(n / 2.0 + sigma)
}

fn circle(count: usize) -> Geometry {
    build_sphere(1, count, SphereScheme::UniformAngle).unwrap()
}

#[test]
fn sphere_pole_constant() {
    assert!((pole_constant(2, 0.5) - 1.0 / (2.0 * PI)).abs() < 1e-16);
    let g = build_sphere(2, 200, SphereScheme::Fibonacci).unwrap();
    let k = build_intertwining_kernel(g.clone(), 0.5).unwrap();
    assert!(k.is_intertwining());
    assert_eq!(k.lambda(), 1.0);
    let r = g.chordal(3, 7);
    assert!((k.entry(3, 7) - 1.0 / (2.0 * PI * r)).abs() < 1e-15 * k.entry(3, 7));
}

#[test]
fn intertwining_kernel_is_exactly_symmetric_and_positive() {
    let k = build_intertwining_kernel(build_sphere(2, 300, SphereScheme::EqualArea).unwrap(), 0.7).unwrap();
    for i in 0..k.len() {
        for j in 0..k.len() {
            assert_eq!(k.entry(i, j), k.entry(j, i));
            assert!(k.entry(i, j) > 0.0);
        }
    }
}

#[test]
fn constants_map_to_gamma_ratio() {
    let oracle = gamma_ratio(1.0, 0.25);
    let dev = |count: usize| {
        let k = build_intertwining_kernel(circle(count), 0.25).unwrap();
        k.apply(&vec![1.0; count]).iter().map(|v| (v - oracle).abs()).fold(0.0, f64::max)
    };
    let (coarse, fine) = (dev(1024), dev(2048));
    assert!(fine / oracle <= 1e-3, "{fine}");
    assert!(fine < coarse);
}

#[test]
fn constants_converge_faster_than_order_one_and_a_half() {
    let oracle = gamma_ratio(1.0, 0.25);
    let errs: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&count| {
            let k = build_intertwining_kernel(circle(count), 0.25).unwrap();
            (k.apply(&vec![1.0; count])[0] - oracle).abs()
        })
        .collect();
    for p in errs.windows(2) {
        assert!((p[0] / p[1]).log2() >= 1.5, "{errs:?}");
    }
}

#[test]
fn constants_on_the_two_sphere_with_disc_rule() {
    let oracle = gamma_ratio(2.0, 0.5);
    let dev = |count: usize| {
        let k = build_intertwining_kernel(build_sphere(2, count, SphereScheme::Fibonacci).unwrap(), 0.5).unwrap();
        assert_eq!(k.diagonal_rule(), DiagonalRule::EquivalentDisc);
        k.apply(&vec![1.0; count]).iter().map(|v| (v - oracle).abs()).fold(0.0, f64::max) / oracle
    };
    let (a, b) = (dev(500), dev(2000));
    assert!(b < 5e-3 && b < a, "{a} {b}");
}

#[test]
fn power_kernel_with_pole_amplitude_matches_intertwining() {
    let g = circle(128);
    let c = pole_constant(1, 0.25);
    let p = build_power_kernel(g.clone(), 0.25, move |_: &[f64], _: &[f64], _| c).unwrap();
    let k = build_intertwining_kernel(g, 0.25).unwrap();
    for i in 0..128 {
        for j in 0..128 {
            if i != j {
                assert_eq!(p.entry(i, j), k.entry(i, j));
            }
        }
    }
}

#[test]
fn unit_amplitude_gives_pure_power() {
    let g = build_sphere(2, 150, SphereScheme::Fibonacci).unwrap();
    let k = build_power_kernel(g.clone(), 0.5, |_: &[f64], _: &[f64], _| 1.0).unwrap();
    for i in 0..150 {
        for j in 0..150 {
            if i != j {
                assert!((k.entry(i, j) * g.chordal(i, j) - 1.0).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn perturbed_amplitude_lambda_matches_brute_force() {
    let g = circle(200);
    let k = build_power_kernel(g.clone(), 0.25, |_: &[f64], _: &[f64], d: f64| 1.0 + 0.1 * d.cos()).unwrap();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..200 {
        for j in 0..200 {
            if i != j {
                let a = 1.0 + 0.1 * g.chordal(i, j).cos();
                lo = lo.min(a);
                hi = hi.max(a);
            }
        }
    }
    let r = validate_kernel(&k);
    assert!(r.fitted_lambda <= 1.12);
    assert!((r.fitted_lambda - (hi / lo).sqrt()).abs() < 1e-12);
    assert!((r.absolute_lambda - hi.max(1.0 / lo)).abs() < 1e-12);
    assert!(r.passed());
}

#[test]
fn asymmetric_amplitude_is_rejected() {
    let err = build_power_kernel(circle(16), 0.25, |x: &[f64], _: &[f64], _| 1.0 + x[0].abs()).unwrap_err();
    assert!(err.is_config());
}

#[test]
fn validation_of_intertwining_kernel() {
    let k = build_intertwining_kernel(circle(512), 0.25).unwrap();
    let r = validate_kernel(&k);
    assert_eq!(r.symmetry_defect, 0.0);
    assert!((r.fitted_lambda - 1.0).abs() < 1e-12);
    assert!((r.pole_constant - pole_constant(1, 0.25)).abs() < 1e-3 * pole_constant(1, 0.25));
    assert!(r.passed(), "{r:?}");
}

#[test]
fn apply_basics() {
    let k = build_intertwining_kernel(circle(64), 0.3).unwrap();
    assert!(k.apply(&vec![0.0; 64]).iter().all(|v| *v == 0.0));
    let mut f = vec![0.0; 64];
    f[5] = 1.0;
    assert!(k.apply(&f).iter().all(|v| *v > 0.0));
}

#[test]
fn from_matrix_round_trip_and_rejections() {
    let k = build_intertwining_kernel(circle(32), 0.25).unwrap();
    let back = KernelOperator::from_matrix(k.geometry().clone(), k.matrix().to_vec(), k.header()).unwrap();
    assert_eq!(back.matrix(), k.matrix());
    assert_eq!(back.header(), k.header());

    let mut bad = k.matrix().to_vec();
    bad[1] *= 1.01;
    assert!(KernelOperator::from_matrix(k.geometry().clone(), bad, k.header()).is_err());

    let mut scaled = k.matrix().to_vec();
    scaled[32 + 2] *= 1.05;
    scaled[2 * 32 + 1] *= 1.05;
    let header = KernelHeader { lambda: 1.06, ..k.header() };
    assert!(KernelOperator::from_matrix(k.geometry().clone(), scaled.clone(), header).is_ok());
    assert!(KernelOperator::from_matrix(k.geometry().clone(), scaled, k.header()).is_err());
}

#[test]
fn dual_q_properties() {
    let k = build_intertwining_kernel(circle(256), 0.25).unwrap();
    let m = critical_exponent(1, 0.25);
    let q = dual_q(&k, &vec![1.0; 256], m);
    for v in &q {
        assert!((v - gamma_ratio(1.0, 0.25)).abs() < 1e-6);
    }
    let u: Vec<f64> = (0..256).map(|i| 1.5 + (i as f64 * 0.1).sin()).collect();
    let c = 2.7;
    let cu: Vec<f64> = u.iter().map(|x| c * x).collect();
    let (a, b) = (dual_q(&k, &u, m), dual_q(&k, &cu, m));
    for (a, b) in a.iter().zip(&b) {
        assert!((b - c.powf(1.0 - m) * a).abs() < 1e-12 * b);
    }
}

#[test]
fn dual_q_of_steady_state_is_one() {
    let g = circle(128);
    let k = build_intertwining_kernel(g, 0.25).unwrap();
    let init: Vec<f64> = (0..128).map(|i| 1.0 + 0.2 * (i as f64).cos()).collect();
    let sol = solve_extremal(&k, 2.0, &init, &ExtremalOptions::default()).unwrap();
    let s = steady_from_extremal(&sol).unwrap();
    for q in dual_q(&k, &s.field, 2.0) {
        assert!((q - 1.0).abs() < 1e-10);
    }
}

#[test]
fn total_q_functional_value_and_invariance() {
    let k = build_intertwining_kernel(circle(512), 0.25).unwrap();
    let ones = vec![1.0; 512];
    let expected = (2.0 * PI).powf(-1.5) * 2.0 * PI * gamma_ratio(1.0, 0.25);
    assert!((total_q_functional(&k, &ones) - expected).abs() < 1e-6 * expected);
    let u: Vec<f64> = (0..512).map(|i| 1.0 + 0.5 * (i as f64 * 0.05).sin().powi(2)).collect();
    let cu: Vec<f64> = u.iter().map(|x| 3.0 * x).collect();
    let f = total_q_functional(&k, &u);
    assert!((total_q_functional(&k, &cu) - f).abs() < 1e-13 * f);
    let j = j_functional(&k, &u, critical_exponent(1, 0.25));
    assert!((j - f).abs() < 1e-14 * f);
}

#[test]
fn conformal_covariance_identity() {
    let g = circle(96);
    let k = build_intertwining_kernel(g.clone(), 0.25).unwrap();
    let m = critical_exponent(1, 0.25);
    let u: Vec<f64> = (0..96).map(|i| 1.2 + (i as f64 * 0.3).cos()).collect();
    let phi: Vec<f64> = (0..96).map(|i| (i as f64 * 0.7).sin()).collect();
    let uphi: Vec<f64> = u.iter().zip(&phi).map(|(a, b)| a * b).collect();
    let lhs: Vec<f64> = k.apply(&uphi).iter().zip(&u).map(|(v, u)| u.powf(-m) * v).collect();
    let w = g.weights();
    for i in 0..96 {
        let rhs: f64 = (0..96)
            .map(|j| (u[i] * u[j]).powf(-m) * k.entry(i, j) * phi[j] * w[j] * u[j].powf(2.0 / (1.0 + 0.5)))
            .sum();
        assert!((lhs[i] - rhs).abs() <= 1e-12 * lhs.iter().map(|x| x.abs()).fold(0.0, f64::max));
    }
}

#[test]
fn sigma_out_of_range_is_rejected() {
    assert!(build_intertwining_kernel(circle(16), 0.5).unwrap_err().is_config());
    assert!(build_intertwining_kernel(circle(16), 0.0).unwrap_err().is_config());
    let cloud = Geometry::from_parts(
        1,
        2,
        (0..10).flat_map(|i| [i as f64, 0.0]).collect(),
        vec![1.0; 10],
        None,
        GeometryKind::PointCloud,
    )
    .unwrap();
    assert!(build_intertwining_kernel(cloud, 0.25).unwrap_err().is_config());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bilinear_symmetry(seed in 0u64..1000, count in 8usize..80) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = circle(count);
        let k = build_intertwining_kernel(g.clone(), 0.25).unwrap();
        let f: Vec<f64> = (0..count).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..count).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = g.weights();
        let a: f64 = (0..count).map(|i| w[i] * h[i] * k.apply(&f)[i]).sum();
        let b: f64 = (0..count).map(|i| w[i] * f[i] * k.apply(&h)[i]).sum();
        let scale: f64 = (0..count).map(|i| w[i] * h[i].abs() * k.apply(&f.iter().map(|x| x.abs()).collect::<Vec<_>>())[i]).sum();
        prop_assert!((a - b).abs() <= 1e-12 * scale);
    }

    #[test]
    fn positivity_preserved(seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = build_intertwining_kernel(build_sphere(2, 60, SphereScheme::Fibonacci).unwrap(), 0.4).unwrap();
        let f: Vec<f64> = (0..60).map(|_| if rng.gen_bool(0.1) { rng.gen::<f64>() } else { 0.0 }).collect();
        prop_assume!(f.iter().any(|x| *x > 0.0));
        prop_assert!(k.apply(&f).iter().all(|v| *v > 0.0));
    }
}
