#![allow(dead_code)]

use riesz_flow_core::special::pole_constant;
use riesz_flow_core::*;

pub const SIGMA: f64 = 0.25;

pub fn circle(count: usize) -> Geometry {
    build_sphere(1, count, SphereScheme::UniformAngle).unwrap()
}

pub fn theta(i: usize, count: usize) -> f64 {
    2.0 * std::f64::consts::PI * i as f64 / count as f64
}

/// `c d^{-α} + ε g(X) g(Y)` with `g = 1 + x₁/2`: positive semidefinite on
/// top of the sphere kernel, with the same pole but no rotational symmetry.
pub fn tilted_kernel(count: usize, eps: f64) -> KernelOperator {
    let c = pole_constant(1, SIGMA);
    let alpha = 1.0 - 2.0 * SIGMA;
    build_power_kernel(circle(count), SIGMA, move |x: &[f64], y: &[f64], d: f64| {
        c + eps * (1.0 + 0.5 * x[0]) * (1.0 + 0.5 * y[0]) * d.powf(alpha)
    })
    .unwrap()
}

pub fn sup_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max)
}
