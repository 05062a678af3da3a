//! Special functions and quadrature rules.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Riemann zeta for real `s > 0`, `s != 1`, via Borwein's alternating-series
/// acceleration of the Dirichlet eta function.
pub fn riemann_zeta(s: f64) -> f64 {
    assert!(s > 0.0 && s != 1.0, "riemann_zeta: need s > 0, s != 1");
    const N: usize = 48;
    // d_k = n * sum_{i<=k} (n+i-1)! 4^i / ((n-i)! (2i)!)
    let mut d = [0.0f64; N + 1];
    let mut term = 1.0;
    let mut acc = 0.0;
    for (i, di) in d.iter_mut().enumerate() {
        acc += term;
        *di = acc;
        let fi = i as f64;
        let n = N as f64;
        term *= 4.0 * (n + fi) * (n - fi) / ((2.0 * fi + 1.0) * (2.0 * fi + 2.0));
    }
    let dn = d[N];
    let mut sum = 0.0;
    for (k, dk) in d.iter().take(N).enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * (dk - dn) / libm::pow(k as f64 + 1.0, s);
    }
    let eta = -sum / dn;
    eta / (1.0 - libm::pow(2.0, 1.0 - s))
}

/// Leading constant of the Green's function of the conformal fractional
/// Laplacian of order `2σ` on the round `S^n`.
pub fn pole_constant(n: usize, sigma: f64) -> f64 {
    let nf = n as f64;
    gamma((nf - 2.0 * sigma) / 2.0)
        / (libm::pow(2.0, 2.0 * sigma) * libm::pow(PI, nf / 2.0) * gamma(sigma))
}

/// Eigenvalue of the intertwining kernel on constants, `Γ(n/2-σ)/Γ(n/2+σ)`.
pub fn intertwining_constant_eigenvalue(n: usize, sigma: f64) -> f64 {
    let h = n as f64 / 2.0;
    gamma(h - sigma) / gamma(h + sigma)
}

/// Surface area of the unit sphere `S^n` in `R^{n+1}`.
pub fn sphere_area(n: usize) -> f64 {
    let a = (n as f64 + 1.0) / 2.0;
    2.0 * libm::pow(PI, a) / gamma(a)
}

/// Volume of the unit ball in `R^n`.
pub fn ball_volume(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    libm::pow(PI, h) / gamma(h + 1.0)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let n = order;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre rule on `[a, b]` with `panels` equal panels.
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut x = Vec::with_capacity(panels * order);
    let mut w = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in gx.iter().zip(&gw) {
            x.push(lo + 0.5 * h * (xi + 1.0));
            w.push(0.5 * h * wi);
        }
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pole_constants_match_closed_forms() {
        assert!((pole_constant(1, 0.25) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!((pole_constant(2, 0.5) - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(7);
        for deg in 0..14 {
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let want = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((got - want).abs() < 1e-14, "degree {deg}: {got} vs {want}");
        }
    }

    #[test]
    fn zeta_at_two_is_basel() {
        assert!((riemann_zeta(2.0) - PI * PI / 6.0).abs() < 1e-14);
    }
}
