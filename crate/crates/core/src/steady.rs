//! Steady states and extremals of the weighted Rayleigh-type quotient
//! `J_m(f) = <f, K f> / ||f||_{m+1}^2`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::critical_exponent;
use crate::error::{Error, Result};
use crate::kernel::{build_intertwining_kernel, weighted_dot, KernelOperator};
use crate::manifold::{Geometry, GeometryKind};

/// `J_m(f) = sum w f K f / (sum w |f|^{m+1})^{2/(m+1)}`.
pub fn j_functional(k: &KernelOperator, f: &[f64], m: f64) -> f64 {
    let kf = k.apply(f);
    j_from_parts(k.weights(), f, &kf, m)
}

fn j_from_parts(w: &[f64], f: &[f64], kf: &[f64], m: f64) -> f64 {
    let num = weighted_dot(w, f, kf);
    num / libm::pow(lp_mass(w, f, m + 1.0), 2.0 / (m + 1.0))
}

/// `sum w |f|^p`.
pub(crate) fn lp_mass(w: &[f64], f: &[f64], p: f64) -> f64 {
    w.iter().zip(f).map(|(w, f)| w * libm::pow(f.abs(), p)).sum()
}

fn normalize(w: &[f64], f: &mut [f64], p: f64) {
    let s = libm::pow(lp_mass(w, f, p), 1.0 / p);
    for v in f.iter_mut() {
        *v /= s;
    }
}

/// `||K f - c f^m||_inf / ||c f^m||_inf`.
pub fn steady_residual(kf: &[f64], f: &[f64], m: f64, c: f64) -> f64 {
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for (kf, f) in kf.iter().zip(f) {
        let rhs = c * libm::pow(*f, m);
        num = num.max((kf - rhs).abs());
        den = den.max(rhs.abs());
    }
    num / den
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalOptions {
    /// Both the relative sup-norm change of an iterate and the equation
    /// residual must fall below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Exponent `θ` of the damped update `f^{1-θ} (K f)^{θ/m}`. `None`
    /// selects 1 for `m >= 1` and 1/2 otherwise.
    pub damping: Option<f64>,
    /// At the critical exponent, stop once `max f / min f` exceeds this.
    pub concentration_limit: f64,
}

impl Default for ExtremalOptions {
    fn default() -> Self {
        ExtremalOptions { tol: 1e-12, max_iter: 20_000, damping: None, concentration_limit: 1e6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteadyStatus {
    Converged,
    MaxIterations,
    /// The iterate concentrated at a point, which is expected for critical
    /// kernels whose best constant is not attained.
    Concentration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolution {
    pub field: Vec<f64>,
    pub m: f64,
    /// `J_m` at the returned field.
    pub j_bar: f64,
    /// Relative residual of the Euler-Lagrange equation. It is invariant
    /// under the rescalings below.
    pub residual: f64,
    pub iterations: usize,
    pub status: SteadyStatus,
    /// `J_m` after each update, starting from the normalized initial field.
    pub j_history: Vec<f64>,
}

/// Damped nonlinear power iteration for a positive critical point of `J_m`,
/// normalized to unit `L^{m+1}` norm. It solves `K f = J_m(f) f^m`.
pub fn solve_extremal(
    k: &KernelOperator,
    m: f64,
    init: &[f64],
    opts: &ExtremalOptions,
) -> Result<SteadySolution> {
    if !(m > 0.0) {
        return Err(Error::param(format!("exponent m = {m} must be positive")));
    }
    if init.len() != k.len() {
        return Err(Error::param("initial field length does not match the kernel"));
    }
    if init.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::param("initial field must be positive and finite"));
    }
    let theta = opts.damping.unwrap_or(if m >= 1.0 { 1.0 } else { 0.5 });
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::param(format!("damping {theta} outside (0, 1]")));
    }
    let w = k.weights();
    let p = m + 1.0;
    let critical = (m - critical_exponent(k.dim(), k.sigma())).abs() < 1e-12;

    let mut f = init.to_vec();
    normalize(w, &mut f, p);
    let mut kf = k.apply(&f);
    let mut j = j_from_parts(w, &f, &kf, m);
    let mut history = Vec::with_capacity(64);
    history.push(j);
    let mut change = f64::INFINITY;
    let mut status = SteadyStatus::MaxIterations;
    let mut iterations = 0;
    let mut next = f.clone();

    loop {
        let residual = steady_residual(&kf, &f, m, j);
        if change <= opts.tol && residual <= opts.tol {
            status = SteadyStatus::Converged;
            break;
        }
        if critical && ratio(&f) > opts.concentration_limit {
            status = SteadyStatus::Concentration;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        for ((n, f), kf) in next.iter_mut().zip(&f).zip(&kf) {
            *n = libm::pow(*f, 1.0 - theta) * libm::pow(*kf, theta / m);
        }
        normalize(w, &mut next, p);
        let mut diff: f64 = 0.0;
        let mut size: f64 = 0.0;
        for (a, b) in next.iter().zip(&f) {
            diff = diff.max((a - b).abs());
            size = size.max(b.abs());
        }
        change = diff / size;
        core::mem::swap(&mut f, &mut next);
        k.apply_into(&f, &mut kf);
        j = j_from_parts(w, &f, &kf, m);
        if !j.is_finite() {
            return Err(Error::Numerical(format!("J became non-finite at iteration {iterations}")));
        }
        history.push(j);
        iterations += 1;
    }
    let residual = steady_residual(&kf, &f, m, j);
    Ok(SteadySolution { field: f, m, j_bar: j, residual, iterations, status, j_history: history })
}

fn ratio(f: &[f64]) -> f64 {
    let hi = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = f.iter().cloned().fold(f64::INFINITY, f64::min);
    hi / lo
}

/// `S = J^{1/(m-1)} f`, which solves `K S = S^m`.
pub fn steady_from_extremal(sol: &SteadySolution) -> Result<SteadySolution> {
    if sol.m == 1.0 {
        return Err(Error::param("no steady rescaling at m = 1"));
    }
    let c = libm::pow(sol.j_bar, 1.0 / (sol.m - 1.0));
    Ok(rescaled(sol, c))
}

/// `φ = β^{1/(1-m)} S` with `β = m/|1-m|`, which solves `K φ = β φ^m`.
/// `sol` must already solve `K S = S^m`.
pub fn rescaled_steady(sol: &SteadySolution) -> Result<SteadySolution> {
    if sol.m == 1.0 {
        return Err(Error::param("no steady rescaling at m = 1"));
    }
    let beta = sol.m / (1.0 - sol.m).abs();
    Ok(rescaled(sol, libm::pow(beta, 1.0 / (1.0 - sol.m))))
}

fn rescaled(sol: &SteadySolution, c: f64) -> SteadySolution {
    let mut out = sol.clone();
    for v in out.field.iter_mut() {
        *v *= c;
    }
    out
}

/// The critical quotient of the constant function for the intertwining
/// kernel, i.e. the sharp Hardy-Littlewood-Sobolev constant on `S^n`.
pub fn hls_constant(geom: impl Into<Arc<Geometry>>, sigma: f64) -> Result<f64> {
    let k = build_intertwining_kernel(geom, sigma)?;
    Ok(hls_constant_of(&k))
}

/// Same as [`hls_constant`] for an already assembled intertwining kernel.
pub fn hls_constant_of(k: &KernelOperator) -> f64 {
    let ones = alloc::vec![1.0; k.len()];
    j_functional(k, &ones, critical_exponent(k.dim(), k.sigma()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapSign {
    Positive,
    Negative,
    /// Within the combined error bars.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AubinReport {
    /// Best critical quotient found for the kernel under test.
    pub j_bar: f64,
    pub j_bar_error: f64,
    pub hls: f64,
    /// `|hls(N) - hls(N/2)|` when the geometry can be coarsened, else 0.
    pub hls_error: f64,
    pub gap: f64,
    pub sign: GapSign,
    pub status: SteadyStatus,
}

/// Compares the best critical quotient of `k` against the round-sphere
/// constant on the same geometry.
pub fn aubin_check(k: &KernelOperator, opts: &ExtremalOptions) -> Result<AubinReport> {
    let geom = k.geometry().clone();
    let sigma = k.sigma();
    let m = critical_exponent(k.dim(), sigma);
    let ones = alloc::vec![1.0; k.len()];
    let sol = solve_extremal(k, m, &ones, opts)?;
    let last = sol.j_history.len();
    let step = if last >= 2 {
        (sol.j_history[last - 1] - sol.j_history[last - 2]).abs()
    } else {
        0.0
    };
    let j_bar_error = step + sol.residual * sol.j_bar;

    let hls = hls_constant(geom.clone(), sigma)?;
    let hls_error = match geom.kind() {
        GeometryKind::Sphere { n, scheme } if geom.len() >= 16 => {
            let coarse = crate::manifold::build_sphere(n, geom.len() / 2, scheme)?;
            (hls - hls_constant(coarse, sigma)?).abs()
        }
        _ => 0.0,
    };
    let gap = sol.j_bar - hls;
    let bar = j_bar_error + hls_error;
    let sign = if gap > bar {
        GapSign::Positive
    } else if gap < -bar {
        GapSign::Negative
    } else {
        GapSign::Zero
    };
    Ok(AubinReport { j_bar: sol.j_bar, j_bar_error, hls, hls_error, gap, sign, status: sol.status })
}
