//! Linearization at a steady state `K S = S^m`, posed in the weighted measure
//! `dμ = S^{1-m} dV` where it becomes a symmetric eigenproblem.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::KernelOperator;
use crate::linalg::{linear_fit, symmetric_eigen};
use crate::steady::steady_residual;

/// Steady fields with a larger equation residual are rejected.
pub const STEADY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    /// Largest first.
    pub eigenvalues: Vec<f64>,
    /// Eigenfields of `K^μ ψ = Σ K μ ψ`, orthonormal in `L²(μ)`.
    pub psi: Vec<Vec<f64>>,
    /// `φ = S^{1-m} ψ`, solving `K φ = λ S^{m-1} φ`.
    pub phi: Vec<Vec<f64>>,
    /// `μ_i = S_i^{1-m} w_i`.
    pub mu: Vec<f64>,
    pub steady_residual: f64,
    /// Largest `||K^μ ψ - λ ψ||_μ / |λ|` over the returned pairs.
    pub max_residual: f64,
    /// Largest `||K φ - λ S^{m-1} φ|| / ||K φ||` over the returned pairs.
    pub phi_residual: f64,
    /// Largest deviation from orthonormality of the ψ fields.
    pub orthonormality_defect: f64,
}

impl SpectrumResult {
    /// `1 - λ₂`, meaningful when the leading eigenvalue is the structural one.
    pub fn gap(&self) -> Option<f64> {
        self.eigenvalues.get(1).map(|l| 1.0 - l)
    }

    /// Index of the eigenvalue nearest 1.
    pub fn unit_index(&self) -> Option<usize> {
        (0..self.eigenvalues.len())
            .min_by(|&a, &b| (self.eigenvalues[a] - 1.0).abs().total_cmp(&(self.eigenvalues[b] - 1.0).abs()))
    }
}

/// Top `count` eigenpairs of the linearization at the steady field `s`.
pub fn linearized_spectrum(k: &KernelOperator, s: &[f64], m: f64, count: usize) -> Result<SpectrumResult> {
    let n = k.len();
    if s.len() != n {
        return Err(Error::param("steady field length does not match the kernel"));
    }
    if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::param("steady field must be positive"));
    }
    if count == 0 || count > n {
        return Err(Error::param(format!("requested {count} eigenpairs from {n} nodes")));
    }
    let ks = k.apply(s);
    let res = steady_residual(&ks, s, m, 1.0);
    if !(res <= STEADY_TOLERANCE) {
        return Err(Error::param(format!(
            "field is not steady: residual {res:.3e} exceeds {STEADY_TOLERANCE:e}"
        )));
    }
    let s_pow: Vec<f64> = s.iter().map(|v| libm::pow(*v, 1.0 - m)).collect();
    let mu: Vec<f64> = s_pow.iter().zip(k.weights()).map(|(a, w)| a * w).collect();
    let (eigenvalues, psi) = weighted_eigen(k, &mu, count);
    let phi: Vec<Vec<f64>> = psi
        .iter()
        .map(|p| p.iter().zip(&s_pow).map(|(p, a)| p * a).collect())
        .collect();

    let mut max_residual: f64 = 0.0;
    let mut phi_residual: f64 = 0.0;
    for ((lam, p), f) in eigenvalues.iter().zip(&psi).zip(&phi) {
        let kp = apply_weighted(k, &mu, p);
        let r: f64 = kp.iter().zip(p).zip(&mu).map(|((a, b), m)| m * (a - lam * b) * (a - lam * b)).sum();
        max_residual = max_residual.max(libm::sqrt(r) / lam.abs());
        let kf = k.apply(f);
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for i in 0..n {
            let rhs = lam * libm::pow(s[i], m - 1.0) * f[i];
            num += (kf[i] - rhs) * (kf[i] - rhs);
            den += kf[i] * kf[i];
        }
        phi_residual = phi_residual.max(libm::sqrt(num / den));
    }
    let mut ortho: f64 = 0.0;
    for a in 0..psi.len() {
        for b in 0..=a {
            let g: f64 = (0..n).map(|i| mu[i] * psi[a][i] * psi[b][i]).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            ortho = ortho.max((g - target).abs());
        }
    }
    Ok(SpectrumResult {
        eigenvalues,
        psi,
        phi,
        mu,
        steady_residual: res,
        max_residual,
        phi_residual,
        orthonormality_defect: ortho,
    })
}

/// `(K^μ f)_i = Σ_j K_ij μ_j f_j`, computed through the ordinary kernel
/// application so that it shares its summation order.
fn apply_weighted(k: &KernelOperator, mu: &[f64], f: &[f64]) -> Vec<f64> {
    let g: Vec<f64> = f.iter().zip(mu).zip(k.weights()).map(|((f, m), w)| f * m / w).collect();
    k.apply(&g)
}

/// Assembles `A = √μ K √μ`, solves it densely and maps eigenvectors back by
/// dividing by `√μ`.
fn weighted_eigen(k: &KernelOperator, mu: &[f64], count: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = k.len();
    let sq: Vec<f64> = mu.iter().map(|m| libm::sqrt(*m)).collect();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        let row = k.row(i);
        for j in 0..n {
            a[i * n + j] = sq[i] * row[j] * sq[j];
        }
    }
    let (values, vectors) = symmetric_eigen(&a, n);
    let mut fields = Vec::with_capacity(count);
    for c in 0..count {
        let mut f: Vec<f64> = (0..n).map(|i| vectors[i * n + c] / sq[i]).collect();
        let lead = f.iter().cloned().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if lead < 0.0 {
            for v in f.iter_mut() {
                *v = -*v;
            }
        }
        fields.push(f);
    }
    (values[..count].to_vec(), fields)
}

/// Largest relative asymmetry `|<K^μ f, h>_μ - <f, K^μ h>_μ|` over `trials`
/// seeded random pairs, normalized by `||K^μ f||_μ ||h||_μ`.
pub fn symmetry_defect(k: &KernelOperator, mu: &[f64], trials: usize, seed: u64) -> f64 {
    let n = k.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ip = |a: &[f64], b: &[f64]| -> f64 { (0..n).map(|i| mu[i] * a[i] * b[i]).sum() };
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kf = apply_weighted(k, mu, &f);
        let kh = apply_weighted(k, mu, &h);
        let scale = libm::sqrt(ip(&kf, &kf) * ip(&h, &h)).max(libm::sqrt(ip(&f, &f) * ip(&kh, &kh)));
        worst = worst.max((ip(&kf, &h) - ip(&f, &kh)).abs() / scale);
    }
    worst
}

/// Top eigenpair of the plain operator `f ↦ K f` (measure `μ = w`), which
/// governs the linear flow `∂_t u = K u`.
pub fn predict_linear_growth(k: &KernelOperator) -> (f64, Vec<f64>) {
    let (mut values, mut fields) = weighted_eigen(k, k.weights(), 1);
    (values.remove(0), fields.remove(0))
}

/// Exponential rate `r` in `d(τ) ≈ C e^{-r τ}` by a log-linear least-squares
/// fit; non-positive distances are dropped.
pub fn empirical_decay_rate(times: &[f64], distances: &[f64]) -> Result<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(distances)
        .filter(|(_, d)| **d > 0.0 && d.is_finite())
        .map(|(t, d)| (*t, libm::log(*d)))
        .unzip();
    if x.len() < 2 {
        return Err(Error::param("need at least two positive distances to fit a rate"));
    }
    Ok(-linear_fit(&x, &y).1)
}
