//! Dense symmetric kernels with a Riesz-type singularity and their action
//! on node fields.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::manifold::Geometry;
use crate::special::{ball_volume, pole_constant, riemann_zeta, sphere_area};

/// How the singular self-interaction `K_ii` is assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagonalRule {
    /// Integral of the local singularity over a ball of volume `w_i`.
    EquivalentDisc,
    /// Exact lattice-sum correction on the equally spaced circle,
    /// `w K_ii = -2 ζ(n - 2σ) c h^{1-(n-2σ)}` for spacing `h`.
    ZetaCorrected,
    /// Self-interaction dropped. Only useful to measure its effect.
    Zero,
}

impl DiagonalRule {
    pub fn name(self) -> &'static str {
        match self {
            DiagonalRule::EquivalentDisc => "equivalent_disc",
            DiagonalRule::ZetaCorrected => "zeta_corrected",
            DiagonalRule::Zero => "zero",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "equivalent_disc" => Some(DiagonalRule::EquivalentDisc),
            "zeta_corrected" => Some(DiagonalRule::ZetaCorrected),
            "zero" => Some(DiagonalRule::Zero),
            _ => None,
        }
    }

    /// The most accurate rule available on `geom`.
    pub fn best_for(geom: &Geometry) -> Self {
        if geom.is_uniform_circle() {
            DiagonalRule::ZetaCorrected
        } else {
            DiagonalRule::EquivalentDisc
        }
    }
}

/// Distance the singular power is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    Chordal,
    Geodesic,
}

impl DistanceKind {
    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::Chordal => "chordal",
            DistanceKind::Geodesic => "geodesic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "chordal" => Some(DistanceKind::Chordal),
            "geodesic" => Some(DistanceKind::Geodesic),
            _ => None,
        }
    }
}

/// A symmetric kernel `K(X, Y) ~ d(X, Y)^{2σ-n}` sampled on a geometry.
///
/// `scale` and `lambda` record the two-sided bound
/// `scale / lambda <= K_ij d_ij^{n-2σ} <= scale * lambda` for `i != j`.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    geometry: Arc<Geometry>,
    sigma: f64,
    matrix: Vec<f64>,
    scale: f64,
    lambda: f64,
    distance: DistanceKind,
    intertwining: bool,
    diagonal: DiagonalRule,
}

fn check_sigma(geom: &Geometry, sigma: f64) -> Result<()> {
    let half = geom.dim() as f64 / 2.0;
    if !(sigma > 0.0 && sigma < half) {
        return Err(Error::param(format!("sigma = {sigma} outside (0, {half})")));
    }
    Ok(())
}

fn distance_of(geom: &Geometry, kind: DistanceKind, i: usize, j: usize) -> f64 {
    match kind {
        DistanceKind::Chordal => geom.chordal(i, j),
        DistanceKind::Geodesic => geom.geodesic(i, j),
    }
}

/// `K_ii` for a node whose local singularity is `pole * d^{-alpha}`.
fn self_interaction(
    geom: &Geometry,
    rule: DiagonalRule,
    sigma: f64,
    pole: f64,
    i: usize,
) -> Result<f64> {
    let n = geom.dim();
    let alpha = n as f64 - 2.0 * sigma;
    let w = geom.weights()[i];
    match rule {
        DiagonalRule::Zero => Ok(0.0),
        DiagonalRule::EquivalentDisc => {
            let r = libm::pow(w / ball_volume(n), 1.0 / n as f64);
            let integral = pole * sphere_area(n - 1) * libm::pow(r, 2.0 * sigma) / (2.0 * sigma);
            Ok(integral / w)
        }
        DiagonalRule::ZetaCorrected => {
            if !geom.is_uniform_circle() {
                return Err(Error::Unsupported(String::from(
                    "zeta-corrected diagonal needs the equally spaced circle",
                )));
            }
            Ok(-2.0 * riemann_zeta(alpha) * pole * libm::pow(w, -alpha))
        }
    }
}

/// The kernel of the inverse conformal fractional Laplacian on the round
/// sphere, `c_{n,σ} |ξ - ζ|^{2σ-n}` against chordal distance, with the
/// most accurate diagonal rule for the geometry.
pub fn build_intertwining_kernel(
    geom: impl Into<Arc<Geometry>>,
    sigma: f64,
) -> Result<KernelOperator> {
    let geom = geom.into();
    let rule = DiagonalRule::best_for(&geom);
    build_intertwining_kernel_with(geom, sigma, rule)
}

pub fn build_intertwining_kernel_with(
    geom: impl Into<Arc<Geometry>>,
    sigma: f64,
    rule: DiagonalRule,
) -> Result<KernelOperator> {
    let geom = geom.into();
    if !geom.is_round_sphere() {
        return Err(Error::param("intertwining kernel needs a round-sphere geometry"));
    }
    check_sigma(&geom, sigma)?;
    let n = geom.len();
    let c = pole_constant(geom.dim(), sigma);
    let expo = 2.0 * sigma - geom.dim() as f64;
    let mut matrix = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = c * libm::pow(geom.chordal(i, j), expo);
            matrix[i * n + j] = v;
            matrix[j * n + i] = v;
        }
        matrix[i * n + i] = self_interaction(&geom, rule, sigma, c, i)?;
    }
    Ok(KernelOperator {
        geometry: geom,
        sigma,
        matrix,
        scale: c,
        lambda: 1.0,
        distance: DistanceKind::Chordal,
        intertwining: true,
        diagonal: rule,
    })
}

/// `K_ij = a(X_i, X_j, d_ij) d_ij^{2σ-n}`.
///
/// Distances are chordal on round spheres and taken from the geometry's
/// distance table otherwise. `amplitude` receives both nodes and their
/// distance; it must be symmetric and positive, and its value at distance
/// zero sets the pole.
pub fn build_power_kernel<A>(
    geom: impl Into<Arc<Geometry>>,
    sigma: f64,
    amplitude: A,
) -> Result<KernelOperator>
where
    A: Fn(&[f64], &[f64], f64) -> f64,
{
    let geom = geom.into();
    let kind = if geom.is_round_sphere() { DistanceKind::Chordal } else { DistanceKind::Geodesic };
    build_power_kernel_with(geom, sigma, kind, amplitude)
}

pub fn build_power_kernel_with<A>(
    geom: impl Into<Arc<Geometry>>,
    sigma: f64,
    kind: DistanceKind,
    amplitude: A,
) -> Result<KernelOperator>
where
    A: Fn(&[f64], &[f64], f64) -> f64,
{
    let geom = geom.into();
    check_sigma(&geom, sigma)?;
    let rule = DiagonalRule::best_for(&geom);
    let n = geom.len();
    let expo = 2.0 * sigma - geom.dim() as f64;
    let mut matrix = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = distance_of(&geom, kind, i, j);
            let a = amplitude(geom.node(i), geom.node(j), d);
            let b = amplitude(geom.node(j), geom.node(i), d);
            if !(a > 0.0 && a.is_finite()) || (a - b).abs() > 1e-12 * a.abs() {
                return Err(Error::param(format!(
                    "amplitude must be positive and symmetric (nodes {i}, {j}: {a}, {b})"
                )));
            }
            let v = a * libm::pow(d, expo);
            matrix[i * n + j] = v;
            matrix[j * n + i] = v;
        }
        let pole = amplitude(geom.node(i), geom.node(i), 0.0);
        matrix[i * n + i] = self_interaction(&geom, rule, sigma, pole, i)?;
    }
    let (scale, lambda) = fitted_bounds(&geom, &matrix, sigma, kind);
    Ok(KernelOperator {
        geometry: geom,
        sigma,
        matrix,
        scale,
        lambda,
        distance: kind,
        intertwining: false,
        diagonal: rule,
    })
}

/// Scale-free two-sided bound: `sqrt(max/min)` of `K_ij d_ij^{n-2σ}` and the
/// geometric mean that centres it.
fn fitted_bounds(geom: &Geometry, matrix: &[f64], sigma: f64, kind: DistanceKind) -> (f64, f64) {
    let (lo, hi) = ratio_range(geom, matrix, sigma, kind);
    (libm::sqrt(lo * hi), libm::sqrt(hi / lo))
}

fn ratio_range(geom: &Geometry, matrix: &[f64], sigma: f64, kind: DistanceKind) -> (f64, f64) {
    let n = geom.len();
    let alpha = geom.dim() as f64 - 2.0 * sigma;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let r = matrix[i * n + j] * libm::pow(distance_of(geom, kind, i, j), alpha);
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
    }
    (lo, hi)
}

/// Header information accompanying a stored kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelHeader {
    pub sigma: f64,
    pub scale: f64,
    pub lambda: f64,
    pub distance: DistanceKind,
    pub intertwining: bool,
    pub diagonal: DiagonalRule,
}

impl KernelOperator {
    /// Wraps an externally supplied matrix, rejecting it unless it is
    /// symmetric and within the stated bounds.
    pub fn from_matrix(
        geom: impl Into<Arc<Geometry>>,
        matrix: Vec<f64>,
        header: KernelHeader,
    ) -> Result<Self> {
        let geom = geom.into();
        check_sigma(&geom, header.sigma)?;
        let n = geom.len();
        if matrix.len() != n * n {
            return Err(Error::InvalidKernel(format!(
                "matrix has {} entries for {n} nodes",
                matrix.len()
            )));
        }
        if !(header.lambda >= 1.0 && header.scale > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "bounds need lambda >= 1 and scale > 0 (got {}, {})",
                header.lambda, header.scale
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidKernel(String::from("non-finite entries")));
        }
        let defect = symmetry_defect(&matrix, n);
        if defect > SYMMETRY_TOL {
            return Err(Error::InvalidKernel(format!("asymmetric matrix (relative defect {defect:e})")));
        }
        let (lo, hi) = ratio_range(&geom, &matrix, header.sigma, header.distance);
        let tol = 1e-12;
        if lo < header.scale / header.lambda * (1.0 - tol) || hi > header.scale * header.lambda * (1.0 + tol) {
            return Err(Error::InvalidKernel(format!(
                "entries scaled by distance span [{lo:e}, {hi:e}], outside [{:e}, {:e}]",
                header.scale / header.lambda,
                header.scale * header.lambda
            )));
        }
        Ok(KernelOperator {
            geometry: geom,
            sigma: header.sigma,
            matrix,
            scale: header.scale,
            lambda: header.lambda,
            distance: header.distance,
            intertwining: header.intertwining,
            diagonal: header.diagonal,
        })
    }

    pub fn header(&self) -> KernelHeader {
        KernelHeader {
            sigma: self.sigma,
            scale: self.scale,
            lambda: self.lambda,
            distance: self.distance,
            intertwining: self.intertwining,
            diagonal: self.diagonal,
        }
    }

    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geometry
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    /// Manifold dimension.
    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }
    pub fn len(&self) -> usize {
        self.geometry.len()
    }
    pub fn is_empty(&self) -> bool {
        self.geometry.is_empty()
    }
    pub fn weights(&self) -> &[f64] {
        self.geometry.weights()
    }
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.len() + j]
    }
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.matrix[i * n..(i + 1) * n]
    }
    pub fn scale(&self) -> f64 {
        self.scale
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn distance_kind(&self) -> DistanceKind {
        self.distance
    }
    pub fn is_intertwining(&self) -> bool {
        self.intertwining
    }
    pub fn diagonal_rule(&self) -> DiagonalRule {
        self.diagonal
    }
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance_of(&self.geometry, self.distance, i, j)
    }

    /// Multiplies the whole kernel by a positive constant.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in out.matrix.iter_mut() {
            *v *= factor;
        }
        out.scale *= factor;
        out.intertwining = self.intertwining && factor == 1.0;
        out
    }

    /// `(K f)_i = sum_j K_ij f_j w_j`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.apply_into(f, &mut out);
        out
    }

    pub fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        let n = self.len();
        assert_eq!(f.len(), n, "field length does not match the kernel");
        assert_eq!(out.len(), n);
        let g: Vec<f64> = f.iter().zip(self.weights()).map(|(f, w)| f * w).collect();
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            if n >= 256 {
                out.par_iter_mut()
                    .enumerate()
                    .for_each(|(i, o)| *o = row_dot(&self.matrix[i * n..(i + 1) * n], &g));
                return;
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = row_dot(&self.matrix[i * n..(i + 1) * n], &g);
        }
    }

    /// `sum_i w_i f_i (K f)_i`.
    pub fn quadratic_form(&self, f: &[f64]) -> f64 {
        let kf = self.apply(f);
        weighted_dot(self.weights(), f, &kf)
    }
}

/// Fixed-order dot product with four partial sums.
fn row_dot(row: &[f64], g: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = row.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += row[k] * g[k];
        acc[1] += row[k + 1] * g[k + 1];
        acc[2] += row[k + 2] * g[k + 2];
        acc[3] += row[k + 3] * g[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..row.len() {
        tail += row[k] * g[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

const SYMMETRY_TOL: f64 = 1e-12;

/// Largest `|K_ij - K_ji|` relative to the largest off-diagonal entry.
fn symmetry_defect(matrix: &[f64], n: usize) -> f64 {
    let mut defect: f64 = 0.0;
    let mut size: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                size = size.max(matrix[i * n + j].abs());
                defect = defect.max((matrix[i * n + j] - matrix[j * n + i]).abs());
            }
        }
    }
    if size == 0.0 {
        defect
    } else {
        defect / size
    }
}

/// `Q = u^{-m} K u`.
pub fn dual_q(k: &KernelOperator, u: &[f64], m: f64) -> Vec<f64> {
    let ku = k.apply(u);
    u.iter().zip(&ku).map(|(u, ku)| ku / libm::pow(*u, m)).collect()
}

/// The scale-invariant total of `Q` at the critical exponent,
/// `Vol^{-(n+2σ)/n} * sum_i w_i u_i (K u)_i` with `Vol = sum_i w_i u_i^{m+1}`.
pub fn total_q_functional(k: &KernelOperator, u: &[f64]) -> f64 {
    let n = k.dim() as f64;
    let m = crate::critical_exponent(k.dim(), k.sigma());
    let vol: f64 = k
        .weights()
        .iter()
        .zip(u)
        .map(|(w, u)| w * libm::pow(*u, m + 1.0))
        .sum();
    libm::pow(vol, -(n + 2.0 * k.sigma()) / n) * k.quadratic_form(u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelReport {
    pub symmetry_defect: f64,
    pub min_off_diagonal: f64,
    /// Centre and half-width (multiplicative) of `K_ij d_ij^{n-2σ}`.
    pub fitted_scale: f64,
    pub fitted_lambda: f64,
    /// The bound with the scale pinned to one.
    pub absolute_lambda: f64,
    /// Largest `|K_ij - K_kj| / d_ik * d_ij^{n+1-2σ}` over nearest neighbours
    /// `k` of `i` and nodes `j` away from both.
    pub gradient_constant: f64,
    pub pole_constant: f64,
    /// `(max - min) / mean` of the per-node pole estimates.
    pub pole_spread: f64,
    pub symmetric: bool,
    pub bounded: bool,
    pub lipschitz: bool,
    pub pole_uniform: bool,
}

impl KernelReport {
    pub fn passed(&self) -> bool {
        self.symmetric && self.bounded && self.lipschitz && self.pole_uniform
    }
}

const POLE_NEIGHBOURS: usize = 4;
const POLE_SPREAD_TOL: f64 = 0.05;

/// Empirical check of symmetry, two-sided power bounds, a difference bound
/// and a uniform pole constant.
pub fn validate_kernel(k: &KernelOperator) -> KernelReport {
    let geom = &k.geometry;
    let n = k.len();
    let alpha = k.dim() as f64 - 2.0 * k.sigma;
    let symmetry = symmetry_defect(&k.matrix, n);
    let mut min_off = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                min_off = min_off.min(k.entry(i, j));
            }
        }
    }
    let (lo, hi) = ratio_range(geom, &k.matrix, k.sigma, k.distance);
    let fitted_scale = libm::sqrt(lo * hi);
    let fitted_lambda = libm::sqrt(hi / lo);
    let absolute_lambda = hi.max(1.0 / lo).max(1.0);

    let mut gradient: f64 = 0.0;
    let mut poles = Vec::with_capacity(n);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&a, &b| k.distance(i, a).total_cmp(&k.distance(i, b)));
        let near = order[0];
        let h = k.distance(i, near);
        for j in 0..n {
            if j == i || j == near {
                continue;
            }
            let d = k.distance(i, j);
            if d > 2.0 * h && k.distance(near, j) > 2.0 * h {
                let q = (k.entry(i, j) - k.entry(near, j)).abs() / h * libm::pow(d, alpha + 1.0);
                gradient = gradient.max(q);
            }
        }
        let take = POLE_NEIGHBOURS.min(order.len());
        let est: f64 = order[..take]
            .iter()
            .map(|&j| k.entry(i, j) * libm::pow(k.distance(i, j), alpha))
            .sum::<f64>()
            / take as f64;
        poles.push(est);
    }
    let mean = poles.iter().sum::<f64>() / n as f64;
    let spread = (poles.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - poles.iter().cloned().fold(f64::INFINITY, f64::min))
        / mean;

    KernelReport {
        symmetry_defect: symmetry,
        min_off_diagonal: min_off,
        fitted_scale,
        fitted_lambda,
        absolute_lambda,
        gradient_constant: gradient,
        pole_constant: mean,
        pole_spread: spread,
        symmetric: symmetry <= SYMMETRY_TOL,
        bounded: min_off > 0.0 && absolute_lambda.is_finite(),
        lipschitz: gradient.is_finite() && gradient <= absolute_lambda,
        pole_uniform: spread <= POLE_SPREAD_TOL,
    }
}
