//! Conformal tooling on the round sphere: the bubble family, stereographic
//! coordinates, the Kelvin transform and bubble fitting.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::critical_exponent;
use crate::error::{Error, Result};
use crate::kernel::KernelOperator;
use crate::linalg::solve_dense;
use crate::manifold::Geometry;
use crate::special::composite_gauss;
use crate::steady::j_functional;

#[derive(Debug, Clone, PartialEq)]
pub struct BubbleParams {
    /// Concentration point, a unit vector in the ambient space.
    pub xi0: Vec<f64>,
    pub lambda: f64,
    pub c: f64,
}

impl BubbleParams {
    pub fn new(xi0: Vec<f64>, lambda: f64, c: f64) -> Result<Self> {
        let r = libm::sqrt(xi0.iter().map(|x| x * x).sum::<f64>());
        if (r - 1.0).abs() > 1e-12 {
            return Err(Error::param(format!("concentration point has norm {r}, expected 1")));
        }
        if !(lambda > 0.0 && c > 0.0) {
            return Err(Error::param("bubble needs lambda > 0 and c > 0"));
        }
        Ok(BubbleParams { xi0, lambda, c })
    }
}

/// `c (2λ / (2 + (λ² - 1)(1 - cos d)))^{(n+2σ)/2}` at a point whose cosine
/// of the geodesic distance to `ξ₀` is `cos_d`.
pub fn bubble_value(n: usize, sigma: f64, lambda: f64, c: f64, cos_d: f64) -> f64 {
    let l2 = lambda * lambda;
    let base = 2.0 * lambda / (2.0 + (l2 - 1.0) * (1.0 - cos_d));
    c * libm::pow(base, (n as f64 + 2.0 * sigma) / 2.0)
}

/// The bubble `Ū_{ξ₀,λ}` scaled by `c` at every node of a sphere geometry.
pub fn bubble(geom: &Geometry, sigma: f64, p: &BubbleParams) -> Result<Vec<f64>> {
    if !geom.is_round_sphere() {
        return Err(Error::param("bubbles live on round-sphere geometries"));
    }
    if p.xi0.len() != geom.ambient_dim() {
        return Err(Error::param("concentration point has the wrong dimension"));
    }
    Ok((0..geom.len())
        .map(|i| {
            let cos_d = dot(geom.node(i), &p.xi0).clamp(-1.0, 1.0);
            bubble_value(geom.dim(), sigma, p.lambda, p.c, cos_d)
        })
        .collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Stereographic projection from the north pole `(0, ..., 0, 1)`.
pub fn stereographic(xi: &[f64]) -> Vec<f64> {
    let n = xi.len() - 1;
    let d = 1.0 - xi[n];
    xi[..n].iter().map(|x| x / d).collect()
}

/// Inverse projection `F`, sending the origin to the south pole.
pub fn inverse_stereographic(x: &[f64]) -> Vec<f64> {
    let r2 = dot(x, x);
    let mut out: Vec<f64> = x.iter().map(|x| 2.0 * x / (1.0 + r2)).collect();
    out.push((r2 - 1.0) / (r2 + 1.0));
    out
}

/// `|J_F|(x) = (2/(1+|x|²))^n`.
pub fn stereographic_jacobian(x: &[f64]) -> f64 {
    libm::pow(2.0 / (1.0 + dot(x, x)), x.len() as f64)
}

/// Flat-space representative `v(x) = |J_F|^{(n-2σ)/(2n)} u(F(x))^m` of a
/// bubble, with `m` the critical exponent.
pub fn flat_bubble(n: usize, sigma: f64, p: &BubbleParams, x: &[f64]) -> f64 {
    let m = critical_exponent(n, sigma);
    let nf = n as f64;
    let xi = inverse_stereographic(x);
    let cos_d = dot(&xi, &p.xi0).clamp(-1.0, 1.0);
    let u = bubble_value(n, sigma, p.lambda, p.c, cos_d);
    libm::pow(stereographic_jacobian(x), (nf - 2.0 * sigma) / (2.0 * nf)) * libm::pow(u, m)
}

/// Image of `x` under inversion in the sphere `∂B_λ(x₀)`.
pub fn inversion(x: &[f64], x0: &[f64], lambda: f64) -> Vec<f64> {
    let d: Vec<f64> = x.iter().zip(x0).map(|(x, x0)| x - x0).collect();
    let r2 = dot(&d, &d);
    x0.iter().zip(&d).map(|(x0, d)| x0 + lambda * lambda * d / r2).collect()
}

/// Kelvin transform `(λ/|x-x₀|)^{n-2σ} v(x^{x₀,λ})`.
pub fn kelvin<V>(v: &V, sigma: f64, x: &[f64], x0: &[f64], lambda: f64) -> Result<f64>
where
    V: Fn(&[f64]) -> f64 + ?Sized,
{
    let n = x.len() as f64;
    let r = libm::sqrt(x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
    if r == 0.0 {
        return Err(Error::param("Kelvin transform is undefined at its centre"));
    }
    Ok(libm::pow(lambda / r, n - 2.0 * sigma) * v(&inversion(x, x0, lambda)))
}

/// Quadrature controls for [`check_kelvin_identities`].
#[derive(Debug, Clone, PartialEq)]
pub struct KelvinGrid {
    /// Panels per finite piece; unbounded pieces get twice as many.
    pub panels: usize,
    /// Gauss-Legendre points per panel.
    pub order: usize,
    /// Unbounded pieces are mapped by `z = a + λ(e^y - 1)` and cut at
    /// `y = log_span`.
    pub log_span: f64,
    /// Points with `| |x - x₀|/λ - 1 | < shell` are skipped.
    pub shell: f64,
}

impl Default for KelvinGrid {
    fn default() -> Self {
        KelvinGrid { panels: 16, order: 4, log_span: 40.0, shell: 0.1 }
    }
}

impl KelvinGrid {
    pub fn refined(&self) -> Self {
        KelvinGrid { panels: 2 * self.panels, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KelvinCheckReport {
    pub id1_defect: f64,
    pub id2_defect: f64,
    /// Relative bound on what the truncated tails could contribute.
    pub tail_bound: f64,
    pub panels: usize,
    pub points_used: usize,
    pub skipped: Vec<usize>,
}

impl KelvinCheckReport {
    pub fn max_defect(&self) -> f64 {
        self.id1_defect.max(self.id2_defect)
    }
}

/// Evaluates both sides of the two Kelvin reflection identities by flat
/// quadrature at each test point and reports the largest relative defects.
///
/// `v` must decay like `|x|^{-(n-2σ)}`. Only `n = 1` is implemented.
pub fn check_kelvin_identities<V>(
    v: &V,
    n: usize,
    sigma: f64,
    x0: f64,
    lambda: f64,
    points: &[f64],
    grid: &KelvinGrid,
) -> Result<KelvinCheckReport>
where
    V: Fn(&[f64]) -> f64 + ?Sized,
{
    if n != 1 {
        return Err(Error::Unsupported(format!("Kelvin identity quadrature in dimension {n}")));
    }
    if !(sigma > 0.0 && sigma < 0.5 && lambda > 0.0) {
        return Err(Error::param("need 0 < σ < 1/2 and λ > 0"));
    }
    let alpha = 1.0 - 2.0 * sigma;
    let p = (1.0 + 2.0 * sigma) / alpha;
    let vp = |z: f64| libm::pow(v(&[z]), p);
    let vkp = |z: f64| {
        let r = (z - x0).abs();
        libm::pow(libm::pow(lambda / r, alpha) * v(&[x0 + lambda * lambda * (z - x0) / (r * r)]), p)
    };
    let quad = Quad { alpha, unit: lambda, grid };
    let (in_lo, in_hi) = (x0 - lambda, x0 + lambda);

    let mut id1: f64 = 0.0;
    let mut id2: f64 = 0.0;
    let mut tail: f64 = 0.0;
    let mut skipped = Vec::new();
    let mut used = 0;
    for (idx, &x) in points.iter().enumerate() {
        let r = (x - x0).abs();
        if r < 1e-3 * lambda || (r / lambda - 1.0).abs() < grid.shell {
            skipped.push(idx);
            continue;
        }
        used += 1;
        let xs = x0 + lambda * lambda * (x - x0) / (r * r);
        let pre = libm::pow(lambda / r, alpha);

        let (out_l, tl) = quad.outer(&vp, xs, in_lo, in_hi);
        let lhs1 = pre * out_l;
        let rhs1 = quad.finite(&vkp, x, in_lo, in_hi);
        let lhs2 = pre * quad.finite(&vp, xs, in_lo, in_hi);
        let (rhs2, tr) = quad.outer(&vkp, x, in_lo, in_hi);

        id1 = id1.max((lhs1 - rhs1).abs() / rhs1.abs());
        id2 = id2.max((lhs2 - rhs2).abs() / rhs2.abs());
        tail = tail.max(pre * tl / lhs1.abs()).max(tr / rhs2.abs());
    }
    if used == 0 {
        return Err(Error::param(String::from("every test point fell in the excluded shell")));
    }
    Ok(KelvinCheckReport {
        id1_defect: id1,
        id2_defect: id2,
        tail_bound: tail,
        panels: grid.panels,
        points_used: used,
        skipped,
    })
}

struct Quad<'a> {
    alpha: f64,
    /// Length unit for the unbounded pieces, so the rule scales with `λ`.
    unit: f64,
    grid: &'a KelvinGrid,
}

impl Quad<'_> {
    /// `∫_a^b f(z) |s - z|^{-α} dz`, splitting at `s` when it is inside.
    fn finite(&self, f: &dyn Fn(f64) -> f64, s: f64, a: f64, b: f64) -> f64 {
        if s > a && s < b {
            return self.singular_end(f, s, s - a, -1.0) + self.singular_end(f, s, b - s, 1.0);
        }
        if s == a {
            return self.singular_end(f, s, b - a, 1.0);
        }
        if s == b {
            return self.singular_end(f, s, b - a, -1.0);
        }
        // Near-singular: grade logarithmically towards the closer endpoint on
        // the scale of its distance to `s`, and from the far endpoint on the
        // unit scale, meeting in the middle.
        let (near, far) = if (s - a).abs() <= (s - b).abs() { (a, b) } else { (b, a) };
        let mid = 0.5 * (a + b);
        self.graded(f, s, near, mid, (s - near).abs()) + self.graded(f, s, far, mid, self.unit.min(0.5 * (b - a)))
    }

    /// `∫ f(z)|z - s|^{-α}` from `from` to `to` (with `s` outside), mapped
    /// by `z = from ± scale (e^y - 1)`.
    fn graded(&self, f: &dyn Fn(f64) -> f64, s: f64, from: f64, to: f64, scale: f64) -> f64 {
        let dir = if to >= from { 1.0 } else { -1.0 };
        let top = libm::log1p((to - from).abs() / scale);
        let (ys, ws) = composite_gauss(0.0, top, self.grid.panels, self.grid.order);
        let val: f64 = ys
            .iter()
            .zip(&ws)
            .map(|(y, w)| {
                let g = libm::exp(*y);
                let z = from + dir * scale * (g - 1.0);
                w * scale * g * f(z) * libm::pow((s - z).abs(), -self.alpha)
            })
            .sum();
        val
    }

    /// `∫ f(z)|z - s|^{-α}` over the segment of length `len` leaving `s`
    /// in direction `dir`. The first unit of length uses `z = s + dir τ^q`,
    /// which removes the singularity; the rest is not singular.
    fn singular_end(&self, f: &dyn Fn(f64) -> f64, s: f64, len: f64, dir: f64) -> f64 {
        let h = len.min(self.unit);
        let q = 1.0 / (1.0 - self.alpha);
        let top = libm::pow(h, 1.0 / q);
        let (ts, ws) = composite_gauss(0.0, top, self.grid.panels, self.grid.order);
        let near: f64 = ts
            .iter()
            .zip(&ws)
            .map(|(t, w)| w * q * f(s + dir * libm::pow(*t, q)))
            .sum();
        if len > h {
            let (p, r) = (s + dir * h, s + dir * len);
            near + self.finite(f, s, p.min(r), p.max(r))
        } else {
            near
        }
    }

    /// Integral over `(-∞, lo] ∪ [hi, ∞)` and a bound on the truncated tails.
    fn outer(&self, f: &dyn Fn(f64) -> f64, s: f64, lo: f64, hi: f64) -> (f64, f64) {
        let (r, tr) = self.half_line(f, s, hi, 1.0);
        let (l, tl) = self.half_line(f, s, lo, -1.0);
        (r + l, tr + tl)
    }

    /// Half-line starting at `a` in direction `dir`.
    fn half_line(&self, f: &dyn Fn(f64) -> f64, s: f64, a: f64, dir: f64) -> (f64, f64) {
        let inside = (s - a) * dir > 0.0;
        let mut total = 0.0;
        let mut start = a;
        if inside || s == a {
            let mid = s + dir * self.unit;
            total += if inside {
                self.finite(f, s, a.min(mid), a.max(mid))
            } else {
                self.singular_end(f, s, self.unit, dir)
            };
            start = mid;
        }
        // Starting near `s` (outside the domain) calls for a finer scale.
        let unit = if start == a && !inside { self.unit.min((s - a).abs()) } else { self.unit };
        let span = self.grid.log_span;
        let (ys, ws) = composite_gauss(0.0, span, 2 * self.grid.panels, self.grid.order);
        for (y, w) in ys.iter().zip(&ws) {
            let e = libm::exp(*y);
            let z = start + dir * unit * (e - 1.0);
            total += w * unit * e * f(z) * libm::pow((z - s).abs(), -self.alpha);
        }
        // Beyond R the integrand is at most f(R)(R/z)^{1+2σ}|z - s|^{-α}, whose
        // integral is about f(R) R^{1-α}; the factor 2 covers |z - s| < z.
        let r_pt = start + dir * unit * (libm::exp(span) - 1.0);
        let dist = (r_pt - s).abs();
        let tail = 2.0 * f(r_pt) * libm::pow(dist, 1.0 - self.alpha);
        (total, tail.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BubbleFit {
    pub params: BubbleParams,
    /// `||u - fit||_{L²} / ||u||_{L²}`.
    pub residual: f64,
    pub converged: bool,
    pub starts: usize,
}

const MAX_LM_ITER: usize = 300;

/// Least-squares fit of `c Ū_{ξ₀,λ}` to a positive field on a sphere.
pub fn fit_bubble(geom: &Geometry, sigma: f64, u: &[f64]) -> Result<BubbleFit> {
    if !geom.is_round_sphere() {
        return Err(Error::param("bubble fitting needs a round-sphere geometry"));
    }
    if u.len() != geom.len() {
        return Err(Error::param("field length does not match the geometry"));
    }
    if u.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::param("field must be positive"));
    }
    let n = geom.dim();
    let w = geom.weights();
    let norm_u = libm::sqrt(w.iter().zip(u).map(|(w, u)| w * u * u).sum::<f64>());
    let u_max = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let u_min = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let m = critical_exponent(n, sigma);

    if u_max / u_min - 1.0 <= 1e-12 {
        let xi0 = geom.node(0).to_vec();
        let ones = vec![1.0; geom.len()];
        let c = matched_mass(w, u, &ones, m);
        let res = residual_norm(w, u, &ones, c) / norm_u;
        return Ok(BubbleFit { params: BubbleParams { xi0, lambda: 1.0, c }, residual: res, converged: true, starts: 1 });
    }

    let starts = start_nodes(geom, u);
    let mean = geom.integrate(u) / geom.total_volume();
    let mut best: Option<BubbleFit> = None;
    for &s in &starts {
        let xi0 = geom.node(s).to_vec();
        let lambda = lambda_from_ratio(geom, sigma, &xi0, u_max / mean);
        let b = bubble(geom, sigma, &BubbleParams { xi0: xi0.clone(), lambda, c: 1.0 })?;
        let c = matched_mass(w, u, &b, m);
        let fit = levenberg_marquardt(geom, sigma, u, BubbleParams { xi0, lambda, c }, norm_u);
        if best.as_ref().is_none_or(|b| fit.residual < b.residual) {
            best = Some(fit);
        }
    }
    let mut fit = best.expect("at least one start");
    fit.starts = starts.len();
    if fit.params.lambda < 1.0 {
        fit.params.lambda = 1.0 / fit.params.lambda;
        for x in fit.params.xi0.iter_mut() {
            *x = -*x;
        }
    }
    if fit.params.lambda - 1.0 < 1e-9 {
        fit.params.xi0 = geom.node(0).to_vec();
    }
    Ok(fit)
}

fn matched_mass(w: &[f64], u: &[f64], b: &[f64], m: f64) -> f64 {
    let p = m + 1.0;
    let num: f64 = w.iter().zip(u).map(|(w, u)| w * libm::pow(*u, p)).sum();
    let den: f64 = w.iter().zip(b).map(|(w, b)| w * libm::pow(*b, p)).sum();
    libm::pow(num / den, 1.0 / p)
}

fn residual_norm(w: &[f64], u: &[f64], b: &[f64], c: f64) -> f64 {
    libm::sqrt(
        w.iter()
            .zip(u)
            .zip(b)
            .map(|((w, u), b)| w * (u - c * b) * (u - c * b))
            .sum::<f64>(),
    )
}

/// The global maximum plus every other local maximum above `0.9 max u`.
fn start_nodes(geom: &Geometry, u: &[f64]) -> Vec<usize> {
    let n = geom.len();
    let neighbours = if geom.dim() == 1 { 2 } else { 6 };
    let arg = (0..n).max_by(|&a, &b| u[a].total_cmp(&u[b])).unwrap_or(0);
    let top = u[arg];
    let mut out = vec![arg];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        if i == arg || u[i] < 0.9 * top {
            continue;
        }
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&a, &b| geom.chordal(i, a).total_cmp(&geom.chordal(i, b)));
        if order[..neighbours.min(order.len())].iter().all(|&j| u[i] >= u[j]) {
            out.push(i);
        }
    }
    out
}

/// Solves `max Ū / mean Ū = target` for `λ >= 1` by bisection.
fn lambda_from_ratio(geom: &Geometry, sigma: f64, xi0: &[f64], target: f64) -> f64 {
    let ratio = |lambda: f64| {
        let p = BubbleParams { xi0: xi0.to_vec(), lambda, c: 1.0 };
        let b = bubble(geom, sigma, &p).expect("sphere geometry");
        let mx = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        mx * geom.total_volume() / geom.integrate(&b)
    };
    if target <= ratio(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (1.0f64, 2.0f64);
    while ratio(hi) < target && hi < 1e3 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = libm::sqrt(lo * hi);
        if ratio(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    libm::sqrt(lo * hi)
}

/// Orthonormal basis of the tangent space at `xi0`.
fn tangent_basis(xi0: &[f64]) -> Vec<Vec<f64>> {
    let d = xi0.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
    let mut axes: Vec<usize> = (0..d).collect();
    axes.sort_by(|&a, &b| xi0[a].abs().total_cmp(&xi0[b].abs()));
    for &ax in axes.iter() {
        if basis.len() == d - 1 {
            break;
        }
        let mut v = vec![0.0; d];
        v[ax] = 1.0;
        let p = dot(&v, xi0);
        for (vi, xi) in v.iter_mut().zip(xi0) {
            *vi -= p * xi;
        }
        for b in &basis {
            let p = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= p * bi;
            }
        }
        let r = norm(&v);
        if r > 1e-8 {
            basis.push(v.iter().map(|x| x / r).collect());
        }
    }
    basis
}

fn retract(xi0: &[f64], basis: &[Vec<f64>], delta: &[f64]) -> Vec<f64> {
    let mut x = xi0.to_vec();
    for (b, d) in basis.iter().zip(delta) {
        for (xi, bi) in x.iter_mut().zip(b) {
            *xi += d * bi;
        }
    }
    let r = norm(&x);
    x.iter().map(|v| v / r).collect()
}

/// Levenberg-Marquardt in tangent coordinates of `ξ₀`, `log λ` and `log c`
/// with a central-difference Jacobian.
fn levenberg_marquardt(
    geom: &Geometry,
    sigma: f64,
    u: &[f64],
    start: BubbleParams,
    norm_u: f64,
) -> BubbleFit {
    let n = geom.dim();
    let npar = n + 2;
    let npts = geom.len();
    let sw: Vec<f64> = geom.weights().iter().map(|w| libm::sqrt(*w)).collect();
    let resid = |p: &BubbleParams| -> Vec<f64> {
        let b = bubble(geom, sigma, p).expect("sphere geometry");
        (0..npts).map(|i| sw[i] * (b[i] - u[i])).collect()
    };
    let cost = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let apply = |p: &BubbleParams, basis: &[Vec<f64>], delta: &[f64]| BubbleParams {
        xi0: retract(&p.xi0, basis, &delta[..n]),
        lambda: p.lambda * libm::exp(delta[n]),
        c: p.c * libm::exp(delta[n + 1]),
    };

    let mut p = start;
    let mut r = resid(&p);
    let mut f = cost(&r);
    let mut mu = 1e-3;
    let mut converged = false;
    let h = 1e-6;
    for _ in 0..MAX_LM_ITER {
        let basis = tangent_basis(&p.xi0);
        let mut jac = vec![0.0; npts * npar];
        for k in 0..npar {
            let mut d = vec![0.0; npar];
            d[k] = h;
            let rp = resid(&apply(&p, &basis, &d));
            d[k] = -h;
            let rm = resid(&apply(&p, &basis, &d));
            for i in 0..npts {
                jac[i * npar + k] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let mut jtj = vec![0.0; npar * npar];
        let mut jtr = vec![0.0; npar];
        for i in 0..npts {
            for a in 0..npar {
                jtr[a] += jac[i * npar + a] * r[i];
                for b in 0..npar {
                    jtj[a * npar + b] += jac[i * npar + a] * jac[i * npar + b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..npar {
                a[d * npar + d] += mu * jtj[d * npar + d].max(1e-300);
            }
            let rhs: Vec<f64> = jtr.iter().map(|x| -x).collect();
            let Some(delta) = solve_dense(&a, &rhs, npar) else {
                mu *= 10.0;
                continue;
            };
            let cand = apply(&p, &basis, &delta);
            let rc = resid(&cand);
            let fc = cost(&rc);
            if fc < f {
                let small = delta.iter().all(|d| d.abs() < 1e-13) || f - fc <= 1e-15 * f;
                p = cand;
                r = rc;
                f = fc;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                if small {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            converged = true;
            break;
        }
        if converged || f == 0.0 {
            converged = true;
            break;
        }
    }
    BubbleFit { residual: libm::sqrt(f) / norm_u, params: p, converged, starts: 1 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformalReport {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    /// `(max - min) / max` of the critical quotient over the bubbles.
    pub spread: f64,
}

/// Critical quotient `J` on bubbles centred at the first node for each `λ`.
pub fn conformal_invariance_check(k: &KernelOperator, lambdas: &[f64]) -> Result<ConformalReport> {
    let geom = k.geometry();
    let m = critical_exponent(k.dim(), k.sigma());
    let xi0 = geom.node(0).to_vec();
    let mut values = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let b = bubble(geom, k.sigma(), &BubbleParams::new(xi0.clone(), l, 1.0)?)?;
        values.push(j_functional(k, &b, m));
    }
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ConformalReport { lambdas: lambdas.to_vec(), values, spread: (hi - lo) / hi })
}
