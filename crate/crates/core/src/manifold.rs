//! Discretized compact manifolds: nodes, quadrature weights and pairwise
//! distances.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::special::sphere_area;

const MIN_NODES: usize = 8;
const TRIANGLE_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SphereScheme {
    /// Equally spaced angles on `S^1`.
    UniformAngle,
    /// Golden-angle spiral on `S^2`.
    Fibonacci,
    /// Zonal partition of `S^2` into regions of equal area.
    EqualArea,
}

impl SphereScheme {
    pub fn name(self) -> &'static str {
        match self {
            SphereScheme::UniformAngle => "uniform_angle",
            SphereScheme::Fibonacci => "fibonacci",
            SphereScheme::EqualArea => "equal_area",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform_angle" => Some(SphereScheme::UniformAngle),
            "fibonacci" => Some(SphereScheme::Fibonacci),
            "equal_area" => Some(SphereScheme::EqualArea),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    Sphere { n: usize, scheme: SphereScheme },
    PointCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    dim: usize,
    ambient_dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    chordal: Vec<f64>,
    geodesic: Vec<f64>,
    total_volume: f64,
    kind: GeometryKind,
}

impl Geometry {
    /// Assembles and validates a geometry from raw parts.
    ///
    /// `nodes` is row-major with `ambient_dim` coordinates per node. When
    /// `distances` is omitted the intrinsic distance is the great-circle
    /// distance if every node has unit norm, and the chordal one otherwise.
    pub fn from_parts(
        dim: usize,
        ambient_dim: usize,
        nodes: Vec<f64>,
        weights: Vec<f64>,
        distances: Option<Vec<f64>>,
        kind: GeometryKind,
    ) -> Result<Self> {
        if dim == 0 || ambient_dim < dim {
            return Err(Error::param(format!(
                "dimension {dim} with ambient dimension {ambient_dim}"
            )));
        }
        let count = weights.len();
        if nodes.len() != count * ambient_dim {
            return Err(geometry_err(
                format!(
                    "{} node coordinates for {count} weights in ambient dimension {ambient_dim}",
                    nodes.len()
                ),
                Vec::new(),
            ));
        }
        if count < MIN_NODES {
            return Err(Error::param(format!("need at least {MIN_NODES} nodes, got {count}")));
        }
        let bad: Vec<usize> = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| !(w.is_finite() && **w > 0.0))
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            return Err(geometry_err("non-positive or non-finite weights", bad));
        }
        let chordal = chordal_table(&nodes, ambient_dim, count);
        let geodesic = match distances {
            Some(d) => {
                if d.len() != count * count {
                    return Err(geometry_err(
                        format!("distance table has {} entries, expected {}", d.len(), count * count),
                        Vec::new(),
                    ));
                }
                d
            }
            None if is_unit_norm(&nodes, ambient_dim) => great_circle_table(&nodes, ambient_dim, count),
            None => chordal.clone(),
        };
        let total_volume = weights.iter().sum();
        let g = Geometry {
            dim,
            ambient_dim,
            nodes,
            weights,
            chordal,
            geodesic,
            total_volume,
            kind,
        };
        let report = validate_geometry(&g);
        if let Some(err) = report.into_error() {
            return Err(err);
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.ambient_dim..(i + 1) * self.ambient_dim]
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn total_volume(&self) -> f64 {
        self.total_volume
    }
    pub fn kind(&self) -> GeometryKind {
        self.kind
    }
    pub fn chordal(&self, i: usize, j: usize) -> f64 {
        self.chordal[i * self.len() + j]
    }
    pub fn geodesic(&self, i: usize, j: usize) -> f64 {
        self.geodesic[i * self.len() + j]
    }
    pub fn chordal_table(&self) -> &[f64] {
        &self.chordal
    }
    pub fn geodesic_table(&self) -> &[f64] {
        &self.geodesic
    }

    pub fn is_round_sphere(&self) -> bool {
        matches!(self.kind, GeometryKind::Sphere { .. })
    }

    /// True for the equally spaced circle, where the self-interaction of a
    /// singular kernel has a closed-form correction.
    pub fn is_uniform_circle(&self) -> bool {
        matches!(
            self.kind,
            GeometryKind::Sphere { n: 1, scheme: SphereScheme::UniformAngle }
        )
    }

    /// Smallest positive distance from node `i` to any other node.
    pub fn nearest_distance(&self, i: usize) -> f64 {
        (0..self.len())
            .filter(|&j| j != i)
            .map(|j| self.geodesic(i, j))
            .fold(f64::INFINITY, f64::min)
    }

    /// Weighted integral `sum_i w_i f_i`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, f)| w * f).sum()
    }
}

fn geometry_err(reason: impl Into<String>, indices: Vec<usize>) -> Error {
    Error::InvalidGeometry { reason: reason.into(), indices }
}

fn chordal_table(nodes: &[f64], d: usize, count: usize) -> Vec<f64> {
    let mut out = vec![0.0; count * count];
    for i in 0..count {
        for j in (i + 1)..count {
            let mut s = 0.0;
            for k in 0..d {
                let t = nodes[i * d + k] - nodes[j * d + k];
                s += t * t;
            }
            let r = libm::sqrt(s);
            out[i * count + j] = r;
            out[j * count + i] = r;
        }
    }
    out
}

fn is_unit_norm(nodes: &[f64], d: usize) -> bool {
    nodes.chunks(d).all(|x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        (r2 - 1.0).abs() < 1e-12
    })
}

/// `2 atan2(|a - b|, |a + b|)`, accurate for nearby and antipodal pairs.
fn great_circle_table(nodes: &[f64], d: usize, count: usize) -> Vec<f64> {
    let mut out = vec![0.0; count * count];
    for i in 0..count {
        for j in (i + 1)..count {
            let (mut dm, mut dp) = (0.0, 0.0);
            for k in 0..d {
                let (a, b) = (nodes[i * d + k], nodes[j * d + k]);
                dm += (a - b) * (a - b);
                dp += (a + b) * (a + b);
            }
            let r = 2.0 * libm::atan2(libm::sqrt(dm), libm::sqrt(dp));
            out[i * count + j] = r;
            out[j * count + i] = r;
        }
    }
    out
}

/// Builds a quadrature of the round unit sphere `S^n` with `count` nodes.
///
/// Supported combinations are `n = 1` with [`SphereScheme::UniformAngle`] and
/// `n = 2` with [`SphereScheme::Fibonacci`] or [`SphereScheme::EqualArea`].
/// Every scheme here has equal weights summing to the sphere's area.
pub fn build_sphere(n: usize, count: usize, scheme: SphereScheme) -> Result<Geometry> {
    if count < MIN_NODES {
        return Err(Error::param(format!("need at least {MIN_NODES} nodes, got {count}")));
    }
    let nodes = match (n, scheme) {
        (1, SphereScheme::UniformAngle) => circle_nodes(count),
        (2, SphereScheme::Fibonacci) => fibonacci_nodes(count),
        (2, SphereScheme::EqualArea) => equal_area_nodes(count),
        _ => {
            return Err(Error::Unsupported(format!(
                "sphere S^{n} with scheme {}",
                scheme.name()
            )))
        }
    };
    let area = sphere_area(n);
    let weights = vec![area / count as f64; count];
    let chordal = chordal_table(&nodes, n + 1, count);
    let geodesic = if n == 1 {
        circle_geodesics(count)
    } else {
        great_circle_table(&nodes, n + 1, count)
    };
    let total_volume = weights.iter().sum();
    Ok(Geometry {
        dim: n,
        ambient_dim: n + 1,
        nodes,
        weights,
        chordal,
        geodesic,
        total_volume,
        kind: GeometryKind::Sphere { n, scheme },
    })
}

fn circle_nodes(count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * count);
    for k in 0..count {
        let t = 2.0 * PI * k as f64 / count as f64;
        out.push(libm::cos(t));
        out.push(libm::sin(t));
    }
    out
}

fn circle_geodesics(count: usize) -> Vec<f64> {
    let mut out = vec![0.0; count * count];
    for i in 0..count {
        for j in 0..count {
            let k = i.abs_diff(j);
            let k = k.min(count - k);
            out[i * count + j] = 2.0 * PI * k as f64 / count as f64;
        }
    }
    out
}

fn fibonacci_nodes(count: usize) -> Vec<f64> {
    let golden = PI * (3.0 - libm::sqrt(5.0));
    let mut out = Vec::with_capacity(3 * count);
    for k in 0..count {
        let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
        let r = libm::sqrt((1.0 - z * z).max(0.0));
        let phi = golden * k as f64;
        out.push(r * libm::cos(phi));
        out.push(r * libm::sin(phi));
        out.push(z);
    }
    out
}

/// Recursive zonal equal-area partition of `S^2`: two polar caps plus
/// collars whose region counts are rounded with carried remainders.
fn equal_area_nodes(count: usize) -> Vec<f64> {
    let region = 4.0 * PI / count as f64;
    let cap_colat = |area: f64| 2.0 * libm::asin(libm::sqrt(area / (4.0 * PI)).min(1.0));
    let polar = cap_colat(region);
    let ideal_angle = libm::sqrt(region);
    let collars = (libm::round((PI - 2.0 * polar) / ideal_angle) as usize).max(1);
    let fit_angle = (PI - 2.0 * polar) / collars as f64;

    let cap_area = |theta: f64| 2.0 * PI * (1.0 - libm::cos(theta));
    let mut counts = Vec::with_capacity(collars);
    let mut carry = 0.0;
    for j in 0..collars {
        let lo = polar + j as f64 * fit_angle;
        let hi = lo + fit_angle;
        let ideal = (cap_area(hi) - cap_area(lo)) / region;
        let c = libm::round(ideal + carry);
        carry += ideal - c;
        counts.push(c as usize);
    }

    let mut out = Vec::with_capacity(3 * count);
    out.extend_from_slice(&[0.0, 0.0, 1.0]);
    let mut cumulative = 1usize;
    let golden_frac = (libm::sqrt(5.0) - 1.0) / 2.0;
    for (j, &c) in counts.iter().enumerate() {
        let top = cap_colat(cumulative as f64 * region);
        cumulative += c;
        let bottom = cap_colat(cumulative as f64 * region);
        let theta = 0.5 * (top + bottom);
        let t = j as f64 * golden_frac;
        let offset = t - libm::floor(t);
        for i in 0..c {
            let phi = 2.0 * PI * (i as f64 + offset) / c as f64;
            out.push(libm::sin(theta) * libm::cos(phi));
            out.push(libm::sin(theta) * libm::sin(phi));
            out.push(libm::cos(theta));
        }
    }
    out.extend_from_slice(&[0.0, 0.0, -1.0]);
    debug_assert_eq!(out.len(), 3 * count);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryReport {
    pub node_count: usize,
    pub total_volume: f64,
    pub bad_weights: Vec<usize>,
    /// Largest `|d_ij - d_ji|` in the intrinsic distance table.
    pub symmetry_defect: f64,
    /// Nodes with a non-zero self-distance.
    pub nonzero_diagonal: Vec<usize>,
    /// Nodes with a non-positive distance to some other node.
    pub coincident: Vec<usize>,
    pub triangle_samples: usize,
    pub triangle_violations: usize,
}

impl GeometryReport {
    pub fn passed(&self) -> bool {
        self.bad_weights.is_empty()
            && self.symmetry_defect == 0.0
            && self.nonzero_diagonal.is_empty()
            && self.coincident.is_empty()
            && self.triangle_violations == 0
    }

    fn into_error(self) -> Option<Error> {
        if !self.bad_weights.is_empty() {
            return Some(geometry_err("non-positive weights", self.bad_weights));
        }
        if self.symmetry_defect != 0.0 {
            return Some(geometry_err(
                format!("asymmetric distance table (defect {:e})", self.symmetry_defect),
                Vec::new(),
            ));
        }
        if !self.nonzero_diagonal.is_empty() {
            return Some(geometry_err("non-zero self-distance", self.nonzero_diagonal));
        }
        if !self.coincident.is_empty() {
            return Some(geometry_err("coincident nodes", self.coincident));
        }
        if self.triangle_violations > 0 {
            return Some(geometry_err(
                format!(
                    "{} of {} sampled triples violate the triangle inequality",
                    self.triangle_violations, self.triangle_samples
                ),
                Vec::new(),
            ));
        }
        None
    }
}

/// Checks weights, distance symmetry, diagonal, separation and a seeded
/// sample of triangle inequalities.
pub fn validate_geometry(g: &Geometry) -> GeometryReport {
    let n = g.len();
    let bad_weights = g
        .weights
        .iter()
        .enumerate()
        .filter(|(_, w)| !(w.is_finite() && **w > 0.0))
        .map(|(i, _)| i)
        .collect();
    let mut symmetry_defect: f64 = 0.0;
    let mut nonzero_diagonal = Vec::new();
    let mut coincident = Vec::new();
    for i in 0..n {
        if g.geodesic(i, i) != 0.0 {
            nonzero_diagonal.push(i);
        }
        let mut separated = true;
        for j in 0..n {
            if i != j {
                symmetry_defect = symmetry_defect.max((g.geodesic(i, j) - g.geodesic(j, i)).abs());
                if !(g.geodesic(i, j) > 0.0) {
                    separated = false;
                }
            }
        }
        if !separated {
            coincident.push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_7a1e);
    let samples = if n < 3 { 0 } else { TRIANGLE_SAMPLES };
    let mut violations = 0;
    for _ in 0..samples {
        let (a, b, c) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
        let lhs = g.geodesic(a, c);
        let rhs = g.geodesic(a, b) + g.geodesic(b, c);
        if lhs > rhs * (1.0 + 1e-12) + 1e-14 {
            violations += 1;
        }
    }
    GeometryReport {
        node_count: n,
        total_volume: g.total_volume,
        bad_weights,
        symmetry_defect,
        nonzero_diagonal,
        coincident,
        triangle_samples: samples,
        triangle_violations: violations,
    }
}
