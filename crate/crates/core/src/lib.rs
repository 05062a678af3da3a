//! Discretized nonlocal porous-medium flows driven by Riesz-type kernels on
//! compact manifolds.
//!
//! The crate is `no_std` (with `alloc`). Everything is deterministic: kernel
//! products are summed in a fixed order per row, so results do not depend on
//! the number of worker threads when the `parallel` feature is enabled.
//!
//! A typical session builds a [`Geometry`], a [`KernelOperator`] on top of it,
//! and then evolves or solves:
//!
//! ```
//! use riesz_flow_core::{build_sphere, build_intertwining_kernel, SphereScheme};
//! use riesz_flow_core::steady::{solve_extremal, ExtremalOptions};
//!
//! let geom = build_sphere(1, 64, SphereScheme::UniformAngle).unwrap();
//! let k = build_intertwining_kernel(geom, 0.25).unwrap();
//! let sol = solve_extremal(&k, 2.0, &vec![1.0; 64], &ExtremalOptions::default()).unwrap();
//! assert!(sol.residual < 1e-10);
//! ```

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod flow;
pub mod kernel;
pub mod linalg;
pub mod manifold;
pub mod special;
pub mod spectral;
pub mod sphere;
pub mod steady;

pub use error::{Error, Result};
pub use kernel::{
    build_intertwining_kernel, build_intertwining_kernel_with, build_power_kernel,
    build_power_kernel_with, DiagonalRule, DistanceKind,
    KernelOperator,
};
pub use manifold::{build_sphere, Geometry, GeometryKind, SphereScheme};

/// `(n - 2σ)/(n + 2σ)`, the exponent at which the flow is conformally invariant.
pub fn critical_exponent(n: usize, sigma: f64) -> f64 {
    let n = n as f64;
    (n - 2.0 * sigma) / (n + 2.0 * sigma)
}
