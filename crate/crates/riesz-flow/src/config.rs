//! Run configuration: a flat TOML key set, validation, and the builders
//! that turn it into geometry, kernel and initial data.
//!
//! | key | meaning |
//! |-----|---------|
//! | `name` | run label, also the default output directory name |
//! | `geometry_file` | load nodes from a geometry file instead of building a sphere |
//! | `n`, `nodes`, `scheme` | sphere dimension, node count and node layout |
//! | `kernel` | `intertwining`, `tilted` or `file` |
//! | `kernel_file` | kernel matrix for `kernel = "file"` |
//! | `kernel_eps` | strength of the smooth perturbation for `kernel = "tilted"` |
//! | `diagonal` | `auto`, `zeta_corrected`, `equivalent_disc` or `zero` |
//! | `sigma` | fractional order, `0 < sigma < n/2` |
//! | `regime` | `raw`, `rescaled` or `critical` |
//! | `m` | porous-medium exponent; omitted means the critical value |
//! | `t_end` | final time |
//! | `step`, `dt`, `rtol`, `eta` | `fixed` or `adaptive` stepping and its controls |
//! | `u0` | initial data, see [`InitialData`] |
//! | `u0_volume` | if set, scale the initial data so that `∫ u^{m+1}` equals it |
//! | `q_set` | exponents of the recorded moments `M_q` |
//! | `renormalize` | hold `∫ u^{m+1}` fixed in the critical regime |
//! | `snapshots`, `record_stride` | number of stored fields and diagnostics stride |
//! | `max_steps` | hard cap on accepted plus rejected steps |
//! | `shoot` | rescaled critical runs: bisect the amplitude of `u0` first |
//! | `out` | output directory, relative to the output root |

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use riesz_flow_core::flow::{FlowOptions, Regime, SnapshotSchedule, StepPolicy};
use riesz_flow_core::special::pole_constant;
use riesz_flow_core::sphere::{bubble, BubbleParams};
use riesz_flow_core::steady::{solve_extremal, steady_from_extremal, ExtremalOptions, SteadyStatus};
use riesz_flow_core::{
    build_intertwining_kernel_with, build_power_kernel, build_sphere, critical_exponent,
    DiagonalRule, Geometry, KernelOperator, SphereScheme,
};

use crate::error::{CliError, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry_file: Option<String>,
    pub n: usize,
    pub nodes: usize,
    pub scheme: String,
    pub kernel: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_file: Option<String>,
    pub kernel_eps: f64,
    pub diagonal: String,
    pub sigma: f64,
    pub regime: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    pub t_end: f64,
    pub step: String,
    pub dt: f64,
    pub rtol: f64,
    pub eta: f64,
    pub u0: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0_volume: Option<f64>,
    pub q_set: Vec<f64>,
    pub renormalize: bool,
    pub snapshots: usize,
    pub record_stride: usize,
    pub max_steps: usize,
    pub shoot: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "run".into(),
            geometry_file: None,
            n: 1,
            nodes: 256,
            scheme: "uniform_angle".into(),
            kernel: "intertwining".into(),
            kernel_file: None,
            kernel_eps: 0.3,
            diagonal: "auto".into(),
            sigma: 0.25,
            regime: "critical".into(),
            m: None,
            t_end: 1.0,
            step: "adaptive".into(),
            dt: 1e-3,
            rtol: 1e-8,
            eta: 0.05,
            u0: "const:1".into(),
            u0_volume: None,
            q_set: vec![1.0, 2.0],
            renormalize: true,
            snapshots: 64,
            record_stride: 1,
            max_steps: 50_000_000,
            shoot: false,
            out: None,
        }
    }
}

/// Parsed form of the `u0` key.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// `const:<value>`
    Constant(f64),
    /// `file:<path>` to a field file.
    File(PathBuf),
    /// `random:<seed>`, values uniform in `[0.5, 1.5)`.
    Random(u64),
    /// `bubble:<lambda>[:<c>]`, concentrated at the first node.
    Bubble { lambda: f64, c: f64 },
    /// `separable:<c>`, the product solution through the steady state at `t = 0`.
    Separable(f64),
    /// `cosine:<amp>`, `1 + amp x₁`.
    Cosine(f64),
}

impl InitialData {
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let num = |a: &str| a.parse::<f64>().map_err(|_| format!("u0 `{s}`: `{a}` is not a number"));
        match kind {
            "const" => Ok(InitialData::Constant(num(arg)?)),
            "file" if !arg.is_empty() => Ok(InitialData::File(PathBuf::from(arg))),
            "random" => arg
                .parse()
                .map(InitialData::Random)
                .map_err(|_| format!("u0 `{s}`: seed must be a non-negative integer")),
            "bubble" => {
                let (l, c) = arg.split_once(':').unwrap_or((arg, "1"));
                Ok(InitialData::Bubble { lambda: num(l)?, c: num(c)? })
            }
            "separable" => Ok(InitialData::Separable(num(arg)?)),
            "cosine" => Ok(InitialData::Cosine(num(arg)?)),
            _ => Err(format!(
                "u0 `{s}` is not one of const:<v>, file:<path>, random:<seed>, bubble:<λ>[:<c>], separable:<c>, cosine:<a>"
            )),
        }
    }
}

/// Outcome of [`RunConfig::validate`] when no hard violation was found.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Validation {
    pub warnings: Vec<String>,
}

impl RunConfig {
    pub fn from_table(table: toml::Table) -> Result<Self> {
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::config(e.message().to_string()))
    }

    /// Like [`RunConfig::from_table`] followed by [`RunConfig::validate`],
    /// but unknown keys are reported together with the other violations.
    pub fn from_table_validated(mut table: toml::Table) -> Result<(Self, Validation)> {
        let known = Self::default().to_table();
        let optional = ["geometry_file", "kernel_file", "m", "u0_volume", "out"];
        let unknown: Vec<String> = table
            .keys()
            .filter(|k| !known.contains_key(*k) && !optional.contains(&k.as_str()))
            .cloned()
            .collect();
        for k in &unknown {
            table.remove(k);
        }
        let cfg = Self::from_table(table)?;
        let mut bad: Vec<String> = unknown.iter().map(|k| format!("unknown key `{k}`")).collect();
        match cfg.validate() {
            Ok(v) if bad.is_empty() => Ok((cfg, v)),
            Ok(_) => Err(CliError::Violations(bad)),
            Err(CliError::Violations(more)) => {
                bad.extend(more);
                Err(CliError::Violations(bad))
            }
            Err(e) => Err(e),
        }
    }

    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serializes to a table")
    }

    /// Reads a config file. A run manifest is accepted too, in which case
    /// its `config` table is used.
    pub fn load_table(path: &Path) -> Result<toml::Table> {
        let mut t = io::read_toml(path)?;
        if let Some(toml::Value::Table(c)) = t.remove("config") {
            t = c;
        }
        resolve_paths(&mut t, path.parent().unwrap_or(Path::new(".")));
        Ok(t)
    }

    pub fn regime(&self) -> Option<Regime> {
        Regime::parse(&self.regime)
    }

    /// `m`, defaulting to the critical exponent.
    pub fn exponent(&self) -> f64 {
        self.m.unwrap_or_else(|| critical_exponent(self.n, self.sigma))
    }

    /// Checks every key and reports all violations at once.
    pub fn validate(&self) -> Result<Validation> {
        let mut bad = Vec::new();
        let mut warnings = Vec::new();
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            bad.push(format!("name `{}` must be a non-empty plain file name", self.name));
        }
        match &self.geometry_file {
            Some(p) if !Path::new(p).is_file() => bad.push(format!("geometry_file `{p}` does not exist")),
            _ => {}
        }
        if self.n == 0 {
            bad.push("n must be at least 1".into());
        }
        if self.geometry_file.is_none() {
            match SphereScheme::parse(&self.scheme) {
                None => bad.push(format!("scheme `{}` is not uniform_angle, fibonacci or equal_area", self.scheme)),
                Some(SphereScheme::UniformAngle) if self.n != 1 => {
                    bad.push(format!("scheme uniform_angle needs n = 1, got n = {}", self.n))
                }
                Some(SphereScheme::Fibonacci | SphereScheme::EqualArea) if self.n != 2 => {
                    bad.push(format!("scheme {} needs n = 2, got n = {}", self.scheme, self.n))
                }
                _ => {}
            }
            if self.nodes < 8 {
                bad.push(format!("nodes = {} is below the minimum of 8", self.nodes));
            }
        }
        match self.kernel.as_str() {
            "intertwining" | "tilted" => {}
            "file" => match &self.kernel_file {
                None => bad.push("kernel = \"file\" needs kernel_file".into()),
                Some(p) if !Path::new(p).is_file() => bad.push(format!("kernel_file `{p}` does not exist")),
                _ => {}
            },
            k => bad.push(format!("kernel `{k}` is not intertwining, tilted or file")),
        }
        if self.kernel == "tilted" && !(self.kernel_eps >= 0.0 && self.kernel_eps.is_finite()) {
            bad.push(format!("kernel_eps = {} must be non-negative", self.kernel_eps));
        }
        if self.diagonal != "auto" && DiagonalRule::parse(&self.diagonal).is_none() {
            bad.push(format!("diagonal `{}` is not auto, zeta_corrected, equivalent_disc or zero", self.diagonal));
        }
        let half = self.n as f64 / 2.0;
        if !(self.sigma > 0.0 && self.sigma < half) {
            bad.push(format!("sigma = {} must lie in (0, n/2) = (0, {half})", self.sigma));
        }
        let regime = self.regime();
        if regime.is_none() {
            bad.push(format!("regime `{}` is not raw, rescaled or critical", self.regime));
        }
        let m = self.exponent();
        let sigma_ok = self.sigma > 0.0 && self.sigma < half;
        if self.m.is_none() && !sigma_ok {
            // The critical exponent is meaningless here; sigma is already reported.
        } else if !(m > 0.0 && m.is_finite()) {
            bad.push(format!("m = {m} must be positive"));
        } else {
            if regime == Some(Regime::Rescaled) && m == 1.0 {
                bad.push("the rescaled regime is undefined at m = 1".into());
            }
            let mc = critical_exponent(self.n, self.sigma);
            if m < mc && (m - mc).abs() > 1e-12 && sigma_ok {
                warnings.push(format!(
                    "m = {m} is below the critical exponent {mc}: exploratory regime, blow-up behaviour is not covered by known results"
                ));
            }
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            bad.push(format!("t_end = {} must be positive", self.t_end));
        }
        match self.step.as_str() {
            "fixed" | "adaptive" => {}
            s => bad.push(format!("step `{s}` is not fixed or adaptive")),
        }
        if !(self.dt > 0.0) {
            bad.push(format!("dt = {} must be positive", self.dt));
        }
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            bad.push(format!("rtol = {} must lie in (0, 1)", self.rtol));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            bad.push(format!("eta = {} must lie in (0, 1]", self.eta));
        }
        match InitialData::parse(&self.u0) {
            Err(e) => bad.push(e),
            Ok(InitialData::File(p)) if !p.is_file() => bad.push(format!("u0 file `{}` does not exist", p.display())),
            Ok(InitialData::Constant(c)) if !(c > 0.0) => bad.push(format!("u0 constant {c} must be positive")),
            Ok(InitialData::Bubble { lambda, c }) if !(lambda > 0.0 && c > 0.0) => {
                bad.push("u0 bubble needs positive lambda and c".into())
            }
            Ok(InitialData::Bubble { .. }) if self.geometry_file.is_some() => {
                bad.push("u0 bubble needs a built sphere geometry".into())
            }
            Ok(InitialData::Separable(c)) if !(c > 0.0) || m == 1.0 => {
                bad.push("u0 separable needs c > 0 and m != 1".into())
            }
            Ok(InitialData::Cosine(a)) if !(a.abs() < 1.0) => bad.push(format!("u0 cosine amplitude {a} must be below 1")),
            Ok(_) => {}
        }
        if let Some(v) = self.u0_volume {
            if !(v > 0.0) {
                bad.push(format!("u0_volume = {v} must be positive"));
            }
        }
        if self.q_set.iter().any(|q| !(*q > 0.0)) {
            bad.push("q_set entries must be positive".into());
        }
        if self.record_stride == 0 {
            bad.push("record_stride must be at least 1".into());
        }
        if self.shoot && !(regime == Some(Regime::Rescaled) && self.m.is_none()) {
            bad.push("shoot needs the rescaled regime at the critical exponent (leave m unset)".into());
        }
        if bad.is_empty() {
            Ok(Validation { warnings })
        } else {
            Err(CliError::Violations(bad))
        }
    }

    pub fn build_geometry(&self) -> Result<Arc<Geometry>> {
        let g = match &self.geometry_file {
            Some(p) => io::load_geometry(Path::new(p))?,
            None => {
                let scheme = SphereScheme::parse(&self.scheme)
                    .ok_or_else(|| CliError::config(format!("unknown scheme `{}`", self.scheme)))?;
                build_sphere(self.n, self.nodes, scheme)?
            }
        };
        Ok(Arc::new(g))
    }

    pub fn build_kernel(&self, geom: Arc<Geometry>) -> Result<KernelOperator> {
        let sigma = self.sigma;
        match self.kernel.as_str() {
            "intertwining" => {
                let rule = match self.diagonal.as_str() {
                    "auto" => DiagonalRule::best_for(&geom),
                    d => DiagonalRule::parse(d).ok_or_else(|| CliError::config(format!("unknown diagonal `{d}`")))?,
                };
                Ok(build_intertwining_kernel_with(geom, sigma, rule)?)
            }
            "tilted" => Ok(tilted_kernel(geom, sigma, self.kernel_eps)?),
            "file" => {
                let p = self.kernel_file.as_deref().ok_or_else(|| CliError::config("kernel_file is not set"))?;
                io::load_kernel(Path::new(p), geom)
            }
            k => Err(CliError::config(format!("unknown kernel `{k}`"))),
        }
    }

    /// Initial data, scaled to `u0_volume` when that is set.
    pub fn initial_data(&self, k: &KernelOperator) -> Result<Vec<f64>> {
        let geom = k.geometry();
        let m = self.exponent();
        let len = geom.len();
        let mut u = match InitialData::parse(&self.u0).map_err(CliError::Config)? {
            InitialData::Constant(c) => vec![c; len],
            InitialData::File(p) => {
                let f = io::load_field(&p)?;
                if f.values.len() != len {
                    return Err(CliError::config(format!(
                        "u0 file has {} values for {len} nodes",
                        f.values.len()
                    )));
                }
                f.values
            }
            InitialData::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..len).map(|_| 0.5 + rng.gen::<f64>()).collect()
            }
            InitialData::Bubble { lambda, c } => {
                let p = BubbleParams::new(geom.node(0).to_vec(), lambda, c)?;
                bubble(geom, self.sigma, &p)?
            }
            InitialData::Separable(c) => {
                let s = steady_state(k, m)?;
                riesz_flow_core::flow::separable_solution(&s, m, c, 0.0)?
            }
            InitialData::Cosine(a) => (0..len).map(|i| 1.0 + a * geom.node(i)[0]).collect(),
        };
        if let Some(target) = self.u0_volume {
            let v = geom.integrate(&u.iter().map(|u| u.powf(m + 1.0)).collect::<Vec<_>>());
            let s = (target / v).powf(1.0 / (m + 1.0));
            u.iter_mut().for_each(|x| *x *= s);
        }
        Ok(u)
    }

    pub fn flow_options(&self) -> FlowOptions {
        let step = if self.step == "fixed" {
            StepPolicy::Fixed(self.dt)
        } else {
            StepPolicy::Adaptive { rtol: self.rtol, dt0: self.dt }
        };
        FlowOptions {
            t_end: self.t_end,
            step,
            renormalize: self.renormalize,
            snapshots: if self.snapshots == 0 {
                SnapshotSchedule::None
            } else {
                SnapshotSchedule::Uniform(self.snapshots)
            },
            q_set: self.q_set.clone(),
            eta: self.eta,
            max_steps: self.max_steps,
            record_stride: self.record_stride,
            ..FlowOptions::default()
        }
    }
}

/// Rewrites relative file keys against `base` so a config keeps working
/// when it is copied into a run directory.
fn resolve_paths(t: &mut toml::Table, base: &Path) {
    let fix = |s: &str| -> String {
        let p = Path::new(s);
        if p.is_absolute() {
            s.to_string()
        } else {
            let joined = base.join(p);
            joined.canonicalize().unwrap_or(joined).to_string_lossy().into_owned()
        }
    };
    for key in ["geometry_file", "kernel_file"] {
        if let Some(toml::Value::String(s)) = t.get_mut(key) {
            *s = fix(s);
        }
    }
    if let Some(toml::Value::String(s)) = t.get_mut("u0") {
        if let Some(p) = s.strip_prefix("file:") {
            *s = format!("file:{}", fix(p));
        }
    }
}

/// `c d^{-α} + ε g(X) g(Y)` with `g = 1 + x₁/2`: the sphere kernel's pole
/// plus a smooth positive semidefinite rank-one term that breaks the
/// rotational symmetry.
pub fn tilted_kernel(geom: Arc<Geometry>, sigma: f64, eps: f64) -> riesz_flow_core::Result<KernelOperator> {
    let n = geom.dim();
    let c = pole_constant(n, sigma);
    let alpha = n as f64 - 2.0 * sigma;
    build_power_kernel(geom, sigma, move |x: &[f64], y: &[f64], d: f64| {
        c + eps * (1.0 + 0.5 * x[0]) * (1.0 + 0.5 * y[0]) * d.powf(alpha)
    })
}

/// Solves `K S = S^m` from constant initial data.
pub fn steady_state(k: &KernelOperator, m: f64) -> Result<Vec<f64>> {
    let sol = solve_extremal(k, m, &vec![1.0; k.len()], &ExtremalOptions::default())?;
    if sol.status != SteadyStatus::Converged {
        return Err(CliError::Numerical(format!(
            "steady state did not converge ({:?}, residual {:e})",
            sol.status, sol.residual
        )));
    }
    Ok(steady_from_extremal(&sol)?.field)
}
