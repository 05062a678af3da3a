//! Time integration of the raw, rescaled and volume-normalized flows
//! `∂_t u^m = K u (- correction)`, diagnostics along the way, and
//! post-processing of the resulting trajectories.
//!
//! The integrated variable is `w = u^m`; `u = w^{1/m}` is recovered at every
//! Runge-Kutta stage.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::critical_exponent;
use crate::error::{Error, Result};
use crate::kernel::{weighted_dot, KernelOperator};
use crate::linalg::linear_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `∂_t u^m = K u`.
    Raw,
    /// `∂_t u^m = K u - β u^m` with `β = m/|1-m|`.
    Rescaled,
    /// `∂_t u^m = K u - a(t) u^m`, which preserves `∫ u^{m+1}`.
    Critical,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Raw => "raw",
            Regime::Rescaled => "rescaled",
            Regime::Critical => "critical",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "raw" => Some(Regime::Raw),
            "rescaled" => Some(Regime::Rescaled),
            "critical" => Some(Regime::Critical),
            _ => None,
        }
    }
}

/// `m/|1-m|`, or NaN at `m = 1`.
pub fn beta(m: f64) -> f64 {
    if m == 1.0 {
        f64::NAN
    } else {
        m / (1.0 - m).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub t: f64,
    pub m: f64,
    pub regime: Regime,
}

impl FlowState {
    pub fn new(u: Vec<f64>, m: f64, regime: Regime) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::param(format!("exponent m = {m} must be positive")));
        }
        if regime == Regime::Rescaled && m == 1.0 {
            return Err(Error::param("the rescaled flow is undefined at m = 1"));
        }
        if let Some(i) = u.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::param(format!("initial field not positive at node {i}")));
        }
        let w = u.iter().map(|u| libm::pow(*u, m)).collect();
        Ok(FlowState { u, w, t: 0.0, m, regime })
    }

    fn from_w(w: Vec<f64>, t: f64, m: f64, regime: Regime) -> Self {
        let u = w.iter().map(|w| libm::pow(*w, 1.0 / m)).collect();
        FlowState { u, w, t, m, regime }
    }
}

/// Right-hand side `dw/dt` for a state.
pub fn rhs(k: &KernelOperator, state: &FlowState) -> Vec<f64> {
    let mut out = vec![0.0; k.len()];
    let mut ev = Evaluator::new(k, state.regime, state.m);
    ev.eval(&state.w, &mut out);
    out
}

struct Evaluator<'a> {
    k: &'a KernelOperator,
    regime: Regime,
    m: f64,
    beta: f64,
    u: Vec<f64>,
    ku: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(k: &'a KernelOperator, regime: Regime, m: f64) -> Self {
        let n = k.len();
        Evaluator { k, regime, m, beta: beta(m), u: vec![0.0; n], ku: vec![0.0; n] }
    }

    /// Returns false if `w` has a non-positive or non-finite entry.
    fn eval(&mut self, w: &[f64], out: &mut [f64]) -> bool {
        for (u, w) in self.u.iter_mut().zip(w) {
            if !(*w > 0.0 && w.is_finite()) {
                return false;
            }
            *u = libm::pow(*w, 1.0 / self.m);
        }
        self.k.apply_into(&self.u, &mut self.ku);
        match self.regime {
            Regime::Raw => out.copy_from_slice(&self.ku),
            Regime::Rescaled => {
                for ((o, ku), w) in out.iter_mut().zip(&self.ku).zip(w) {
                    *o = ku - self.beta * w;
                }
            }
            Regime::Critical => {
                let wts = self.k.weights();
                let num = weighted_dot(wts, &self.u, &self.ku);
                let den = weighted_dot(wts, &self.u, w);
                let a = num / den;
                for ((o, ku), w) in out.iter_mut().zip(&self.ku).zip(w) {
                    *o = ku - a * w;
                }
            }
        }
        out.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `∫ u^{m+1}`.
    pub v: f64,
    /// `∫ u K u / V`.
    pub a: f64,
    pub j: f64,
    /// `M_q` for each `q` of the trajectory's moment set.
    pub moments: Vec<f64>,
    /// `∫ (u K u / 2 - β u^{m+1} / (m+1))`.
    pub g: f64,
    /// `V^{(m-1)/(m+1)}`.
    pub z: f64,
    pub harnack: f64,
    pub ps_residual: f64,
    /// Step that produced this record (0 for the initial one).
    pub dt: f64,
    pub u_max: f64,
    pub u_min: f64,
}

/// All diagnostic quantities of a positive field.
pub fn diagnostics(k: &KernelOperator, u: &[f64], m: f64, q_set: &[f64]) -> DiagnosticsRecord {
    let ku = k.apply(u);
    diagnostics_with(k, u, &ku, m, q_set)
}

fn diagnostics_with(
    k: &KernelOperator,
    u: &[f64],
    ku: &[f64],
    m: f64,
    q_set: &[f64],
) -> DiagnosticsRecord {
    let w = k.weights();
    let n = k.dim() as f64;
    let sigma = k.sigma();
    let um1: Vec<f64> = u.iter().map(|u| libm::pow(*u, m + 1.0)).collect();
    let v: f64 = w.iter().zip(&um1).map(|(w, x)| w * x).sum();
    let quad = weighted_dot(w, u, ku);
    let a = quad / v;
    let j = quad / libm::pow(v, 2.0 / (m + 1.0));
    let weight_power = 2.0 * n / (n + 2.0 * sigma);
    let dev: Vec<f64> = u
        .iter()
        .zip(ku)
        .map(|(u, ku)| (ku / libm::pow(*u, m) - a).abs())
        .collect();
    let uw: Vec<f64> = u.iter().map(|u| libm::pow(*u, weight_power)).collect();
    let moment = |q: f64| -> f64 {
        w.iter()
            .zip(&dev)
            .zip(&uw)
            .map(|((w, d), x)| w * libm::pow(*d, q) * x)
            .sum()
    };
    let moments = q_set.iter().map(|&q| moment(q)).collect();
    let q_ps = 2.0 * n / (n - 2.0 * sigma);
    let ps_residual = libm::pow(moment(q_ps), 1.0 / q_ps);
    let b = beta(m);
    let g = 0.5 * quad - b / (m + 1.0) * v;
    let u_max = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let u_min = u.iter().cloned().fold(f64::INFINITY, f64::min);
    DiagnosticsRecord {
        t: 0.0,
        v,
        a,
        j,
        moments,
        g,
        z: libm::pow(v, (m - 1.0) / (m + 1.0)),
        harnack: u_max / u_min,
        ps_residual,
        dt: 0.0,
        u_max,
        u_min,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    /// Classical RK4 with a constant step (the last step is shortened to
    /// land on `t_end`).
    Fixed(f64),
    /// RK4 with step-doubling error control on `max |w|`.
    Adaptive { rtol: f64, dt0: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotSchedule {
    None,
    /// `count` evenly spaced times in `[0, t_end]`.
    Uniform(usize),
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    pub t_end: f64,
    pub step: StepPolicy,
    /// Critical regime only: rescale after each accepted step so that
    /// `∫ u^{m+1}` keeps its initial value.
    pub renormalize: bool,
    pub snapshots: SnapshotSchedule,
    pub q_set: Vec<f64>,
    /// Near blow-up the step is capped by `eta * min_i w_i / |dw_i/dt|`.
    pub eta: f64,
    /// Steps below this abort the run with a blow-up flag.
    pub min_dt: f64,
    pub max_steps: usize,
    /// Record diagnostics every this many accepted steps (and at the end).
    pub record_stride: usize,
    /// Stop early once `V` leaves `[lo, hi] * V(0)`.
    pub volume_bounds: Option<(f64, f64)>,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            t_end: 1.0,
            step: StepPolicy::Adaptive { rtol: 1e-8, dt0: 1e-3 },
            renormalize: true,
            snapshots: SnapshotSchedule::Uniform(64),
            q_set: vec![1.0, 2.0],
            eta: 0.05,
            min_dt: 1e-12,
            max_steps: 50_000_000,
            record_stride: 1,
            volume_bounds: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    BlowUp,
    Stagnation,
    LeftVolumeBounds { above: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub regime: Regime,
    pub m: f64,
    pub q_set: Vec<f64>,
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<Snapshot>,
    pub termination: Termination,
    pub accepted: usize,
    pub rejected: usize,
    /// Largest `|V/V(0) - 1|` removed by renormalization.
    pub renorm_drift: f64,
    pub final_state: FlowState,
}

impl Trajectory {
    pub fn blew_up(&self) -> bool {
        self.termination == Termination::BlowUp
    }
}

/// Generic right-hand side for the stepper.
trait System {
    fn eval(&mut self, w: &[f64], out: &mut [f64]) -> bool;
}

impl System for Evaluator<'_> {
    fn eval(&mut self, w: &[f64], out: &mut [f64]) -> bool {
        Evaluator::eval(self, w, out)
    }
}

struct Rk4 {
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Rk4 { k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }

    /// One classical step from `w` with slope `k1` into `out`.
    fn step<S: System>(&mut self, sys: &mut S, w: &[f64], k1: &[f64], h: f64, out: &mut [f64]) -> bool {
        for ((t, w), k) in self.tmp.iter_mut().zip(w).zip(k1) {
            *t = w + 0.5 * h * k;
        }
        if !sys.eval(&self.tmp, &mut self.k2) {
            return false;
        }
        for ((t, w), k) in self.tmp.iter_mut().zip(w).zip(&self.k2) {
            *t = w + 0.5 * h * k;
        }
        if !sys.eval(&self.tmp, &mut self.k3) {
            return false;
        }
        for ((t, w), k) in self.tmp.iter_mut().zip(w).zip(&self.k3) {
            *t = w + h * k;
        }
        if !sys.eval(&self.tmp, &mut self.k4) {
            return false;
        }
        for i in 0..w.len() {
            out[i] = w[i] + h / 6.0 * (k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        out.iter().all(|v| *v > 0.0 && v.is_finite())
    }
}

enum Control {
    Continue,
    Stop(Termination),
}

struct DriverOutcome {
    termination: Termination,
    accepted: usize,
    rejected: usize,
}

/// Drives `sys` from `w` at time 0 to `t_end`. `on_accept(t, w, h, at_output)`
/// may modify the state in place and stop the run.
#[allow(clippy::too_many_arguments)]
fn drive<S, F>(
    sys: &mut S,
    w: &mut Vec<f64>,
    t_end: f64,
    policy: StepPolicy,
    outputs: &[f64],
    eta: f64,
    min_dt: f64,
    max_steps: usize,
    mut on_accept: F,
) -> Result<DriverOutcome>
where
    S: System,
    F: FnMut(f64, &mut Vec<f64>, f64, bool) -> Control,
{
    let n = w.len();
    let mut rk = Rk4::new(n);
    let mut k1 = vec![0.0; n];
    let mut full = vec![0.0; n];
    let mut half = vec![0.0; n];
    let mut kh = vec![0.0; n];
    let mut two = vec![0.0; n];
    let mut t = 0.0;
    let mut next_out = outputs.iter().position(|&s| s > 0.0).unwrap_or(outputs.len());
    let (mut dt, rtol, adaptive) = match policy {
        StepPolicy::Fixed(h) => (h, 0.0, false),
        StepPolicy::Adaptive { rtol, dt0 } => (dt0, rtol, true),
    };
    if !(dt > 0.0) {
        return Err(Error::param(format!("step size {dt} must be positive")));
    }
    let mut accepted = 0;
    let mut rejected = 0;
    let eps_t = 1e-14 * t_end.abs().max(1.0);

    if !sys.eval(w, &mut k1) {
        return Err(Error::param("initial state is not positive"));
    }
    while t < t_end - eps_t {
        if accepted >= max_steps {
            return Ok(DriverOutcome { termination: Termination::Stagnation, accepted, rejected });
        }
        let mut h = dt;
        if adaptive && eta > 0.0 {
            for (wi, ki) in w.iter().zip(&k1) {
                if *ki != 0.0 {
                    h = h.min(eta * wi / ki.abs());
                }
            }
        }
        if h < min_dt {
            return Ok(DriverOutcome { termination: Termination::BlowUp, accepted, rejected });
        }
        let target = if adaptive && next_out < outputs.len() {
            outputs[next_out].min(t_end)
        } else {
            t_end
        };
        let mut clipped = false;
        // Absorb accumulated rounding so no sliver step is left at the end.
        if t + h >= target - eps_t.max(1e-6 * h) {
            h = target - t;
            clipped = true;
        }

        let ok;
        let mut err_ratio = 0.0;
        if adaptive {
            let a = rk.step(sys, w, &k1, h, &mut full);
            let b = a && rk.step(sys, w, &k1, 0.5 * h, &mut half);
            let c = b && sys.eval(&half, &mut kh) && rk.step(sys, &half, &kh, 0.5 * h, &mut two);
            if c {
                let mut err: f64 = 0.0;
                let mut size: f64 = 0.0;
                for (x, y) in full.iter().zip(&two) {
                    err = err.max((x - y).abs());
                    size = size.max(y.abs());
                }
                err_ratio = err / (rtol * size);
                ok = err_ratio <= 1.0;
            } else {
                ok = false;
                err_ratio = f64::INFINITY;
            }
        } else {
            ok = rk.step(sys, w, &k1, h, &mut two);
        }

        if !ok {
            rejected += 1;
            let shrink = if err_ratio.is_finite() && err_ratio > 0.0 {
                (0.9 * libm::pow(err_ratio, -0.2)).clamp(0.2, 0.5)
            } else {
                0.5
            };
            dt = h * shrink;
            if dt < min_dt {
                return Ok(DriverOutcome { termination: Termination::BlowUp, accepted, rejected });
            }
            continue;
        }

        t = if clipped { target } else { t + h };
        core::mem::swap(w, &mut two);
        accepted += 1;
        if adaptive {
            let grow = if err_ratio > 0.0 {
                (0.9 * libm::pow(err_ratio, -0.2)).clamp(0.2, 2.0)
            } else {
                2.0
            };
            let proposal = h * grow;
            dt = if clipped { dt.max(proposal) } else { proposal };
        }
        let at_output = adaptive && clipped && next_out < outputs.len() && target == outputs[next_out];
        if at_output {
            next_out += 1;
        }
        if let Control::Stop(term) = on_accept(t, w, h, at_output) {
            return Ok(DriverOutcome { termination: term, accepted, rejected });
        }
        if !sys.eval(w, &mut k1) {
            return Err(Error::Numerical(format!("state lost positivity at t = {t}")));
        }
    }
    Ok(DriverOutcome { termination: Termination::Completed, accepted, rejected })
}

fn output_times(schedule: &SnapshotSchedule, t_end: f64) -> Vec<f64> {
    match schedule {
        SnapshotSchedule::None => Vec::new(),
        SnapshotSchedule::Uniform(0) => Vec::new(),
        SnapshotSchedule::Uniform(1) => vec![t_end],
        SnapshotSchedule::Uniform(c) => (0..*c)
            .map(|i| t_end * i as f64 / (*c - 1) as f64)
            .collect(),
        SnapshotSchedule::Times(ts) => {
            let mut ts: Vec<f64> = ts.iter().cloned().filter(|t| *t >= 0.0 && *t <= t_end).collect();
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            ts
        }
    }
}

/// Integrates the flow of `state.regime` from `state` to `opts.t_end`.
pub fn evolve(k: &KernelOperator, state: &FlowState, opts: &FlowOptions) -> Result<Trajectory> {
    if state.u.len() != k.len() {
        return Err(Error::param("state length does not match the kernel"));
    }
    if !(opts.t_end > 0.0 && opts.t_end.is_finite()) {
        return Err(Error::param(format!("t_end = {} must be positive", opts.t_end)));
    }
    let m = state.m;
    let regime = state.regime;
    let q_set = opts.q_set.clone();
    let outputs = output_times(&opts.snapshots, opts.t_end);
    let fixed = matches!(opts.step, StepPolicy::Fixed(_));
    let stride = opts.record_stride.max(1);

    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut first = diagnostics(k, &state.u, m, &q_set);
    first.t = 0.0;
    let v0 = first.v;
    records.push(first);
    let mut next_fixed_out = 0;
    if outputs.first() == Some(&0.0) {
        snapshots.push(Snapshot { t: 0.0, u: state.u.clone() });
        next_fixed_out = 1;
    }

    let renormalize = regime == Regime::Critical && opts.renormalize;
    let mut drift: f64 = 0.0;
    let mut last_recorded = 0usize;
    let mut steps = 0usize;
    let mut u = state.u.clone();
    let mut ku = vec![0.0; k.len()];
    let mut last_t = 0.0;
    let mut last_h = 0.0;

    let mut w = state.w.clone();
    let mut sys = Evaluator::new(k, regime, m);
    let outcome = drive(
        &mut sys,
        &mut w,
        opts.t_end,
        opts.step,
        &outputs,
        opts.eta,
        opts.min_dt,
        opts.max_steps,
        |t, w, h, at_output| {
            steps += 1;
            for (u, w) in u.iter_mut().zip(w.iter()) {
                *u = libm::pow(*w, 1.0 / m);
            }
            if renormalize {
                let v: f64 = k.weights().iter().zip(&u).map(|(wt, u)| wt * libm::pow(*u, m + 1.0)).sum();
                drift = drift.max((v / v0 - 1.0).abs());
                let cu = libm::pow(v0 / v, 1.0 / (m + 1.0));
                let cw = libm::pow(cu, m);
                for (u, w) in u.iter_mut().zip(w.iter_mut()) {
                    *u *= cu;
                    *w *= cw;
                }
            }
            last_t = t;
            last_h = h;
            let mut snap = at_output;
            if fixed && next_fixed_out < outputs.len() && t >= outputs[next_fixed_out] - 1e-12 {
                while next_fixed_out < outputs.len() && t >= outputs[next_fixed_out] - 1e-12 {
                    next_fixed_out += 1;
                }
                snap = true;
            }
            if snap {
                snapshots.push(Snapshot { t, u: u.clone() });
            }
            let need_v = opts.volume_bounds.is_some();
            if steps % stride == 0 || need_v {
                k.apply_into(&u, &mut ku);
                let mut rec = diagnostics_with(k, &u, &ku, m, &q_set);
                rec.t = t;
                rec.dt = h;
                let v = rec.v;
                if steps % stride == 0 {
                    records.push(rec);
                    last_recorded = steps;
                }
                if let Some((lo, hi)) = opts.volume_bounds {
                    if v > hi * v0 {
                        return Control::Stop(Termination::LeftVolumeBounds { above: true });
                    }
                    if v < lo * v0 {
                        return Control::Stop(Termination::LeftVolumeBounds { above: false });
                    }
                }
            }
            Control::Continue
        },
    )?;
    if last_recorded != steps && steps > 0 {
        let mut rec = diagnostics(k, &u, m, &q_set);
        rec.t = last_t;
        rec.dt = last_h;
        records.push(rec);
    }
    let final_state = FlowState::from_w(w, last_t, m, regime);
    Ok(Trajectory {
        regime,
        m,
        q_set,
        records,
        snapshots,
        termination: outcome.termination,
        accepted: outcome.accepted,
        rejected: outcome.rejected,
        renorm_drift: drift,
        final_state,
    })
}

/// `(c + (m-1) t / m)^{1/(m-1)} S`, the product solution of the raw flow
/// through a steady state `S` with `K S = S^m`.
pub fn separable_solution(s: &[f64], m: f64, c: f64, t: f64) -> Result<Vec<f64>> {
    if m == 1.0 {
        return Err(Error::param("no separable power solution at m = 1"));
    }
    let base = c + (m - 1.0) * t / m;
    if !(base > 0.0) {
        return Err(Error::param(format!("t = {t} is past the existence time of the separable solution")));
    }
    let h = libm::pow(base, 1.0 / (m - 1.0));
    Ok(s.iter().map(|s| h * s).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupReport {
    pub t_star: f64,
    /// Fitted `p` in `max u ~ (T* - t)^p`.
    pub sup_exponent: f64,
    /// Fitted `p` in `V^{1/(m+1)} ~ (T* - t)^p`.
    pub volume_exponent: f64,
    /// Largest `|Z' - (m-1) J / m| / |(m-1) J / m|` over interior samples.
    pub z_slope_discrepancy: f64,
    /// Largest amount by which `Z` dips below the chord of its neighbours.
    pub concavity_defect: f64,
    pub z0: f64,
    pub samples: usize,
    pub fit_samples: usize,
}

/// Estimates the blow-up time and rates of a raw run with `m < 1`.
pub fn detect_blowup(traj: &Trajectory) -> Result<BlowupReport> {
    if traj.regime != Regime::Raw || !(traj.m < 1.0) {
        return Err(Error::param("blow-up analysis needs a raw run with m < 1"));
    }
    let r = &traj.records;
    if r.len() < 10 {
        return Err(Error::Numerical(format!("only {} samples, need at least 10", r.len())));
    }
    let m = traj.m;
    let len = r.len();
    let q = 3 * len / 4;
    let ts: Vec<f64> = r[q..].iter().map(|x| x.t).collect();
    let zs: Vec<f64> = r[q..].iter().map(|x| x.z).collect();
    let (c0, c1) = linear_fit(&ts, &zs);
    if !(c1 < 0.0) {
        return Err(Error::Numerical(String::from("Z is not decreasing near the end of the run")));
    }
    let t_star = -c0 / c1;

    let lo = len / 2;
    let hi = len - len / 10;
    let mut lx = Vec::new();
    let mut ly_sup = Vec::new();
    let mut ly_vol = Vec::new();
    for rec in &r[lo..hi] {
        let gap = t_star - rec.t;
        if gap > 0.0 {
            lx.push(libm::log(gap));
            ly_sup.push(libm::log(rec.u_max));
            ly_vol.push(libm::log(rec.v) / (m + 1.0));
        }
    }
    if lx.len() < 5 {
        return Err(Error::Numerical(String::from("too few samples before the estimated blow-up time")));
    }
    let (_, sup_exponent) = linear_fit(&lx, &ly_sup);
    let (_, volume_exponent) = linear_fit(&lx, &ly_vol);

    let mut slope: f64 = 0.0;
    let mut concavity: f64 = 0.0;
    for i in 1..len - 1 {
        let (t0, t1, t2) = (r[i - 1].t, r[i].t, r[i + 1].t);
        let (z0, z1, z2) = (r[i - 1].z, r[i].z, r[i + 1].z);
        let h1 = t1 - t0;
        let h2 = t2 - t1;
        if !(h1 > 0.0 && h2 > 0.0) {
            continue;
        }
        let chord = z0 + (z2 - z0) * h1 / (h1 + h2);
        concavity = concavity.max(chord - z1);
        if h1.min(h2) < 1e-3 * h1.max(h2) {
            continue;
        }
        let dz = (h1 * h1 * z2 - h2 * h2 * z0 + (h2 * h2 - h1 * h1) * z1) / (h1 * h2 * (h1 + h2));
        let want = (m - 1.0) * r[i].j / m;
        slope = slope.max(((dz - want) / want).abs());
    }
    Ok(BlowupReport {
        t_star,
        sup_exponent,
        volume_exponent,
        z_slope_discrepancy: slope,
        concavity_defect: concavity.max(0.0),
        z0: r[0].z,
        samples: len,
        fit_samples: lx.len(),
    })
}

/// Self-similar time: `τ = -ln((T* - t)/T*)` for `m < 1` and `τ = ln(1 + t)`
/// for `m > 1`.
pub fn tau_of_t(t: f64, m: f64, t_star: Option<f64>) -> Result<f64> {
    if m < 1.0 {
        let ts = t_star.ok_or_else(|| Error::param("m < 1 needs a blow-up time"))?;
        if !(t < ts) {
            return Err(Error::param(format!("t = {t} is not before T* = {ts}")));
        }
        Ok(-libm::log((ts - t) / ts))
    } else if m > 1.0 {
        Ok(libm::log1p(t))
    } else {
        Err(Error::param("no self-similar time at m = 1"))
    }
}

pub fn t_of_tau(tau: f64, m: f64, t_star: Option<f64>) -> Result<f64> {
    if m < 1.0 {
        let ts = t_star.ok_or_else(|| Error::param("m < 1 needs a blow-up time"))?;
        Ok(-ts * libm::expm1(-tau))
    } else if m > 1.0 {
        Ok(libm::expm1(tau))
    } else {
        Err(Error::param("no self-similar time at m = 1"))
    }
}

/// Factor mapping `u(t)` to the self-similar profile: `(T* - t)^{1/(1-m)}`
/// for `m < 1` and `(1 + t)^{-1/(m-1)}` for `m > 1`. Both turn the raw flow
/// into the rescaled one in the variable [`tau_of_t`].
pub fn self_similar_factor(t: f64, m: f64, t_star: Option<f64>) -> Result<f64> {
    if m < 1.0 {
        let ts = t_star.ok_or_else(|| Error::param("m < 1 needs a blow-up time"))?;
        Ok(libm::pow(ts - t, 1.0 / (1.0 - m)))
    } else if m > 1.0 {
        Ok(libm::pow(1.0 + t, -1.0 / (m - 1.0)))
    } else {
        Err(Error::param("no self-similar time at m = 1"))
    }
}

/// Maps the snapshots of a raw run to `(τ, ũ)`.
pub fn rescale_to_tau(traj: &Trajectory, t_star: Option<f64>) -> Result<Vec<Snapshot>> {
    if traj.regime != Regime::Raw {
        return Err(Error::param("only raw runs can be rescaled"));
    }
    let mut out = Vec::with_capacity(traj.snapshots.len());
    for s in &traj.snapshots {
        if let Some(ts) = t_star {
            if traj.m < 1.0 && s.t >= ts {
                continue;
            }
        }
        let tau = tau_of_t(s.t, traj.m, t_star)?;
        let c = self_similar_factor(s.t, traj.m, t_star)?;
        out.push(Snapshot { t: tau, u: s.u.iter().map(|u| c * u).collect() });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub times: Vec<f64>,
    /// `t ||u(t)/U_0(t) - 1||_inf` at each time.
    pub products: Vec<f64>,
    pub sup: f64,
}

/// Compares a raw run with `m > 1` against `U_0(t) = ((m-1)t/m)^{1/(m-1)} S`.
pub fn growth_check(traj: &Trajectory, s: &[f64], t1: f64) -> Result<GrowthReport> {
    let m = traj.m;
    if traj.regime != Regime::Raw || !(m > 1.0) {
        return Err(Error::param("growth check needs a raw run with m > 1"));
    }
    let mut times = Vec::new();
    let mut products = Vec::new();
    for snap in traj.snapshots.iter().filter(|x| x.t >= t1 && x.t > 0.0) {
        let h = libm::pow((m - 1.0) * snap.t / m, 1.0 / (m - 1.0));
        let dev = snap
            .u
            .iter()
            .zip(s)
            .map(|(u, s)| (u / (h * s) - 1.0).abs())
            .fold(0.0, f64::max);
        times.push(snap.t);
        products.push(snap.t * dev);
    }
    let sup = products.iter().cloned().fold(0.0, f64::max);
    Ok(GrowthReport { times, products, sup })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub ordered: bool,
    /// Time and node of the first violation.
    pub first_violation: Option<(f64, usize)>,
    pub checked_times: usize,
    /// Smallest `u_high - u_low` seen after the initial time.
    pub min_gap: f64,
    pub termination: Termination,
}

struct Pair<'a> {
    lo: Evaluator<'a>,
    hi: Evaluator<'a>,
    n: usize,
}

impl System for Pair<'_> {
    fn eval(&mut self, w: &[f64], out: &mut [f64]) -> bool {
        let (wl, wh) = w.split_at(self.n);
        let (ol, oh) = out.split_at_mut(self.n);
        self.lo.eval(wl, ol) && self.hi.eval(wh, oh)
    }
}

/// Evolves an ordered pair of initial data by the raw flow with a shared
/// step sequence and checks `u_low < u_high` after every accepted step.
pub fn comparison_run(
    k: &KernelOperator,
    m: f64,
    low: &[f64],
    high: &[f64],
    t_end: f64,
    opts: &FlowOptions,
) -> Result<ComparisonReport> {
    let n = k.len();
    if low.len() != n || high.len() != n {
        return Err(Error::param("field lengths do not match the kernel"));
    }
    if low.iter().zip(high).any(|(a, b)| a > b) {
        return Err(Error::param("initial data are not ordered"));
    }
    if low == high {
        return Err(Error::param("initial data must differ somewhere"));
    }
    let sl = FlowState::new(low.to_vec(), m, Regime::Raw)?;
    let sh = FlowState::new(high.to_vec(), m, Regime::Raw)?;
    let mut w = sl.w.clone();
    w.extend_from_slice(&sh.w);
    let mut sys = Pair { lo: Evaluator::new(k, Regime::Raw, m), hi: Evaluator::new(k, Regime::Raw, m), n };
    let mut checked = 0;
    let mut first = None;
    let mut min_gap = f64::INFINITY;
    let outcome = drive(
        &mut sys,
        &mut w,
        t_end,
        opts.step,
        &[],
        opts.eta,
        opts.min_dt,
        opts.max_steps,
        |t, w, _, _| {
            checked += 1;
            let (wl, wh) = w.split_at(n);
            for i in 0..n {
                let gap = libm::pow(wh[i], 1.0 / m) - libm::pow(wl[i], 1.0 / m);
                min_gap = min_gap.min(gap);
                if !(gap > 0.0) && first.is_none() {
                    first = Some((t, i));
                }
            }
            Control::Continue
        },
    )?;
    Ok(ComparisonReport {
        ordered: first.is_none(),
        first_violation: first,
        checked_times: checked,
        min_gap,
        termination: outcome.termination,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservationReport {
    /// `max |V(t) - V(0)| / V(0)`.
    pub volume_drift: f64,
    /// Most negative per-step change of `a`.
    pub a_min_increment: f64,
    /// `max |Δa/Δt - (2/m) M₂/V|` over steps, relative to the peak of
    /// `(2/m) M₂/V`. First order in the step size.
    pub a_rate_discrepancy: f64,
}

/// Volume conservation and the growth law of `a` along an unrenormalized
/// critical run. `M₂` must be the first entry of the run's `q_set`.
pub fn conservation_check(traj: &Trajectory) -> Result<ConservationReport> {
    if traj.regime != Regime::Critical {
        return Err(Error::param("conservation check needs a critical-regime run"));
    }
    if traj.q_set.first() != Some(&2.0) {
        return Err(Error::param("conservation check needs q = 2 first in the moment set"));
    }
    let recs = &traj.records;
    if recs.len() < 2 {
        return Err(Error::Numerical(String::from("need at least two records")));
    }
    let m = traj.m;
    let v0 = recs[0].v;
    let volume_drift = recs.iter().map(|r| (r.v - v0).abs() / v0).fold(0.0, f64::max);
    let rate = |r: &DiagnosticsRecord| 2.0 / m * r.moments[0] / r.v;
    let peak = recs.iter().map(rate).fold(0.0, f64::max);
    let mut a_min_increment = f64::INFINITY;
    let mut worst: f64 = 0.0;
    for p in recs.windows(2) {
        let da = p[1].a - p[0].a;
        a_min_increment = a_min_increment.min(da);
        worst = worst.max((da / (p[1].t - p[0].t) - rate(&p[0])).abs());
    }
    let a_rate_discrepancy = if peak > 0.0 { worst / peak } else { worst };
    Ok(ConservationReport { volume_drift, a_min_increment, a_rate_discrepancy })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitIdentityReport {
    /// `|V + 2(m+1)/m G| / V` at the last record.
    pub residual: f64,
    pub v_end: f64,
    pub g_end: f64,
    /// Most negative per-step change of `G`.
    pub g_min_increment: f64,
    pub steps: usize,
}

/// Checks the asymptotic volume identity of a rescaled run at the critical
/// exponent.
pub fn limit_identity_check(traj: &Trajectory, n: usize, sigma: f64) -> Result<LimitIdentityReport> {
    if traj.regime != Regime::Rescaled || (traj.m - critical_exponent(n, sigma)).abs() > 1e-12 {
        return Err(Error::param("limit identity needs a rescaled run at the critical exponent"));
    }
    let last = traj.records.last().ok_or_else(|| Error::Numerical(String::from("empty trajectory")))?;
    let m = traj.m;
    let residual = (last.v + 2.0 * (m + 1.0) / m * last.g).abs() / last.v;
    let g_min_increment = traj
        .records
        .windows(2)
        .map(|p| p[1].g - p[0].g)
        .fold(f64::INFINITY, f64::min);
    Ok(LimitIdentityReport {
        residual,
        v_end: last.v,
        g_end: last.g,
        g_min_increment,
        steps: traj.records.len(),
    })
}

/// `dV/dτ = V + 2(m+1)/m G` along the rescaled flow.
pub fn volume_rate(rec: &DiagnosticsRecord, m: f64) -> f64 {
    rec.v + 2.0 * (m + 1.0) / m * rec.g
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingResult {
    /// Multiplier applied to the profile.
    pub amplitude: f64,
    pub bisections: usize,
    pub trajectory: Trajectory,
}

/// The rescaled critical flow has one unstable direction (overall scale).
/// Bisects on the amplitude of `profile` until the run neither collapses nor
/// escapes before `opts.t_end`, and returns the best run found.
pub fn shoot_bounded_rescaled(
    k: &KernelOperator,
    profile: &[f64],
    opts: &FlowOptions,
) -> Result<ShootingResult> {
    let m = critical_exponent(k.dim(), k.sigma());
    let mut probe = opts.clone();
    probe.record_stride = usize::MAX;
    probe.snapshots = SnapshotSchedule::None;
    probe.volume_bounds = Some((1e-4, 1e3));

    let run = |log_s: f64, o: &FlowOptions| -> Result<Trajectory> {
        let s = libm::exp(log_s);
        let u: Vec<f64> = profile.iter().map(|p| s * p).collect();
        evolve(k, &FlowState::new(u, m, Regime::Rescaled)?, o)
    };
    // +1 when the run grows, -1 when it decays.
    let classify = |traj: &Trajectory| -> i32 {
        match traj.termination {
            Termination::LeftVolumeBounds { above: true } | Termination::BlowUp => 1,
            Termination::LeftVolumeBounds { above: false } => -1,
            _ => {
                let last = traj.records.last().expect("final record");
                if volume_rate(last, m) > 0.0 {
                    1
                } else {
                    -1
                }
            }
        }
    };

    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    let c0 = classify(&run(0.0, &probe)?);
    let mut found = false;
    for i in 1..60 {
        let x = if c0 > 0 { -(i as f64) } else { i as f64 };
        let c = classify(&run(x, &probe)?);
        if c != c0 {
            if c0 > 0 {
                lo = x;
                hi = x + 1.0;
            } else {
                lo = x - 1.0;
                hi = x;
            }
            found = true;
            break;
        }
    }
    if !found {
        return Err(Error::Numerical(String::from("no amplitude bracket for the bounded rescaled run")));
    }
    let mut bisections = 0;
    while bisections < 200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if classify(&run(mid, &probe)?) > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
        bisections += 1;
    }
    let a = run(lo, opts)?;
    let b = run(hi, opts)?;
    let score = |t: &Trajectory| {
        t.records.last().map(|r| (volume_rate(r, m) / r.v).abs()).unwrap_or(f64::INFINITY)
    };
    let (best, amp) = if score(&a) <= score(&b) { (a, lo) } else { (b, hi) };
    Ok(ShootingResult { amplitude: libm::exp(amp), bisections, trajectory: best })
}
