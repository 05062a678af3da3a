//! Executes a [`RunConfig`] and persists everything needed to inspect or
//! repeat it.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use riesz_flow_core::flow::{
    conservation_check, detect_blowup, evolve, limit_identity_check, shoot_bounded_rescaled, FlowState,
    Regime, Termination, Trajectory,
};
use riesz_flow_core::linalg::linear_fit;
use riesz_flow_core::critical_exponent;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{self, Field};

pub const MANIFEST: &str = "manifest.toml";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const BLOWUP_REPORT: &str = "blowup.report";

pub struct RunOutput {
    pub dir: PathBuf,
    pub manifest: toml::Table,
    pub trajectory: Trajectory,
    pub warnings: Vec<String>,
}

pub fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Completed => "t_end",
        Termination::BlowUp => "blow-up",
        Termination::Stagnation => "stagnation",
        Termination::LeftVolumeBounds { .. } => "volume-bounds",
    }
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn table<const N: usize>(entries: [(&str, toml::Value); N]) -> toml::Table {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn float(v: f64) -> toml::Value {
    toml::Value::Float(v)
}

/// Header fields shared by every manifest.
pub fn manifest_base(started: f64) -> toml::Table {
    let finished = now();
    table([
        ("tool", toml::Value::String("riesz-flow".into())),
        ("version", toml::Value::String(env!("CARGO_PKG_VERSION").into())),
        ("started_unix", float(started)),
        ("finished_unix", float(finished)),
        ("wall_seconds", float(finished - started)),
        ("workers", toml::Value::Integer(rayon::current_num_threads() as i64)),
    ])
}

/// Runs the flow described by `cfg`, writing its artifacts to `dir`.
pub fn execute(cfg: &RunConfig, dir: &Path) -> Result<RunOutput> {
    let validation = cfg.validate()?;
    let started = now();
    let geom = cfg.build_geometry()?;
    if geom.dim() != cfg.n {
        return Err(CliError::config(format!(
            "geometry has dimension {} but n = {}",
            geom.dim(),
            cfg.n
        )));
    }
    let k = cfg.build_kernel(geom.clone())?;
    let m = cfg.exponent();
    let regime = cfg.regime().ok_or_else(|| CliError::config("unknown regime"))?;
    let u0 = cfg.initial_data(&k)?;
    let opts = cfg.flow_options();
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;

    let mut analysis = toml::Table::new();
    let traj = if cfg.shoot {
        let shot = shoot_bounded_rescaled(&k, &u0, &opts)?;
        analysis.insert("shooting_amplitude".into(), float(shot.amplitude));
        analysis.insert("shooting_bisections".into(), toml::Value::Integer(shot.bisections as i64));
        shot.trajectory
    } else {
        evolve(&k, &FlowState::new(u0, m, regime)?, &opts)?
    };

    io::write_diagnostics(&dir.join(DIAGNOSTICS), &traj.q_set, &traj.records)?;
    for (i, s) in traj.snapshots.iter().enumerate() {
        io::save_field(&dir.join(format!("snapshot_{i}.field")), &Field { values: s.u.clone(), t: Some(s.t) })?;
    }
    let fin = &traj.final_state;
    io::save_field(&dir.join("final.field"), &Field { values: fin.u.clone(), t: Some(fin.t) })?;

    match regime {
        Regime::Raw if m < 1.0 => match detect_blowup(&traj) {
            Ok(b) => {
                let predicted = -1.0 / (1.0 - m);
                let report = table([
                    ("t_star", float(b.t_star)),
                    ("sup_exponent", float(b.sup_exponent)),
                    ("volume_exponent", float(b.volume_exponent)),
                    ("predicted_exponent", float(predicted)),
                    ("z_slope_discrepancy", float(b.z_slope_discrepancy)),
                    ("concavity_defect", float(b.concavity_defect)),
                    ("z0", float(b.z0)),
                    ("samples", toml::Value::Integer(b.samples as i64)),
                    ("fit_samples", toml::Value::Integer(b.fit_samples as i64)),
                ]);
                io::write_toml(&dir.join(BLOWUP_REPORT), &report)?;
                analysis.insert("t_star".into(), float(b.t_star));
                analysis.insert("sup_exponent".into(), float(b.sup_exponent));
                analysis.insert("volume_exponent".into(), float(b.volume_exponent));
                analysis.insert("predicted_exponent".into(), float(predicted));
            }
            Err(e) => {
                analysis.insert("blowup_analysis".into(), toml::Value::String(e.to_string()));
            }
        },
        Regime::Raw if m > 1.0 => {
            if let Some(p) = growth_exponent(&traj) {
                analysis.insert("growth_exponent".into(), float(p));
                analysis.insert("predicted_exponent".into(), float(1.0 / (m - 1.0)));
            }
        }
        Regime::Critical if !cfg.renormalize && traj.q_set.first() == Some(&2.0) => {
            if let Ok(c) = conservation_check(&traj) {
                analysis.insert("volume_drift".into(), float(c.volume_drift));
                analysis.insert("a_min_increment".into(), float(c.a_min_increment));
                analysis.insert("a_rate_discrepancy".into(), float(c.a_rate_discrepancy));
            }
        }
        Regime::Rescaled if (m - critical_exponent(k.dim(), k.sigma())).abs() < 1e-12 => {
            if let Ok(l) = limit_identity_check(&traj, k.dim(), k.sigma()) {
                analysis.insert("limit_identity_residual".into(), float(l.residual));
                analysis.insert("g_min_increment".into(), float(l.g_min_increment));
            }
        }
        _ => {}
    }

    let mut manifest = manifest_base(started);
    manifest.insert("termination".into(), toml::Value::String(termination_name(traj.termination).into()));
    manifest.insert("blow_up".into(), toml::Value::Boolean(traj.blew_up()));
    manifest.insert("warnings".into(), toml::Value::Array(
        validation.warnings.iter().map(|w| toml::Value::String(w.clone())).collect(),
    ));
    manifest.insert("config".into(), toml::Value::Table(cfg.to_table()));
    manifest.insert("summary".into(), toml::Value::Table(summary(&traj)));
    if !analysis.is_empty() {
        manifest.insert("analysis".into(), toml::Value::Table(analysis));
    }
    io::write_toml(&dir.join(MANIFEST), &manifest)?;
    Ok(RunOutput { dir: dir.to_path_buf(), manifest, trajectory: traj, warnings: validation.warnings })
}

fn summary(traj: &Trajectory) -> toml::Table {
    let mut s = toml::Table::new();
    s.insert("m".into(), float(traj.m));
    s.insert("accepted_steps".into(), toml::Value::Integer(traj.accepted as i64));
    s.insert("rejected_steps".into(), toml::Value::Integer(traj.rejected as i64));
    s.insert("renorm_drift".into(), float(traj.renorm_drift));
    if let Some(r) = traj.records.last() {
        s.insert("t".into(), float(r.t));
        s.insert("V".into(), float(r.v));
        s.insert("a".into(), float(r.a));
        s.insert("J".into(), float(r.j));
        s.insert("harnack".into(), float(r.harnack));
        if let Some(i) = traj.q_set.iter().position(|q| *q == 2.0) {
            s.insert("M_2".into(), float(r.moments[i]));
        }
    }
    s
}

/// Slope of `log V^{1/(m+1)}` against `log t` over the second half of a run.
fn growth_exponent(traj: &Trajectory) -> Option<f64> {
    let r = &traj.records;
    let t_end = r.last()?.t;
    let (x, y): (Vec<f64>, Vec<f64>) = r
        .iter()
        .filter(|x| x.t >= t_end / 2.0 && x.t > 0.0)
        .map(|x| (x.t.ln(), x.v.ln() / (traj.m + 1.0)))
        .unzip();
    (x.len() >= 2).then(|| linear_fit(&x, &y).1)
}
