//! Summaries of a finished run directory.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};
use crate::io;
use crate::run::{BLOWUP_REPORT, DIAGNOSTICS, MANIFEST};

#[derive(Debug, Clone, PartialEq)]
pub struct Trend {
    pub column: String,
    pub first: f64,
    pub last: f64,
    pub min_increment: f64,
    pub max_increment: f64,
    /// `nondecreasing`, `nonincreasing`, `constant` or `mixed`, judged up
    /// to roundoff.
    pub verdict: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exponent {
    pub name: String,
    pub measured: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub termination: String,
    pub samples: usize,
    pub trends: Vec<Trend>,
    pub exponents: Vec<Exponent>,
}

fn trend(column: &str, xs: &[f64]) -> Trend {
    let scale = xs.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let tol = 1e-12 * scale;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in xs.windows(2) {
        let d = p[1] - p[0];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if xs.len() < 2 {
        lo = 0.0;
        hi = 0.0;
    }
    let verdict = match (lo >= -tol, hi <= tol) {
        (true, true) => "constant",
        (true, false) => "nondecreasing",
        (false, true) => "nonincreasing",
        (false, false) => "mixed",
    };
    Trend {
        column: column.to_string(),
        first: xs.first().copied().unwrap_or(f64::NAN),
        last: xs.last().copied().unwrap_or(f64::NAN),
        min_increment: lo,
        max_increment: hi,
        verdict,
    }
}

fn get_f64(t: &toml::Table, key: &str) -> Option<f64> {
    match t.get(key)? {
        toml::Value::Float(v) => Some(*v),
        toml::Value::Integer(v) => Some(*v as f64),
        _ => None,
    }
}

/// Monotonicity of `a`, `J` and `G` and fitted exponents against their
/// predicted values.
pub fn report(dir: &Path) -> Result<RunReport> {
    let diag = dir.join(DIAGNOSTICS);
    if !diag.is_file() {
        return Err(CliError::config(format!("{} holds no {DIAGNOSTICS}", dir.display())));
    }
    let (header, rows) = io::read_diagnostics(&diag)?;
    if rows.is_empty() {
        return Err(CliError::config(format!("{} has no records", diag.display())));
    }
    let mut trends = Vec::new();
    for name in ["a", "J", "G"] {
        if let Some(c) = header.iter().position(|h| h == name) {
            let xs: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            trends.push(trend(name, &xs));
        }
    }

    let mut termination = String::from("unknown");
    let mut exponents = Vec::new();
    let manifest = dir.join(MANIFEST);
    if manifest.is_file() {
        let t = io::read_toml(&manifest)?;
        if let Some(toml::Value::String(s)) = t.get("termination") {
            termination = s.clone();
        }
        if let Some(toml::Value::Table(a)) = t.get("analysis") {
            if let (Some(p), Some(pred)) = (get_f64(a, "growth_exponent"), get_f64(a, "predicted_exponent")) {
                exponents.push(Exponent { name: "growth of V^{1/(m+1)} in t".into(), measured: p, predicted: pred });
            }
        }
    }
    let blow = dir.join(BLOWUP_REPORT);
    if blow.is_file() {
        let b = io::read_toml(&blow)?;
        if let Some(pred) = get_f64(&b, "predicted_exponent") {
            for (key, name) in [("sup_exponent", "max u in T*-t"), ("volume_exponent", "V^{1/(m+1)} in T*-t")] {
                if let Some(p) = get_f64(&b, key) {
                    exponents.push(Exponent { name: name.into(), measured: p, predicted: pred });
                }
            }
        }
    }
    Ok(RunReport { termination, samples: rows.len(), trends, exponents })
}

impl RunReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "termination: {}, {} records", self.termination, self.samples).unwrap();
        writeln!(s, "\n{:<4} {:>14} {:>14} {:>12} {:>12}  trend", "", "first", "last", "min step", "max step")
            .unwrap();
        for t in &self.trends {
            writeln!(
                s,
                "{:<4} {:>14.7e} {:>14.7e} {:>12.3e} {:>12.3e}  {}",
                t.column, t.first, t.last, t.min_increment, t.max_increment, t.verdict
            )
            .unwrap();
        }
        if !self.exponents.is_empty() {
            writeln!(s, "\n{:<24} {:>12} {:>12}", "exponent", "measured", "predicted").unwrap();
            for e in &self.exponents {
                writeln!(s, "{:<24} {:>12.6} {:>12.6}", e.name, e.measured, e.predicted).unwrap();
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["kind", "name", "first_or_measured", "last_or_predicted", "min_step", "max_step", "verdict"])
            .expect("in-memory write");
        for t in &self.trends {
            w.write_record([
                "trend",
                &t.column,
                &io::fmt17(t.first),
                &io::fmt17(t.last),
                &io::fmt17(t.min_increment),
                &io::fmt17(t.max_increment),
                t.verdict,
            ])
            .expect("in-memory write");
        }
        for e in &self.exponents {
            w.write_record(["exponent", &e.name, &io::fmt17(e.measured), &io::fmt17(e.predicted), "", "", ""])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}
