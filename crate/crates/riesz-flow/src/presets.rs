//! Bundled run configurations, one per experiment in the acceptance suite.

use crate::error::{CliError, Result};

pub const PRESETS: &[(&str, &str)] = &[
    ("superlinear-growth", include_str!("../presets/superlinear-growth.toml")),
    ("separable-growth", include_str!("../presets/separable-growth.toml")),
    ("sublinear-blowup", include_str!("../presets/sublinear-blowup.toml")),
    ("critical-conservation", include_str!("../presets/critical-conservation.toml")),
    ("critical-bubble-convergence", include_str!("../presets/critical-bubble-convergence.toml")),
    ("rescaled-bounded-limit", include_str!("../presets/rescaled-bounded-limit.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.0)
}

pub fn preset(name: &str) -> Result<toml::Table> {
    let text = PRESETS.iter().find(|p| p.0 == name).map(|p| p.1).ok_or_else(|| {
        CliError::config(format!(
            "unknown preset `{name}`; available: {}",
            names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    Ok(text.parse().expect("bundled presets are valid TOML"))
}
