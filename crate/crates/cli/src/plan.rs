//! Objective settings from preset names or small TOML files.
//!
//! `--weights` and `--constraints` each take either a preset name or a path
//! to a TOML file with the bare fields:
//!
//! ```toml
//! # weights.toml
//! w1 = 1.0
//! w2 = 0.5
//! w3 = 0.2
//! ```
//!
//! ```toml
//! # constraints.toml
//! tau_max_ms = 2500.0
//! rho_max = 0.8
//! e_max_j = 8.0
//! ```

use std::path::Path;

use adasplit_core::objective::{Constraints, Weights};
use adasplit_core::presets::preset;
use anyhow::{Context, Result};
use serde::de::DeserializeOwned;

#[derive(Debug, Clone)]
pub struct Plan {
    pub weights_source: String,
    pub constraints_source: String,
    pub weights: Weights,
    pub constraints: Constraints,
    pub tp_max_mbps: u32,
}

impl Plan {
    pub fn provenance(&self) -> Vec<(String, String)> {
        let w = &self.weights;
        let c = &self.constraints;
        vec![
            (
                "weights".into(),
                format!("{} ({},{},{})", self.weights_source, w.w1, w.w2, w.w3),
            ),
            (
                "constraints".into(),
                format!(
                    "{} (tau_max_ms={},rho_max={},e_max_j={})",
                    self.constraints_source, c.tau_max_ms, c.rho_max, c.e_max_j
                ),
            ),
            ("tp_max_mbps".into(), self.tp_max_mbps.to_string()),
        ]
    }
}

fn from_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// A preset name wins over a file of the same name.
fn lookup<T: DeserializeOwned>(
    arg: &str,
    pick: impl Fn(&adasplit_core::presets::Preset) -> T,
) -> Result<T> {
    match preset(arg) {
        Ok(p) => Ok(pick(p)),
        Err(_) if Path::new(arg).is_file() => from_file(Path::new(arg)),
        Err(e) => {
            Err(e).with_context(|| format!("'{arg}' is neither a preset nor a readable file"))
        }
    }
}

pub fn resolve(weights: &str, constraints: &str, tp_max: Option<u32>) -> Result<Plan> {
    let w: Weights = lookup(weights, |p| p.weights)?;
    let c: Constraints = lookup(constraints, |p| p.constraints)?;
    w.validate()?;
    c.validate()?;
    let default_tp = preset(weights)
        .map(|p| p.tp_max_mbps)
        .unwrap_or(adasplit_core::presets::DEFAULT_TP_MAX_MBPS);
    Ok(Plan {
        weights_source: weights.to_string(),
        constraints_source: constraints.to_string(),
        weights: w,
        constraints: c,
        tp_max_mbps: tp_max.unwrap_or(default_tp),
    })
}
