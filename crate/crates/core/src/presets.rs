//! Named weight/constraint presets.
//!
//! The `*-only` presets switch on a single objective term with bounds loose
//! enough never to bind. The `*-focused` and `combined` presets mix terms and
//! tighten bounds around the metric they prioritise. All values are synthetic
//! defaults chosen for the bundled profile.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::objective::{Constraints, Weights};

/// Default upper bound of the lookup-table throughput domain, Mbps.
pub const DEFAULT_TP_MAX_MBPS: u32 = 120;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub weights: Weights,
    pub constraints: Constraints,
    pub tp_max_mbps: u32,
}

const LOOSE: Constraints = Constraints {
    tau_max_ms: 1.0e6,
    rho_max: 1.0,
    e_max_j: 1.0e6,
};

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "latency-only",
        weights: Weights {
            w1: 1.0,
            w2: 0.0,
            w3: 0.0,
        },
        constraints: LOOSE,
        tp_max_mbps: DEFAULT_TP_MAX_MBPS,
    },
    Preset {
        name: "privacy-only",
        weights: Weights {
            w1: 0.0,
            w2: 1.0,
            w3: 0.0,
        },
        constraints: LOOSE,
        tp_max_mbps: DEFAULT_TP_MAX_MBPS,
    },
    Preset {
        name: "energy-only",
        weights: Weights {
            w1: 0.0,
            w2: 0.0,
            w3: 1.0,
        },
        constraints: LOOSE,
        tp_max_mbps: DEFAULT_TP_MAX_MBPS,
    },
    Preset {
        name: "latency-focused",
        weights: Weights {
            w1: 1.0,
            w2: 0.05,
            w3: 0.05,
        },
        constraints: Constraints {
            tau_max_ms: 3000.0,
            rho_max: 1.0,
            e_max_j: 12.0,
        },
        tp_max_mbps: DEFAULT_TP_MAX_MBPS,
    },
    Preset {
        name: "privacy-focused",
        weights: Weights {
            w1: 0.3,
            w2: 1.0,
            w3: 0.0,
        },
        constraints: Constraints {
            tau_max_ms: 3000.0,
            rho_max: 0.3,
            e_max_j: 12.0,
        },
        tp_max_mbps: DEFAULT_TP_MAX_MBPS,
    },
    Preset {
        name: "energy-focused",
        weights: Weights {
            w1: 0.3,
            w2: 0.0,
            w3: 1.0,
        },
        constraints: Constraints {
            tau_max_ms: 3000.0,
            rho_max: 1.0,
            e_max_j: 3.0,
        },
        tp_max_mbps: DEFAULT_TP_MAX_MBPS,
    },
    Preset {
        name: "combined",
        weights: Weights {
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
        },
        constraints: Constraints {
            tau_max_ms: 3000.0,
            rho_max: 0.9,
            e_max_j: 10.0,
        },
        tp_max_mbps: DEFAULT_TP_MAX_MBPS,
    },
];

pub fn preset(name: &str) -> Result<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::Unknown {
            kind: "preset",
            name: name.to_string(),
        })
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for p in PRESETS {
            p.weights.validate().unwrap();
            p.constraints.validate().unwrap();
            assert!(p.tp_max_mbps >= 1);
        }
        assert!(preset("combined").is_ok());
        assert!(matches!(preset("nope"), Err(Error::Unknown { .. })));
    }
}
