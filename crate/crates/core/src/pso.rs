//! Pre-filtered split optimization: throughput -> optimal split lookup tables.
//!
//! Candidates that can never meet the privacy or energy bound are dropped up
//! front. Each survivor gets the smallest throughput at which its E2E delay
//! fits under the latency bound. For every integer throughput the table then
//! stores the objective minimiser among the survivors that are already
//! feasible at that rate.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{argmin_f, check_constraints, evaluate, normalize, Constraints, Weights};
use crate::profiles::SplitProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSplit {
    pub index: usize,
    /// Minimal throughput (Mbps) that satisfies the latency bound. Zero when
    /// nothing has to be transmitted.
    pub tp_min_mbps: f64,
}

/// Keeps the privacy- and energy-feasible candidates with positive latency
/// slack, each paired with its minimal required throughput.
pub fn prefilter(profile: &SplitProfile, constraints: &Constraints) -> Vec<FeasibleSplit> {
    profile
        .candidates
        .iter()
        .filter(|c| c.privacy_rho <= constraints.rho_max && c.energy_j <= constraints.e_max_j)
        .filter_map(|c| {
            let slack_ms = constraints.tau_max_ms - c.d_ue_ms - c.d_ser_ms;
            // No finite throughput rescues a split whose compute alone blows the budget.
            (slack_ms > 0.0).then(|| FeasibleSplit {
                index: c.index,
                tp_min_mbps: c.data_size_mbit / (slack_ms / 1000.0),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupTable {
    pub ue_id: String,
    pub tp_max_mbps: u32,
    /// `entries[tp - 1]` is the optimal split at `tp` Mbps, `None` when no
    /// split is feasible.
    entries: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QueryResult {
    Split(usize),
    Infeasible,
}

impl LookupTable {
    pub fn from_entries(ue_id: impl Into<String>, entries: Vec<Option<usize>>) -> Self {
        LookupTable {
            ue_id: ue_id.into(),
            tp_max_mbps: entries.len() as u32,
            entries,
        }
    }

    pub fn get(&self, tp_mbps: u32) -> Option<usize> {
        tp_mbps
            .checked_sub(1)
            .and_then(|i| self.entries.get(i as usize).copied().flatten())
    }

    /// `(tp, split)` pairs for the mapped throughputs, ascending.
    pub fn iter(&self) -> impl Iterator<Item = (u32, usize)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.map(|l| (i as u32 + 1, l)))
    }

    pub fn gaps(&self) -> Vec<u32> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_none())
            .map(|(i, _)| i as u32 + 1)
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.iter().all(Option::is_none)
    }

    /// Floors the throughput to an integer key clamped to `[1, tp_max]`.
    /// NaN has no key and maps to `Infeasible`.
    pub fn query(&self, tp_mbps: f64) -> QueryResult {
        if tp_mbps.is_nan() || self.tp_max_mbps == 0 {
            return QueryResult::Infeasible;
        }
        let key = tp_mbps.floor().clamp(1.0, self.tp_max_mbps as f64) as u32;
        match self.get(key) {
            Some(l) => QueryResult::Split(l),
            None => QueryResult::Infeasible,
        }
    }

    /// Two-column text table with `#` provenance lines.
    pub fn to_text(&self, provenance: &[(String, String)]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# ue_id={}", self.ue_id);
        let _ = writeln!(out, "# tp_max_mbps={}", self.tp_max_mbps);
        for (k, v) in provenance {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "tp_mbps,split");
        for (tp, l) in self.iter() {
            let _ = writeln!(out, "{tp},{l}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut ue_id = String::from("ue0");
        let mut tp_max: Option<u32> = None;
        let mut rows = Vec::new();
        let mut seen_header = false;
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            let line = line.trim();
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    match k {
                        "ue_id" => ue_id = v.to_string(),
                        "tp_max_mbps" => {
                            tp_max =
                                Some(v.parse().map_err(|_| Error::parse(ln, "bad tp_max_mbps"))?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            if !seen_header {
                if line != "tp_mbps,split" {
                    return Err(Error::parse(ln, "expected 'tp_mbps,split' header"));
                }
                seen_header = true;
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(ln, "expected two columns"))?;
            let tp: u32 = a
                .trim()
                .parse()
                .map_err(|_| Error::parse(ln, "bad throughput"))?;
            let l: usize = b
                .trim()
                .parse()
                .map_err(|_| Error::parse(ln, "bad split index"))?;
            rows.push((ln, tp, l));
        }
        let tp_max = tp_max.ok_or_else(|| Error::parse(1, "missing '# tp_max_mbps=' line"))?;
        let mut entries = vec![None; tp_max as usize];
        for (ln, tp, l) in rows {
            if tp == 0 || tp > tp_max {
                return Err(Error::parse(
                    ln,
                    format!("throughput {tp} outside [1, {tp_max}]"),
                ));
            }
            entries[tp as usize - 1] = Some(l);
        }
        Ok(LookupTable {
            ue_id,
            tp_max_mbps: tp_max,
            entries,
        })
    }
}

/// Builds the throughput -> split table for one UE.
///
/// The objective normalizers are ranged at `tp_max_mbps`. Ties on the
/// objective go to the smaller split index.
pub fn build_lookup_table(
    profile: &SplitProfile,
    constraints: &Constraints,
    weights: &Weights,
    tp_max_mbps: u32,
) -> Result<LookupTable> {
    build_lookup_table_for("ue0", profile, constraints, weights, tp_max_mbps)
}

pub fn build_lookup_table_for(
    ue_id: &str,
    profile: &SplitProfile,
    constraints: &Constraints,
    weights: &Weights,
    tp_max_mbps: u32,
) -> Result<LookupTable> {
    check_inputs(constraints, weights, tp_max_mbps)?;
    let norms = normalize(profile, tp_max_mbps as f64)?;
    let survivors = prefilter(profile, constraints);

    let mut entries = Vec::with_capacity(tp_max_mbps as usize);
    for tp in 1..=tp_max_mbps {
        let tp = tp as f64;
        let scores = survivors
            .iter()
            .filter(|s| s.tp_min_mbps <= tp)
            .map(|s| {
                let c = &profile.candidates[s.index - 1];
                evaluate(c, tp, weights, &norms).map(|b| (s.index, b.f_value))
            })
            .collect::<Result<Vec<_>>>()?;
        entries.push(argmin_f(scores));
    }
    Ok(LookupTable {
        ue_id: ue_id.to_string(),
        tp_max_mbps,
        entries,
    })
}

/// Per-UE inputs for batch table construction.
#[derive(Debug, Clone)]
pub struct UeSpec {
    pub ue_id: String,
    pub profile: SplitProfile,
    pub constraints: Constraints,
    pub weights: Weights,
    pub tp_max_mbps: u32,
}

/// One table per UE, built in parallel; output order follows input order.
pub fn build_lookup_tables(ues: &[UeSpec]) -> Result<Vec<LookupTable>> {
    ues.par_iter()
        .map(|u| {
            build_lookup_table_for(
                &u.ue_id,
                &u.profile,
                &u.constraints,
                &u.weights,
                u.tp_max_mbps,
            )
        })
        .collect()
}

/// Exhaustive reference: evaluates every `(split, tp)` pair end to end and
/// checks all three bounds directly. Only meant for small instances.
pub fn brute_force_oracle(
    profile: &SplitProfile,
    constraints: &Constraints,
    weights: &Weights,
    tp_max_mbps: u32,
) -> Result<LookupTable> {
    check_inputs(constraints, weights, tp_max_mbps)?;
    let norms = normalize(profile, tp_max_mbps as f64)?;
    let mut entries = Vec::with_capacity(tp_max_mbps as usize);
    for tp in 1..=tp_max_mbps {
        let mut feasible = Vec::new();
        for c in &profile.candidates {
            let b = evaluate(c, tp as f64, weights, &norms)?;
            if check_constraints(&b, constraints).is_feasible() {
                feasible.push((c.index, b.f_value));
            }
        }
        entries.push(argmin_f(feasible));
    }
    Ok(LookupTable {
        ue_id: "ue0".into(),
        tp_max_mbps,
        entries,
    })
}

fn check_inputs(constraints: &Constraints, weights: &Weights, tp_max_mbps: u32) -> Result<()> {
    constraints.validate()?;
    weights.validate()?;
    if tp_max_mbps == 0 {
        return Err(Error::Domain("tp_max_mbps must be at least 1".into()));
    }
    Ok(())
}
