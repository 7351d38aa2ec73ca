//! Browser bindings for the split planner.
//!
//! Every export returns a JSON string; failures come back as
//! `{"error": "..."}` so the page can show them without exceptions.

use adasplit_core::channel::{generate_trace, Scenario, TraceConfig};
use adasplit_core::estimator::{BaselineEstimator, EstimatorConfig};
use adasplit_core::harness::{
    clean_channel_split, compare, sweep_splitting_points, Aggregates, FallbackRule, HarnessConfig,
    Policy, RunReport, TpSource,
};
use adasplit_core::presets::{preset, preset_names as core_preset_names, Preset};
use adasplit_core::profiles::SplitProfile;
use adasplit_core::pso::build_lookup_table;
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

type Outcome<T> = Result<T, String>;

fn respond<T: Serialize>(result: Outcome<T>) -> String {
    let value = match result {
        Ok(v) => serde_json::to_value(v).map_err(|e| e.to_string()),
        Err(e) => Err(e),
    };
    match value {
        Ok(v) => v.to_string(),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

fn find_preset(name: &str) -> Outcome<&'static Preset> {
    preset(name).map_err(|e| e.to_string())
}

/// Names of the built-in weight/constraint presets, as a JSON array.
#[wasm_bindgen]
pub fn preset_names() -> String {
    respond(Ok(core_preset_names().collect::<Vec<_>>()))
}

#[derive(Serialize)]
struct Curve {
    tp_mbps: f64,
    argmin: Option<usize>,
    f: Vec<f64>,
    feasible: Vec<bool>,
}

#[derive(Serialize)]
struct SweepOut {
    preset: String,
    splits: usize,
    curves: Vec<Curve>,
}

fn sweep_inner(preset_name: &str, tps: &str) -> Outcome<SweepOut> {
    let p = find_preset(preset_name)?;
    let tps = tps
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| match s.trim().parse::<f64>() {
            Ok(v) if v > 0.0 => Ok(v),
            _ => Err(format!("bad throughput '{s}'")),
        })
        .collect::<Outcome<Vec<_>>>()?;
    let profile = SplitProfile::bundled_vgg16();
    let curves = sweep_splitting_points(&profile, &[p], &tps).map_err(|e| e.to_string())?;
    Ok(SweepOut {
        preset: p.name.to_string(),
        splits: profile.len(),
        curves: curves
            .into_iter()
            .map(|c| Curve {
                tp_mbps: c.tp_mbps,
                argmin: c.argmin,
                f: c.cells.iter().map(|x| x.f_value).collect(),
                feasible: c.cells.iter().map(|x| x.feasible).collect(),
            })
            .collect(),
    })
}

/// Objective curves `F(l, TP)` on the bundled profile; `tps` is a
/// comma-separated list of throughputs in Mbps.
#[wasm_bindgen]
pub fn sweep(preset_name: &str, tps: &str) -> String {
    respond(sweep_inner(preset_name, tps))
}

#[derive(Serialize)]
struct TableOut {
    preset: String,
    tp_max_mbps: u32,
    /// `splits[tp - 1]`, `null` where nothing is feasible.
    splits: Vec<Option<usize>>,
}

fn lookup_table_inner(preset_name: &str, tp_max: u32) -> Outcome<TableOut> {
    let p = find_preset(preset_name)?;
    let profile = SplitProfile::bundled_vgg16();
    let table = build_lookup_table(&profile, &p.constraints, &p.weights, tp_max)
        .map_err(|e| e.to_string())?;
    Ok(TableOut {
        preset: p.name.to_string(),
        tp_max_mbps: tp_max,
        splits: (1..=tp_max).map(|tp| table.get(tp)).collect(),
    })
}

/// Throughput -> split table for a preset on the bundled profile.
#[wasm_bindgen]
pub fn lookup_table(preset_name: &str, tp_max: u32) -> String {
    respond(lookup_table_inner(preset_name, tp_max))
}

#[derive(Serialize)]
struct Series {
    t_s: Vec<f64>,
    tp_true_mbps: Vec<f64>,
    tp_used_mbps: Vec<f64>,
    fixed_split: Vec<Option<usize>>,
    adaptive_split: Vec<Option<usize>>,
    fixed_d_e2e_ms: Vec<Option<f64>>,
    adaptive_d_e2e_ms: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct ReplayOut {
    scenario: String,
    seed: u32,
    fixed_split: usize,
    fixed: Aggregates,
    adaptive: Aggregates,
    /// Relative drop of adaptive vs fixed per metric.
    reduction: [f64; 3],
    series: Series,
}

fn split_of(run: &RunReport) -> Vec<Option<usize>> {
    use adasplit_core::harness::Choice;
    run.per_step
        .iter()
        .map(|s| match s.choice {
            Choice::Split(l) | Choice::BestEffort(l) => Some(l),
            Choice::FullLocal => Some(0),
            Choice::Skipped => None,
        })
        .collect()
}

fn replay_inner(
    scenario: &str,
    seed: u32,
    duration_s: f64,
    preset_name: &str,
    estimated: bool,
) -> Outcome<ReplayOut> {
    let p = find_preset(preset_name)?;
    let scenario: Scenario = scenario
        .parse()
        .map_err(|e: adasplit_core::Error| e.to_string())?;
    let profile = SplitProfile::bundled_vgg16();
    let table = build_lookup_table(&profile, &p.constraints, &p.weights, p.tp_max_mbps)
        .map_err(|e| e.to_string())?;
    let cfg =
        TraceConfig::new(scenario, duration_s, seed as u64).with_iq_every(estimated.then_some(1));
    let trace = generate_trace(&cfg).map_err(|e| e.to_string())?;
    let fixed_split =
        clean_channel_split(&table, trace.clean_throughput()).map_err(|e| e.to_string())?;
    let policies = [
        Policy::Fixed(fixed_split),
        Policy::Adaptive {
            table,
            fallback: FallbackRule::FullLocal,
        },
    ];
    let est_cfg = EstimatorConfig {
        capacity_share: cfg.alloc_ratio,
        ..EstimatorConfig::default()
    };
    let estimator =
        BaselineEstimator::new(est_cfg.clone(), cfg.model.clone()).map_err(|e| e.to_string())?;
    let source = if estimated {
        TpSource::Estimated {
            estimator: &estimator,
            config: &est_cfg,
        }
    } else {
        TpSource::Oracle
    };
    let report = compare(
        &policies,
        &profile,
        std::slice::from_ref(&trace),
        &p.constraints,
        &p.weights,
        source,
        &HarnessConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let (fixed, adaptive) = (&report.runs[0], &report.runs[1]);
    let d = &report.deltas[0];
    let delays = |r: &RunReport| {
        r.per_step
            .iter()
            .map(|s| s.cost.map(|c| c.d_e2e_ms))
            .collect()
    };
    Ok(ReplayOut {
        scenario: scenario.to_string(),
        seed,
        fixed_split,
        fixed: fixed.aggregates.clone(),
        adaptive: adaptive.aggregates.clone(),
        reduction: [d.d_e2e, d.privacy, d.energy],
        series: Series {
            t_s: adaptive.per_step.iter().map(|s| s.t_s).collect(),
            tp_true_mbps: adaptive.per_step.iter().map(|s| s.tp_true_mbps).collect(),
            tp_used_mbps: adaptive.per_step.iter().map(|s| s.tp_used_mbps).collect(),
            fixed_split: split_of(fixed),
            adaptive_split: split_of(adaptive),
            fixed_d_e2e_ms: delays(fixed),
            adaptive_d_e2e_ms: delays(adaptive),
        },
    })
}

/// Replays one generated scenario under fixed and adaptive splitting. With
/// `estimated` set, the adaptive policy decides from the baseline
/// estimator instead of the true throughput. Split 0 in the series marks
/// fully local execution.
#[wasm_bindgen]
pub fn replay(
    scenario: &str,
    seed: u32,
    duration_s: f64,
    preset_name: &str,
    estimated: bool,
) -> String {
    respond(replay_inner(
        scenario,
        seed,
        duration_s,
        preset_name,
        estimated,
    ))
}
