//! Trace replay: fixed vs adaptive splitting.
//!
//! Each trace step carries one inference task. The policy picks a split from
//! the throughput it believes in (ground truth or an estimate); the task is
//! then charged at the step's true throughput, so estimation errors show up
//! as latency.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::ChannelTrace;
use crate::error::{Error, Result};
use crate::estimator::{estimate_trace, EstimatorConfig, ThroughputEstimator};
use crate::numfmt::sig6;
use crate::objective::{
    argmin_f, breakdown, check_constraints, evaluate, normalize, Constraints, CostBreakdown,
    NormalizationContext, Weights,
};
use crate::presets::Preset;
use crate::profiles::SplitProfile;
use crate::pso::{LookupTable, QueryResult};

/// What an adaptive policy does when the table has no split for the
/// current throughput.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackRule {
    /// Run the whole model on the UE; nothing is transmitted.
    FullLocal,
    /// Take the unconstrained argmin of the objective.
    BestEffortMinF,
    /// Drop the task.
    SkipStep,
}

impl FallbackRule {
    pub fn name(&self) -> &'static str {
        match self {
            FallbackRule::FullLocal => "full_local",
            FallbackRule::BestEffortMinF => "best_effort_min_f",
            FallbackRule::SkipStep => "skip_step",
        }
    }
}

impl std::fmt::Display for FallbackRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FallbackRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_local" => Ok(FallbackRule::FullLocal),
            "best_effort_min_f" => Ok(FallbackRule::BestEffortMinF),
            "skip_step" => Ok(FallbackRule::SkipStep),
            _ => Err(Error::Unknown {
                kind: "fallback rule",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Fixed(usize),
    Adaptive {
        table: LookupTable,
        fallback: FallbackRule,
    },
}

impl Policy {
    pub fn label(&self) -> String {
        match self {
            Policy::Fixed(l) => format!("fixed_l{l}"),
            Policy::Adaptive { .. } => "adaptive".to_string(),
        }
    }

    fn check(&self, profile: &SplitProfile) -> Result<()> {
        let num = profile.len();
        match self {
            Policy::Fixed(l) if *l == 0 || *l > num => {
                Err(Error::Policy(format!("fixed split {l} outside 1..={num}")))
            }
            Policy::Adaptive { table, .. } => {
                match table.iter().find(|&(_, l)| l == 0 || l > num) {
                    Some((tp, l)) => Err(Error::Policy(format!(
                        "table maps {tp} Mbps to split {l}, profile '{}' has {num}",
                        profile.model_name
                    ))),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }
}

/// Where the policy's throughput comes from.
#[derive(Clone, Copy)]
pub enum TpSource<'a> {
    Oracle,
    Estimated {
        estimator: &'a dyn ThroughputEstimator,
        config: &'a EstimatorConfig,
    },
}

impl TpSource<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            TpSource::Oracle => "oracle_tp",
            TpSource::Estimated { .. } => "estimated_tp",
        }
    }

    /// Throughput the policy sees at each step. Early steps use whatever
    /// KPM history exists.
    pub fn plan(&self, trace: &ChannelTrace) -> Result<Vec<f64>> {
        match self {
            TpSource::Oracle => Ok(trace.steps.iter().map(|s| s.tp_true_mbps).collect()),
            TpSource::Estimated { estimator, config } => {
                estimate_trace(*estimator, trace, config, true)?
                    .into_iter()
                    .map(|e| e.ok_or_else(|| Error::Estimator("no features for step".into())))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnessConfig {
    /// Tasks issued per 0.1 s step; scales the energy total only.
    pub tasks_per_step: u32,
    /// Throughput used to charge a transmission over a dead link, Mbps.
    pub dead_link_floor_mbps: f64,
    /// Objective normalizers for fixed policies are ranged here.
    pub tp_ref_mbps: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            tasks_per_step: 1,
            dead_link_floor_mbps: 0.1,
            tp_ref_mbps: crate::presets::DEFAULT_TP_MAX_MBPS as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "split")]
pub enum Choice {
    Split(usize),
    FullLocal,
    BestEffort(usize),
    Skipped,
}

impl Choice {
    pub fn is_fallback(&self) -> bool {
        !matches!(self, Choice::Split(_))
    }

    pub fn tag(&self) -> String {
        match self {
            Choice::Split(l) => l.to_string(),
            Choice::FullLocal => "full_local".into(),
            Choice::BestEffort(l) => format!("best_effort:{l}"),
            Choice::Skipped => "skip".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t_s: f64,
    pub tp_true_mbps: f64,
    pub tp_used_mbps: f64,
    pub choice: Choice,
    /// `None` for skipped tasks.
    pub cost: Option<CostBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregates {
    pub mean_d_e2e_ms: f64,
    pub median_d_e2e_ms: f64,
    pub p95_d_e2e_ms: f64,
    pub mean_privacy_rho: f64,
    pub mean_energy_j: f64,
    pub total_energy_j: f64,
    pub fallback_count: usize,
    pub charged_steps: usize,
}

impl Aggregates {
    /// Means over charged (non-skipped) steps; p95 by nearest rank.
    pub fn from_steps(steps: &[StepRecord], tasks_per_step: u32) -> Self {
        let costs: Vec<&CostBreakdown> = steps.iter().filter_map(|s| s.cost.as_ref()).collect();
        let n = costs.len();
        let mean = |f: &dyn Fn(&CostBreakdown) -> f64| {
            if n == 0 {
                0.0
            } else {
                costs.iter().map(|c| f(c)).sum::<f64>() / n as f64
            }
        };
        let mut delays: Vec<f64> = costs.iter().map(|c| c.d_e2e_ms).collect();
        delays.sort_by(f64::total_cmp);
        let median = match n {
            0 => 0.0,
            _ if n % 2 == 1 => delays[n / 2],
            _ => (delays[n / 2 - 1] + delays[n / 2]) / 2.0,
        };
        let p95 = if n == 0 {
            0.0
        } else {
            delays[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1]
        };
        Aggregates {
            mean_d_e2e_ms: mean(&|c| c.d_e2e_ms),
            median_d_e2e_ms: median,
            p95_d_e2e_ms: p95,
            mean_privacy_rho: mean(&|c| c.privacy_rho),
            mean_energy_j: mean(&|c| c.energy_j),
            total_energy_j: costs.iter().map(|c| c.energy_j).sum::<f64>() * tasks_per_step as f64,
            fallback_count: steps.iter().filter(|s| s.choice.is_fallback()).count(),
            charged_steps: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub policy: String,
    pub scenario: String,
    pub seed: u64,
    pub tp_source: String,
    pub tasks_per_step: u32,
    pub per_step: Vec<StepRecord>,
    pub aggregates: Aggregates,
}

impl RunReport {
    /// Recomputes the aggregates from the per-step records.
    pub fn verify(&self) -> Result<()> {
        if Aggregates::from_steps(&self.per_step, self.tasks_per_step) == self.aggregates {
            Ok(())
        } else {
            Err(Error::Policy(format!(
                "aggregates of '{}' do not match its steps",
                self.policy
            )))
        }
    }

    pub fn to_csv(&self, provenance: &[(String, String)]) -> Result<String> {
        self.verify()?;
        let mut out = String::new();
        for (k, v) in provenance {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "# policy={}", self.policy);
        let _ = writeln!(out, "# scenario={}", self.scenario);
        let _ = writeln!(out, "# seed={}", self.seed);
        let _ = writeln!(out, "# tp_source={}", self.tp_source);
        let _ = writeln!(
            out,
            "t_s,tp_true_mbps,tp_used_mbps,split,d_ue_ms,d_trx_ms,d_ser_ms,d_e2e_ms,privacy_rho,energy_j,f_value"
        );
        for s in &self.per_step {
            let _ = write!(
                out,
                "{},{},{},{}",
                sig6(s.t_s),
                sig6(s.tp_true_mbps),
                sig6(s.tp_used_mbps),
                s.choice.tag()
            );
            match &s.cost {
                Some(c) => {
                    let _ = writeln!(
                        out,
                        ",{},{},{},{},{},{},{}",
                        sig6(c.d_ue_ms),
                        sig6(c.d_trx_ms),
                        sig6(c.d_ser_ms),
                        sig6(c.d_e2e_ms),
                        sig6(c.privacy_rho),
                        sig6(c.energy_j),
                        sig6(c.f_value)
                    );
                }
                None => out.push_str(",,,,,,,\n"),
            }
        }
        Ok(out)
    }
}

fn policy_norms(
    policy: &Policy,
    profile: &SplitProfile,
    cfg: &HarnessConfig,
) -> Result<NormalizationContext> {
    match policy {
        Policy::Adaptive { table, .. } => normalize(profile, table.tp_max_mbps as f64),
        Policy::Fixed(_) => normalize(profile, cfg.tp_ref_mbps),
    }
}

/// Replays `trace` under `policy` with per-step policy throughputs `tp_used`.
#[allow(clippy::too_many_arguments)]
pub fn run_policy_with_plan(
    policy: &Policy,
    profile: &SplitProfile,
    trace: &ChannelTrace,
    constraints: &Constraints,
    weights: &Weights,
    tp_used: &[f64],
    tp_source: &str,
    cfg: &HarnessConfig,
) -> Result<RunReport> {
    policy.check(profile)?;
    if trace.is_empty() {
        return Err(Error::Policy("empty trace".into()));
    }
    if tp_used.len() != trace.len() {
        return Err(Error::Dimension(format!(
            "{} planned throughputs for {} steps",
            tp_used.len(),
            trace.len()
        )));
    }
    constraints.validate()?;
    weights.validate()?;
    let norms = policy_norms(policy, profile, cfg)?;
    let last = &profile.candidates[profile.len() - 1];

    let mut per_step = Vec::with_capacity(trace.len());
    for (step, &tp) in trace.steps.iter().zip(tp_used) {
        let choice = match policy {
            Policy::Fixed(l) => Choice::Split(*l),
            Policy::Adaptive { table, fallback } => match table.query(tp) {
                QueryResult::Split(l) => Choice::Split(l),
                QueryResult::Infeasible => match fallback {
                    FallbackRule::FullLocal => Choice::FullLocal,
                    FallbackRule::SkipStep => Choice::Skipped,
                    FallbackRule::BestEffortMinF => {
                        let at = tp.max(cfg.dead_link_floor_mbps);
                        let scores = profile
                            .candidates
                            .iter()
                            .map(|c| evaluate(c, at, weights, &norms).map(|b| (c.index, b.f_value)))
                            .collect::<Result<Vec<_>>>()?;
                        Choice::BestEffort(argmin_f(scores).expect("non-empty profile"))
                    }
                },
            },
        };
        let charge_tp = step.tp_true_mbps.max(cfg.dead_link_floor_mbps);
        let cost = match choice {
            Choice::Split(l) | Choice::BestEffort(l) => Some(evaluate(
                &profile.candidates[l - 1],
                charge_tp,
                weights,
                &norms,
            )?),
            Choice::FullLocal => Some(breakdown(last, 0.0, weights, &norms)),
            Choice::Skipped => None,
        };
        per_step.push(StepRecord {
            t_s: step.t_s,
            tp_true_mbps: step.tp_true_mbps,
            tp_used_mbps: tp,
            choice,
            cost,
        });
    }
    let aggregates = Aggregates::from_steps(&per_step, cfg.tasks_per_step);
    Ok(RunReport {
        policy: policy.label(),
        scenario: trace.scenario().to_string(),
        seed: trace.seed(),
        tp_source: tp_source.to_string(),
        tasks_per_step: cfg.tasks_per_step,
        per_step,
        aggregates,
    })
}

pub fn run_policy(
    policy: &Policy,
    profile: &SplitProfile,
    trace: &ChannelTrace,
    constraints: &Constraints,
    weights: &Weights,
    tp_source: TpSource<'_>,
    cfg: &HarnessConfig,
) -> Result<RunReport> {
    let plan = tp_source.plan(trace)?;
    run_policy_with_plan(
        policy,
        profile,
        trace,
        constraints,
        weights,
        &plan,
        tp_source.name(),
        cfg,
    )
}

/// The split a table picks on a clean channel, used as the fixed baseline.
pub fn clean_channel_split(table: &LookupTable, clean_tp_mbps: f64) -> Result<usize> {
    match table.query(clean_tp_mbps) {
        QueryResult::Split(l) => Ok(l),
        QueryResult::Infeasible => Err(Error::Policy(format!(
            "no feasible split at {clean_tp_mbps} Mbps"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricDeltas {
    pub scenario: String,
    pub seed: u64,
    pub baseline: String,
    pub other: String,
    /// `(baseline - other) / baseline`; positive means `other` is lower.
    pub d_e2e: f64,
    pub privacy: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// Runs ordered trace-major, then by policy.
    pub runs: Vec<RunReport>,
    pub policies_per_trace: usize,
    /// Per trace, one entry for each policy after the first.
    pub deltas: Vec<MetricDeltas>,
}

fn relative_drop(base: f64, other: f64) -> f64 {
    if base == other {
        0.0
    } else {
        (base - other) / base
    }
}

/// Runs every policy over every trace. Deltas are taken against the first
/// policy.
pub fn compare(
    policies: &[Policy],
    profile: &SplitProfile,
    traces: &[ChannelTrace],
    constraints: &Constraints,
    weights: &Weights,
    tp_source: TpSource<'_>,
    cfg: &HarnessConfig,
) -> Result<ComparisonReport> {
    if policies.len() < 2 {
        return Err(Error::Policy("compare needs at least two policies".into()));
    }
    let plans = traces
        .iter()
        .map(|t| tp_source.plan(t))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, usize)> = (0..traces.len())
        .flat_map(|t| (0..policies.len()).map(move |p| (t, p)))
        .collect();
    let runs = cells
        .par_iter()
        .map(|&(t, p)| {
            run_policy_with_plan(
                &policies[p],
                profile,
                &traces[t],
                constraints,
                weights,
                &plans[t],
                tp_source.name(),
                cfg,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut deltas = Vec::new();
    for chunk in runs.chunks(policies.len()) {
        let base = &chunk[0];
        for other in &chunk[1..] {
            let (a, b) = (&base.aggregates, &other.aggregates);
            deltas.push(MetricDeltas {
                scenario: base.scenario.clone(),
                seed: base.seed,
                baseline: base.policy.clone(),
                other: other.policy.clone(),
                d_e2e: relative_drop(a.mean_d_e2e_ms, b.mean_d_e2e_ms),
                privacy: relative_drop(a.mean_privacy_rho, b.mean_privacy_rho),
                energy: relative_drop(a.mean_energy_j, b.mean_energy_j),
            });
        }
    }
    Ok(ComparisonReport {
        runs,
        policies_per_trace: policies.len(),
        deltas,
    })
}

impl ComparisonReport {
    pub fn summary_csv(&self, provenance: &[(String, String)]) -> Result<String> {
        let mut out = String::new();
        for (k, v) in provenance {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(
            out,
            "scenario,seed,policy,mean_d_e2e_ms,median_d_e2e_ms,p95_d_e2e_ms,mean_privacy_rho,mean_energy_j,fallback_count,d_e2e_reduction,privacy_reduction,energy_reduction"
        );
        let per_trace = self.policies_per_trace.max(1);
        for (i, r) in self.runs.iter().enumerate() {
            r.verify()?;
            let a = &r.aggregates;
            let (trace, pos) = (i / per_trace, i % per_trace);
            let delta = (pos > 0).then(|| &self.deltas[trace * (per_trace - 1) + pos - 1]);
            let (de, dp, dn) = match delta {
                Some(d) => (sig6(d.d_e2e), sig6(d.privacy), sig6(d.energy)),
                None => (String::new(), String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.scenario,
                r.seed,
                r.policy,
                sig6(a.mean_d_e2e_ms),
                sig6(a.median_d_e2e_ms),
                sig6(a.p95_d_e2e_ms),
                sig6(a.mean_privacy_rho),
                sig6(a.mean_energy_j),
                a.fallback_count,
                de,
                dp,
                dn
            );
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub index: usize,
    pub f_value: f64,
    pub d_e2e_ms: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCurve {
    pub preset: String,
    pub tp_mbps: f64,
    pub cells: Vec<SweepCell>,
    /// Feasible argmin; ties go to the smaller index.
    pub argmin: Option<usize>,
}

/// `F(l, TP)` for every split, preset and throughput.
pub fn sweep_splitting_points(
    profile: &SplitProfile,
    presets: &[&Preset],
    tps: &[f64],
) -> Result<Vec<SweepCurve>> {
    let mut out = Vec::with_capacity(presets.len() * tps.len());
    for p in presets {
        let norms = normalize(profile, p.tp_max_mbps as f64)?;
        for &tp in tps {
            let cells = profile
                .candidates
                .iter()
                .map(|c| {
                    let b = evaluate(c, tp, &p.weights, &norms)?;
                    Ok(SweepCell {
                        index: c.index,
                        f_value: b.f_value,
                        d_e2e_ms: b.d_e2e_ms,
                        feasible: check_constraints(&b, &p.constraints).is_feasible(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let argmin = argmin_f(
                cells
                    .iter()
                    .filter(|c| c.feasible)
                    .map(|c| (c.index, c.f_value)),
            );
            out.push(SweepCurve {
                preset: p.name.to_string(),
                tp_mbps: tp,
                cells,
                argmin,
            });
        }
    }
    Ok(out)
}
