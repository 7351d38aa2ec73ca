//! Uplink throughput estimation.
//!
//! The baseline estimator inverts the link-adaptation model twice: once from
//! the KPM window (what the scheduler reports for the UE's own PRBs) and once
//! from the IQ grid (how much of the band interference has taken over). The
//! two estimates are blended with the UE's resource share as the weight, so a
//! UE that occupies only a sliver of the carrier leans on the IQ view.
//!
//! Other estimators, including separately trained models, plug in through
//! [`ThroughputEstimator`]; [`ExternalEstimator`] speaks a line-delimited
//! JSON protocol to a child process.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    true_throughput, ChannelTrace, HarqCounters, IqGrid, KpmSample, Load, Zone, ZoneModel,
    IQ_SUBCARRIERS, IQ_SYMBOLS, TOTAL_PRBS,
};
use crate::error::{Error, Result};

/// Block error rate from two HARQ counter snapshots: the RV1 increment over
/// the RV0 increment.
///
/// Returns 1.0 when no new blocks were sent but retransmissions still
/// happened, and 0.0 on an idle link.
pub fn harq_bler(before: HarqCounters, after: HarqCounters) -> Result<f64> {
    for rv in 0..4 {
        if after[rv] < before[rv] {
            return Err(Error::CounterRegression {
                rv,
                before: before[rv],
                after: after[rv],
            });
        }
    }
    let d: Vec<u64> = (0..4).map(|rv| after[rv] - before[rv]).collect();
    if d[0] == 0 {
        return Ok(if d[1..].iter().any(|&x| x > 0) {
            1.0
        } else {
            0.0
        });
    }
    Ok((d[1] as f64 / d[0] as f64).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocRatioSource {
    /// Allocated PRBs of the IQ grid over the carrier's PRBs.
    FromGrid,
    /// The fixed `alloc_ratio` of the estimator config.
    FromConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    KpmOnly,
    KpmPlusIq,
}

impl std::str::FromStr for EstimatorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kpm_only" => Ok(EstimatorMode::KpmOnly),
            "kpm_plus_iq" => Ok(EstimatorMode::KpmPlusIq),
            _ => Err(Error::Unknown {
                kind: "estimator mode",
                name: s.to_string(),
            }),
        }
    }
}

impl std::fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorMode::KpmOnly => "kpm_only",
            EstimatorMode::KpmPlusIq => "kpm_plus_iq",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// KPM samples per estimation window.
    pub window_len: usize,
    pub alloc_ratio_source: AllocRatioSource,
    pub mode: EstimatorMode,
    /// Blend weight used with [`AllocRatioSource::FromConfig`].
    pub alloc_ratio: f64,
    /// Share of peak carrier throughput the UE can reach on a clean channel.
    pub capacity_share: f64,
    /// Per-RE thermal noise the IQ branch subtracts, dBm.
    pub thermal_floor_dbm: f64,
    /// An unallocated RE counts as occupied this far above thermal.
    pub occupancy_margin_db: f64,
    /// Reported interference floor of an all-zero grid.
    pub floor_min_dbm: f64,
    /// A window BLER at or above this marks the link out of control.
    pub ooc_bler: f64,
    /// Mean TPC above this marks the power-control zone.
    pub tpc_active_db: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            window_len: 30,
            alloc_ratio_source: AllocRatioSource::FromGrid,
            mode: EstimatorMode::KpmPlusIq,
            alloc_ratio: 0.5,
            capacity_share: 0.5,
            thermal_floor_dbm: -65.0,
            occupancy_margin_db: 12.0,
            floor_min_dbm: -200.0,
            ooc_bler: 0.5,
            tpc_active_db: 1.0,
        }
    }
}

impl EstimatorConfig {
    pub fn with_mode(mut self, mode: EstimatorMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 {
            return Err(Error::Estimator("window_len must be at least 1".into()));
        }
        if !(self.alloc_ratio > 0.0 && self.alloc_ratio <= 1.0) {
            return Err(Error::Estimator(format!(
                "alloc_ratio must lie in (0, 1], got {}",
                self.alloc_ratio
            )));
        }
        if !(self.capacity_share > 0.0 && self.capacity_share <= 1.0) {
            return Err(Error::Estimator("capacity_share must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqFeatures {
    /// Fraction of unallocated REs carrying power above thermal + margin.
    pub occupied_fraction: f64,
    /// Mean per-RE power over unallocated REs, dBm.
    pub interference_floor_dbm: f64,
    pub allocated_prbs: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub kpm_window: Vec<KpmSample>,
    pub iq_features: Option<IqFeatures>,
    /// Ratio of resources allocated to the UE to total resources, `(0, 1]`.
    pub alloc_ratio: f64,
}

pub fn extract_iq_features(grid: &IqGrid, config: &EstimatorConfig) -> IqFeatures {
    let threshold_mw = 10f64.powf((config.thermal_floor_dbm + config.occupancy_margin_db) / 10.0);
    let (mut sum, mut occupied, mut n) = (0.0, 0usize, 0usize);
    for sc in (0..IQ_SUBCARRIERS).filter(|&sc| !grid.is_allocated(sc)) {
        for sym in 0..IQ_SYMBOLS {
            let p = grid.re_power(sc, sym);
            sum += p;
            occupied += usize::from(p > threshold_mw);
            n += 1;
        }
    }
    let mean = if n > 0 { sum / n as f64 } else { 0.0 };
    IqFeatures {
        occupied_fraction: if n > 0 {
            occupied as f64 / n as f64
        } else {
            0.0
        },
        interference_floor_dbm: if mean > 0.0 {
            (10.0 * mean.log10()).max(config.floor_min_dbm)
        } else {
            config.floor_min_dbm
        },
        allocated_prbs: grid.allocated_prbs(),
    }
}

pub trait ThroughputEstimator: Send + Sync {
    fn name(&self) -> String;
    fn estimate(&self, features: &FeatureVector) -> Result<f64>;
}

/// Deterministic model-inversion estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineEstimator {
    pub config: EstimatorConfig,
    pub model: ZoneModel,
}

impl BaselineEstimator {
    pub fn new(config: EstimatorConfig, model: ZoneModel) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        Ok(BaselineEstimator { config, model })
    }

    fn base(&self) -> f64 {
        self.model.tp_peak_mbps * self.config.capacity_share
    }

    /// BLER over the most recent step of the window, from HARQ counters.
    fn recent_bler(window: &[KpmSample]) -> Result<f64> {
        match window {
            [.., prev, last] => harq_bler(prev.harq_counts, last.harq_counts),
            [only] => Ok(only.ul_bler),
            [] => Err(Error::Estimator("empty KPM window".into())),
        }
    }

    /// Zone implied by the KPM window alone.
    pub fn kpm_zone_guess(&self, window: &[KpmSample]) -> Result<Zone> {
        let last = window
            .last()
            .ok_or_else(|| Error::Estimator("empty KPM window".into()))?;
        let tpc_mean = window.iter().map(|k| k.tpc_db).sum::<f64>() / window.len() as f64;
        Ok(if Self::recent_bler(window)? >= self.config.ooc_bler {
            Zone::Ooc
        } else if last.ul_mcs < self.model.mcs_ceiling {
            Zone::McsControl
        } else if tpc_mean > self.config.tpc_active_db {
            Zone::PowerControl
        } else {
            Zone::Negligible
        })
    }

    /// Throughput implied by the UE's own link adaptation.
    pub fn kpm_branch(&self, window: &[KpmSample]) -> Result<f64> {
        let last = window
            .last()
            .ok_or_else(|| Error::Estimator("empty KPM window".into()))?;
        let ceiling = self.model.mcs_ceiling as f64;
        let mcs = (last.ul_mcs as f64).clamp(self.model.mcs_floor as f64, ceiling);
        let base = self.base();
        Ok(match self.kpm_zone_guess(window)? {
            Zone::Negligible | Zone::PowerControl => base,
            Zone::McsControl => base * mcs / ceiling,
            Zone::Ooc => {
                let bler = Self::recent_bler(window)?;
                base * self.model.mcs_floor as f64 / ceiling
                    * self.model.harq_delivery(bler).max(0.0)
            }
        })
    }

    /// Full-band capacity implied by the interference seen in the IQ grid.
    pub fn iq_branch(&self, iq: &IqFeatures) -> f64 {
        let thermal = 10f64.powf(self.config.thermal_floor_dbm / 10.0);
        let floor = 10f64.powf(iq.interference_floor_dbm / 10.0);
        let excess = floor - thermal;
        let noise_dbm = if excess > 0.0 {
            10.0 * excess.log10()
        } else {
            f64::NEG_INFINITY
        };
        let load = if iq.allocated_prbs <= low_load_prbs_cutoff() {
            Load::Low
        } else {
            Load::High
        };
        let full = true_throughput(noise_dbm, &self.model, load, self.config.capacity_share);
        let occ = iq.occupied_fraction.clamp(0.0, 1.0);
        (1.0 - occ) * self.base() + occ * full
    }
}

/// Grants at or below this many PRBs are treated as a lightly loaded UE.
fn low_load_prbs_cutoff() -> u32 {
    (TOTAL_PRBS / 10) as u32
}

impl ThroughputEstimator for BaselineEstimator {
    fn name(&self) -> String {
        format!("baseline-{}", self.config.mode)
    }

    fn estimate(&self, f: &FeatureVector) -> Result<f64> {
        let kpm = self.kpm_branch(&f.kpm_window)?;
        let est = match self.config.mode {
            EstimatorMode::KpmOnly => kpm,
            EstimatorMode::KpmPlusIq => {
                let iq = f
                    .iq_features
                    .as_ref()
                    .ok_or_else(|| Error::Estimator("kpm_plus_iq mode needs IQ features".into()))?;
                let w = f.alloc_ratio.clamp(0.0, 1.0);
                w * kpm + (1.0 - w) * self.iq_branch(iq)
            }
        };
        Ok(est.clamp(0.0, self.model.tp_peak_mbps))
    }
}

/// Forwards each feature vector as one JSON line to a child process and
/// reads one number per line back.
pub struct ExternalEstimator {
    command: String,
    io: Mutex<(Child, ChildStdin, BufReader<ChildStdout>)>,
}

impl ExternalEstimator {
    /// Runs `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Estimator(format!("cannot start '{command}': {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ExternalEstimator {
            command: command.to_string(),
            io: Mutex::new((child, stdin, stdout)),
        })
    }
}

impl ThroughputEstimator for ExternalEstimator {
    fn name(&self) -> String {
        format!("external:{}", self.command)
    }

    fn estimate(&self, features: &FeatureVector) -> Result<f64> {
        let request =
            serde_json::to_string(features).map_err(|e| Error::Estimator(e.to_string()))?;
        let mut guard = self
            .io
            .lock()
            .map_err(|_| Error::Estimator("estimator pipe poisoned".into()))?;
        let (_, stdin, stdout) = &mut *guard;
        writeln!(stdin, "{request}")
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::Estimator(format!("write to '{}': {e}", self.command)))?;
        let mut line = String::new();
        let n = stdout
            .read_line(&mut line)
            .map_err(|e| Error::Estimator(format!("read from '{}': {e}", self.command)))?;
        if n == 0 {
            return Err(Error::Estimator(format!(
                "'{}' closed its output",
                self.command
            )));
        }
        line.trim()
            .parse::<f64>()
            .map_err(|e| Error::Estimator(format!("bad response {:?}: {e}", line.trim())))
    }
}

impl Drop for ExternalEstimator {
    fn drop(&mut self) {
        if let Ok(mut guard) = self.io.lock() {
            let _ = guard.0.kill();
            let _ = guard.0.wait();
        }
    }
}

/// Feature vectors for every step of a trace. With `partial` set, steps
/// before the first full window use whatever history exists; otherwise they
/// are `None`. IQ features come from the latest capture at or before the
/// step.
pub fn trace_features(
    trace: &ChannelTrace,
    config: &EstimatorConfig,
    partial: bool,
) -> Vec<Option<FeatureVector>> {
    let radio = &trace.config.radio;
    let iq: Vec<Option<IqFeatures>> = trace
        .steps
        .par_iter()
        .map(|s| {
            s.iq.as_ref()
                .map(|c| extract_iq_features(&c.grid(radio), config))
        })
        .collect();
    let mut latest: Option<IqFeatures> = None;
    let mut out = Vec::with_capacity(trace.len());
    for (i, step_iq) in iq.into_iter().enumerate() {
        if step_iq.is_some() {
            latest = step_iq;
        }
        let full = i + 1 >= config.window_len;
        if !full && !partial {
            out.push(None);
            continue;
        }
        let start = (i + 1).saturating_sub(config.window_len);
        let alloc_ratio = match (config.alloc_ratio_source, &latest) {
            (AllocRatioSource::FromGrid, Some(f)) => {
                (f.allocated_prbs as f64 / TOTAL_PRBS as f64).max(f64::MIN_POSITIVE)
            }
            _ => config.alloc_ratio,
        };
        out.push(Some(FeatureVector {
            kpm_window: trace.steps[start..=i]
                .iter()
                .map(|s| s.kpm.clone())
                .collect(),
            iq_features: latest,
            alloc_ratio,
        }));
    }
    out
}

/// Per-step estimates of a trace (`None` where no window is available).
pub fn estimate_trace(
    estimator: &dyn ThroughputEstimator,
    trace: &ChannelTrace,
    config: &EstimatorConfig,
    partial: bool,
) -> Result<Vec<Option<f64>>> {
    trace_features(trace, config, partial)
        .iter()
        .map(|f| f.as_ref().map(|f| estimator.estimate(f)).transpose())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorScore {
    pub r2: f64,
    pub rmse: f64,
    pub n: usize,
}

/// R² and RMSE of `(estimate, truth)` pairs. With zero truth variance, R² is
/// 1 for a perfect fit and 0 otherwise.
pub fn score(pairs: &[(f64, f64)]) -> Result<EstimatorScore> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let n = pairs.len() as f64;
    let mean = pairs.iter().map(|&(_, t)| t).sum::<f64>() / n;
    let ss_res: f64 = pairs.iter().map(|&(e, t)| (e - t).powi(2)).sum();
    let ss_tot: f64 = pairs.iter().map(|&(_, t)| (t - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(EstimatorScore {
        r2,
        rmse: (ss_res / n).sqrt(),
        n: pairs.len(),
    })
}

/// Scores an estimator over every full-window step of every trace.
pub fn evaluate_estimator(
    estimator: &dyn ThroughputEstimator,
    traces: &[ChannelTrace],
    config: &EstimatorConfig,
) -> Result<EstimatorScore> {
    let mut pairs = Vec::new();
    for trace in traces {
        let est = estimate_trace(estimator, trace, config, false)?;
        for (e, s) in est.iter().zip(&trace.steps) {
            if let Some(e) = e {
                pairs.push((*e, s.tp_true_mbps));
            }
        }
    }
    score(&pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_trace, synthesize_iq_grid, RadioParams, Scenario, TraceConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn harq_examples() {
        assert_eq!(harq_bler([0; 4], [100, 10, 0, 0]).unwrap(), 0.10);
        assert_eq!(harq_bler([5, 5, 5, 5], [5, 5, 10, 8]).unwrap(), 1.0);
        assert_eq!(harq_bler([7; 4], [7; 4]).unwrap(), 0.0);
        assert!(matches!(
            harq_bler([10, 0, 0, 0], [9, 0, 0, 0]),
            Err(Error::CounterRegression {
                rv: 0,
                before: 10,
                after: 9
            })
        ));
    }

    fn grid(noise: f64, prbs: u32, seed: u64) -> IqGrid {
        synthesize_iq_grid(
            noise,
            &RadioParams::default(),
            prbs,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
    }

    #[test]
    fn iq_feature_examples() {
        let cfg = EstimatorConfig::default();
        assert!(extract_iq_features(&grid(-60.0, 137, 1), &cfg).occupied_fraction < 0.05);
        assert!(extract_iq_features(&grid(-9.0, 137, 2), &cfg).occupied_fraction > 0.9);
        let zero = extract_iq_features(&IqGrid::zeros(10), &cfg);
        assert_eq!(zero.occupied_fraction, 0.0);
        assert_eq!(zero.interference_floor_dbm, cfg.floor_min_dbm);
        assert_eq!(zero.allocated_prbs, 10);
    }

    #[test]
    fn interference_floor_tracks_noise() {
        let cfg = EstimatorConfig::default();
        let f = extract_iq_features(&grid(-30.0, 137, 3), &cfg);
        assert!(
            (f.interference_floor_dbm - -30.0).abs() < 0.1,
            "{}",
            f.interference_floor_dbm
        );
    }

    #[test]
    fn iq_branch_is_monotone_in_occupancy() {
        let est = BaselineEstimator::new(EstimatorConfig::default(), ZoneModel::default()).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..=10 {
            let f = IqFeatures {
                occupied_fraction: k as f64 / 10.0,
                interference_floor_dbm: -20.0,
                allocated_prbs: 137,
            };
            let v = est.iq_branch(&f);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn kpm_plus_iq_requires_iq() {
        let est = BaselineEstimator::new(EstimatorConfig::default(), ZoneModel::default()).unwrap();
        let trace =
            generate_trace(&TraceConfig::new(Scenario::None, 1.0, 1).with_iq_every(None)).unwrap();
        let f = FeatureVector {
            kpm_window: trace.steps.iter().map(|s| s.kpm.clone()).collect(),
            iq_features: None,
            alloc_ratio: 0.5,
        };
        assert!(matches!(est.estimate(&f), Err(Error::Estimator(_))));
    }

    #[test]
    fn score_definitions() {
        let truth = [1.0, 2.0, 3.0, 4.0];
        let perfect: Vec<_> = truth.iter().map(|&t| (t, t)).collect();
        let s = score(&perfect).unwrap();
        assert_eq!((s.r2, s.rmse), (1.0, 0.0));
        let mean: Vec<_> = truth.iter().map(|&t| (2.5, t)).collect();
        assert_eq!(score(&mean).unwrap().r2, 0.0);
        assert!(matches!(score(&[]), Err(Error::EmptyEvaluation)));
    }

    #[test]
    fn external_protocol_round_trip() {
        let ext = ExternalEstimator::spawn("while read line; do echo 42.5; done").unwrap();
        let f = FeatureVector {
            kpm_window: vec![],
            iq_features: None,
            alloc_ratio: 0.5,
        };
        assert_eq!(ext.estimate(&f).unwrap(), 42.5);
        assert_eq!(ext.estimate(&f).unwrap(), 42.5);
        let bad = ExternalEstimator::spawn("while read line; do echo nope; done").unwrap();
        assert!(bad.estimate(&f).is_err());
    }
}
