//! Interference scenarios and trace generation.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    synthesize_kpms, true_throughput, zone_of, IqCapture, KpmSample, Load, RadioParams, Zone,
    ZoneModel, STEP_S,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// No interference.
    None,
    /// An external signal generator jamming the uplink.
    Jamming,
    /// Co-channel interference from a UE in a neighbouring cell.
    UeToBs,
    /// TDD pattern mismatch with a downlink-heavy neighbouring gNB.
    BsToBs,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::None,
        Scenario::Jamming,
        Scenario::UeToBs,
        Scenario::BsToBs,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::None => "none",
            Scenario::Jamming => "jamming",
            Scenario::UeToBs => "ue_to_bs",
            Scenario::BsToBs => "bs_to_bs",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "scenario",
                name: s.to_string(),
            })
    }
}

/// Shape of the interference processes, in 0.1 s steps and dBm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub background_dbm: f64,
    pub background_jitter_db: f64,
    pub burst_jitter_db: f64,

    /// Quiet time before the first jamming episode, `[min, max]` steps.
    pub jam_first_gap_steps: [u32; 2],
    pub jam_gap_steps: [u32; 2],
    pub jam_ramp_steps: u32,
    pub jam_hold_steps: [u32; 2],
    /// Episode peak level range. The first episode always reaches the top.
    pub jam_peak_dbm: [f64; 2],

    /// Per-step probability that a co-channel burst starts / stops.
    pub cci_start_prob: f64,
    pub cci_stop_prob: f64,
    pub cci_level_dbm: [f64; 2],

    /// TDD mismatch: the first `tdd_degraded_steps` of every
    /// `tdd_period_steps` overlap the aggressor's downlink.
    pub tdd_period_steps: u32,
    pub tdd_degraded_steps: u32,
    pub tdd_level_dbm: f64,
    pub tdd_level_spread_db: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            background_dbm: -62.0,
            background_jitter_db: 0.5,
            burst_jitter_db: 0.8,
            jam_first_gap_steps: [10, 30],
            jam_gap_steps: [60, 140],
            jam_ramp_steps: 25,
            jam_hold_steps: [20, 50],
            jam_peak_dbm: [-24.0, -14.0],
            cci_start_prob: 0.08,
            cci_stop_prob: 0.16,
            cci_level_dbm: [-21.0, -14.5],
            tdd_period_steps: 20,
            tdd_degraded_steps: 10,
            tdd_level_dbm: -15.8,
            tdd_level_spread_db: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub scenario: Scenario,
    pub duration_s: f64,
    pub seed: u64,
    pub load: Load,
    /// Share of the carrier the UE could use, `(0, 1]`.
    pub alloc_ratio: f64,
    /// Attach an IQ capture every `n` steps; `None` disables IQ.
    pub iq_every: Option<u32>,
    pub model: ZoneModel,
    pub radio: RadioParams,
    pub params: ScenarioParams,
}

impl TraceConfig {
    pub fn new(scenario: Scenario, duration_s: f64, seed: u64) -> Self {
        TraceConfig {
            scenario,
            duration_s,
            seed,
            load: Load::High,
            alloc_ratio: 0.5,
            iq_every: Some(1),
            model: ZoneModel::default(),
            radio: RadioParams::default(),
            params: ScenarioParams::default(),
        }
    }

    pub fn with_load(mut self, load: Load) -> Self {
        self.load = load;
        self
    }

    pub fn with_iq_every(mut self, every: Option<u32>) -> Self {
        self.iq_every = every;
        self
    }

    pub fn num_steps(&self) -> usize {
        (self.duration_s / STEP_S).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub t_s: f64,
    pub noise_dbm: f64,
    pub tp_true_mbps: f64,
    pub kpm: KpmSample,
    pub iq: Option<IqCapture>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace {
    pub config: TraceConfig,
    pub steps: Vec<TraceStep>,
}

impl ChannelTrace {
    pub fn scenario(&self) -> Scenario {
        self.config.scenario
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn zone_at(&self, i: usize) -> Zone {
        zone_of(self.steps[i].noise_dbm, &self.config.model)
    }

    /// The clean-channel throughput this trace's UE would see.
    pub fn clean_throughput(&self) -> f64 {
        self.config.model.tp_peak_mbps * self.config.alloc_ratio
    }

    /// Index of the latest step at or before `i` carrying an IQ capture.
    pub fn latest_iq(&self, i: usize) -> Option<usize> {
        (0..=i.min(self.steps.len().saturating_sub(1)))
            .rev()
            .find(|&j| self.steps[j].iq.is_some())
    }
}

fn uniform_u32<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [u32; 2]) -> u32 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn uniform_f64<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Noise level per step for the configured scenario.
fn noise_schedule<R: Rng + ?Sized>(cfg: &TraceConfig, rng: &mut R) -> Vec<f64> {
    let n = cfg.num_steps();
    let p = &cfg.params;
    let bg_jitter = Normal::new(0.0, p.background_jitter_db).expect("finite jitter");
    let burst_jitter = Normal::new(0.0, p.burst_jitter_db).expect("finite jitter");
    // Clean steps never leave the negligible zone.
    let bg_cap = cfg.model.noise_thresholds_dbm[0] - 1.0;
    let background = |rng: &mut R| (p.background_dbm + bg_jitter.sample(rng)).min(bg_cap);

    let mut out = Vec::with_capacity(n);
    match cfg.scenario {
        Scenario::None => {
            for _ in 0..n {
                out.push(background(rng));
            }
        }
        Scenario::Jamming => {
            let mut first = true;
            while out.len() < n {
                let gap = uniform_u32(
                    rng,
                    if first {
                        p.jam_first_gap_steps
                    } else {
                        p.jam_gap_steps
                    },
                );
                for _ in 0..gap {
                    out.push(background(rng));
                }
                let peak = if first {
                    p.jam_peak_dbm[1]
                } else {
                    uniform_f64(rng, p.jam_peak_dbm)
                };
                let hold = uniform_u32(rng, p.jam_hold_steps);
                let ramp = p.jam_ramp_steps.max(1);
                let start = p.background_dbm;
                for k in 1..=ramp {
                    let level = start + (peak - start) * k as f64 / ramp as f64;
                    out.push(level + burst_jitter.sample(rng));
                }
                for _ in 0..hold {
                    out.push(peak + burst_jitter.sample(rng));
                }
                for k in (0..ramp).rev() {
                    let level = start + (peak - start) * k as f64 / ramp as f64;
                    out.push(level + burst_jitter.sample(rng));
                }
                first = false;
            }
        }
        Scenario::UeToBs => {
            let mut level: Option<f64> = None;
            for _ in 0..n {
                level = match level {
                    None if rng.random_bool(p.cci_start_prob.clamp(0.0, 1.0)) => {
                        Some(uniform_f64(rng, p.cci_level_dbm))
                    }
                    Some(_) if rng.random_bool(p.cci_stop_prob.clamp(0.0, 1.0)) => None,
                    other => other,
                };
                out.push(match level {
                    Some(l) => l + burst_jitter.sample(rng),
                    None => background(rng),
                });
            }
        }
        Scenario::BsToBs => {
            let period = p.tdd_period_steps.max(1) as usize;
            let degraded = (p.tdd_degraded_steps as usize).min(period);
            let mut level = p.tdd_level_dbm;
            for i in 0..n {
                let phase = i % period;
                if phase == 0 {
                    level = p.tdd_level_dbm
                        + uniform_f64(rng, [-p.tdd_level_spread_db, p.tdd_level_spread_db]);
                }
                out.push(if phase < degraded {
                    level + burst_jitter.sample(rng)
                } else {
                    background(rng)
                });
            }
        }
    }
    out.truncate(n);
    out
}

/// Deterministic in the whole config: every random draw comes from one
/// ChaCha stream seeded with `cfg.seed`.
pub fn generate_trace(cfg: &TraceConfig) -> Result<ChannelTrace> {
    if !(cfg.duration_s > 0.0) || !cfg.duration_s.is_finite() {
        return Err(Error::Domain(format!(
            "duration must be positive, got {}",
            cfg.duration_s
        )));
    }
    if !(cfg.alloc_ratio > 0.0 && cfg.alloc_ratio <= 1.0) {
        return Err(Error::Domain(format!(
            "alloc_ratio must lie in (0, 1], got {}",
            cfg.alloc_ratio
        )));
    }
    cfg.model.validate()?;
    if cfg.num_steps() == 0 {
        return Err(Error::Domain("duration shorter than one 0.1 s step".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let schedule = noise_schedule(cfg, &mut rng);
    let allocated = cfg.radio.allocated_prbs(cfg.load, cfg.alloc_ratio);

    let mut steps = Vec::with_capacity(schedule.len());
    let mut counts = [0u64; 4];
    for (i, &noise_dbm) in schedule.iter().enumerate() {
        let t_s = i as f64 / 10.0;
        let kpm = synthesize_kpms(
            t_s, noise_dbm, &cfg.model, &cfg.radio, cfg.load, counts, &mut rng,
        );
        counts = kpm.harq_counts;
        let iq = match cfg.iq_every {
            Some(every) if every > 0 && i % every as usize == 0 => Some(IqCapture::Seeded {
                seed: rng.next_u64(),
                noise_dbm,
                allocated_prbs: allocated,
            }),
            _ => None,
        };
        steps.push(TraceStep {
            t_s,
            noise_dbm,
            tp_true_mbps: true_throughput(noise_dbm, &cfg.model, cfg.load, cfg.alloc_ratio),
            kpm,
            iq,
        });
    }
    Ok(ChannelTrace {
        config: cfg.clone(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::harq_bler;

    #[test]
    fn clean_scenario_is_flat() {
        let t = generate_trace(&TraceConfig::new(Scenario::None, 10.0, 1)).unwrap();
        assert_eq!(t.len(), 100);
        let peak = t.clean_throughput();
        for (i, s) in t.steps.iter().enumerate() {
            assert_eq!(t.zone_at(i), Zone::Negligible);
            assert_eq!(s.tp_true_mbps, peak);
        }
    }

    #[test]
    fn timestamps_are_strictly_increasing() {
        let t = generate_trace(&TraceConfig::new(Scenario::UeToBs, 5.0, 2)).unwrap();
        for w in t.steps.windows(2) {
            assert!(w[1].t_s > w[0].t_s);
            assert!((w[1].t_s - w[0].t_s - STEP_S).abs() < 1e-9);
        }
    }

    #[test]
    fn jamming_reaches_out_of_control() {
        let t = generate_trace(&TraceConfig::new(Scenario::Jamming, 60.0, 7)).unwrap();
        let peak = t.config.model.tp_peak_mbps;
        assert!(
            (0..t.len()).any(|i| t.zone_at(i) == Zone::Ooc && t.steps[i].tp_true_mbps < 0.1 * peak)
        );
    }

    #[test]
    fn tdd_mismatch_follows_the_slot_pattern() {
        let cfg = TraceConfig::new(Scenario::BsToBs, 20.0, 3);
        let t = generate_trace(&cfg).unwrap();
        let period = cfg.params.tdd_period_steps as usize;
        let degraded = cfg.params.tdd_degraded_steps as usize;
        let clean = t.clean_throughput();
        for (i, s) in t.steps.iter().enumerate() {
            if i % period < degraded {
                assert!(s.tp_true_mbps < 0.8 * clean, "step {i}: {}", s.tp_true_mbps);
            } else {
                assert_eq!(s.tp_true_mbps, clean);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for sc in Scenario::ALL {
            let cfg = TraceConfig::new(sc, 8.0, 42);
            assert_eq!(generate_trace(&cfg).unwrap(), generate_trace(&cfg).unwrap());
        }
        let a = generate_trace(&TraceConfig::new(Scenario::Jamming, 8.0, 1)).unwrap();
        let b = generate_trace(&TraceConfig::new(Scenario::Jamming, 8.0, 2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn harq_ratio_tracks_reported_bler() {
        for sc in [Scenario::Jamming, Scenario::BsToBs] {
            let t = generate_trace(&TraceConfig::new(sc, 30.0, 5).with_iq_every(None)).unwrap();
            for w in t.steps.windows(5) {
                let first = w[0].kpm.harq_counts;
                let last = w[4].kpm.harq_counts;
                if last[0] - first[0] < 100 {
                    continue;
                }
                let ratio = harq_bler(first, last).unwrap();
                let mean = w[1..].iter().map(|s| s.kpm.ul_bler).sum::<f64>() / 4.0;
                assert!((ratio - mean).abs() <= 0.05, "{ratio} vs {mean}");
            }
        }
    }

    #[test]
    fn counters_never_decrease() {
        let t = generate_trace(&TraceConfig::new(Scenario::Jamming, 30.0, 9)).unwrap();
        for w in t.steps.windows(2) {
            for rv in 0..4 {
                assert!(w[1].kpm.harq_counts[rv] >= w[0].kpm.harq_counts[rv]);
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate_trace(&TraceConfig::new(Scenario::None, 0.0, 1)).is_err());
        let mut cfg = TraceConfig::new(Scenario::None, 1.0, 1);
        cfg.alloc_ratio = 0.0;
        assert!(generate_trace(&cfg).is_err());
        assert!("bogus".parse::<Scenario>().is_err());
        assert_eq!("ue_to_bs".parse::<Scenario>().unwrap(), Scenario::UeToBs);
    }
}
