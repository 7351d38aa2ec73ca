//! Uplink channel model under interference.
//!
//! Noise power walks the link through four regimes. In the clean regime the
//! UE gets its full share of peak throughput. Under power control the gNB
//! raises UE transmit power to hold PUSCH SINR, which keeps throughput flat
//! for a loaded UE. Once power headroom is gone the gNB lowers the UL MCS to
//! hold the BLER target. Past that the BLER blows up and only HARQ
//! retransmissions still deliver data.
//!
//! A lightly loaded UE only occupies a few clean PRBs at the band edge. Its
//! KPMs stay unchanged under power control even though the full-band capacity
//! it could reach is already dropping.

mod io;
mod iq;
mod scenario;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_trace, write_trace, TraceFiles};
pub use iq::{
    synthesize_iq_grid, IqCapture, IqGrid, IQ_PLANES, IQ_SUBCARRIERS, IQ_SYMBOLS, TOTAL_PRBS,
};
pub use scenario::{
    generate_trace, ChannelTrace, Scenario, ScenarioParams, TraceConfig, TraceStep,
};

/// Sample cadence of the KPM stream, seconds.
pub const STEP_S: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    Negligible,
    PowerControl,
    McsControl,
    Ooc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Load {
    High,
    Low,
}

impl std::str::FromStr for Load {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "high" => Ok(Load::High),
            "low" => Ok(Load::Low),
            _ => Err(Error::Unknown {
                kind: "load",
                name: s.to_string(),
            }),
        }
    }
}

impl std::fmt::Display for Load {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Load::High => "high",
            Load::Low => "low",
        })
    }
}

/// Piecewise link-adaptation model. Defaults are synthetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneModel {
    /// Entry points of power control, MCS control and out-of-control.
    pub noise_thresholds_dbm: [f64; 3],
    pub tp_peak_mbps: f64,
    pub tpc_slope_db_per_db: f64,
    pub mcs_floor: u32,
    pub mcs_ceiling: u32,
    pub target_bler: f64,
    /// Fraction of clean capacity left to a lightly loaded UE at the end of
    /// the power-control zone.
    pub low_load_pc_floor: f64,
    /// BLER right after entering the out-of-control zone.
    pub ooc_entry_bler: f64,
    /// e-folding width (dB) of the residual delivery past the last threshold.
    pub ooc_decay_db: f64,
    /// Beyond `last threshold + margin` nothing gets through.
    pub hard_zero_margin_db: f64,
}

impl Default for ZoneModel {
    fn default() -> Self {
        ZoneModel {
            noise_thresholds_dbm: [-48.0, -33.0, -14.0],
            tp_peak_mbps: 120.0,
            tpc_slope_db_per_db: 1.0,
            mcs_floor: 2,
            mcs_ceiling: 27,
            target_bler: 0.1,
            low_load_pc_floor: 0.35,
            ooc_entry_bler: 0.95,
            ooc_decay_db: 3.0,
            hard_zero_margin_db: 20.0,
        }
    }
}

impl ZoneModel {
    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.noise_thresholds_dbm;
        if !(a < b && b < c) {
            return Err(Error::Domain(
                "zone thresholds must be strictly ascending".into(),
            ));
        }
        if !(self.target_bler > 0.0 && self.target_bler < 1.0) {
            return Err(Error::Domain(format!(
                "target_bler must lie in (0, 1), got {}",
                self.target_bler
            )));
        }
        if !(self.tp_peak_mbps > 0.0) {
            return Err(Error::Domain("tp_peak_mbps must be positive".into()));
        }
        if self.mcs_floor == 0 || self.mcs_floor > self.mcs_ceiling {
            return Err(Error::Domain("need 0 < mcs_floor <= mcs_ceiling".into()));
        }
        if !(self.low_load_pc_floor > 0.0 && self.low_load_pc_floor <= 1.0) {
            return Err(Error::Domain("low_load_pc_floor must lie in (0, 1]".into()));
        }
        if !(self.ooc_entry_bler >= self.target_bler && self.ooc_entry_bler < 1.0) {
            return Err(Error::Domain(
                "ooc_entry_bler must lie in [target_bler, 1)".into(),
            ));
        }
        if !(self.ooc_decay_db > 0.0 && self.hard_zero_margin_db > 0.0) {
            return Err(Error::Domain(
                "ooc decay and hard-zero margin must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Position inside the zone containing `noise_dbm`, 0 at its lower edge
    /// and 1 at its upper edge (0 for the unbounded outer zones).
    fn zone_fraction(&self, noise_dbm: f64) -> f64 {
        let [t0, t1, t2] = self.noise_thresholds_dbm;
        match zone_of(noise_dbm, self) {
            Zone::PowerControl => (noise_dbm - t0) / (t1 - t0),
            Zone::McsControl => (noise_dbm - t1) / (t2 - t1),
            _ => 0.0,
        }
    }

    /// Continuous MCS the link adaptation settles on.
    pub fn mcs_effective(&self, noise_dbm: f64) -> f64 {
        let (lo, hi) = (self.mcs_floor as f64, self.mcs_ceiling as f64);
        match zone_of(noise_dbm, self) {
            Zone::Negligible | Zone::PowerControl => hi,
            Zone::McsControl => hi - (hi - lo) * self.zone_fraction(noise_dbm),
            Zone::Ooc => lo,
        }
    }

    /// First-transmission block error probability.
    pub fn bler(&self, noise_dbm: f64) -> f64 {
        match zone_of(noise_dbm, self) {
            Zone::Ooc => {
                let depth = noise_dbm - self.noise_thresholds_dbm[2];
                1.0 - (1.0 - self.ooc_entry_bler) * (-depth / self.ooc_decay_db).exp()
            }
            _ => self.target_bler,
        }
    }

    /// Share of blocks delivered within four redundancy versions, relative to
    /// the target operating point.
    pub fn harq_delivery(&self, bler: f64) -> f64 {
        (1.0 - bler.powi(4)) / (1.0 - self.target_bler.powi(4))
    }

    /// Transmit-power boost commanded by TPC, dB.
    pub fn tpc_db(&self, noise_dbm: f64, load: Load) -> f64 {
        let [t0, t1, _] = self.noise_thresholds_dbm;
        let headroom = self.tpc_slope_db_per_db * (t1 - t0);
        match (zone_of(noise_dbm, self), load) {
            (Zone::Negligible, _) => 0.0,
            (Zone::PowerControl, Load::High) => self.tpc_slope_db_per_db * (noise_dbm - t0),
            (Zone::PowerControl, Load::Low) => 0.0,
            _ => headroom,
        }
    }
}

/// Zone of a noise level; a threshold value belongs to the worse zone.
pub fn zone_of(noise_dbm: f64, model: &ZoneModel) -> Zone {
    let [t0, t1, t2] = model.noise_thresholds_dbm;
    if noise_dbm >= t2 {
        Zone::Ooc
    } else if noise_dbm >= t1 {
        Zone::McsControl
    } else if noise_dbm >= t0 {
        Zone::PowerControl
    } else {
        Zone::Negligible
    }
}

/// Ground-truth maximum achievable UL throughput, Mbps.
pub fn true_throughput(noise_dbm: f64, model: &ZoneModel, load: Load, alloc_ratio: f64) -> f64 {
    let base = model.tp_peak_mbps * alloc_ratio;
    let low_pc = match load {
        Load::High => 1.0,
        Load::Low => model.low_load_pc_floor,
    };
    let mcs_scale = model.mcs_effective(noise_dbm) / model.mcs_ceiling as f64;
    match zone_of(noise_dbm, model) {
        Zone::Negligible => base,
        Zone::PowerControl => match load {
            Load::High => base,
            Load::Low => base * (1.0 - (1.0 - low_pc) * model.zone_fraction(noise_dbm)),
        },
        Zone::McsControl => base * low_pc * mcs_scale,
        Zone::Ooc => {
            if noise_dbm >= model.noise_thresholds_dbm[2] + model.hard_zero_margin_db {
                0.0
            } else {
                base * low_pc * mcs_scale * model.harq_delivery(model.bler(noise_dbm))
            }
        }
    }
}

/// Cumulative transmission counts per redundancy version 0..3.
pub type HarqCounters = [u64; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpmSample {
    pub t_s: f64,
    pub rsrp_dbm: f64,
    pub rsrq_db: f64,
    pub sinr_db: f64,
    pub p_a_db: f64,
    pub ri: u32,
    pub cqi: u32,
    pub cri: u32,
    pub pusch_sinr_db: f64,
    pub tpc_db: f64,
    pub ul_mcs: u32,
    pub ul_bler: f64,
    pub harq_counts: HarqCounters,
}

/// Radio parameters shared by KPM and IQ synthesis. Synthetic defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Per-RE thermal noise power, dBm.
    pub thermal_floor_dbm: f64,
    /// Per-RE received UE signal power on allocated PRBs, dBm.
    pub ue_re_power_dbm: f64,
    pub pusch_sinr_target_db: f64,
    /// PRBs granted to a lightly loaded UE.
    pub low_load_prbs: u32,
    /// New transport blocks per 0.1 s step.
    pub tbs_per_step_high: u64,
    pub tbs_per_step_low: u64,
    /// Std-dev of the additive noise on analog KPMs, dB.
    pub kpm_jitter_db: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            thermal_floor_dbm: -65.0,
            ue_re_power_dbm: -35.0,
            pusch_sinr_target_db: 22.0,
            low_load_prbs: 10,
            tbs_per_step_high: 200,
            tbs_per_step_low: 20,
            kpm_jitter_db: 0.5,
        }
    }
}

impl RadioParams {
    pub fn allocated_prbs(&self, load: Load, alloc_ratio: f64) -> u32 {
        match load {
            Load::High => {
                ((TOTAL_PRBS as f64 * alloc_ratio).round() as u32).clamp(1, TOTAL_PRBS as u32)
            }
            Load::Low => self.low_load_prbs.min(TOTAL_PRBS as u32),
        }
    }

    pub fn tbs_per_step(&self, load: Load) -> u64 {
        match load {
            Load::High => self.tbs_per_step_high,
            Load::Low => self.tbs_per_step_low,
        }
    }
}

/// Draws one KPM sample. `prev_counts` are the HARQ counters of the previous
/// sample; the returned counters extend them.
pub fn synthesize_kpms<R: Rng + ?Sized>(
    t_s: f64,
    noise_dbm: f64,
    model: &ZoneModel,
    radio: &RadioParams,
    load: Load,
    prev_counts: HarqCounters,
    rng: &mut R,
) -> KpmSample {
    let jitter = Normal::new(0.0, radio.kpm_jitter_db.max(0.0)).expect("finite std-dev");
    let zone = zone_of(noise_dbm, model);

    let sinr_drop = match zone {
        Zone::McsControl | Zone::Ooc => noise_dbm - model.noise_thresholds_dbm[1],
        _ => 0.0,
    };
    let ul_mcs = match zone {
        Zone::Negligible | Zone::PowerControl => model.mcs_ceiling,
        Zone::McsControl => model.mcs_effective(noise_dbm).round() as u32,
        Zone::Ooc => model.mcs_floor,
    };

    let n0 = radio.tbs_per_step(load);
    let p = model.bler(noise_dbm).clamp(0.0, 1.0);
    let d1 = draw_binomial(n0, p, rng);
    let d2 = draw_binomial(d1, p, rng);
    let d3 = draw_binomial(d2, p, rng);
    let harq_counts = [
        prev_counts[0] + n0,
        prev_counts[1] + d1,
        prev_counts[2] + d2,
        prev_counts[3] + d3,
    ];
    let ul_bler = if n0 > 0 { d1 as f64 / n0 as f64 } else { 0.0 };

    KpmSample {
        t_s,
        rsrp_dbm: -85.0 + jitter.sample(rng),
        rsrq_db: -10.8 + 0.5 * jitter.sample(rng),
        sinr_db: 24.0 + jitter.sample(rng),
        p_a_db: 0.2 * jitter.sample(rng),
        ri: 2,
        cqi: 13,
        cri: 0,
        pusch_sinr_db: radio.pusch_sinr_target_db - sinr_drop + jitter.sample(rng),
        tpc_db: model.tpc_db(noise_dbm, load) + 0.4 * jitter.sample(rng),
        ul_mcs,
        ul_bler,
        harq_counts,
    }
}

fn draw_binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}
