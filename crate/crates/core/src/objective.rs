//! Per-split costs and the weighted latency/privacy/energy objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{SplitCandidate, SplitProfile};

/// Mixing weights for latency, privacy and energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Weights {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Result<Self> {
        let w = Weights { w1, w2, w3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(self.w1 + self.w2 + self.w3 > 0.0) {
            return Err(Error::Domain("at least one weight must be positive".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Weights {
            w1: self.w1 * k,
            w2: self.w2 * k,
            w3: self.w3 * k,
        }
    }
}

/// Inclusive upper bounds on E2E delay, leakage and UE energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub tau_max_ms: f64,
    pub rho_max: f64,
    pub e_max_j: f64,
}

impl Constraints {
    pub fn new(tau_max_ms: f64, rho_max: f64, e_max_j: f64) -> Result<Self> {
        let c = Constraints {
            tau_max_ms,
            rho_max,
            e_max_j,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_max_ms > 0.0) {
            return Err(Error::Domain(format!(
                "tau_max_ms must be positive, got {}",
                self.tau_max_ms
            )));
        }
        if !(self.rho_max > 0.0 && self.rho_max <= 1.0) {
            return Err(Error::Domain(format!(
                "rho_max must lie in (0, 1], got {}",
                self.rho_max
            )));
        }
        if !(self.e_max_j > 0.0) {
            return Err(Error::Domain(format!(
                "e_max_j must be positive, got {}",
                self.e_max_j
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub d_ue_ms: f64,
    pub d_trx_ms: f64,
    pub d_ser_ms: f64,
    pub d_e2e_ms: f64,
    pub privacy_rho: f64,
    pub energy_j: f64,
    pub f_value: f64,
}

/// Time to push the intermediate features over the uplink.
pub fn transmission_delay(data_size_mbit: f64, tp_mbps: f64) -> Result<f64> {
    if !(tp_mbps > 0.0) {
        return Err(Error::Domain(format!(
            "throughput must be positive to transmit, got {tp_mbps} Mbps"
        )));
    }
    if !(data_size_mbit >= 0.0) {
        return Err(Error::Domain(format!(
            "data size must be non-negative, got {data_size_mbit}"
        )));
    }
    Ok(data_size_mbit / tp_mbps * 1000.0)
}

/// Min-max scaler onto `[0, 1]`; a degenerate range maps everything to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    fn over(values: impl Iterator<Item = f64>) -> Self {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        MinMax { min, max }
    }

    pub fn apply(&self, x: f64) -> f64 {
        if self.max > self.min {
            (x - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationContext {
    pub tp_ref_mbps: f64,
    pub delay: MinMax,
    pub privacy: MinMax,
    pub energy: MinMax,
}

/// Profile-level min-max normalizers; E2E delay is ranged at `tp_ref_mbps`.
pub fn normalize(profile: &SplitProfile, tp_ref_mbps: f64) -> Result<NormalizationContext> {
    let delays = profile
        .candidates
        .iter()
        .map(|c| Ok(c.d_ue_ms + transmission_delay(c.data_size_mbit, tp_ref_mbps)? + c.d_ser_ms))
        .collect::<Result<Vec<f64>>>()?;
    Ok(NormalizationContext {
        tp_ref_mbps,
        delay: MinMax::over(delays.into_iter()),
        privacy: MinMax::over(profile.candidates.iter().map(|c| c.privacy_rho)),
        energy: MinMax::over(profile.candidates.iter().map(|c| c.energy_j)),
    })
}

/// Fills the cost breakdown and the weighted objective for one split at `tp_mbps`.
pub fn evaluate(
    candidate: &SplitCandidate,
    tp_mbps: f64,
    weights: &Weights,
    norms: &NormalizationContext,
) -> Result<CostBreakdown> {
    let d_trx_ms = transmission_delay(candidate.data_size_mbit, tp_mbps)?;
    Ok(breakdown(candidate, d_trx_ms, weights, norms))
}

/// Breakdown with a caller-supplied transmission delay (e.g. zero for fully
/// local execution).
pub fn breakdown(
    candidate: &SplitCandidate,
    d_trx_ms: f64,
    weights: &Weights,
    norms: &NormalizationContext,
) -> CostBreakdown {
    let d_e2e_ms = candidate.d_ue_ms + d_trx_ms + candidate.d_ser_ms;
    let f_value = weights.w1 * norms.delay.apply(d_e2e_ms)
        + weights.w2 * norms.privacy.apply(candidate.privacy_rho)
        + weights.w3 * norms.energy.apply(candidate.energy_j);
    CostBreakdown {
        d_ue_ms: candidate.d_ue_ms,
        d_trx_ms,
        d_ser_ms: candidate.d_ser_ms,
        d_e2e_ms,
        privacy_rho: candidate.privacy_rho,
        energy_j: candidate.energy_j,
        f_value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    Latency,
    Privacy,
    Energy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feasibility {
    Feasible,
    Violated(Vec<Violation>),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

pub fn check_constraints(b: &CostBreakdown, c: &Constraints) -> Feasibility {
    let mut violated = Vec::new();
    if !(b.d_e2e_ms <= c.tau_max_ms) {
        violated.push(Violation::Latency);
    }
    if !(b.privacy_rho <= c.rho_max) {
        violated.push(Violation::Privacy);
    }
    if !(b.energy_j <= c.e_max_j) {
        violated.push(Violation::Energy);
    }
    if violated.is_empty() {
        Feasibility::Feasible
    } else {
        Feasibility::Violated(violated)
    }
}

/// Index of the smallest f over `(index, f)` pairs; ties go to the smaller index.
pub fn argmin_f(scores: impl IntoIterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (l, f) in scores {
        match best {
            Some((bl, bf)) if f > bf || (f == bf && l > bl) => {}
            _ => best = Some((l, f)),
        }
    }
    best.map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(index: usize, d_ue: f64, d_ser: f64, size: f64, rho: f64, e: f64) -> SplitCandidate {
        SplitCandidate {
            index,
            d_ue_ms: d_ue,
            d_ser_ms: d_ser,
            data_size_mbit: size,
            privacy_rho: rho,
            energy_j: e,
        }
    }

    #[test]
    fn transmission_delay_examples() {
        assert!((transmission_delay(3.0, 30.0).unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(transmission_delay(0.0, 15.0).unwrap(), 0.0);
        assert!((transmission_delay(1.5, 60.0).unwrap() - 25.0).abs() < 1e-12);
        assert!(transmission_delay(1.0, 0.0).is_err());
        assert!(transmission_delay(1.0, -2.0).is_err());
    }

    #[test]
    fn weights_and_constraints_validation() {
        assert!(Weights::new(0.0, 0.0, 0.0).is_err());
        assert!(Weights::new(-1.0, 1.0, 0.0).is_err());
        assert!(Weights::new(0.0, 0.0, 2.0).is_ok());
        assert!(Constraints::new(0.0, 0.5, 1.0).is_err());
        assert!(Constraints::new(10.0, 1.5, 1.0).is_err());
        assert!(Constraints::new(10.0, 0.0, 1.0).is_err());
        assert!(Constraints::new(10.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn normalize_degenerate_and_endpoints() {
        let p = SplitProfile::new(
            "t",
            10.0,
            1,
            vec![
                cand(1, 100.0, 1.0, 2.0, 0.4, 1.0),
                cand(2, 300.0, 1.0, 1.0, 0.4, 3.0),
            ],
        )
        .unwrap();
        let n = normalize(&p, 10.0).unwrap();
        assert_eq!(n.privacy.apply(0.4), 0.0);
        assert_eq!(n.energy.apply(1.0), 0.0);
        assert_eq!(n.energy.apply(3.0), 1.0);
    }

    #[test]
    fn latency_only_prefers_smaller_payload() {
        let a = cand(1, 10.0, 5.0, 1.0, 0.5, 0.1);
        let b = cand(2, 10.0, 5.0, 4.0, 0.5, 0.1);
        let p = SplitProfile::new("t", 10.0, 1, vec![a.clone(), b.clone()]).unwrap();
        let n = normalize(&p, 100.0).unwrap();
        let w = Weights::new(1.0, 0.0, 0.0).unwrap();
        for tp in [1.0, 7.5, 30.0, 120.0] {
            let fa = evaluate(&a, tp, &w, &n).unwrap().f_value;
            let fb = evaluate(&b, tp, &w, &n).unwrap().f_value;
            assert!(fa < fb);
        }
    }

    #[test]
    fn breakdown_is_additive() {
        let p = SplitProfile::bundled_vgg16();
        let n = normalize(&p, 120.0).unwrap();
        let w = Weights::new(1.0, 1.0, 1.0).unwrap();
        for c in &p.candidates {
            let b = evaluate(c, 17.3, &w, &n).unwrap();
            assert_eq!(b.d_e2e_ms, b.d_ue_ms + b.d_trx_ms + b.d_ser_ms);
        }
    }

    #[test]
    fn constraint_bounds_are_inclusive() {
        let c = Constraints::new(100.0, 0.5, 2.0).unwrap();
        let mut b = CostBreakdown {
            d_ue_ms: 40.0,
            d_trx_ms: 50.0,
            d_ser_ms: 10.0,
            d_e2e_ms: 100.0,
            privacy_rho: 0.5,
            energy_j: 2.0,
            f_value: 0.0,
        };
        assert_eq!(check_constraints(&b, &c), Feasibility::Feasible);
        b.d_e2e_ms = 100.0 + 1e-9;
        assert_eq!(
            check_constraints(&b, &c),
            Feasibility::Violated(vec![Violation::Latency])
        );
        b.privacy_rho = 0.6;
        b.energy_j = 2.5;
        assert_eq!(
            check_constraints(&b, &c),
            Feasibility::Violated(vec![
                Violation::Latency,
                Violation::Privacy,
                Violation::Energy
            ])
        );
    }

    #[test]
    fn argmin_breaks_ties_low() {
        assert_eq!(argmin_f([(3, 1.0), (1, 1.0), (2, 2.0)]), Some(1));
        assert_eq!(argmin_f([(2, 0.5), (5, 0.5)]), Some(2));
        assert_eq!(argmin_f(std::iter::empty()), None);
    }
}
