//! Per-split profiles of a partitioned DNN.
//!
//! A profile lists every candidate splitting point `l = 1..L` with the head
//! compute delay on the UE, the tail delay on the edge server, the size of the
//! intermediate features that cross the uplink, the distance-correlation
//! leakage of those features, and the UE energy spent on the head.
//!
//! Text format (UTF-8, LF):
//!
//! ```text
//! # free-form note lines
//! model_name,num_splits,tdp_watts,ue_threads
//! vgg16,43,15,2
//! index,d_ue_ms,d_ser_ms,data_size_mbit,privacy_rho,energy_j
//! 1,7.2,9.7,102.76,0.874,0.054
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::sig6;

const HEADER_FIELDS: &str = "model_name,num_splits,tdp_watts,ue_threads";
const CANDIDATE_FIELDS: &str = "index,d_ue_ms,d_ser_ms,data_size_mbit,privacy_rho,energy_j";

const BUNDLED_VGG16: &str = include_str!("../data/vgg16.profile");

/// Relative tolerance for the TDP self-consistency check.
pub const ENERGY_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    /// 1-based split index.
    pub index: usize,
    pub d_ue_ms: f64,
    pub d_ser_ms: f64,
    pub data_size_mbit: f64,
    pub privacy_rho: f64,
    pub energy_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitProfile {
    pub model_name: String,
    pub num_splits: usize,
    pub candidates: Vec<SplitCandidate>,
    pub tdp_watts: f64,
    pub ue_threads: u32,
    /// Comment lines carried through load/save unchanged.
    #[serde(default)]
    pub notes: Vec<String>,
}

/// UE energy for running the head: per-thread TDP times wall time.
pub fn energy_from_delay(d_ue_ms: f64, tdp_watts: f64, ue_threads: u32) -> Result<f64> {
    if !(tdp_watts > 0.0) || !tdp_watts.is_finite() {
        return Err(Error::Domain(format!(
            "tdp_watts must be positive, got {tdp_watts}"
        )));
    }
    if ue_threads == 0 {
        return Err(Error::Domain("ue_threads must be at least 1".into()));
    }
    if !(d_ue_ms >= 0.0) {
        return Err(Error::Domain(format!(
            "d_ue_ms must be non-negative, got {d_ue_ms}"
        )));
    }
    Ok(tdp_watts / ue_threads as f64 * (d_ue_ms / 1000.0))
}

impl SplitProfile {
    /// Builds a profile and checks every invariant.
    pub fn new(
        model_name: impl Into<String>,
        tdp_watts: f64,
        ue_threads: u32,
        candidates: Vec<SplitCandidate>,
    ) -> Result<Self> {
        let profile = SplitProfile {
            model_name: model_name.into(),
            num_splits: candidates.len(),
            candidates,
            tdp_watts,
            ue_threads,
            notes: Vec::new(),
        };
        profile.validate()?;
        Ok(profile)
    }

    /// The 43-point VGG16-shaped profile shipped with the crate.
    pub fn bundled_vgg16() -> Self {
        Self::parse(BUNDLED_VGG16).expect("bundled profile is valid")
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Candidate at 1-based index `l`.
    pub fn candidate(&self, l: usize) -> Option<&SplitCandidate> {
        l.checked_sub(1).and_then(|i| self.candidates.get(i))
    }

    /// Checks the structural invariants. The first violation wins.
    pub fn validate(&self) -> Result<()> {
        if self.num_splits == 0 {
            return Err(Error::InvalidProfile {
                index: 0,
                msg: "num_splits must be at least 1".into(),
            });
        }
        if self.candidates.len() != self.num_splits {
            return Err(Error::InvalidProfile {
                index: 0,
                msg: format!(
                    "num_splits is {} but {} candidates are listed",
                    self.num_splits,
                    self.candidates.len()
                ),
            });
        }
        if !(self.tdp_watts > 0.0) || !self.tdp_watts.is_finite() {
            return Err(Error::InvalidProfile {
                index: 0,
                msg: format!("tdp_watts must be positive, got {}", self.tdp_watts),
            });
        }
        if self.ue_threads == 0 {
            return Err(Error::InvalidProfile {
                index: 0,
                msg: "ue_threads must be at least 1".into(),
            });
        }

        let mut prev: Option<&SplitCandidate> = None;
        for (pos, c) in self.candidates.iter().enumerate() {
            let bad = |msg: String| Error::InvalidProfile {
                index: c.index,
                msg,
            };
            if c.index != pos + 1 {
                return Err(bad(format!(
                    "expected index {}, indices must be contiguous from 1",
                    pos + 1
                )));
            }
            for (name, v) in [
                ("d_ue_ms", c.d_ue_ms),
                ("d_ser_ms", c.d_ser_ms),
                ("data_size_mbit", c.data_size_mbit),
                ("energy_j", c.energy_j),
            ] {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(bad(format!(
                        "{name} must be finite and non-negative, got {v}"
                    )));
                }
            }
            if !(0.0..=1.0).contains(&c.privacy_rho) {
                return Err(bad(format!(
                    "privacy_rho must lie in [0, 1], got {}",
                    c.privacy_rho
                )));
            }
            if let Some(p) = prev {
                if c.d_ue_ms < p.d_ue_ms {
                    return Err(bad(format!(
                        "d_ue_ms decreases from {} to {}",
                        p.d_ue_ms, c.d_ue_ms
                    )));
                }
                if c.energy_j < p.energy_j {
                    return Err(bad(format!(
                        "energy_j decreases from {} to {}",
                        p.energy_j, c.energy_j
                    )));
                }
            }
            prev = Some(c);
        }
        Ok(())
    }

    /// Indices whose stored energy disagrees with the TDP model.
    pub fn energy_inconsistencies(&self) -> Vec<usize> {
        self.candidates
            .iter()
            .filter(|c| {
                let model = energy_from_delay(c.d_ue_ms, self.tdp_watts, self.ue_threads)
                    .unwrap_or(f64::NAN);
                let scale = model.abs().max(c.energy_j.abs());
                scale > 0.0 && !((model - c.energy_j).abs() <= ENERGY_REL_TOL * scale)
            })
            .map(|c| c.index)
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut notes = Vec::new();
        let mut records = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if let Some(note) = line.strip_prefix('#') {
                notes.push(note.trim().to_string());
            } else if !line.trim().is_empty() {
                records.push((i + 1, line.trim()));
            }
        }

        let mut it = records.into_iter();
        let (ln, header) = it.next().ok_or_else(|| Error::parse(1, "empty profile"))?;
        if header != HEADER_FIELDS {
            return Err(Error::parse(
                ln,
                format!("expected header '{HEADER_FIELDS}'"),
            ));
        }
        let (ln, meta) = it
            .next()
            .ok_or_else(|| Error::parse(ln + 1, "missing header record"))?;
        let fields: Vec<&str> = meta.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                ln,
                format!("header record needs 4 fields, got {}", fields.len()),
            ));
        }
        let model_name = fields[0].to_string();
        let num_splits: usize = parse_field(ln, "num_splits", fields[1])?;
        let tdp_watts: f64 = parse_field(ln, "tdp_watts", fields[2])?;
        let ue_threads: u32 = parse_field(ln, "ue_threads", fields[3])?;

        let (ln, cols) = it
            .next()
            .ok_or_else(|| Error::parse(ln + 1, "missing candidate column header"))?;
        if cols != CANDIDATE_FIELDS {
            return Err(Error::parse(
                ln,
                format!("expected columns '{CANDIDATE_FIELDS}'"),
            ));
        }

        let mut candidates = Vec::new();
        for (ln, row) in it {
            let f: Vec<&str> = row.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(Error::parse(
                    ln,
                    format!("candidate record needs 6 fields, got {}", f.len()),
                ));
            }
            candidates.push(SplitCandidate {
                index: parse_field(ln, "index", f[0])?,
                d_ue_ms: parse_field(ln, "d_ue_ms", f[1])?,
                d_ser_ms: parse_field(ln, "d_ser_ms", f[2])?,
                data_size_mbit: parse_field(ln, "data_size_mbit", f[3])?,
                privacy_rho: parse_field(ln, "privacy_rho", f[4])?,
                energy_j: parse_field(ln, "energy_j", f[5])?,
            });
        }

        let profile = SplitProfile {
            model_name,
            num_splits,
            candidates,
            tdp_watts,
            ue_threads,
            notes,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Canonical text: 6 significant digits, LF endings.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        for note in &self.notes {
            let _ = writeln!(out, "# {note}");
        }
        let _ = writeln!(out, "{HEADER_FIELDS}");
        let _ = writeln!(
            out,
            "{},{},{},{}",
            self.model_name,
            self.num_splits,
            sig6(self.tdp_watts),
            self.ue_threads
        );
        let _ = writeln!(out, "{CANDIDATE_FIELDS}");
        for c in &self.candidates {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.index,
                sig6(c.d_ue_ms),
                sig6(c.d_ser_ms),
                sig6(c.data_size_mbit),
                sig6(c.privacy_rho),
                sig6(c.energy_j)
            );
        }
        out
    }
}

fn parse_field<T: std::str::FromStr>(line: usize, name: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::parse(line, format!("cannot parse {name} from '{raw}'")))
}

pub fn load_profile(path: impl AsRef<Path>) -> Result<SplitProfile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SplitProfile::parse(&text)
}

pub fn save_profile(profile: &SplitProfile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, profile.to_canonical_string()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeCheck {
    /// Leakage falls after its first peak and bottoms out in the last quartile.
    PrivacyDecline,
    /// Energy is lowest at the shallowest splits.
    EnergyEarlyMinimum,
    /// Feature size has interior local minima (pooling layers).
    DataSizeDrops,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeFinding {
    pub check: ShapeCheck,
    pub passed: bool,
    pub detail: String,
}

/// Slack allowed for non-monotone wiggles in the leakage curve.
pub const PRIVACY_WIGGLE: f64 = 0.03;

/// Advisory checks that a profile has the curve shapes expected of a deep
/// convolutional network. Never fails; callers decide what to do.
pub fn shape_findings(profile: &SplitProfile) -> Vec<ShapeFinding> {
    let rho: Vec<f64> = profile.candidates.iter().map(|c| c.privacy_rho).collect();
    let energy: Vec<f64> = profile.candidates.iter().map(|c| c.energy_j).collect();
    let size: Vec<f64> = profile
        .candidates
        .iter()
        .map(|c| c.data_size_mbit)
        .collect();
    let n = rho.len();

    // (a) privacy
    let peak = (0..n)
        .find(|&i| (i == 0 || rho[i] >= rho[i - 1]) && (i + 1 == n || rho[i] > rho[i + 1]))
        .unwrap_or(0);
    let tail = &rho[peak..];
    let mut rises = false;
    let mut running_min = f64::INFINITY;
    for &v in tail {
        if v > running_min + PRIVACY_WIGGLE {
            rises = true;
        }
        running_min = running_min.min(v);
    }
    let min_val = rho.iter().copied().fold(f64::INFINITY, f64::min);
    let last_quartile_start = (3 * n) / 4;
    let min_in_tail = rho[last_quartile_start..].contains(&min_val);
    let privacy_ok = n >= 2 && tail.len() >= 2 && !rises && min_in_tail;
    let privacy = ShapeFinding {
        check: ShapeCheck::PrivacyDecline,
        passed: privacy_ok,
        detail: format!(
            "first peak at l={}, min {:.3} {} last quartile, {}",
            peak + 1,
            min_val,
            if min_in_tail { "within" } else { "outside" },
            if rises {
                "rises after peak"
            } else {
                "non-increasing after peak"
            }
        ),
    };

    // (b) energy
    let e_min = energy.iter().copied().fold(f64::INFINITY, f64::min);
    let first_min = energy
        .iter()
        .position(|&v| v == e_min)
        .map(|i| i + 1)
        .unwrap_or(0);
    let early_window = 3.min(n);
    let energy_ok = n > 0 && first_min <= early_window;
    let energy_f = ShapeFinding {
        check: ShapeCheck::EnergyEarlyMinimum,
        passed: energy_ok,
        detail: format!("energy minimum {e_min} first attained at l={first_min}"),
    };

    // (c) data size
    let drops: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&i| size[i] < size[i - 1] && size[i] < size[i + 1])
        .map(|i| i + 1)
        .collect();
    let size_f = ShapeFinding {
        check: ShapeCheck::DataSizeDrops,
        passed: !drops.is_empty(),
        detail: format!("local size minima at {drops:?}"),
    };

    vec![privacy, energy_f, size_f]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(index: usize, d_ue: f64, size: f64, rho: f64, e: f64) -> SplitCandidate {
        SplitCandidate {
            index,
            d_ue_ms: d_ue,
            d_ser_ms: 1.0,
            data_size_mbit: size,
            privacy_rho: rho,
            energy_j: e,
        }
    }

    #[test]
    fn energy_from_delay_examples() {
        assert!((energy_from_delay(100.0, 15.0, 2).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(energy_from_delay(0.0, 7.0, 3).unwrap(), 0.0);
        assert!((energy_from_delay(250.0, 10.0, 4).unwrap() - 0.625).abs() < 1e-12);
        assert!(energy_from_delay(1.0, 0.0, 2).is_err());
        assert!(energy_from_delay(1.0, -3.0, 2).is_err());
        assert!(energy_from_delay(1.0, 3.0, 0).is_err());
    }

    #[test]
    fn bundled_profile_loads() {
        let p = SplitProfile::bundled_vgg16();
        assert_eq!(p.num_splits, 43);
        assert_eq!(p.len(), 43);
        assert_eq!(p.model_name, "vgg16");
        assert!(p.energy_inconsistencies().is_empty());
        assert!(p.notes[0].contains("synthetic"));
    }

    #[test]
    fn bundled_privacy_minimum() {
        let p = SplitProfile::bundled_vgg16();
        let (idx, min) = p
            .candidates
            .iter()
            .map(|c| (c.index, c.privacy_rho))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        assert!((0.20..=0.23).contains(&min), "min rho {min}");
        assert!(idx >= 25);
    }

    #[test]
    fn bundled_is_canonical() {
        let text = include_str!("../data/vgg16.profile");
        assert_eq!(SplitProfile::bundled_vgg16().to_canonical_string(), text);
    }

    #[test]
    fn rejects_rho_out_of_range() {
        let mut text = SplitProfile::bundled_vgg16().to_canonical_string();
        text = text.replace(
            "\n7,239.6,8.31,51.3802,0.893,",
            "\n7,239.6,8.31,51.3802,1.2,",
        );
        match SplitProfile::parse(&text) {
            Err(Error::InvalidProfile { index, msg }) => {
                assert_eq!(index, 7);
                assert!(msg.contains("privacy_rho"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_index_gap() {
        let text = "model_name,num_splits,tdp_watts,ue_threads\nm,3,10,1\n\
                    index,d_ue_ms,d_ser_ms,data_size_mbit,privacy_rho,energy_j\n\
                    1,1,1,1,0.5,0.01\n2,2,1,1,0.5,0.02\n4,3,1,1,0.5,0.03\n";
        match SplitProfile::parse(text) {
            Err(Error::InvalidProfile { index, .. }) => assert_eq!(index, 4),
            other => panic!("expected gap error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_count_mismatch_and_garbage() {
        let text = "model_name,num_splits,tdp_watts,ue_threads\nm,2,10,1\n\
                    index,d_ue_ms,d_ser_ms,data_size_mbit,privacy_rho,energy_j\n\
                    1,1,1,1,0.5,0.01\n";
        assert!(matches!(
            SplitProfile::parse(text),
            Err(Error::InvalidProfile { .. })
        ));
        let text = "model_name,num_splits,tdp_watts,ue_threads\nm,1,ten,1\n";
        assert!(matches!(
            SplitProfile::parse(text),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(SplitProfile::parse(""), Err(Error::Parse { .. })));
    }

    #[test]
    fn rejects_decreasing_delay() {
        let r = SplitProfile::new(
            "m",
            10.0,
            1,
            vec![cand(1, 5.0, 1.0, 0.5, 0.05), cand(2, 4.0, 1.0, 0.5, 0.05)],
        );
        assert!(matches!(r, Err(Error::InvalidProfile { index: 2, .. })));
    }

    #[test]
    fn bundled_shape_findings_pass() {
        let findings = shape_findings(&SplitProfile::bundled_vgg16());
        assert_eq!(findings.len(), 3);
        for f in findings {
            assert!(f.passed, "{:?}: {}", f.check, f.detail);
        }
    }

    #[test]
    fn increasing_privacy_fails_decline_check() {
        let cands = (1..=8)
            .map(|l| cand(l, l as f64, 9.0 - l as f64, 0.1 * l as f64, 0.01 * l as f64))
            .collect();
        let p = SplitProfile::new("inc", 10.0, 1, cands).unwrap();
        let f = shape_findings(&p);
        assert!(!f[0].passed);
        assert!(f[1].passed);
    }

    #[test]
    fn flat_data_size_fails_drop_check() {
        let cands = (1..=8)
            .map(|l| cand(l, l as f64, 2.5, 0.9 - 0.1 * l as f64, 0.01 * l as f64))
            .collect();
        let p = SplitProfile::new("flat", 10.0, 1, cands).unwrap();
        assert!(!shape_findings(&p)[2].passed);
    }
}
