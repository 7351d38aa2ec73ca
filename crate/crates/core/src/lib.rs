//! Adaptive split-computing planner and dynamic 5G uplink simulation.
//!
//! - [`profiles`]: per-split delay, payload, leakage and energy records.
//! - [`privacy`]: distance correlation between paired sample sets.
//! - [`objective`]: E2E delay, the weighted objective and its bounds.
//! - [`pso`]: pre-filtered lookup-table construction plus a brute-force oracle.
//! - [`channel`]: interference scenarios, zone model, KPM and IQ synthesis.
//! - [`estimator`]: uplink throughput estimation from KPM windows and IQ grids.
//! - [`harness`]: fixed vs adaptive splitting replayed over channel traces.

// Validation uses negated comparisons on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod numfmt;
pub mod objective;
pub mod presets;
pub mod privacy;
pub mod profiles;
pub mod pso;

pub use error::{Error, Result};
