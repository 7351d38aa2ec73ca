//! Uplink slot IQ resource grids.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::RadioParams;

pub const TOTAL_PRBS: usize = 273;
pub const IQ_PLANES: usize = 2;
pub const IQ_SUBCARRIERS: usize = TOTAL_PRBS * 12;
pub const IQ_SYMBOLS: usize = 14;
const GRID_LEN: usize = IQ_PLANES * IQ_SUBCARRIERS * IQ_SYMBOLS;

/// One UL slot: I and Q planes over 3276 subcarriers x 14 symbols, row-major
/// `[plane][subcarrier][symbol]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IqGrid {
    data: Vec<f32>,
    allocated_prbs: u32,
}

impl IqGrid {
    pub fn zeros(allocated_prbs: u32) -> Self {
        IqGrid {
            data: vec![0.0; GRID_LEN],
            allocated_prbs: allocated_prbs.min(TOTAL_PRBS as u32),
        }
    }

    /// Wraps raw row-major samples; `None` on a length mismatch.
    pub fn from_raw(data: Vec<f32>, allocated_prbs: u32) -> Option<Self> {
        (data.len() == GRID_LEN && allocated_prbs as usize <= TOTAL_PRBS).then_some(IqGrid {
            data,
            allocated_prbs,
        })
    }

    pub const fn dims() -> (usize, usize, usize) {
        (IQ_PLANES, IQ_SUBCARRIERS, IQ_SYMBOLS)
    }

    pub fn allocated_prbs(&self) -> u32 {
        self.allocated_prbs
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    fn offset(plane: usize, sc: usize, sym: usize) -> usize {
        (plane * IQ_SUBCARRIERS + sc) * IQ_SYMBOLS + sym
    }

    pub fn iq(&self, sc: usize, sym: usize) -> (f32, f32) {
        (
            self.data[Self::offset(0, sc, sym)],
            self.data[Self::offset(1, sc, sym)],
        )
    }

    /// `I^2 + Q^2` in mW.
    pub fn re_power(&self, sc: usize, sym: usize) -> f64 {
        let (i, q) = self.iq(sc, sym);
        (i as f64).powi(2) + (q as f64).powi(2)
    }

    pub fn is_allocated(&self, sc: usize) -> bool {
        sc < self.allocated_prbs as usize * 12
    }
}

pub(crate) fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Complex Gaussian REs whose mean power is thermal + interference, plus the
/// UE signal on the first `allocated_prbs` PRBs.
pub fn synthesize_iq_grid<R: Rng + ?Sized>(
    noise_dbm: f64,
    radio: &RadioParams,
    allocated_prbs: u32,
    rng: &mut R,
) -> IqGrid {
    let allocated_prbs = allocated_prbs.min(TOTAL_PRBS as u32);
    let background = dbm_to_mw(radio.thermal_floor_dbm) + dbm_to_mw(noise_dbm);
    let signal = dbm_to_mw(radio.ue_re_power_dbm);
    let mut grid = IqGrid::zeros(allocated_prbs);
    for sc in 0..IQ_SUBCARRIERS {
        let power = if grid.is_allocated(sc) {
            background + signal
        } else {
            background
        };
        let sigma = (power / 2.0).sqrt();
        for sym in 0..IQ_SYMBOLS {
            let i: f64 = StandardNormal.sample(rng);
            let q: f64 = StandardNormal.sample(rng);
            grid.data[IqGrid::offset(0, sc, sym)] = (i * sigma) as f32;
            grid.data[IqGrid::offset(1, sc, sym)] = (q * sigma) as f32;
        }
    }
    grid
}

/// IQ observation attached to a trace step. Generated traces keep only the
/// per-grid seed and rebuild the grid on demand; traces read from disk hold
/// the stored samples.
#[derive(Debug, Clone, PartialEq)]
pub enum IqCapture {
    Seeded {
        seed: u64,
        noise_dbm: f64,
        allocated_prbs: u32,
    },
    Stored(Arc<IqGrid>),
}

impl IqCapture {
    pub fn allocated_prbs(&self) -> u32 {
        match self {
            IqCapture::Seeded { allocated_prbs, .. } => *allocated_prbs,
            IqCapture::Stored(g) => g.allocated_prbs(),
        }
    }

    pub fn grid(&self, radio: &RadioParams) -> Arc<IqGrid> {
        match self {
            IqCapture::Seeded {
                seed,
                noise_dbm,
                allocated_prbs,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Arc::new(synthesize_iq_grid(
                    *noise_dbm,
                    radio,
                    *allocated_prbs,
                    &mut rng,
                ))
            }
            IqCapture::Stored(g) => Arc::clone(g),
        }
    }
}
