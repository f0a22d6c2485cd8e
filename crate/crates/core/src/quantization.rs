//! Phase-shifter and attenuator grids, and nearest-point projection onto
//! them.
//!
//! A quantized weight is stored as a pair of grid indices. Phase level `k` is
//! `2πk / 2^b_phs`. Amplitude level `0` is always unity and deeper levels
//! attenuate monotonically.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CVec;

/// Largest supported phase resolution. 30 bits is effectively continuous.
pub const MAX_PHASE_BITS: u32 = 30;
/// Largest supported attenuator resolution.
pub const MAX_AMP_BITS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AmpMode {
    /// Power steps of `lsb_db` dB per level.
    #[default]
    Log,
    /// Evenly spaced magnitudes from 1 down to `2^-b_amp`.
    Linear,
    /// No attenuators: every weight has unit magnitude.
    None,
}

fn default_lsb_db() -> f64 {
    0.25
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationSpec {
    pub b_phs: u32,
    pub b_amp: u32,
    #[serde(default = "default_lsb_db")]
    pub lsb_db: f64,
    #[serde(default)]
    pub amp_mode: AmpMode,
}

impl Default for QuantizationSpec {
    fn default() -> Self {
        Self::log(5, 5, 0.25)
    }
}

impl QuantizationSpec {
    pub fn log(b_phs: u32, b_amp: u32, lsb_db: f64) -> Self {
        Self {
            b_phs,
            b_amp,
            lsb_db,
            amp_mode: AmpMode::Log,
        }
    }

    pub fn linear(b_phs: u32, b_amp: u32) -> Self {
        Self {
            b_phs,
            b_amp,
            lsb_db: default_lsb_db(),
            amp_mode: AmpMode::Linear,
        }
    }

    /// Phase-only weights.
    pub fn phase_only(b_phs: u32) -> Self {
        Self {
            b_phs,
            b_amp: 0,
            lsb_db: default_lsb_db(),
            amp_mode: AmpMode::None,
        }
    }

    /// Phase-only at the finest supported resolution, used as a stand-in for
    /// unquantized conjugate beams.
    pub fn fine_phase() -> Self {
        Self::phase_only(MAX_PHASE_BITS)
    }

    /// Finest supported grids on both axes: 0.001 dB attenuator steps over a
    /// 65 dB range. Used where tapers must survive quantization untouched.
    pub fn near_continuous() -> Self {
        Self::log(MAX_PHASE_BITS, MAX_AMP_BITS, 0.001)
    }

    /// Amplitude mode actually in effect; zero attenuator bits means none.
    pub fn effective_amp_mode(&self) -> AmpMode {
        if self.b_amp == 0 {
            AmpMode::None
        } else {
            self.amp_mode
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b_phs > MAX_PHASE_BITS {
            return Err(Error::InvalidParameter(format!(
                "b_phs = {} exceeds the supported maximum of {MAX_PHASE_BITS}",
                self.b_phs
            )));
        }
        if self.effective_amp_mode() != AmpMode::None {
            if self.b_amp > MAX_AMP_BITS {
                return Err(Error::InvalidParameter(format!(
                    "b_amp = {} exceeds the supported maximum of {MAX_AMP_BITS}",
                    self.b_amp
                )));
            }
            if self.effective_amp_mode() == AmpMode::Log
                && !(self.lsb_db > 0.0 && self.lsb_db.is_finite())
            {
                return Err(Error::InvalidParameter(format!(
                    "lsb_db must be positive, got {}",
                    self.lsb_db
                )));
            }
        }
        Ok(())
    }

    pub fn num_phase_levels(&self) -> u64 {
        1u64 << self.b_phs
    }

    pub fn num_amp_levels(&self) -> usize {
        match self.effective_amp_mode() {
            AmpMode::None => 1,
            _ => 1usize << self.b_amp,
        }
    }

    /// Smallest realizable magnitude.
    pub fn amp_floor(&self) -> f64 {
        *amp_levels(self).last().unwrap()
    }
}

/// Phase levels in radians, ascending from zero.
///
/// Panics if the level count is too large to enumerate (more than 2^20).
pub fn phase_levels(spec: &QuantizationSpec) -> Vec<f64> {
    assert!(spec.b_phs <= 20, "refusing to enumerate 2^{} phase levels", spec.b_phs);
    let n = spec.num_phase_levels();
    (0..n).map(|k| phase_of(k, n)).collect()
}

fn phase_of(k: u64, n: u64) -> f64 {
    2.0 * PI * k as f64 / n as f64
}

/// Amplitude levels, strictly decreasing from 1.
pub fn amp_levels(spec: &QuantizationSpec) -> Vec<f64> {
    let n = spec.num_amp_levels();
    match spec.effective_amp_mode() {
        AmpMode::None => vec![1.0],
        AmpMode::Log => (0..n)
            .map(|k| 10f64.powf(-spec.lsb_db * k as f64 / 20.0))
            .collect(),
        AmpMode::Linear => {
            let floor = 2f64.powi(-(spec.b_amp as i32));
            let step = (1.0 - floor) / (n as f64 - 1.0);
            (0..n)
                .map(|k| if k == 0 { 1.0 } else { 1.0 - k as f64 * step })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantizedWeight {
    pub phase_idx: u32,
    pub amp_idx: u32,
}

/// A beam in index form together with the grid it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedBeam {
    pub weights: Vec<QuantizedWeight>,
    pub spec: QuantizationSpec,
}

impl QuantizedBeam {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// True when every index lies inside the spec's grids.
    pub fn in_range(&self) -> bool {
        let np = self.spec.num_phase_levels();
        let na = self.spec.num_amp_levels() as u64;
        self.weights
            .iter()
            .all(|w| (w.phase_idx as u64) < np && (w.amp_idx as u64) < na)
    }
}

/// Precomputed grids for repeated projections under one spec.
#[derive(Debug, Clone)]
pub struct Quantizer {
    spec: QuantizationSpec,
    amps: Vec<f64>,
    n_phase: u64,
}

impl Quantizer {
    pub fn new(spec: &QuantizationSpec) -> Self {
        Self {
            spec: *spec,
            amps: amp_levels(spec),
            n_phase: spec.num_phase_levels(),
        }
    }

    pub fn spec(&self) -> &QuantizationSpec {
        &self.spec
    }

    pub fn amps(&self) -> &[f64] {
        &self.amps
    }

    pub fn value(&self, q: QuantizedWeight) -> Complex64 {
        Complex64::from_polar(
            self.amps[q.amp_idx as usize],
            phase_of(q.phase_idx as u64, self.n_phase),
        )
    }

    pub fn project(&self, w: Complex64) -> QuantizedWeight {
        // For a fixed phase the distance is a convex quadratic in the
        // amplitude, minimized at |w| cos(arg w - phase); only the two levels
        // bracketing that point can win. Likewise only the two phase levels
        // bracketing arg(w) can win. The few survivors are scored with the
        // plain distance in (amp, phase) order so ties resolve exactly as in
        // a full scan.
        let n = self.n_phase;
        let mut arg = w.arg();
        if arg < 0.0 {
            arg += 2.0 * PI;
        }
        let lo = ((arg / (2.0 * PI) * n as f64).floor() as u64).min(n - 1);
        let hi = (lo + 1) % n;
        let mag = w.norm();

        let mut cands: [(usize, u64); 4] = [(usize::MAX, 0); 4];
        for (slot, p) in [lo, hi].into_iter().enumerate() {
            let t = mag * (arg - phase_of(p, n)).cos();
            // amps are decreasing: first level not above the ideal magnitude
            let k = self.amps.partition_point(|&a| a > t);
            let above = k.saturating_sub(1);
            let below = k.min(self.amps.len() - 1);
            cands[2 * slot] = (above, p);
            cands[2 * slot + 1] = (below, p);
        }
        cands.sort_unstable();

        let mut best = QuantizedWeight {
            phase_idx: 0,
            amp_idx: 0,
        };
        let mut best_d = f64::INFINITY;
        for (ai, p) in cands {
            let d = (w - Complex64::from_polar(self.amps[ai], phase_of(p, n))).norm_sqr();
            if d < best_d {
                best_d = d;
                best = QuantizedWeight {
                    phase_idx: p as u32,
                    amp_idx: ai as u32,
                };
            }
        }
        best
    }

    pub fn project_beam(&self, v: &CVec) -> QuantizedBeam {
        QuantizedBeam {
            weights: v.iter().map(|&w| self.project(w)).collect(),
            spec: self.spec,
        }
    }

    pub fn realize(&self, beam: &QuantizedBeam) -> CVec {
        CVec::from_iterator(beam.len(), beam.weights.iter().map(|&q| self.value(q)))
    }
}

/// Nearest grid point to `w`. Ties go to the smaller amplitude index, then
/// the smaller phase index.
pub fn project_weight(w: Complex64, spec: &QuantizationSpec) -> QuantizedWeight {
    Quantizer::new(spec).project(w)
}

pub fn project_beam(v: &CVec, spec: &QuantizationSpec) -> QuantizedBeam {
    Quantizer::new(spec).project_beam(v)
}

pub fn realize(beam: &QuantizedBeam) -> CVec {
    Quantizer::new(&beam.spec).realize(beam)
}
