//! Analog beamforming codebook design for full-duplex millimeter-wave
//! transceivers.
//!
//! The crate designs transmit/receive codebook pairs that keep the
//! self-interference coupled between every transmit beam and every receive
//! beam low while each beam still delivers a target gain toward the direction
//! it serves. Beams are restricted to what digitally controlled phase shifters
//! and attenuators can realize.
//!
//! Module map:
//!
//! - [`geometry`]: planar array layouts, array responses, direction grids
//! - [`quantization`]: phase/attenuator grids and nearest-point projection
//! - [`channels`]: self-interference channel models, channel errors, user channels
//! - [`codebooks`]: codebook container, conventional benchmarks, file format
//! - [`solver`]: the per-beam convex subproblem and its projections
//! - [`designer`]: the beam-by-beam alternating design (nominal and robust)
//! - [`metrics`]: coupling, coverage, pattern cuts, spectral efficiency
//! - [`harness`]: seeded Monte Carlo trials, sweeps, CSV/JSON persistence
//! - [`cli`]: the `fdbeam` command-line front end

// Negated comparisons are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod cli;
pub mod codebooks;
pub mod designer;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod quantization;
pub mod solver;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec};
pub use num_complex::Complex64;

/// Power ratio in dB to linear.
pub fn db_to_pow(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power ratio to dB. Zero maps to negative infinity.
pub fn pow_to_db(p: f64) -> f64 {
    10.0 * p.log10()
}
