//! Coupling, coverage, pattern cuts and link-level spectral efficiency.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::codebooks::Codebook;
use crate::error::{Error, Result};
use crate::geometry::{steering_matrix, ArrayGeometry, Direction};
use crate::linalg::{dot_h, fro_sq, norm1, norm_sq, CMat, CVec};
use crate::pow_to_db;

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    /// Mean of `|w_jᴴ H f_i|²` over all beam pairs.
    pub e: f64,
    pub e_db: f64,
    /// `Mrx x Mtx`, entry `(j, i)` is `|w_jᴴ H f_i|²`.
    pub pair_matrix: DMatrix<f64>,
}

/// `‖Wᴴ H F‖²_F / (Mtx Mrx)`.
pub fn average_coupling(w_mat: &CMat, h: &CMat, f_mat: &CMat) -> Result<CouplingReport> {
    if h.nrows() != w_mat.nrows() || h.ncols() != f_mat.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "W is {:?}, H is {:?}, F is {:?}",
            w_mat.shape(),
            h.shape(),
            f_mat.shape()
        )));
    }
    let c = w_mat.adjoint() * h * f_mat;
    let pair_matrix = c.map(|z| z.norm_sqr());
    let count = (c.nrows() * c.ncols()).max(1) as f64;
    let e = fro_sq(&c) / count;
    Ok(CouplingReport {
        e,
        e_db: pow_to_db(e),
        pair_matrix,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub directions: Vec<Direction>,
    /// Best-beam power gain per direction.
    pub gains: Vec<f64>,
    /// Gains sorted ascending.
    pub cdf: Vec<f64>,
    pub median_db: f64,
}

/// Median of an ascending slice.
pub fn median_sorted(x: &[f64]) -> f64 {
    let n = x.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        x[n / 2]
    } else {
        0.5 * (x[n / 2 - 1] + x[n / 2])
    }
}

/// Coverage of the beams in the columns of `beams` over `directions`.
pub fn coverage_of_matrix(
    geometry: &ArrayGeometry,
    beams: &CMat,
    directions: &[Direction],
) -> CoverageReport {
    let a = steering_matrix(geometry, directions).entries;
    let g = a.adjoint() * beams;
    let gains: Vec<f64> = (0..g.nrows())
        .map(|d| g.row(d).iter().map(|z| z.norm_sqr()).fold(0.0, f64::max))
        .collect();
    let mut cdf = gains.clone();
    cdf.sort_by(f64::total_cmp);
    let median_db = pow_to_db(median_sorted(&cdf));
    CoverageReport {
        directions: directions.to_vec(),
        gains,
        cdf,
        median_db,
    }
}

pub fn coverage(codebook: &Codebook, dense_grid: &[Direction]) -> CoverageReport {
    coverage_of_matrix(&codebook.geometry, &codebook.to_matrix(), dense_grid)
}

/// Which angle a pattern cut sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sweep", rename_all = "lowercase")]
pub enum CutKind {
    /// Sweep azimuth at a fixed elevation (radians).
    Azimuth { elevation: f64 },
    /// Sweep elevation at a fixed azimuth (radians).
    Elevation { azimuth: f64 },
}

/// A sweep over `[start, stop]` radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternCut {
    pub kind: CutKind,
    pub start: f64,
    pub stop: f64,
}

impl PatternCut {
    pub fn azimuth(elevation: f64) -> Self {
        Self {
            kind: CutKind::Azimuth { elevation },
            start: -std::f64::consts::FRAC_PI_2,
            stop: std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn elevation(azimuth: f64) -> Self {
        Self {
            kind: CutKind::Elevation { azimuth },
            start: -std::f64::consts::FRAC_PI_2,
            stop: std::f64::consts::FRAC_PI_2,
        }
    }
}

/// Power gain `|a(θ)ᴴ f|²` at `n_points` evenly spaced angles.
pub fn pattern_cut(beam: &CVec, geometry: &ArrayGeometry, cut: &PatternCut, n_points: usize) -> Vec<(f64, f64)> {
    let n = n_points.max(1);
    let dirs: Vec<(f64, Direction)> = (0..n)
        .map(|k| {
            let t = if n == 1 {
                cut.start
            } else {
                cut.start + (cut.stop - cut.start) * k as f64 / (n - 1) as f64
            };
            let d = match cut.kind {
                CutKind::Azimuth { elevation } => Direction::new(t, elevation),
                CutKind::Elevation { azimuth } => Direction::new(azimuth, t),
            };
            (t, d)
        })
        .collect();
    let only: Vec<Direction> = dirs.iter().map(|x| x.1).collect();
    let a = steering_matrix(geometry, &only).entries;
    let g = a.adjoint() * beam;
    dirs.iter().zip(g.iter()).map(|((t, _), z)| (*t, z.norm_sqr())).collect()
}

/// `Σ_i |g − a_iᴴ f_i|² − σ² g² M`, with `a_i` and `f_i` the columns of
/// `steering` and `beams`.
pub fn coverage_residual(steering: &CMat, beams: &CMat, g_tgt: f64, sigma_sq: f64) -> Result<f64> {
    if steering.shape() != beams.shape() {
        return Err(Error::ShapeMismatch(format!(
            "steering {:?} vs beams {:?}",
            steering.shape(),
            beams.shape()
        )));
    }
    let m = beams.ncols();
    let lhs: f64 = (0..m)
        .map(|i| {
            let z = dot_h(&steering.column(i).into_owned(), &beams.column(i).into_owned());
            (num_complex::Complex64::from(g_tgt) - z).norm_sqr()
        })
        .sum();
    Ok(lhs - sigma_sq * g_tgt * g_tgt * m as f64)
}

/// Aggregate coverage constraint residual of a codebook (lhs minus rhs).
pub fn check_coverage_constraint(codebook: &Codebook, g_tgt: f64, sigma_sq: f64) -> f64 {
    let a = steering_matrix(&codebook.geometry, &codebook.directions).entries;
    coverage_residual(&a, &codebook.to_matrix(), g_tgt, sigma_sq).expect("codebook shapes agree")
}

/// Link budget before beamforming, all linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub snr_tx: f64,
    pub snr_rx: f64,
    pub inr: f64,
}

impl LinkBudget {
    pub fn from_db(snr_tx_db: f64, snr_rx_db: f64, inr_db: f64) -> Self {
        Self {
            snr_tx: crate::db_to_pow(snr_tx_db),
            snr_rx: crate::db_to_pow(snr_rx_db),
            inr: crate::db_to_pow(inr_db),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub r_tx: f64,
    pub r_rx: f64,
    pub sum: f64,
    pub c_fd: f64,
    pub c_hd: f64,
}

/// Downlink rate with the transmit power split over `nt` antennas.
pub fn rate_tx(budget: &LinkBudget, h_tx: &CVec, f: &CVec, nt: usize) -> f64 {
    let g = dot_h(h_tx, f).norm_sqr();
    (1.0 + budget.snr_tx / nt as f64 * g).log2()
}

/// Uplink rate with combiner noise `‖w‖²` and residual self-interference.
pub fn rate_rx(budget: &LinkBudget, h_rx: &CVec, w: &CVec, h: &CMat, f: &CVec) -> f64 {
    let sig = dot_h(w, h_rx).norm_sqr();
    let si = dot_h(w, &(h * f)).norm_sqr();
    let den = norm_sq(w) + budget.inr * si;
    if !(den > 0.0) || !den.is_finite() {
        return 0.0;
    }
    (1.0 + budget.snr_rx * sig / den).log2()
}

/// Full-duplex and half-duplex capacity bounds for per-entry unit-magnitude
/// beams without self-interference.
pub fn capacities(budget: &LinkBudget, h_tx: &CVec, h_rx: &CVec, nt: usize) -> (f64, f64) {
    let l1 = norm1(h_tx);
    let c_fd = (1.0 + budget.snr_tx / nt as f64 * l1 * l1).log2() + (1.0 + budget.snr_rx * norm_sq(h_rx)).log2();
    (c_fd, 0.5 * c_fd)
}

pub fn rates(budget: &LinkBudget, h_tx: &CVec, f: &CVec, h_rx: &CVec, w: &CVec, h: &CMat) -> RateReport {
    let r_tx = rate_tx(budget, h_tx, f, f.len());
    let r_rx = rate_rx(budget, h_rx, w, h, f);
    let (c_fd, c_hd) = capacities(budget, h_tx, h_rx, f.len());
    RateReport {
        r_tx,
        r_rx,
        sum: r_tx + r_rx,
        c_fd,
        c_hd,
    }
}
