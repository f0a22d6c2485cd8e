//! Beam-by-beam alternating codebook design.
//!
//! Both codebooks start as scaled, quantized conjugate beams. Transmit beam
//! `k` and receive beam `k` are then re-solved in turn, each against the
//! current state of the other codebook, and quantized as soon as they are
//! solved. When the codebooks differ in size the leftover beams of the larger
//! one are solved at the end of the sweep.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codebooks::Codebook;
use crate::error::{Error, Result};
use crate::geometry::{steering_matrix, ArrayGeometry, Direction};
use crate::linalg::{dot_h, fro_sq, spectral_norm, CMat, CVec};
use crate::metrics::{average_coupling, coverage_residual};
use crate::quantization::{QuantizationSpec, Quantizer};
use crate::solver::{solve_beam, BeamSubproblem, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct DesignParams {
    /// Tolerated power-gain loss, linear in (0, 1].
    pub delta_tx_sq: f64,
    pub delta_rx_sq: f64,
    /// Normalized gain variance tolerance, linear.
    pub sigma_tx_sq: f64,
    pub sigma_rx_sq: f64,
    /// Robustness weight; zero gives the nominal design.
    pub eps_tilde: f64,
    pub spec_tx: QuantizationSpec,
    pub spec_rx: QuantizationSpec,
    pub solver: SolverConfig,
    pub passes: usize,
}

impl Default for DesignParams {
    fn default() -> Self {
        Self {
            delta_tx_sq: 1.0,
            delta_rx_sq: 1.0,
            sigma_tx_sq: 0.01,
            sigma_rx_sq: 0.01,
            eps_tilde: 0.0,
            spec_tx: QuantizationSpec::default(),
            spec_rx: QuantizationSpec::default(),
            solver: SolverConfig::default(),
            passes: 1,
        }
    }
}

impl DesignParams {
    /// Same loss and variance on both sides, given in dB. A robustness
    /// weight of negative infinity dB means none.
    pub fn from_db(delta_db: f64, sigma_db: f64, eps_tilde_db: f64, spec: QuantizationSpec) -> Self {
        let delta = crate::db_to_pow(delta_db);
        let sigma = crate::db_to_pow(sigma_db);
        Self {
            delta_tx_sq: delta,
            delta_rx_sq: delta,
            sigma_tx_sq: sigma,
            sigma_rx_sq: sigma,
            eps_tilde: 10f64.powf(eps_tilde_db / 20.0),
            spec_tx: spec,
            spec_rx: spec,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in [("delta_tx_sq", self.delta_tx_sq), ("delta_rx_sq", self.delta_rx_sq)] {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1], got {d}")));
            }
        }
        for (name, s) in [
            ("sigma_tx_sq", self.sigma_tx_sq),
            ("sigma_rx_sq", self.sigma_rx_sq),
            ("eps_tilde", self.eps_tilde),
        ] {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {s}")));
            }
        }
        if self.passes == 0 {
            return Err(Error::InvalidParameter("passes must be at least 1".into()));
        }
        self.spec_tx.validate()?;
        self.spec_rx.validate()?;
        self.solver.validate()
    }
}

/// Amplitude gain targets `(sqrt(Δ²_tx) Nt, sqrt(Δ²_rx) Nr)`.
pub fn target_gains(params: &DesignParams, nt: usize, nr: usize) -> (f64, f64) {
    (
        params.delta_tx_sq.sqrt() * nt as f64,
        params.delta_rx_sq.sqrt() * nr as f64,
    )
}

/// Starting codebooks and how well they meet the coverage constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct Initialization {
    pub tx: Codebook,
    pub rx: Codebook,
    /// Aggregate coverage residual (lhs minus rhs); positive means violated.
    pub tx_residual: f64,
    pub rx_residual: f64,
    pub warnings: Vec<String>,
}

fn scaled_steering_codebook(
    geometry: &ArrayGeometry,
    directions: &[Direction],
    spec: &QuantizationSpec,
    delta_sq: f64,
    label: &str,
    warnings: &mut Vec<String>,
) -> Result<Codebook> {
    let amp = delta_sq.sqrt();
    let floor = spec.amp_floor();
    if amp < floor * (1.0 - 1e-12) {
        warnings.push(format!(
            "{label}: amplitude {amp:.4} is below the attenuator floor {floor:.4}; weights saturate"
        ));
    }
    let a = steering_matrix(geometry, directions).entries * Complex64::from(amp);
    Codebook::from_weights(geometry, spec, directions, &a, label)
}

pub fn initialize(
    geom_tx: &ArrayGeometry,
    geom_rx: &ArrayGeometry,
    dirs_tx: &[Direction],
    dirs_rx: &[Direction],
    params: &DesignParams,
) -> Result<Initialization> {
    params.validate()?;
    let mut warnings = Vec::new();
    let tx = scaled_steering_codebook(geom_tx, dirs_tx, &params.spec_tx, params.delta_tx_sq, "tx", &mut warnings)?;
    let rx = scaled_steering_codebook(geom_rx, dirs_rx, &params.spec_rx, params.delta_rx_sq, "rx", &mut warnings)?;
    let (g_tx, g_rx) = target_gains(params, geom_tx.num_elements(), geom_rx.num_elements());
    let a_tx = steering_matrix(geom_tx, dirs_tx).entries;
    let a_rx = steering_matrix(geom_rx, dirs_rx).entries;
    let tx_residual = coverage_residual(&a_tx, &tx.to_matrix(), g_tx, params.sigma_tx_sq)?;
    let rx_residual = coverage_residual(&a_rx, &rx.to_matrix(), g_rx, params.sigma_rx_sq)?;
    Ok(Initialization {
        tx,
        rx,
        tx_residual,
        rx_residual,
        warnings,
    })
}

/// Coverage residuals before and after quantization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageResiduals {
    pub tx_pre: f64,
    pub rx_pre: f64,
    pub tx_post: f64,
    pub rx_post: f64,
    /// `σ² g² M` for each side.
    pub tx_bound: f64,
    pub rx_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub tx_codebook: Codebook,
    pub rx_codebook: Codebook,
    pub e_final: f64,
    /// `|a_iᴴ f_i|` of the stored beams.
    pub per_beam_gain_tx: Vec<f64>,
    pub per_beam_gain_rx: Vec<f64>,
    /// Average coupling after every beam write.
    pub objective_trace: Vec<f64>,
    pub coverage: CoverageResiduals,
    /// Solver outputs of the last pass, before quantization.
    pub pre_quant_tx: CMat,
    pub pre_quant_rx: CMat,
    /// `‖WᴴHF‖_F + ε̃ sqrt(Nt Nr) ‖F‖₂ ‖W‖₂` for the stored codebooks.
    pub regularized_objective: f64,
    pub solver_iterations: usize,
    pub unconverged_solves: usize,
    pub warnings: Vec<String>,
}

/// `‖WᴴHF‖_F + ε̃ sqrt(Nt Nr) ‖F‖₂ ‖W‖₂`.
pub fn regularized_objective(w: &CMat, h: &CMat, f: &CMat, eps_tilde: f64) -> f64 {
    let c = w.adjoint() * h * f;
    let s = ((h.nrows() * h.ncols()) as f64).sqrt();
    fro_sq(&c).sqrt() + eps_tilde * s * spectral_norm(f) * spectral_norm(w)
}

fn own_gains(a: &CMat, beams: &CMat) -> Vec<f64> {
    (0..beams.ncols())
        .map(|i| dot_h(&a.column(i).into_owned(), &beams.column(i).into_owned()).norm())
        .collect()
}

/// Nominal design (robust when `params.eps_tilde > 0`).
pub fn design(
    h: &CMat,
    geom_tx: &ArrayGeometry,
    geom_rx: &ArrayGeometry,
    dirs_tx: &[Direction],
    dirs_rx: &[Direction],
    params: &DesignParams,
) -> Result<DesignResult> {
    params.validate()?;
    let nt = geom_tx.num_elements();
    let nr = geom_rx.num_elements();
    if h.shape() != (nr, nt) {
        return Err(Error::ShapeMismatch(format!(
            "channel is {:?}, arrays need {nr}x{nt}",
            h.shape()
        )));
    }
    if dirs_tx.is_empty() || dirs_rx.is_empty() {
        return Err(Error::InvalidParameter("both codebooks need at least one direction".into()));
    }
    let init = initialize(geom_tx, geom_rx, dirs_tx, dirs_rx, params)?;
    let (g_tx, g_rx) = target_gains(params, nt, nr);
    let (s_tx, s_rx) = (params.sigma_tx_sq.sqrt(), params.sigma_rx_sq.sqrt());
    let a_tx = steering_matrix(geom_tx, dirs_tx).entries;
    let a_rx = steering_matrix(geom_rx, dirs_rx).entries;
    let q_tx = Quantizer::new(&params.spec_tx);
    let q_rx = Quantizer::new(&params.spec_rx);
    let root = ((nt * nr) as f64).sqrt();

    let mut f = init.tx.to_matrix();
    let mut w = init.rx.to_matrix();
    let mut pre_tx = f.clone();
    let mut pre_rx = w.clone();
    let (m_tx, m_rx) = (dirs_tx.len(), dirs_rx.len());
    let mut trace = Vec::with_capacity(params.passes * (m_tx + m_rx));
    let mut iterations = 0;
    let mut unconverged = 0;

    let solve = |coupling: CMat, steer: CVec, g: f64, s: f64, rho: f64, warm: CVec, side: &'static str, k: usize| {
        let wrap = |e: Error| Error::Design {
            side,
            index: k,
            reason: e.to_string(),
        };
        let problem = BeamSubproblem::new(coupling, steer, g, s, rho).map_err(wrap)?;
        let cfg = SolverConfig {
            warm_start: Some(warm),
            ..params.solver.clone()
        };
        solve_beam(&problem, &cfg).map_err(wrap)
    };

    for _ in 0..params.passes {
        for k in 0..m_tx.max(m_rx) {
            if k < m_tx {
                let coupling = w.adjoint() * h;
                let rho = params.eps_tilde * root * spectral_norm(&w);
                let r = solve(
                    coupling,
                    a_tx.column(k).into_owned(),
                    g_tx,
                    s_tx,
                    rho,
                    f.column(k).into_owned(),
                    "transmit",
                    k,
                )?;
                iterations += r.iterations;
                unconverged += usize::from(!r.converged);
                f.set_column(k, &q_tx.realize(&q_tx.project_beam(&r.f)));
                pre_tx.set_column(k, &r.f);
                trace.push(average_coupling(&w, h, &f)?.e);
            }
            if k < m_rx {
                let coupling = (h * &f).adjoint();
                let rho = params.eps_tilde * root * spectral_norm(&f);
                let r = solve(
                    coupling,
                    a_rx.column(k).into_owned(),
                    g_rx,
                    s_rx,
                    rho,
                    w.column(k).into_owned(),
                    "receive",
                    k,
                )?;
                iterations += r.iterations;
                unconverged += usize::from(!r.converged);
                w.set_column(k, &q_rx.realize(&q_rx.project_beam(&r.f)));
                pre_rx.set_column(k, &r.f);
                trace.push(average_coupling(&w, h, &f)?.e);
            }
        }
    }

    let tx_codebook = Codebook::from_weights(geom_tx, &params.spec_tx, dirs_tx, &f, "design-tx")?;
    let rx_codebook = Codebook::from_weights(geom_rx, &params.spec_rx, dirs_rx, &w, "design-rx")?;
    let f_final = tx_codebook.to_matrix();
    let w_final = rx_codebook.to_matrix();
    let e_final = average_coupling(&w_final, h, &f_final)?.e;
    let coverage = CoverageResiduals {
        tx_pre: coverage_residual(&a_tx, &pre_tx, g_tx, params.sigma_tx_sq)?,
        rx_pre: coverage_residual(&a_rx, &pre_rx, g_rx, params.sigma_rx_sq)?,
        tx_post: coverage_residual(&a_tx, &f_final, g_tx, params.sigma_tx_sq)?,
        rx_post: coverage_residual(&a_rx, &w_final, g_rx, params.sigma_rx_sq)?,
        tx_bound: params.sigma_tx_sq * g_tx * g_tx * m_tx as f64,
        rx_bound: params.sigma_rx_sq * g_rx * g_rx * m_rx as f64,
    };
    Ok(DesignResult {
        per_beam_gain_tx: own_gains(&a_tx, &f_final),
        per_beam_gain_rx: own_gains(&a_rx, &w_final),
        regularized_objective: regularized_objective(&w_final, h, &f_final, params.eps_tilde),
        tx_codebook,
        rx_codebook,
        e_final,
        objective_trace: trace,
        coverage,
        pre_quant_tx: pre_tx,
        pre_quant_rx: pre_rx,
        solver_iterations: iterations,
        unconverged_solves: unconverged,
        warnings: init.warnings,
    })
}

/// Design against an estimated channel with robustness weight `eps_tilde`.
pub fn design_robust(
    h_est: &CMat,
    geom_tx: &ArrayGeometry,
    geom_rx: &ArrayGeometry,
    dirs_tx: &[Direction],
    dirs_rx: &[Direction],
    params: &DesignParams,
    eps_tilde: f64,
) -> Result<DesignResult> {
    let p = DesignParams {
        eps_tilde,
        ..params.clone()
    };
    design(h_est, geom_tx, geom_rx, dirs_tx, dirs_rx, &p)
}
