//! Seeded Monte Carlo trials, parameter sweeps and result persistence.
//!
//! Seeding: every trial owns a ChaCha8 generator keyed by the master seed.
//! The self-interference channel of trial `t` comes from stream `t << 32`,
//! so every axis point sees the same channel for a given trial and the
//! comparison across axis values is paired. Channel-error draws and user
//! draws for axis point `i` come from stream `(t << 32) | (i + 1)`.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channels::{draw_error, draw_user_channel, perturb, stream_rng, SIChannelModel};
use crate::codebooks::{cbf, scale, windowed_cbf, Codebook, WindowLayout, WindowSpec};
use crate::designer::{design, DesignParams, DesignResult};
use crate::error::{Error, Result};
use crate::geometry::{coverage_grid, dense_eval_grid, ArrayGeometry, Direction, DirectionGrid};
use crate::linalg::{dot_h, CMat, CVec};
use crate::metrics::{average_coupling, coverage_of_matrix, rates, LinkBudget};
use crate::quantization::{AmpMode, QuantizationSpec};
use crate::solver::{SolverConfig, StepRule};
use crate::{db_to_pow, pow_to_db};

/// Environment variable that sets the worker count.
pub const WORKERS_ENV: &str = "FDBEAM_WORKERS";

/// Region bounds in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub az_start: f64,
    pub az_stop: f64,
    pub az_step: f64,
    pub el_start: f64,
    pub el_stop: f64,
    pub el_step: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            az_start: -60.0,
            az_stop: 60.0,
            az_step: 15.0,
            el_start: -30.0,
            el_stop: 30.0,
            el_step: 15.0,
        }
    }
}

impl GridConfig {
    pub fn to_grid(&self) -> DirectionGrid {
        DirectionGrid::from_degrees(
            self.az_start,
            self.az_stop,
            self.az_step,
            self.el_start,
            self.el_stop,
            self.el_step,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseConfig {
    pub n_az: usize,
    pub n_el: usize,
}

impl Default for DenseConfig {
    fn default() -> Self {
        Self { n_az: 121, n_el: 61 }
    }
}

/// Sweep axes. `null` in the robustness and evaluation-error lists means
/// zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Axes {
    pub delta_db: Vec<f64>,
    pub sigma_db: Vec<f64>,
    pub b_phs: Vec<u32>,
    pub b_amp: Vec<u32>,
    pub eps_tilde_db: Vec<Option<f64>>,
    pub eps_eval_db: Vec<Option<f64>>,
}

impl Default for Axes {
    fn default() -> Self {
        Self {
            delta_db: vec![0.0],
            sigma_db: vec![-20.0],
            b_phs: vec![5],
            b_amp: vec![5],
            eps_tilde_db: vec![None],
            eps_eval_db: vec![None],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkBits {
    pub b_phs: u32,
    pub b_amp: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    pub snr_db: Vec<f64>,
    pub inr_db: Vec<f64>,
    pub n_user_draws: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0],
            inr_db: (0..=9).map(|k| 10.0 * k as f64).collect(),
            n_user_draws: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub diminishing: bool,
    pub feas_tol: f64,
    pub obj_tol: f64,
    pub passes: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            max_iters: s.max_iters,
            diminishing: false,
            feas_tol: s.feas_tol,
            obj_tol: s.obj_tol,
            passes: 1,
        }
    }
}

impl SolverSettings {
    pub fn to_config(&self) -> SolverConfig {
        SolverConfig {
            max_iters: self.max_iters,
            step_rule: if self.diminishing { StepRule::Diminishing } else { StepRule::Fixed },
            feas_tol: self.feas_tol,
            obj_tol: self.obj_tol,
            ..SolverConfig::default()
        }
    }
}

fn default_trials() -> usize {
    20
}

fn default_n_error_draws() -> usize {
    20
}

fn default_lsb() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSettings {
    pub nbar: usize,
    pub layout: WindowLayout,
}

impl Default for WindowSettings {
    fn default() -> Self {
        Self {
            nbar: 4,
            layout: WindowLayout::Vectorized,
        }
    }
}

/// Everything a sweep needs. Every field has a default matching the 8x8,
/// 45-direction setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub geometry_tx: ArrayGeometry,
    pub geometry_rx: ArrayGeometry,
    pub grid_tx: GridConfig,
    pub grid_rx: GridConfig,
    pub dense: DenseConfig,
    pub si_model: SIChannelModel,
    pub axes: Axes,
    #[serde(default = "default_lsb")]
    pub lsb_db: f64,
    pub amp_mode: AmpMode,
    pub benchmark_bits: Option<BenchmarkBits>,
    pub benchmark_only: bool,
    pub window: WindowSettings,
    #[serde(default = "default_n_error_draws")]
    pub n_error_draws: usize,
    pub link: LinkConfig,
    pub solver: SolverSettings,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            geometry_tx: ArrayGeometry::upa(8, 8),
            geometry_rx: ArrayGeometry::upa(8, 8),
            grid_tx: GridConfig::default(),
            grid_rx: GridConfig::default(),
            dense: DenseConfig::default(),
            si_model: SIChannelModel::Rayleigh,
            axes: Axes::default(),
            lsb_db: default_lsb(),
            amp_mode: AmpMode::Log,
            benchmark_bits: None,
            benchmark_only: false,
            window: WindowSettings::default(),
            n_error_draws: default_n_error_draws(),
            link: LinkConfig::default(),
            solver: SolverSettings::default(),
            trials: default_trials(),
            master_seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry_tx.validate()?;
        self.geometry_rx.validate()?;
        self.si_model.validate()?;
        coverage_grid(&self.grid_tx.to_grid())?;
        coverage_grid(&self.grid_rx.to_grid())?;
        let a = &self.axes;
        if a.delta_db.is_empty()
            || a.sigma_db.is_empty()
            || a.b_phs.is_empty()
            || a.b_amp.is_empty()
            || a.eps_tilde_db.is_empty()
            || a.eps_eval_db.is_empty()
        {
            return Err(Error::InvalidParameter("every sweep axis needs at least one value".into()));
        }
        if let Some(d) = a.delta_db.iter().find(|&&d| !(d <= 0.0)) {
            return Err(Error::InvalidParameter(format!("delta_db must be <= 0, got {d}")));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.dense.n_az == 0 || self.dense.n_el == 0 {
            return Err(Error::InvalidParameter("dense grid needs at least one point per axis".into()));
        }
        for p in self.axis_points() {
            self.design_params(&p).validate()?;
            self.benchmark_spec(&p).validate()?;
        }
        Ok(())
    }

    /// Canonical JSON and its SHA-256.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn directions_tx(&self) -> Result<Vec<Direction>> {
        coverage_grid(&self.grid_tx.to_grid())
    }

    pub fn directions_rx(&self) -> Result<Vec<Direction>> {
        coverage_grid(&self.grid_rx.to_grid())
    }

    pub fn spec(&self, b_phs: u32, b_amp: u32) -> QuantizationSpec {
        QuantizationSpec {
            b_phs,
            b_amp,
            lsb_db: self.lsb_db,
            amp_mode: self.amp_mode,
        }
    }

    pub fn design_params(&self, p: &AxisPoint) -> DesignParams {
        let spec = self.spec(p.b_phs, p.b_amp);
        let mut params = DesignParams::from_db(
            p.delta_db,
            p.sigma_db,
            p.eps_tilde_db.unwrap_or(f64::NEG_INFINITY),
            spec,
        );
        params.solver = self.solver.to_config();
        params.passes = self.solver.passes;
        params
    }

    pub fn benchmark_spec(&self, p: &AxisPoint) -> QuantizationSpec {
        match self.benchmark_bits {
            Some(b) => self.spec(b.b_phs, b.b_amp),
            None => self.spec(p.b_phs, p.b_amp),
        }
    }

    /// Cartesian product of the axes; the evaluation error varies fastest.
    pub fn axis_points(&self) -> Vec<AxisPoint> {
        let a = &self.axes;
        let mut out = Vec::new();
        for &delta_db in &a.delta_db {
            for &sigma_db in &a.sigma_db {
                for &b_phs in &a.b_phs {
                    for &b_amp in &a.b_amp {
                        for &eps_tilde_db in &a.eps_tilde_db {
                            for &eps_eval_db in &a.eps_eval_db {
                                out.push(AxisPoint {
                                    index: out.len(),
                                    delta_db,
                                    sigma_db,
                                    b_phs,
                                    b_amp,
                                    eps_tilde_db,
                                    eps_eval_db,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisPoint {
    pub index: usize,
    pub delta_db: f64,
    pub sigma_db: f64,
    pub b_phs: u32,
    pub b_amp: u32,
    pub eps_tilde_db: Option<f64>,
    pub eps_eval_db: Option<f64>,
}

impl AxisPoint {
    /// Evaluation error bound; `None` or negative infinity means zero.
    pub fn eps_eval(&self) -> f64 {
        self.eps_eval_db.map_or(0.0, |db| 10f64.powf(db / 20.0))
    }

    fn same_design(&self, other: &AxisPoint) -> bool {
        self.delta_db == other.delta_db
            && self.sigma_db == other.sigma_db
            && self.b_phs == other.b_phs
            && self.b_amp == other.b_amp
            && self.eps_tilde_db == other.eps_tilde_db
    }
}

/// Stream for the channel of trial `trial`.
pub fn channel_stream(trial: u64) -> u64 {
    trial << 32
}

/// Stream for error and user draws of trial `trial` at axis point `axis`.
pub fn axis_stream(trial: u64, axis: usize) -> u64 {
    (trial << 32) | (axis as u64 + 1)
}

/// One row of the result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: String,
    pub delta_db: f64,
    pub sigma_db: f64,
    pub b_phs: u32,
    pub b_amp: u32,
    pub eps_tilde_db: Option<f64>,
    pub eps_eval_db: Option<f64>,
    pub model: String,
    #[serde(rename = "E_design_db")]
    pub e_design_db: Option<f64>,
    #[serde(rename = "E_cbf_db")]
    pub e_cbf_db: Option<f64>,
    #[serde(rename = "E_tay20_db")]
    pub e_tay20_db: Option<f64>,
    #[serde(rename = "E_tay40_db")]
    pub e_tay40_db: Option<f64>,
    pub med_gtx_db: Option<f64>,
    pub med_grx_db: Option<f64>,
    pub cov_resid_tx: Option<f64>,
    pub cov_resid_rx: Option<f64>,
    pub status: String,
    pub ms: f64,
}

/// Column order of the result CSV.
pub const CSV_COLUMNS: [&str; 18] = [
    "seed",
    "delta_db",
    "sigma_db",
    "b_phs",
    "b_amp",
    "eps_tilde_db",
    "eps_eval_db",
    "model",
    "E_design_db",
    "E_cbf_db",
    "E_tay20_db",
    "E_tay40_db",
    "med_gtx_db",
    "med_grx_db",
    "cov_resid_tx",
    "cov_resid_rx",
    "status",
    "ms",
];

/// Finite dB values only; negative infinity (zero power) is stored empty.
fn finite(x: f64) -> Option<f64> {
    if x.is_finite() {
        Some(x)
    } else {
        None
    }
}

impl TrialRecord {
    fn blank(p: &AxisPoint, trial: usize, model: &str) -> Self {
        Self {
            seed: trial.to_string(),
            delta_db: p.delta_db,
            sigma_db: p.sigma_db,
            b_phs: p.b_phs,
            b_amp: p.b_amp,
            eps_tilde_db: p.eps_tilde_db,
            eps_eval_db: p.eps_eval_db,
            model: model.to_string(),
            e_design_db: None,
            e_cbf_db: None,
            e_tay20_db: None,
            e_tay40_db: None,
            med_gtx_db: None,
            med_grx_db: None,
            cov_resid_tx: None,
            cov_resid_rx: None,
            status: String::new(),
            ms: 0.0,
        }
    }

    pub fn is_aggregate(&self) -> bool {
        self.status.starts_with("aggregate")
    }

    /// Successful trial; the status may carry a note after `ok;`.
    pub fn is_ok(&self) -> bool {
        self.status == "ok" || self.status.starts_with("ok;")
    }

    /// Identity of the axis point.
    pub fn point_key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{:?}|{:?}|{}",
            self.delta_db, self.sigma_db, self.b_phs, self.b_amp, self.eps_tilde_db, self.eps_eval_db, self.model
        )
    }

    /// Identity of the (axis point, trial) pair.
    pub fn key(&self) -> String {
        format!("{}|{}", self.point_key(), self.seed)
    }
}

/// Mean coupling over channel-error draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEvaluation {
    pub mean: f64,
    pub std: f64,
    pub draws: Vec<f64>,
}

/// Average coupling of `(F, W)` over `n_draws` channels `H + sqrt(NtNr) Δ`
/// with `‖Δ‖_F = eps_eval`.
pub fn evaluate_under_error(
    f: &CMat,
    w: &CMat,
    h: &CMat,
    eps_eval: f64,
    n_draws: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ErrorEvaluation> {
    if eps_eval == 0.0 || n_draws == 0 {
        let e = average_coupling(w, h, f)?.e;
        return Ok(ErrorEvaluation {
            mean: e,
            std: 0.0,
            draws: vec![e],
        });
    }
    let mut draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let d = draw_error(h.nrows(), h.ncols(), eps_eval, rng);
        draws.push(average_coupling(w, &perturb(h, &d)?, f)?.e);
    }
    let mean = draws.iter().sum::<f64>() / n_draws as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n_draws as f64;
    Ok(ErrorEvaluation {
        mean,
        std: var.sqrt(),
        draws,
    })
}

/// Conventional codebooks at amplitude scale `sqrt(Δ²)`.
pub struct Benchmarks {
    pub cbf: Codebook,
    pub tay20: Codebook,
    pub tay40: Codebook,
    pub saturated: usize,
}

pub fn benchmarks(
    geometry: &ArrayGeometry,
    directions: &[Direction],
    spec: &QuantizationSpec,
    delta_db: f64,
    window: &WindowSettings,
) -> Result<Benchmarks> {
    let d = 10f64.powf(delta_db / 20.0);
    let win = |sll: f64| WindowSpec::taylor(sll).with_nbar(window.nbar).with_layout(window.layout);
    let c = scale(&cbf(geometry, directions, spec), d)?;
    let t20 = scale(&windowed_cbf(geometry, directions, spec, &win(20.0))?, d)?;
    let t40 = scale(&windowed_cbf(geometry, directions, spec, &win(40.0))?, d)?;
    Ok(Benchmarks {
        saturated: c.saturated + t20.saturated + t40.saturated,
        cbf: c.codebook,
        tay20: t20.codebook,
        tay40: t40.codebook,
    })
}

/// Draw the self-interference channel of `trial`.
pub fn trial_channel(config: &ExperimentConfig, trial: usize) -> Result<CMat> {
    let mut rng = stream_rng(config.master_seed, channel_stream(trial as u64));
    config.si_model.draw(&config.geometry_tx, &config.geometry_rx, &mut rng)
}

/// Everything a group of axis points sharing one design needs.
struct DesignOutcome {
    design: Option<DesignResult>,
    saturated: usize,
    tx: [CMat; 3],
    rx: [CMat; 3],
    med_tx: Option<f64>,
    med_rx: Option<f64>,
}

fn design_for(config: &ExperimentConfig, p: &AxisPoint, h: &CMat) -> Result<DesignOutcome> {
    let dirs_tx = config.directions_tx()?;
    let dirs_rx = config.directions_rx()?;
    let bspec = config.benchmark_spec(p);
    let btx = benchmarks(&config.geometry_tx, &dirs_tx, &bspec, p.delta_db, &config.window)?;
    let brx = benchmarks(&config.geometry_rx, &dirs_rx, &bspec, p.delta_db, &config.window)?;
    let tx = [btx.cbf.to_matrix(), btx.tay20.to_matrix(), btx.tay40.to_matrix()];
    let rx = [brx.cbf.to_matrix(), brx.tay20.to_matrix(), brx.tay40.to_matrix()];
    if config.benchmark_only {
        return Ok(DesignOutcome {
            design: None,
            saturated: btx.saturated + brx.saturated,
            tx,
            rx,
            med_tx: None,
            med_rx: None,
        });
    }
    let params = config.design_params(p);
    let r = design(h, &config.geometry_tx, &config.geometry_rx, &dirs_tx, &dirs_rx, &params)?;
    let dense_tx = dense_eval_grid(&config.grid_tx.to_grid(), config.dense.n_az, config.dense.n_el);
    let dense_rx = dense_eval_grid(&config.grid_rx.to_grid(), config.dense.n_az, config.dense.n_el);
    let med_tx = coverage_of_matrix(&config.geometry_tx, &r.tx_codebook.to_matrix(), &dense_tx).median_db;
    let med_rx = coverage_of_matrix(&config.geometry_rx, &r.rx_codebook.to_matrix(), &dense_rx).median_db;
    Ok(DesignOutcome {
        design: Some(r),
        saturated: btx.saturated + brx.saturated,
        tx,
        rx,
        med_tx: finite(med_tx),
        med_rx: finite(med_rx),
    })
}

fn fill_record(
    config: &ExperimentConfig,
    p: &AxisPoint,
    trial: usize,
    h: &CMat,
    out: &DesignOutcome,
    rec: &mut TrialRecord,
) -> Result<()> {
    let eps = p.eps_eval();
    let mut rng = stream_rng(config.master_seed, axis_stream(trial as u64, p.index));
    // the same error draws are applied to every codebook pair
    let deltas: Vec<CMat> = if eps > 0.0 {
        (0..config.n_error_draws.max(1))
            .map(|_| draw_error(h.nrows(), h.ncols(), eps, &mut rng))
            .collect()
    } else {
        Vec::new()
    };
    let perturbed: Vec<CMat> = deltas.iter().map(|d| perturb(h, d)).collect::<Result<_>>()?;
    let mean_e = |f: &CMat, w: &CMat| -> Result<f64> {
        if perturbed.is_empty() {
            return Ok(average_coupling(w, h, f)?.e);
        }
        let mut acc = 0.0;
        for hb in &perturbed {
            acc += average_coupling(w, hb, f)?.e;
        }
        Ok(acc / perturbed.len() as f64)
    };
    rec.e_cbf_db = finite(pow_to_db(mean_e(&out.tx[0], &out.rx[0])?));
    rec.e_tay20_db = finite(pow_to_db(mean_e(&out.tx[1], &out.rx[1])?));
    rec.e_tay40_db = finite(pow_to_db(mean_e(&out.tx[2], &out.rx[2])?));
    if let Some(d) = &out.design {
        let f = d.tx_codebook.to_matrix();
        let w = d.rx_codebook.to_matrix();
        rec.e_design_db = finite(pow_to_db(mean_e(&f, &w)?));
        rec.med_gtx_db = out.med_tx;
        rec.med_grx_db = out.med_rx;
        rec.cov_resid_tx = Some(d.coverage.tx_post);
        rec.cov_resid_rx = Some(d.coverage.rx_post);
    }
    Ok(())
}

/// Records for every axis point in `group` (which share a design) at one
/// trial, using channel `h`.
pub fn run_group_with_channel(
    config: &ExperimentConfig,
    group: &[AxisPoint],
    trial: usize,
    h: &CMat,
) -> Vec<TrialRecord> {
    let start = Instant::now();
    let model = config.si_model.name();
    let outcome = design_for(config, &group[0], h).map_err(|e| e.to_string());
    let mut out = Vec::with_capacity(group.len());
    for p in group {
        let mut rec = TrialRecord::blank(p, trial, model);
        let res = match &outcome {
            Ok(o) => fill_record(config, p, trial, h, o, &mut rec)
                .map(|()| o.saturated)
                .map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        };
        rec.status = match res {
            Ok(0) => "ok".into(),
            Ok(n) => format!("ok; {n} benchmark weights saturated"),
            Err(e) => format!("failed: {}", e.replace(['\n', '\r'], " ")),
        };
        out.push(rec);
    }
    let ms = start.elapsed().as_secs_f64() * 1e3 / group.len() as f64;
    for r in &mut out {
        r.ms = (ms * 1e3).round() / 1e3;
    }
    out
}

/// One trial at one axis point.
pub fn run_trial(config: &ExperimentConfig, axis_point: &AxisPoint, trial: usize) -> TrialRecord {
    match trial_channel(config, trial) {
        Ok(h) => run_trial_with_channel(config, axis_point, trial, &h),
        Err(e) => {
            let mut r = TrialRecord::blank(axis_point, trial, config.si_model.name());
            r.status = format!("failed: {e}");
            r
        }
    }
}

/// One trial with an injected channel.
pub fn run_trial_with_channel(config: &ExperimentConfig, axis_point: &AxisPoint, trial: usize, h: &CMat) -> TrialRecord {
    run_group_with_channel(config, std::slice::from_ref(axis_point), trial, h)
        .pop()
        .expect("one record per axis point")
}

/// Split axis points into runs that share a design.
pub fn design_groups(points: &[AxisPoint]) -> Vec<Vec<AxisPoint>> {
    let mut groups: Vec<Vec<AxisPoint>> = Vec::new();
    for p in points {
        match groups.last_mut() {
            Some(g) if g[0].same_design(p) => g.push(*p),
            _ => groups.push(vec![*p]),
        }
    }
    groups
}

fn mean_db(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    // averaged in linear power, converted back to dB; empty fields are zero
    // power and count toward the mean
    let v: Vec<f64> = values.map(|x| x.map_or(0.0, db_to_pow)).collect();
    if v.is_empty() {
        return None;
    }
    finite(pow_to_db(v.iter().sum::<f64>() / v.len() as f64))
}

fn mean_plain(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Aggregate row over the trials of one axis point. Failed trials are left
/// out and counted.
pub fn aggregate(rows: &[&TrialRecord]) -> Option<TrialRecord> {
    let first = rows.first()?;
    let ok: Vec<&&TrialRecord> = rows.iter().filter(|r| r.is_ok()).collect();
    let failed = rows.len() - ok.len();
    let mut a = (*first).clone();
    a.seed = "mean".into();
    let has = |f: fn(&TrialRecord) -> Option<f64>| ok.iter().any(|r| f(r).is_some());
    let col_db = |f: fn(&TrialRecord) -> Option<f64>| if has(f) { mean_db(ok.iter().map(|r| f(r))) } else { None };
    let col = |f: fn(&TrialRecord) -> Option<f64>| mean_plain(ok.iter().map(|r| f(r)));
    a.e_design_db = col_db(|r| r.e_design_db);
    a.e_cbf_db = col_db(|r| r.e_cbf_db);
    a.e_tay20_db = col_db(|r| r.e_tay20_db);
    a.e_tay40_db = col_db(|r| r.e_tay40_db);
    a.med_gtx_db = col_db(|r| r.med_gtx_db);
    a.med_grx_db = col_db(|r| r.med_grx_db);
    a.cov_resid_tx = col(|r| r.cov_resid_tx);
    a.cov_resid_rx = col(|r| r.cov_resid_rx);
    a.ms = mean_plain(ok.iter().map(|r| Some(r.ms))).unwrap_or(0.0);
    a.status = format!("aggregate ok={} failed={failed}", ok.len());
    Some(a)
}

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for r in rdr.deserialize() {
        out.push(r.map_err(csv_err)?);
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("result table: {e}"))
}

fn point_index(points: &[AxisPoint], model: &str) -> BTreeMap<String, usize> {
    points.iter().map(|p| (TrialRecord::blank(p, 0, model).point_key(), p.index)).collect()
}

/// Write data rows followed by one aggregate row per axis point.
pub fn write_table(path: &Path, rows: &[TrialRecord], points: &[AxisPoint], model: &str) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp).map_err(csv_err)?;
        for r in rows {
            w.serialize(r).map_err(csv_err)?;
        }
        let index = point_index(points, model);
        let mut by_point: BTreeMap<usize, Vec<&TrialRecord>> = BTreeMap::new();
        for r in rows {
            if let Some(&i) = index.get(&r.point_key()) {
                by_point.entry(i).or_default().push(r);
            }
        }
        for rs in by_point.values() {
            if let Some(a) = aggregate(rs) {
                w.serialize(a).map_err(csv_err)?;
            }
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Outcome of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: usize,
    pub failed: usize,
    pub skipped: usize,
    pub csv: PathBuf,
}

/// Number of workers: explicit value, else the environment, else rayon's
/// default.
pub fn worker_count(explicit: Option<usize>) -> Option<usize> {
    explicit.or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok())).filter(|&n| n > 0)
}

/// Run every (axis point, trial) pair not already present in `csv_path`.
///
/// Rows are appended to the file as trials finish, so an interrupted sweep
/// keeps its completed work. When all work is done the file is rewritten in
/// (axis point, trial) order with aggregate rows at the end.
pub fn sweep(config: &ExperimentConfig, csv_path: &Path, workers: Option<usize>) -> Result<SweepSummary> {
    config.validate()?;
    let points = config.axis_points();
    let model = config.si_model.name();

    let mut existing: Vec<TrialRecord> = if csv_path.exists() {
        read_records(csv_path)?.into_iter().filter(|r| !r.is_aggregate()).collect()
    } else {
        Vec::new()
    };
    let done: HashSet<String> = existing.iter().map(|r| r.key()).collect();

    let mut work: Vec<(Vec<AxisPoint>, usize)> = Vec::new();
    let mut skipped = 0;
    for group in design_groups(&points) {
        for t in 0..config.trials {
            let todo: Vec<AxisPoint> = group
                .iter()
                .filter(|p| !done.contains(&TrialRecord::blank(p, t, model).key()))
                .copied()
                .collect();
            skipped += group.len() - todo.len();
            if !todo.is_empty() {
                work.push((todo, t));
            }
        }
    }

    // rewrite what we keep so the file has a header and no aggregates, then
    // append as results arrive
    {
        let mut w = csv::Writer::from_path(csv_path).map_err(csv_err)?;
        if existing.is_empty() {
            w.write_record(CSV_COLUMNS).map_err(csv_err)?;
        }
        for r in &existing {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush()?;
    }
    let file = OpenOptions::new().append(true).open(csv_path)?;
    let sink = Mutex::new(csv::WriterBuilder::new().has_headers(false).from_writer(file));

    let run = || -> Vec<TrialRecord> {
        work.par_iter()
            .flat_map_iter(|(group, t)| {
                let recs = match trial_channel(config, *t) {
                    Ok(h) => run_group_with_channel(config, group, *t, &h),
                    Err(e) => group
                        .iter()
                        .map(|p| {
                            let mut r = TrialRecord::blank(p, *t, model);
                            r.status = format!("failed: {e}");
                            r
                        })
                        .collect(),
                };
                if let Ok(mut w) = sink.lock() {
                    for r in &recs {
                        let _ = w.serialize(r);
                    }
                    let _ = w.flush();
                }
                recs
            })
            .collect()
    };
    let fresh = match worker_count(workers) {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?
            .install(run),
        None => run(),
    };
    drop(sink);

    existing.extend(fresh);
    let index = point_index(&points, model);
    let order = |r: &TrialRecord| {
        (
            index.get(&r.point_key()).copied().unwrap_or(usize::MAX),
            r.seed.parse::<usize>().unwrap_or(usize::MAX),
        )
    };
    existing.sort_by_key(order);
    write_table(csv_path, &existing, &points, model)?;
    let failed = existing.iter().filter(|r| !r.is_ok()).count();
    Ok(SweepSummary {
        rows: existing.len(),
        failed,
        skipped,
        csv: csv_path.to_path_buf(),
    })
}

/// Run manifest written next to a result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub build_id: String,
    pub wall_time_s: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub rows: usize,
    pub failed: usize,
    pub workers: Option<usize>,
}

pub fn build_id() -> String {
    format!(
        "{} {}{}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        option_env!("FDBEAM_BUILD_ID").map(|s| format!("+{s}")).unwrap_or_default()
    )
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(serde_json::to_string_pretty(manifest)?.as_bytes())?;
    Ok(())
}

/// Mean link metrics at one (SNR, INR) point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkRow {
    pub snr_db: f64,
    pub inr_db: f64,
    pub r_tx: f64,
    pub r_rx: f64,
    pub sum_rate: f64,
    pub c_fd: f64,
    pub c_hd: f64,
}

fn best_beam(beams: &CMat, h: &CVec) -> usize {
    let mut best = 0;
    let mut gain = f64::NEG_INFINITY;
    for i in 0..beams.ncols() {
        let g = dot_h(&beams.column(i).into_owned(), h).norm_sqr();
        if g > gain {
            gain = g;
            best = i;
        }
    }
    best
}

/// Average rates over users drawn once and reused at every (SNR, INR).
/// Each user is served by the beam with the largest gain toward it.
pub fn link_sweep(
    config: &ExperimentConfig,
    f: &CMat,
    w: &CMat,
    h: &CMat,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<LinkRow>> {
    if f.nrows() != config.geometry_tx.num_elements() || w.nrows() != config.geometry_rx.num_elements() {
        return Err(Error::ShapeMismatch("codebooks do not match the configured arrays".into()));
    }
    let n = config.link.n_user_draws.max(1);
    let grid_tx = config.grid_tx.to_grid();
    let grid_rx = config.grid_rx.to_grid();
    let users: Vec<_> = (0..n)
        .map(|_| {
            let ut = draw_user_channel(&config.geometry_tx, &grid_tx, rng);
            let ur = draw_user_channel(&config.geometry_rx, &grid_rx, rng);
            let fi = best_beam(f, &ut.entries);
            let wj = best_beam(w, &ur.entries);
            (ut.entries, ur.entries, f.column(fi).into_owned(), w.column(wj).into_owned())
        })
        .collect();
    let mut rows = Vec::new();
    for &snr_db in &config.link.snr_db {
        for &inr_db in &config.link.inr_db {
            let b = LinkBudget::from_db(snr_db, snr_db, inr_db);
            let (mut rt, mut rr, mut cf, mut ch) = (0.0, 0.0, 0.0, 0.0);
            for (ht, hr, fb, wb) in &users {
                let r = rates(&b, ht, fb, hr, wb, h);
                rt += r.r_tx;
                rr += r.r_rx;
                cf += r.c_fd;
                ch += r.c_hd;
            }
            let k = n as f64;
            rows.push(LinkRow {
                snr_db,
                inr_db,
                r_tx: rt / k,
                r_rx: rr / k,
                sum_rate: (rt + rr) / k,
                c_fd: cf / k,
                c_hd: ch / k,
            });
        }
    }
    Ok(rows)
}
