//! The `fdbeam` command-line front end.
//!
//! Angles are given in degrees and power quantities in dB; conversion to
//! radians and linear units happens here. Every output is CSV or JSON.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channels::stream_rng;
use crate::codebooks::Codebook;
use crate::designer::{design, CoverageResiduals};
use crate::error::{Error, Result};
use crate::geometry::{dense_eval_grid, Direction};
use crate::harness::{
    build_id, design_groups, link_sweep, run_group_with_channel, sweep, trial_channel, write_manifest,
    write_table, ExperimentConfig, Manifest,
};
use crate::linalg::CMat;
use crate::metrics::{average_coupling, coverage, pattern_cut, PatternCut};
use crate::pow_to_db;

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Bad usage, unreadable files or invalid inputs.
pub const EXIT_USAGE: i32 = 1;
/// Infeasible design or failed trials.
pub const EXIT_FAILED: i32 = 2;

/// Stream reserved for user draws in `linksim`.
const LINK_STREAM: u64 = u64::MAX;

#[derive(Debug, Parser)]
#[command(name = "fdbeam", version, about = "Analog beamforming codebooks for full-duplex transceivers")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment config (JSON). Defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Trial index for single-trial commands; master seed for `sweep`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (overrides FDBEAM_WORKERS).
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Design tx/rx codebooks for the first axis point of the config.
    Design,
    /// Coupling and coverage of saved codebooks.
    Eval(EvalArgs),
    /// Design against CBF, Tay-20 and Tay-40 at every axis point.
    Bench,
    /// Monte Carlo sweep over every axis point and trial.
    Sweep,
    /// Link rates versus SNR and INR.
    Linksim(CodebookPair),
    /// Azimuth or elevation pattern cut of one beam.
    Cut(CutArgs),
    /// Build information and the default config.
    Info,
}

#[derive(Debug, Args)]
pub struct CodebookPair {
    #[arg(long, value_name = "PATH")]
    pub tx: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub rx: PathBuf,
    /// Channel file written by `design`; drawn from the config when omitted.
    #[arg(long, value_name = "PATH")]
    pub channel: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub codebooks: CodebookPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CutAxis {
    Azimuth,
    Elevation,
}

#[derive(Debug, Args)]
pub struct CutArgs {
    #[arg(long, value_name = "PATH")]
    pub codebook: PathBuf,
    #[arg(long, value_name = "INDEX")]
    pub beam: usize,
    #[arg(long, value_enum, default_value = "azimuth")]
    pub axis: CutAxis,
    /// Fixed angle of the cut in degrees (elevation for an azimuth cut).
    #[arg(long, value_name = "DEG", default_value_t = 0.0, allow_negative_numbers = true)]
    pub at: f64,
    #[arg(long, value_name = "N", default_value_t = 361)]
    pub points: usize,
}

/// Channel matrix on disk, entries in column-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFile {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ChannelFile {
    pub fn from_matrix(h: &CMat) -> Self {
        Self {
            rows: h.nrows(),
            cols: h.ncols(),
            re: h.iter().map(|z| z.re).collect(),
            im: h.iter().map(|z| z.im).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let n = self.rows * self.cols;
        if self.re.len() != n || self.im.len() != n {
            return Err(Error::Format(format!(
                "channel declares {}x{} but has {} real and {} imaginary parts",
                self.rows,
                self.cols,
                self.re.len(),
                self.im.len()
            )));
        }
        if self.re.iter().chain(&self.im).any(|x| !x.is_finite()) {
            return Err(Error::Format("channel has non-finite entries".into()));
        }
        Ok(CMat::from_iterator(
            self.rows,
            self.cols,
            self.re.iter().zip(&self.im).map(|(&r, &i)| Complex64::new(r, i)),
        ))
    }

    pub fn save(path: &Path, h: &CMat) -> Result<()> {
        fs::write(path, serde_json::to_string(&Self::from_matrix(h))?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CMat> {
        let text = fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        serde_json::from_str::<Self>(&text)?.to_matrix()
    }
}

/// Contents of `design_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub trial: u64,
    pub e_final: f64,
    pub e_final_db: Option<f64>,
    pub regularized_objective: f64,
    pub coverage: CoverageResiduals,
    pub per_beam_gain_tx: Vec<f64>,
    pub per_beam_gain_rx: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub solver_iterations: usize,
    pub unconverged_solves: usize,
    pub warnings: Vec<String>,
    pub config_hash: String,
}

/// Contents of `eval_summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub e: f64,
    pub e_db: Option<f64>,
    pub median_gain_tx_db: f64,
    pub median_gain_rx_db: f64,
}

struct Ctx {
    config: ExperimentConfig,
    out: PathBuf,
    seed: Option<u64>,
    workers: Option<usize>,
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn trial(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn channel(&self, file: Option<&Path>) -> Result<CMat> {
        match file {
            Some(p) => ChannelFile::load(p),
            None => trial_channel(&self.config, self.trial() as usize),
        }
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_design(ctx: &Ctx) -> Result<i32> {
    let cfg = &ctx.config;
    let point = cfg.axis_points()[0];
    let h = ctx.channel(None)?;
    let params = cfg.design_params(&point);
    let r = design(
        &h,
        &cfg.geometry_tx,
        &cfg.geometry_rx,
        &cfg.directions_tx()?,
        &cfg.directions_rx()?,
        &params,
    )?;
    r.tx_codebook.save(&ctx.path("tx_codebook.json"))?;
    r.rx_codebook.save(&ctx.path("rx_codebook.json"))?;
    ChannelFile::save(&ctx.path("channel.json"), &h)?;
    let report = DesignReport {
        trial: ctx.trial(),
        e_final: r.e_final,
        e_final_db: finite(pow_to_db(r.e_final)),
        regularized_objective: r.regularized_objective,
        coverage: r.coverage,
        per_beam_gain_tx: r.per_beam_gain_tx,
        per_beam_gain_rx: r.per_beam_gain_rx,
        objective_trace: r.objective_trace,
        solver_iterations: r.solver_iterations,
        unconverged_solves: r.unconverged_solves,
        warnings: r.warnings,
        config_hash: cfg.hash(),
    };
    fs::write(ctx.path("design_report.json"), serde_json::to_string_pretty(&report)?)?;
    ctx.note(&format!(
        "E = {:.3} dB, {} unconverged solves",
        pow_to_db(report.e_final),
        report.unconverged_solves
    ));
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct PairRow {
    rx_beam: usize,
    tx_beam: usize,
    coupling: f64,
}

#[derive(Serialize)]
struct CoverageRow {
    side: &'static str,
    azimuth_deg: f64,
    elevation_deg: f64,
    gain: f64,
    gain_db: f64,
}

fn coverage_rows(side: &'static str, cb: &Codebook, dense: &[Direction], rows: &mut Vec<CoverageRow>) -> f64 {
    let rep = coverage(cb, dense);
    for (d, &g) in rep.directions.iter().zip(&rep.gains) {
        rows.push(CoverageRow {
            side,
            azimuth_deg: d.azimuth.to_degrees(),
            elevation_deg: d.elevation.to_degrees(),
            gain: g,
            gain_db: pow_to_db(g),
        });
    }
    rep.median_db
}

fn cmd_eval(ctx: &Ctx, args: &EvalArgs) -> Result<i32> {
    let tx = Codebook::load(&args.codebooks.tx)?;
    let rx = Codebook::load(&args.codebooks.rx)?;
    let h = ctx.channel(args.codebooks.channel.as_deref())?;
    let rep = average_coupling(&rx.to_matrix(), &h, &tx.to_matrix())?;
    let mut pairs = Vec::with_capacity(rx.len() * tx.len());
    for j in 0..rx.len() {
        for i in 0..tx.len() {
            pairs.push(PairRow {
                rx_beam: j,
                tx_beam: i,
                coupling: rep.pair_matrix[(j, i)],
            });
        }
    }
    write_csv(&ctx.path("coupling.csv"), &pairs)?;
    let cfg = &ctx.config;
    let dense_tx = dense_eval_grid(&cfg.grid_tx.to_grid(), cfg.dense.n_az, cfg.dense.n_el);
    let dense_rx = dense_eval_grid(&cfg.grid_rx.to_grid(), cfg.dense.n_az, cfg.dense.n_el);
    let mut rows = Vec::new();
    let med_tx = coverage_rows("tx", &tx, &dense_tx, &mut rows);
    let med_rx = coverage_rows("rx", &rx, &dense_rx, &mut rows);
    write_csv(&ctx.path("coverage.csv"), &rows)?;
    let summary = EvalSummary {
        e: rep.e,
        e_db: finite(rep.e_db),
        median_gain_tx_db: med_tx,
        median_gain_rx_db: med_rx,
    };
    fs::write(ctx.path("eval_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    ctx.note(&format!("E = {:.3} dB", rep.e_db));
    Ok(EXIT_OK)
}

fn cmd_bench(ctx: &Ctx) -> Result<i32> {
    let cfg = &ctx.config;
    let trial = ctx.trial() as usize;
    let h = trial_channel(cfg, trial)?;
    let points = cfg.axis_points();
    let mut rows = Vec::new();
    for group in design_groups(&points) {
        rows.extend(run_group_with_channel(cfg, &group, trial, &h));
    }
    let path = ctx.path("bench.csv");
    write_table(&path, &rows, &points, cfg.si_model.name())?;
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    ctx.note(&format!("{} rows, {failed} failed, written to {}", rows.len(), path.display()));
    Ok(if failed > 0 { EXIT_FAILED } else { EXIT_OK })
}

fn cmd_sweep(ctx: &Ctx) -> Result<i32> {
    let mut cfg = ctx.config.clone();
    if let Some(s) = ctx.seed {
        cfg.master_seed = s;
    }
    let start = std::time::Instant::now();
    let csv = ctx.path("results.csv");
    let summary = sweep(&cfg, &csv, ctx.workers)?;
    let manifest = Manifest {
        config_hash: cfg.hash(),
        build_id: build_id(),
        wall_time_s: start.elapsed().as_secs_f64(),
        trials: cfg.trials,
        master_seed: cfg.master_seed,
        rows: summary.rows,
        failed: summary.failed,
        workers: crate::harness::worker_count(ctx.workers),
    };
    write_manifest(&ctx.path("manifest.json"), &manifest)?;
    ctx.note(&format!(
        "{} rows ({} resumed, {} failed), written to {}",
        summary.rows,
        summary.skipped,
        summary.failed,
        csv.display()
    ));
    Ok(if summary.failed > 0 { EXIT_FAILED } else { EXIT_OK })
}

fn cmd_linksim(ctx: &Ctx, args: &CodebookPair) -> Result<i32> {
    let tx = Codebook::load(&args.tx)?;
    let rx = Codebook::load(&args.rx)?;
    let h = ctx.channel(args.channel.as_deref())?;
    let mut rng = stream_rng(ctx.seed.unwrap_or(ctx.config.master_seed), LINK_STREAM);
    let rows = link_sweep(&ctx.config, &tx.to_matrix(), &rx.to_matrix(), &h, &mut rng)?;
    write_csv(&ctx.path("link.csv"), &rows)?;
    ctx.note(&format!("{} rate points written", rows.len()));
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct CutRow {
    angle_deg: f64,
    gain: f64,
    gain_db: f64,
}

fn cmd_cut(ctx: &Ctx, args: &CutArgs) -> Result<i32> {
    let cb = Codebook::load(&args.codebook)?;
    if args.beam >= cb.len() {
        return Err(Error::InvalidParameter(format!(
            "beam {} out of range, codebook has {}",
            args.beam,
            cb.len()
        )));
    }
    if args.points < 2 {
        return Err(Error::InvalidParameter("a cut needs at least 2 points".into()));
    }
    let at = args.at.to_radians();
    let cut = match args.axis {
        CutAxis::Azimuth => PatternCut::azimuth(at),
        CutAxis::Elevation => PatternCut::elevation(at),
    };
    let rows: Vec<CutRow> = pattern_cut(&cb.beam(args.beam), &cb.geometry, &cut, args.points)
        .into_iter()
        .map(|(a, g)| CutRow {
            angle_deg: a.to_degrees(),
            gain: g,
            gain_db: pow_to_db(g),
        })
        .collect();
    write_csv(&ctx.path("cut.csv"), &rows)?;
    Ok(EXIT_OK)
}

fn cmd_info(ctx: &Ctx) -> Result<i32> {
    use std::io::Write;
    let text = format!("{}\n{}\n", build_id(), serde_json::to_string_pretty(&ctx.config)?);
    // a closed pipe (e.g. `| head`) is not an error worth reporting
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    Ok(EXIT_OK)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) | Error::Design { .. } => EXIT_FAILED,
        _ => EXIT_USAGE,
    }
}

/// Parse `args` (including the program name), run the command and return
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<i32> {
    let g = &cli.global;
    let config = match &g.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io(io) => Error::Format(format!("{}: {io}", p.display())),
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    if !matches!(cli.command, Command::Info) {
        fs::create_dir_all(&g.out)?;
    }
    let ctx = Ctx {
        config,
        out: g.out.clone(),
        seed: g.seed,
        workers: g.workers,
        quiet: g.quiet,
    };
    match &cli.command {
        Command::Design => cmd_design(&ctx),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Bench => cmd_bench(&ctx),
        Command::Sweep => cmd_sweep(&ctx),
        Command::Linksim(a) => cmd_linksim(&ctx, a),
        Command::Cut(a) => cmd_cut(&ctx, a),
        Command::Info => cmd_info(&ctx),
    }
}
