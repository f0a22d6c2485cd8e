//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use fdbeam::channels::{
    complex_normal, draw_error, draw_rayleigh, draw_user_channel, perturb, stream_rng, worst_case_error,
    SIChannelModel,
};
use fdbeam::codebooks::{cbf, scale, windowed_cbf, WindowSpec};
use fdbeam::designer::{design, design_robust, DesignParams, DesignResult};
use fdbeam::geometry::{
    array_response, coverage_grid, dense_eval_grid, steering_matrix, ArrayGeometry, Direction, DirectionGrid,
};
use fdbeam::harness::{benchmarks, sweep, ExperimentConfig, WindowSettings};
use fdbeam::linalg::{dot_h, spectral_norm, CMat, CVec};
use fdbeam::metrics::{average_coupling, coverage_of_matrix, rates, LinkBudget};
use fdbeam::quantization::QuantizationSpec;
use fdbeam::solver::{oracle_solve, solve_beam, BeamSubproblem, OracleGrid, SolverConfig};
use fdbeam::{db_to_pow, pow_to_db};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cmat(r: usize, c: usize, rng: &mut ChaCha8Rng) -> CMat {
    CMat::from_fn(r, c, |_, _| complex_normal(rng))
}

fn default_dirs() -> Vec<Direction> {
    coverage_grid(&DirectionGrid::default()).unwrap()
}

fn b5() -> QuantizationSpec {
    QuantizationSpec::log(5, 5, 0.25)
}

// 1
fn steering_norm() -> Outcome {
    let mut rng = stream_rng(101, 0);
    let geoms = [
        ArrayGeometry::upa(8, 8),
        ArrayGeometry::upa(4, 16),
        ArrayGeometry::upa(1, 7).with_spacing(0.37),
        ArrayGeometry::upa(5, 3).with_origin([0.0, 3.0, -1.0]),
    ];
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let d = Direction::new(
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2),
        );
        for g in &geoms {
            let n = g.num_elements() as f64;
            let a = array_response(g, d);
            worst = worst.max((a.norm_squared() - n).abs() / n);
        }
    }
    outcome(worst <= 1e-9, format!("max |‖a‖²−N|/N = {worst:.2e} over 10^4 directions x 4 arrays (tol 1e-9)"))
}

// 2
fn direction_count() -> Outcome {
    let d = default_dirs();
    let (a0, e0) = d[0].to_degrees();
    let (a1, e1) = d[d.len() - 1].to_degrees();
    let corners = (a0 + 60.0).abs() < 1e-9 && (e0 + 30.0).abs() < 1e-9 && (a1 - 60.0).abs() < 1e-9 && (e1 - 30.0).abs() < 1e-9;
    outcome(d.len() == 45 && corners, format!("{} directions, first ({a0:.0}°, {e0:.0}°), last ({a1:.0}°, {e1:.0}°)", d.len()))
}

// 3
fn cbf_peak() -> Outcome {
    let g = ArrayGeometry::upa(8, 8);
    let n2 = 64.0f64 * 64.0;
    let dirs = default_dirs();
    let mut exact: f64 = 0.0;
    for d in &dirs {
        let a = array_response(&g, *d);
        exact = exact.max((dot_h(&a, &a).norm_sqr() - n2).abs() / n2);
    }
    let mut worst_db: f64 = 0.0;
    for spec in [QuantizationSpec::phase_only(5), b5()] {
        let cb = cbf(&g, &dirs, &spec);
        for (k, d) in dirs.iter().enumerate() {
            let gain = dot_h(&array_response(&g, *d), &cb.beam(k)).norm_sqr();
            worst_db = worst_db.max((pow_to_db(gain / n2)).abs());
        }
    }
    outcome(
        exact <= 1e-12 && worst_db <= 0.1,
        format!("unquantized rel err {exact:.1e}; worst 5-bit peak loss {worst_db:.4} dB (tol 0.1 dB)"),
    )
}

// 4
fn taylor_losses() -> Outcome {
    let g = ArrayGeometry::upa(8, 8);
    let dirs = default_dirs();
    let spec = QuantizationSpec::near_continuous();
    let own = |m: &CMat| -> f64 {
        let a = steering_matrix(&g, &dirs).entries;
        let s: f64 = (0..dirs.len())
            .map(|k| dot_h(&a.column(k).into_owned(), &m.column(k).into_owned()).norm_sqr())
            .sum();
        s / dirs.len() as f64
    };
    let c = own(&cbf(&g, &dirs, &spec).to_matrix());
    let t20 = own(&windowed_cbf(&g, &dirs, &spec, &WindowSpec::taylor(20.0)).unwrap().to_matrix());
    let t40 = own(&windowed_cbf(&g, &dirs, &spec, &WindowSpec::taylor(40.0)).unwrap().to_matrix());
    let (l20, l40) = (pow_to_db(c / t20), pow_to_db(c / t40));
    outcome(
        (l20 - 2.0).abs() <= 1.0 && (l40 - 5.0).abs() <= 1.5,
        format!("Tay-20 loss {l20:.2} dB (2±1), Tay-40 loss {l40:.2} dB (5±1.5)"),
    )
}

// 5
fn slope_two() -> Outcome {
    let mut rng = stream_rng(105, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (nt, nr) = (rng.random_range(1..9), rng.random_range(1..9));
        let (mt, mr) = (rng.random_range(1..6), rng.random_range(1..6));
        let h = cmat(nr, nt, &mut rng);
        let f = cmat(nt, mt, &mut rng);
        let w = cmat(nr, mr, &mut rng);
        let (al, be) = (complex_normal(&mut rng), complex_normal(&mut rng));
        let e = average_coupling(&w, &h, &f).unwrap().e;
        let es = average_coupling(&(&w * al), &h, &(&f * be)).unwrap().e;
        let want = al.norm_sqr() * be.norm_sqr() * e;
        worst = worst.max((es - want).abs() / want);
    }
    // scaled CBF: E(Δ²) should sit on E(0 dB) + 2Δ² up to amplitude
    // rounding of half an LSB per side, as long as the scaled weights stay
    // inside the attenuator range
    let g = ArrayGeometry::upa(8, 8);
    let dirs = default_dirs();
    let h = draw_rayleigh(64, 64, &mut rng);
    let line_dev = |spec: QuantizationSpec, deltas: &[f64]| -> (f64, usize) {
        let e_at = |d: f64| {
            let s = scale(&cbf(&g, &dirs, &spec), db_to_pow(d).sqrt()).unwrap();
            let m = s.codebook.to_matrix();
            (average_coupling(&m, &h, &m).unwrap().e_db, s.saturated)
        };
        let e0 = e_at(0.0).0;
        let mut dev: f64 = 0.0;
        let mut sat = 0;
        for &d in deltas {
            let (e, s) = e_at(d);
            dev = dev.max((e - (e0 + 2.0 * d)).abs());
            sat += s;
        }
        (dev, sat)
    };
    let fine = QuantizationSpec::near_continuous();
    let (dev_fine, sat_fine) = line_dev(fine, &[-3.0, -6.0, -9.0, -12.0]);
    let coarse = b5();
    let range_db = coarse.lsb_db * (coarse.num_amp_levels() - 1) as f64;
    let in_range: Vec<f64> = [-1.0, -3.0, -5.0, -7.0].into_iter().filter(|d: &f64| -d <= range_db).collect();
    let (dev_b5, sat_b5) = line_dev(coarse, &in_range);
    let (dev_floor, sat_floor) = line_dev(coarse, &[-12.0]);
    let (tol_fine, tol_b5) = (fine.lsb_db, coarse.lsb_db);
    outcome(
        worst <= 1e-12 && dev_fine <= tol_fine && dev_b5 <= tol_b5 && sat_fine + sat_b5 == 0,
        format!(
            "identity rel err {worst:.1e} (tol 1e-12); scaled CBF off the slope-2 line by {dev_fine:.4} dB over 0..-12 dB at {}-bit amplitude (tol {tol_fine} dB) and {dev_b5:.3} dB over 0..-7 dB at 5 bits (tol {tol_b5} dB); \
             at -12 dB the 5-bit attenuators ({range_db} dB range) saturate {sat_floor} weights and sit {dev_floor:.2} dB off the line",
            fine.b_amp
        ),
    )
}

// 6
fn robust_bound() -> Outcome {
    let mut rng = stream_rng(106, 0);
    let mut violations = 0;
    let mut max_ratio: f64 = 0.0;
    for _ in 0..100_000 {
        let (nt, nr) = (rng.random_range(1..6), rng.random_range(1..6));
        let (mt, mr) = (rng.random_range(1..5), rng.random_range(1..5));
        let h = cmat(nr, nt, &mut rng);
        let f = cmat(nt, mt, &mut rng);
        let w = cmat(nr, mr, &mut rng);
        let eps = rng.random_range(0.0..2.0);
        let radius = eps * rng.random::<f64>().sqrt();
        let d = draw_error(nr, nt, radius, &mut rng);
        let lhs = (w.adjoint() * perturb(&h, &d).unwrap() * &f).norm();
        let root = ((nt * nr) as f64).sqrt();
        let rhs = (w.adjoint() * &h * &f).norm() + eps * root * spectral_norm(&w) * spectral_norm(&f);
        // rounding in the two sides is far below 1e-12 relative
        if lhs > rhs * (1.0 + 1e-12) {
            violations += 1;
        }
        max_ratio = max_ratio.max(lhs / rhs);
    }
    let mut worst_tight: f64 = 0.0;
    for _ in 0..1000 {
        let (nt, nr) = (rng.random_range(1..7), rng.random_range(1..7));
        let f = cmat(nt, rng.random_range(1..5), &mut rng);
        let w = cmat(nr, rng.random_range(1..5), &mut rng);
        let eps = rng.random_range(0.01..2.0);
        let d = worst_case_error(&f, &w, eps).unwrap();
        let cross = (w.adjoint() * &d * &f).norm();
        let want = eps * spectral_norm(&w) * spectral_norm(&f);
        worst_tight = worst_tight.max((cross - want).abs() / want);
    }
    outcome(
        violations == 0 && worst_tight <= 1e-9,
        format!(
            "{violations} violations in 10^5 draws (max lhs/rhs {max_ratio:.6}); worst-case Δ cross term rel err {worst_tight:.1e} (tol 1e-9)"
        ),
    )
}

// 7
fn solver_oracle() -> Outcome {
    let mut rng = stream_rng(107, 0);
    let problems: Vec<BeamSubproblem> = (0..50)
        .map(|i| {
            let a = array_response(&ArrayGeometry::upa(1, 2), Direction::new(rng.random_range(-1.2..1.2), 0.0));
            let m = cmat(rng.random_range(1..4), 2, &mut rng);
            let g = rng.random_range(0.2..0.95) * 2.0;
            let s = rng.random_range(0.0..0.4);
            let rho = if i % 2 == 0 { 0.0 } else { rng.random_range(0.0..1.0) };
            BeamSubproblem::new(m, a, g, s, rho).unwrap()
        })
        .collect();
    let res: Vec<(f64, f64, bool)> = problems
        .par_iter()
        .map(|p| {
            let r = solve_beam(p, &SolverConfig::default()).unwrap();
            let o = oracle_solve(p, OracleGrid::default()).unwrap();
            let feasible = p.gain_residual(&r.f) <= 1e-8 && p.box_residual(&r.f) <= 1e-8;
            (p.objective(&r.f), o.objective, feasible)
        })
        .collect();
    let mut bad = 0;
    let mut worst: f64 = 0.0;
    for &(s, o, _) in &res {
        let tol = f64::max(1e-3, 1e-2 * o);
        worst = worst.max((s - o).abs() / tol);
        if (s - o).abs() > tol {
            bad += 1;
        }
    }
    let infeasible = res.iter().filter(|r| !r.2).count();
    outcome(
        bad == 0 && infeasible == 0,
        format!("{bad}/50 outside max(1e-3, 1e-2·oracle) (worst {worst:.2} of tolerance); {infeasible} infeasible at 1e-8"),
    )
}

// 8
fn coupling_brute_force() -> Outcome {
    let mut rng = stream_rng(108, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (nt, nr) = (rng.random_range(1..6), rng.random_range(1..6));
        let (mt, mr) = (rng.random_range(1..5), rng.random_range(1..5));
        let h = cmat(nr, nt, &mut rng);
        let f = cmat(nt, mt, &mut rng);
        let w = cmat(nr, mr, &mut rng);
        let mut acc = 0.0;
        for j in 0..mr {
            for i in 0..mt {
                let mut z = Complex64::new(0.0, 0.0);
                for n in 0..nr {
                    for m in 0..nt {
                        z += w[(n, j)].conj() * h[(n, m)] * f[(m, i)];
                    }
                }
                acc += z.norm_sqr();
            }
        }
        let want = acc / (mt * mr) as f64;
        let got = average_coupling(&w, &h, &f).unwrap().e;
        worst = worst.max((got - want).abs() / want);
    }
    outcome(worst <= 1e-12, format!("max rel err {worst:.1e} over 100 instances (tol 1e-12)"))
}

struct Run {
    result: DesignResult,
    e_design_db: f64,
    e_cbf_db: f64,
    e_tay40_db: f64,
    med_tx_db: f64,
    med_rx_db: f64,
    med_cbf_db: f64,
}

fn run_setup(model: &SIChannelModel, delta_db: f64, seeds: u64) -> Vec<Run> {
    let g = ArrayGeometry::upa(8, 8);
    let grid = DirectionGrid::default();
    let dirs = default_dirs();
    let dense = dense_eval_grid(&grid, 121, 61);
    let spec = b5();
    let params = DesignParams::from_db(delta_db, -20.0, f64::NEG_INFINITY, spec);
    let channels: Vec<CMat> = (0..seeds).map(|s| model.draw(&g, &g, &mut stream_rng(s, 0)).unwrap()).collect();
    // deterministic channels repeat; design each distinct one once
    let mut distinct: Vec<CMat> = Vec::new();
    for h in &channels {
        if !distinct.contains(h) {
            distinct.push(h.clone());
        }
    }
    let runs: Vec<Run> = distinct
        .par_iter()
        .map(|h| {
            let r = design(h, &g, &g, &dirs, &dirs, &params).unwrap();
            let b = benchmarks(&g, &dirs, &spec, delta_db, &WindowSettings::default()).unwrap();
            let (c, t) = (b.cbf.to_matrix(), b.tay40.to_matrix());
            let f = r.tx_codebook.to_matrix();
            let w = r.rx_codebook.to_matrix();
            Run {
                e_design_db: pow_to_db(r.e_final),
                e_cbf_db: average_coupling(&c, h, &c).unwrap().e_db,
                e_tay40_db: average_coupling(&t, h, &t).unwrap().e_db,
                med_tx_db: coverage_of_matrix(&g, &f, &dense).median_db,
                med_rx_db: coverage_of_matrix(&g, &w, &dense).median_db,
                med_cbf_db: coverage_of_matrix(&g, &c, &dense).median_db,
                result: r,
            }
        })
        .collect();
    channels
        .iter()
        .map(|h| {
            let i = distinct.iter().position(|d| d == h).unwrap();
            let r = &runs[i];
            Run {
                result: r.result.clone(),
                ..*r
            }
        })
        .collect()
}

impl Run {
    fn improvement_over_cbf(&self) -> f64 {
        self.e_cbf_db - self.e_design_db
    }
}

// 9
fn rayleigh_improvement(runs: &[Run]) -> Outcome {
    let wins = runs.iter().filter(|r| r.e_design_db < r.e_cbf_db).count();
    let mean = runs.iter().map(Run::improvement_over_cbf).sum::<f64>() / runs.len() as f64;
    let need = (0.9 * runs.len() as f64).ceil() as usize;
    outcome(
        wins >= need && mean >= 3.0,
        format!("design below CBF on {wins}/{} seeds (need {need}); mean improvement {mean:.2} dB (need 3)", runs.len()),
    )
}

// 10
fn spherical_improvement(runs: &[Run]) -> Outcome {
    let mean = runs.iter().map(|r| r.e_tay40_db - r.e_design_db).sum::<f64>() / runs.len() as f64;
    let cbf = runs.iter().map(Run::improvement_over_cbf).sum::<f64>() / runs.len() as f64;
    outcome(
        mean >= 5.0,
        format!(
            "mean improvement over CBF+Tay-40 {mean:.2} dB (need 5), over CBF {cbf:.2} dB; design E {:.2} dB",
            runs[0].e_design_db
        ),
    )
}

// 11
fn coverage_preservation(sets: &[(&str, f64, &[Run])]) -> Outcome {
    let mut pre: f64 = f64::NEG_INFINITY;
    let mut post_ratio: f64 = 0.0;
    let mut worst_med: f64 = 0.0;
    let mut cbf_med: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, delta_db, runs) in sets {
        let n2 = db_to_pow(*delta_db) * 64.0 * 64.0;
        let mut med: f64 = 0.0;
        for r in runs.iter() {
            let c = &r.result.coverage;
            pre = pre.max(c.tx_pre).max(c.rx_pre);
            post_ratio = post_ratio.max(c.tx_post / c.tx_bound).max(c.rx_post / c.rx_bound);
            let d = (r.med_tx_db - pow_to_db(n2)).abs().max((r.med_rx_db - pow_to_db(n2)).abs());
            med = med.max(d);
            cbf_med = cbf_med.max((r.med_cbf_db - pow_to_db(n2)).abs());
        }
        worst_med = worst_med.max(med);
        parts.push(format!("{name} worst median gap {med:.2} dB"));
    }
    outcome(
        pre <= 0.0 && post_ratio <= 1.1 && worst_med <= 1.5,
        format!(
            "max pre-quantization residual {pre:.2e} (need <= 0); max post/bound {post_ratio:.3} (need <= 1.1); {} (need <= 1.5; scaled CBF gap {cbf_med:.2} dB)",
            parts.join(", ")
        ),
    )
}

// 12
fn robust_audit() -> Outcome {
    let g = ArrayGeometry::upa(8, 8);
    let dirs = default_dirs();
    let h = draw_rayleigh(64, 64, &mut stream_rng(112, 0));
    let params = DesignParams::from_db(0.0, -20.0, f64::NEG_INFINITY, b5());
    let nominal = design(&h, &g, &g, &dirs, &dirs, &params).unwrap();
    let zero = design_robust(&h, &g, &g, &dirs, &dirs, &params, 0.0).unwrap();
    let identical = nominal == zero;
    let eps = 0.1;
    let robust = design_robust(&h, &g, &g, &dirs, &dirs, &params, eps).unwrap();
    let f = robust.tx_codebook.to_matrix();
    let w = robust.rx_codebook.to_matrix();
    let bound = robust.regularized_objective;
    let mut rng = stream_rng(112, 1);
    let mut exceed = 0;
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        // half the draws on the sphere, half inside the ball
        let r = if k % 2 == 0 { eps } else { eps * rng.random::<f64>().sqrt() };
        let d = draw_error(64, 64, r, &mut rng);
        let real = (w.adjoint() * perturb(&h, &d).unwrap() * &f).norm();
        worst = worst.max(real / bound);
        if real > bound {
            exceed += 1;
        }
    }
    let d = worst_case_error(&f, &w, eps).unwrap();
    let adversarial = (w.adjoint() * perturb(&h, &d).unwrap() * &f).norm() / bound;
    outcome(
        identical && exceed == 0,
        format!(
            "ε̃=0 identical to nominal: {identical}; {exceed}/100 draws above the regularized objective (max ratio {worst:.4}, rank-one worst case {adversarial:.4})"
        ),
    )
}

// 13
fn link_properties() -> Outcome {
    let mut rng = stream_rng(113, 0);
    let g = ArrayGeometry::upa(4, 4);
    let grid = DirectionGrid::default();
    let inrs: Vec<f64> = (0..=16).map(|k| -40.0 + 10.0 * k as f64).collect();
    let mut rx_increase = 0;
    let mut above_cap = 0;
    let mut half_mismatch = 0;
    for _ in 0..1000 {
        let h = cmat(16, 16, &mut rng);
        let ut = draw_user_channel(&g, &grid, &mut rng).entries;
        let ur = draw_user_channel(&g, &grid, &mut rng).entries;
        let unit_box = |rng: &mut ChaCha8Rng| -> CVec {
            CVec::from_fn(16, |_, _| Complex64::from_polar(rng.random::<f64>().sqrt(), rng.random_range(0.0..std::f64::consts::TAU)))
        };
        let f = unit_box(&mut rng);
        let w = unit_box(&mut rng);
        let snr = rng.random_range(-20.0..30.0);
        let mut prev = f64::INFINITY;
        for &inr in &inrs {
            let r = rates(&LinkBudget::from_db(snr, snr, inr), &ut, &f, &ur, &w, &h);
            if r.r_rx > prev {
                rx_increase += 1;
            }
            prev = r.r_rx;
            if r.sum > r.c_fd {
                above_cap += 1;
            }
            if r.c_hd != r.c_fd / 2.0 {
                half_mismatch += 1;
            }
        }
    }
    outcome(
        rx_increase == 0 && above_cap == 0 && half_mismatch == 0,
        format!("10^3 draws x {} INR values: R_rx increases {rx_increase}, sum above C_fd {above_cap}, C_hd != C_fd/2 {half_mismatch}", inrs.len()),
    )
}

// 14
fn reproducibility() -> Outcome {
    let mut cfg = ExperimentConfig {
        trials: 2,
        n_error_draws: 5,
        ..ExperimentConfig::default()
    };
    cfg.axes.eps_eval_db = vec![None, Some(-20.0)];
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    sweep(&cfg, &a, Some(1)).unwrap();
    sweep(&cfg, &b, None).unwrap();
    let numeric = |p: &std::path::Path| -> Vec<Vec<String>> {
        let mut rdr = csv::Reader::from_path(p).unwrap();
        let headers = rdr.headers().unwrap().clone();
        let ms = headers.iter().position(|h| h == "ms").unwrap();
        rdr.records()
            .map(|r| {
                let r = r.unwrap();
                r.iter().enumerate().filter(|(i, _)| *i != ms).map(|(_, s)| s.to_string()).collect()
            })
            .collect()
    };
    let (ra, rb) = (numeric(&a), numeric(&b));
    let fields = ra.iter().map(Vec::len).sum::<usize>();
    outcome(
        ra == rb && ra.len() == 6,
        format!("{} rows, {fields} fields compared between two runs: {}", ra.len(), if ra == rb { "identical" } else { "differ" }),
    )
}

fn check(id: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    });
    println!(
        "{} [{id:02}] {name}: {} ({:.1} s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        t.elapsed().as_secs_f64()
    );
    o.pass
}

fn main() {
    // `cargo test -- --list` and friends expect no side effects
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut results = vec![
        check(1, "steering-vector norm", steering_norm),
        check(2, "default coverage region size", direction_count),
        check(3, "CBF peak gain", cbf_peak),
        check(4, "Taylor main-lobe losses", taylor_losses),
        check(5, "bilinear scaling and slope 2", slope_two),
        check(6, "robust bound and tightness", robust_bound),
        check(7, "solver matches grid oracle", solver_oracle),
        check(8, "coupling equals explicit double sum", coupling_brute_force),
    ];
    let (tgt_r, tgt_s) = (0.0, -3.0);
    let t = Instant::now();
    let rayleigh = catch_unwind(|| run_setup(&SIChannelModel::Rayleigh, tgt_r, 20));
    let spherical = catch_unwind(|| run_setup(&SIChannelModel::spherical(), tgt_s, 20));
    println!("     designs for criteria 9-11 took {:.1} s", t.elapsed().as_secs_f64());
    match (&rayleigh, &spherical) {
        (Ok(r), Ok(s)) => {
            results.push(check(9, "design improvement, Rayleigh", || rayleigh_improvement(r)));
            results.push(check(10, "design improvement, spherical", || spherical_improvement(s)));
            results.push(check(11, "coverage preservation", || {
                coverage_preservation(&[("Rayleigh", tgt_r, r), ("spherical", tgt_s, s)])
            }));
        }
        _ => {
            for (id, name) in [(9, "design improvement, Rayleigh"), (10, "design improvement, spherical"), (11, "coverage preservation")] {
                results.push(check(id, name, || outcome(false, "design run panicked".into())));
            }
        }
    }
    results.push(check(12, "robust design audit", robust_audit));
    results.push(check(13, "link model properties", link_properties));
    results.push(check(14, "reproducibility", reproducibility));
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
