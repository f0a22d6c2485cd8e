//! The per-beam subproblem
//!
//! ```text
//! minimize   ‖M f‖ + ρ‖f‖
//! subject to |g − aᴴf| ≤ σ g,   |f_n| ≤ 1
//! ```
//!
//! The objective is invariant to a common phase rotation of `f` and is
//! positively homogeneous, so the disc constraint can be swapped for the
//! halfspace `Re(aᴴf) ≥ g(1 − σ)` without changing the optimal value: any
//! point of the halfspace can be rotated onto the real axis and scaled down
//! into the disc without increasing the objective. The iterations run over
//! halfspace ∩ box, whose Euclidean projection is exact and cheap, and the
//! last step maps the best iterate into the original feasible set in closed
//! form.
//!
//! With `ρ = 0` the squared objective is minimized by an accelerated
//! projected gradient method. With `ρ > 0` each outer step majorizes both
//! norms by quadratics at the current point and runs the same accelerated
//! method on the majorizer.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{dot_h, norm1, norm_sq, spectral_norm, CMat, CVec};

/// Beams are pushed this fraction of `σ g` inside the disc, so that rounding
/// cannot leave a returned beam outside it.
const INTERIOR_MARGIN: f64 = 1e-9;
const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct BeamSubproblem {
    /// `K x N`; the objective is `‖coupling · f‖`.
    pub coupling: CMat,
    pub steer: CVec,
    pub g_tgt: f64,
    pub sigma: f64,
    pub rho: f64,
}

impl BeamSubproblem {
    pub fn new(coupling: CMat, steer: CVec, g_tgt: f64, sigma: f64, rho: f64) -> Result<Self> {
        if coupling.ncols() != steer.len() {
            return Err(Error::ShapeMismatch(format!(
                "coupling has {} columns, steering vector has {} entries",
                coupling.ncols(),
                steer.len()
            )));
        }
        if !(g_tgt > 0.0) || !g_tgt.is_finite() {
            return Err(Error::InvalidParameter(format!("gain target must be positive, got {g_tgt}")));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
        }
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!("rho must be >= 0, got {rho}")));
        }
        if norm_sq(&steer) == 0.0 {
            return Err(Error::Degenerate("steering vector is zero".into()));
        }
        let p = Self {
            coupling,
            steer,
            g_tgt,
            sigma,
            rho,
        };
        p.check_feasible()?;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.steer.len()
    }

    /// Largest achievable `|aᴴf|` under the box constraint.
    pub fn max_gain(&self) -> f64 {
        norm1(&self.steer)
    }

    /// Smallest acceptable `Re(aᴴf)` after rotation, `g(1 − σ)`.
    pub fn gain_floor(&self) -> f64 {
        self.g_tgt * (1.0 - self.sigma)
    }

    pub fn check_feasible(&self) -> Result<()> {
        let floor = self.gain_floor();
        let max = self.max_gain();
        if floor > max * (1.0 + 1e-12) {
            return Err(Error::Infeasible(format!(
                "gain floor {floor:.6} exceeds the largest achievable gain {max:.6}"
            )));
        }
        Ok(())
    }

    pub fn objective(&self, f: &CVec) -> f64 {
        (&self.coupling * f).norm() + self.rho * f.norm()
    }

    /// `max(0, |g − aᴴf| − σ g)`.
    pub fn gain_residual(&self, f: &CVec) -> f64 {
        let z = dot_h(&self.steer, f);
        ((Complex64::from(self.g_tgt) - z).norm() - self.sigma * self.g_tgt).max(0.0)
    }

    /// Largest entry magnitude overshoot above one.
    pub fn box_residual(&self, f: &CVec) -> f64 {
        box_residual(f)
    }
}

fn box_residual(f: &CVec) -> f64 {
    f.iter().map(|z| z.norm() - 1.0).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// Accelerated projected gradient with step `1/L` (majorized when ρ > 0).
    #[default]
    Fixed,
    /// Projected subgradient with step `1/(L √k)`.
    Diminishing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_rule: StepRule,
    pub dykstra_iters: usize,
    pub feas_tol: f64,
    pub obj_tol: f64,
    pub warm_start: Option<CVec>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            step_rule: StepRule::Fixed,
            dykstra_iters: 50,
            feas_tol: 1e-8,
            obj_tol: 1e-7,
            warm_start: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.dykstra_iters == 0 {
            return Err(Error::InvalidParameter("iteration counts must be positive".into()));
        }
        if !(self.feas_tol > 0.0) || !(self.obj_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub f: CVec,
    pub objective: f64,
    pub gain_residual: f64,
    pub box_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SolverResult {
    fn new(problem: &BeamSubproblem, f: CVec, iterations: usize, converged: bool) -> Self {
        Self {
            objective: problem.objective(&f),
            gain_residual: problem.gain_residual(&f),
            box_residual: box_residual(&f),
            f,
            iterations,
            converged,
        }
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.gain_residual <= tol && self.box_residual <= tol
    }
}

/// Euclidean projection onto the disc `|g − aᴴf| ≤ σ g`.
pub fn project_gain_disc(f: &CVec, a: &CVec, g_tgt: f64, sigma: f64) -> Result<CVec> {
    let an = norm_sq(a);
    if an == 0.0 {
        return Err(Error::Degenerate("steering vector is zero".into()));
    }
    let z = dot_h(a, f);
    let g = Complex64::from(g_tgt);
    let d = (z - g).norm();
    let r = sigma * g_tgt;
    if d <= r {
        return Ok(f.clone());
    }
    let z_new = g + (z - g) * (r / d);
    // aᴴ(f + c a) = z + c‖a‖² for real-weighted a, so c = (z' − z)/‖a‖²
    Ok(f + a * ((z_new - z) / an))
}

/// Clamp every entry to magnitude at most one, keeping its phase.
pub fn project_box(f: &CVec) -> CVec {
    f.map(|z| {
        let m = z.norm();
        if m > 1.0 {
            z / m
        } else {
            z
        }
    })
}

/// Outcome of [`project_feasible`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleProjection {
    pub f: CVec,
    pub iterations: usize,
    pub converged: bool,
}

/// Dykstra's alternating projections between the gain disc and the box.
pub fn project_feasible(
    f: &CVec,
    problem: &BeamSubproblem,
    dykstra_iters: usize,
    feas_tol: f64,
) -> Result<FeasibleProjection> {
    problem.check_feasible()?;
    let a = &problem.steer;
    let done = |x: &CVec| problem.gain_residual(x) <= feas_tol && box_residual(x) <= feas_tol;
    if done(f) {
        return Ok(FeasibleProjection {
            f: f.clone(),
            iterations: 0,
            converged: true,
        });
    }
    let n = f.len();
    let mut x = f.clone();
    let mut p = CVec::zeros(n);
    let mut q = CVec::zeros(n);
    for it in 1..=dykstra_iters {
        let y = project_gain_disc(&(&x + &p), a, problem.g_tgt, problem.sigma)?;
        p = &x + &p - &y;
        let x_new = project_box(&(&y + &q));
        q = &y + &q - &x_new;
        x = x_new;
        if done(&x) {
            return Ok(FeasibleProjection {
                f: x,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(FeasibleProjection {
        f: x,
        iterations: dykstra_iters,
        converged: false,
    })
}

/// Exact projection onto `{Re(aᴴf) ≥ b} ∩ box`.
///
/// The minimizer is `P_box(y + λ a)` for the smallest `λ ≥ 0` meeting the
/// halfspace, and `λ ↦ Re(aᴴ P_box(y + λ a))` is nondecreasing, so `λ` is
/// found by bisection.
struct HalfspaceBox<'a> {
    a: &'a CVec,
    b: f64,
    a_max: f64,
}

impl<'a> HalfspaceBox<'a> {
    fn new(a: &'a CVec, b: f64) -> Self {
        Self { a, b, a_max: norm1(a) }
    }

    fn shifted(&self, y: &CVec, lambda: f64, out: &mut CVec) -> f64 {
        let mut re = 0.0;
        for ((o, &yn), &an) in out.iter_mut().zip(y.iter()).zip(self.a.iter()) {
            let mut v = yn + an * lambda;
            let m = v.norm();
            if m > 1.0 {
                v /= m;
            }
            *o = v;
            re += an.re * v.re + an.im * v.im;
        }
        re
    }

    fn project(&self, y: &CVec) -> CVec {
        let mut out = CVec::zeros(y.len());
        if self.shifted(y, 0.0, &mut out) >= self.b {
            return out;
        }
        if self.b >= self.a_max {
            return self.extreme();
        }
        let mut lo = 0.0;
        let a_peak = self.a.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut hi = 1.0 / a_peak.max(1e-300);
        let mut grow = 0;
        while self.shifted(y, hi, &mut out) < self.b {
            lo = hi;
            hi *= 4.0;
            grow += 1;
            if grow > 200 {
                return self.extreme();
            }
        }
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.shifted(y, mid, &mut out) >= self.b {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        self.shifted(y, hi, &mut out);
        out
    }

    /// The beam of largest real gain, `a / |a|` entrywise.
    fn extreme(&self) -> CVec {
        self.a.map(|z| {
            let m = z.norm();
            if m > 0.0 {
                z / m
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

/// Map a point of halfspace ∩ box (approximately) into the disc ∩ box
/// without increasing the objective: rotate `aᴴf` onto the positive real
/// axis, then scale its magnitude down to `target`, or blend toward the
/// largest-gain beam if it falls short.
fn repair(problem: &BeamSubproblem, f: &CVec, target: f64) -> CVec {
    let a = &problem.steer;
    let z = dot_h(a, f);
    let m = z.norm();
    let mut out = if m > 0.0 {
        f * (z.conj() / m)
    } else {
        f.clone()
    };
    if m > target {
        out *= Complex64::from(target / m);
    } else if m < target {
        let a_max = problem.max_gain();
        let ext = HalfspaceBox::new(a, target).extreme();
        let lam = if a_max > m { ((target - m) / (a_max - m)).min(1.0) } else { 1.0 };
        out = out * Complex64::from(1.0 - lam) + ext * Complex64::from(lam);
    }
    out
}

fn repair_target(problem: &BeamSubproblem) -> f64 {
    let g = problem.g_tgt;
    let s = problem.sigma;
    g * (1.0 - s * (1.0 - INTERIOR_MARGIN))
}

/// Objective value a halfspace iterate attains once repaired.
fn repaired_value(problem: &BeamSubproblem, h: f64, f: &CVec, target: f64) -> f64 {
    let m = dot_h(&problem.steer, f).norm();
    if m > target {
        h * target / m
    } else {
        h
    }
}

struct Best {
    f: CVec,
    value: f64,
    tol: f64,
}

impl Best {
    fn offer(&mut self, f: &CVec, value: f64) -> bool {
        // earliest wins among near-ties
        if !self.value.is_finite() || value < self.value - self.tol * self.value.abs() {
            self.f = f.clone();
            self.value = value;
            true
        } else {
            false
        }
    }
}

/// Solve one beam subproblem.
pub fn solve_beam(problem: &BeamSubproblem, config: &SolverConfig) -> Result<SolverResult> {
    config.validate()?;
    problem.check_feasible()?;
    let n = problem.n();
    if problem.sigma >= 1.0 {
        // the zero beam is feasible and the objective is nonnegative
        return Ok(SolverResult::new(problem, CVec::zeros(n), 0, true));
    }

    let target = repair_target(problem);
    let set = HalfspaceBox::new(&problem.steer, problem.gain_floor());
    let start = match &config.warm_start {
        Some(w) if w.len() == n => set.project(w),
        _ => set.project(&CVec::zeros(n)),
    };

    let sigma_m = spectral_norm(&problem.coupling);
    let (best, iterations, converged) = if sigma_m == 0.0 && problem.rho == 0.0 {
        (start, 0, true)
    } else {
        match config.step_rule {
            StepRule::Fixed if problem.rho == 0.0 => {
                let mut best = Best {
                    f: start.clone(),
                    value: f64::INFINITY,
                    tol: config.obj_tol,
                };
                let (it, conv) = accelerated(
                    problem,
                    &set,
                    1.0,
                    0.0,
                    sigma_m * sigma_m,
                    start,
                    config.max_iters,
                    target,
                    &mut best,
                );
                (best.f, it, conv)
            }
            StepRule::Fixed => majorize_minimize(problem, &set, sigma_m, start, config, target),
            StepRule::Diminishing => subgradient(problem, &set, sigma_m, start, config, target),
        }
    };

    let f = repair(problem, &best, target);
    let mut result = SolverResult::new(problem, f, iterations, converged);
    if !result.is_feasible(config.feas_tol) {
        result.converged = false;
    }
    if let Some(w) = &config.warm_start {
        if w.len() == n {
            let warm = SolverResult::new(problem, w.clone(), iterations, result.converged);
            if warm.is_feasible(config.feas_tol) && warm.objective < result.objective {
                return Ok(warm);
            }
        }
    }
    Ok(result)
}

/// Accelerated projected gradient on `½c1‖Mf‖² + ½c2‖f‖²` over the
/// halfspace-box set, with function-value restart. Every iterate is offered
/// to `best` scored by the true objective after repair.
#[allow(clippy::too_many_arguments)]
fn accelerated(
    problem: &BeamSubproblem,
    set: &HalfspaceBox,
    c1: f64,
    c2: f64,
    sigma_sq: f64,
    x0: CVec,
    max_iters: usize,
    target: f64,
    best: &mut Best,
) -> (usize, bool) {
    let m = &problem.coupling;
    let lip = c1 * sigma_sq + c2;
    let step = 1.0 / lip;
    let surrogate = |mx: &CVec, x: &CVec| 0.5 * c1 * norm_sq(mx) + 0.5 * c2 * norm_sq(x);

    let mut x = x0;
    let mut mx = m * &x;
    let mut x_prev = x.clone();
    let mut mx_prev = mx.clone();
    let mut t: f64 = 1.0;
    let mut f_prev = surrogate(&mx, &x);
    best.offer(&x, repaired_value(problem, mx.norm() + problem.rho * x.norm(), &x, target));

    let mut last_gain = 0usize;
    let window = 100;
    for k in 1..=max_iters {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let y = &x + (&x - &x_prev) * Complex64::from(beta);
        let my = &mx + (&mx - &mx_prev) * Complex64::from(beta);
        let grad = m.adjoint() * my * Complex64::from(c1) + &y * Complex64::from(c2);
        let x_new = set.project(&(y - grad * Complex64::from(step)));
        let mx_new = m * &x_new;
        let f_new = surrogate(&mx_new, &x_new);

        let dx = (&x_new - &x).norm();
        x_prev = std::mem::replace(&mut x, x_new);
        mx_prev = std::mem::replace(&mut mx, mx_new);
        if f_new > f_prev {
            t = 1.0;
        } else {
            t = t_next;
        }
        f_prev = f_new;

        let h = mx.norm() + problem.rho * x.norm();
        if best.offer(&x, repaired_value(problem, h, &x, target)) {
            last_gain = k;
        }
        let scale = x.norm().max(1e-300);
        if dx <= 1e-12 * scale || best.value <= 1e-12 * (sigma_sq.sqrt() + problem.rho) * scale {
            return (k, true);
        }
        if k - last_gain >= window && k >= window {
            return (k, true);
        }
    }
    (max_iters, false)
}

fn majorize_minimize(
    problem: &BeamSubproblem,
    set: &HalfspaceBox,
    sigma_m: f64,
    start: CVec,
    config: &SolverConfig,
    target: f64,
) -> (CVec, usize, bool) {
    let m = &problem.coupling;
    let mut best = Best {
        f: start.clone(),
        value: f64::INFINITY,
        tol: config.obj_tol,
    };
    let mut x = start;
    let mut used = 0usize;
    let mut prev = f64::INFINITY;
    let inner = 100usize;
    while used < config.max_iters {
        let scale = (sigma_m + problem.rho) * x.norm().max(1e-300);
        let t1 = (m * &x).norm().max(1e-9 * scale);
        let t2 = x.norm().max(1e-300);
        let budget = inner.min(config.max_iters - used);
        let (it, _) = accelerated(
            problem,
            set,
            1.0 / t1,
            problem.rho / t2,
            sigma_m * sigma_m,
            x.clone(),
            budget,
            target,
            &mut best,
        );
        used += it.max(1);
        x = best.f.clone();
        let v = best.value;
        if prev.is_finite() && prev - v <= config.obj_tol * v.max(f64::MIN_POSITIVE) {
            return (best.f, used, true);
        }
        prev = v;
    }
    (best.f, used, false)
}

fn subgradient(
    problem: &BeamSubproblem,
    set: &HalfspaceBox,
    sigma_m: f64,
    start: CVec,
    config: &SolverConfig,
    target: f64,
) -> (CVec, usize, bool) {
    let m = &problem.coupling;
    let base = 1.0 / (sigma_m * sigma_m).max(f64::MIN_POSITIVE);
    let mut best = Best {
        f: start.clone(),
        value: f64::INFINITY,
        tol: config.obj_tol,
    };
    let mut x = start;
    for k in 1..=config.max_iters {
        let mx = m * &x;
        let nmx = mx.norm();
        let nx = x.norm();
        best.offer(&x, repaired_value(problem, nmx + problem.rho * nx, &x, target));
        let mut g = CVec::zeros(x.len());
        if nmx > 0.0 {
            g += m.adjoint() * mx / Complex64::from(nmx);
        }
        if nx > 0.0 && problem.rho > 0.0 {
            g += &x * Complex64::from(problem.rho / nx);
        }
        if g.norm() == 0.0 {
            return (best.f, k, true);
        }
        // the step is scaled by ‖Mx‖ so it reduces to 1/L on the squared
        // objective, whose gradient is ‖Mx‖ times the subgradient
        let step = base * nmx.max(problem.rho * nx) / (k as f64).sqrt();
        x = set.project(&(&x - g * Complex64::from(step)));
    }
    (best.f, config.max_iters, false)
}

/// Grid used by [`oracle_solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleGrid {
    pub mag_step: f64,
    /// Radians.
    pub phase_step: f64,
    pub refine_rounds: usize,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            mag_step: 0.01,
            phase_step: 2f64.to_radians(),
            refine_rounds: 40,
        }
    }
}

/// Brute-force polar-grid search for problems with at most two weights.
///
/// A global phase is removed by fixing the first weight real and
/// nonnegative, which leaves the gain constraint as an annulus on `|aᴴf|`.
/// Every grid point is moved into the annulus (scaled down if above it,
/// blended toward the largest-gain beam if below) and scored there, so only
/// feasible points are ever compared. The best candidates are then refined
/// on shrinking local grids.
pub fn oracle_solve(problem: &BeamSubproblem, grid: OracleGrid) -> Result<SolverResult> {
    let n = problem.n();
    if n == 0 || n > 2 {
        return Err(Error::InvalidParameter(format!("oracle supports 1 or 2 weights, got {n}")));
    }
    problem.check_feasible()?;
    let a = &problem.steer;
    let lo = problem.g_tgt * (1.0 - problem.sigma).max(0.0);
    let hi = problem.g_tgt * (1.0 + problem.sigma);
    let a1 = norm1(a);
    let ext = a.map(|x| if x.norm() > 0.0 { x / x.norm() } else { Complex64::new(0.0, 0.0) });

    let feasible_point = |p: &[f64; 3]| -> CVec {
        let mut f = if n == 1 {
            CVec::from_element(1, Complex64::from(p[0]))
        } else {
            CVec::from_vec(vec![Complex64::from(p[0]), Complex64::from_polar(p[1], p[2])])
        };
        let z = dot_h(a, &f);
        let m = z.norm();
        if m > hi {
            f *= Complex64::from(hi / m);
        } else if m < lo {
            let rot = if m > 0.0 { z / m } else { Complex64::new(1.0, 0.0) };
            let lam = ((lo - m) / (a1 - m).max(f64::MIN_POSITIVE)).clamp(0.0, 1.0);
            f = f * Complex64::from(1.0 - lam) + &ext * (rot * lam);
        }
        let z = dot_h(a, &f);
        if z.norm() > 0.0 {
            f *= z.conj() / z.norm();
        }
        f
    };
    let score = |p: &[f64; 3]| problem.objective(&feasible_point(p));

    const KEEP: usize = 8;
    let push = |top: &mut Vec<(f64, [f64; 3])>, v: f64, p: [f64; 3]| {
        if top.len() < KEEP || v < top[top.len() - 1].0 {
            let pos = top.partition_point(|e| e.0 <= v);
            top.insert(pos, (v, p));
            top.truncate(KEEP);
        }
    };

    let nr = (1.0 / grid.mag_step).round().max(1.0) as usize;
    let np = (2.0 * PI / grid.phase_step).round().max(1.0) as usize;
    let mut top: Vec<(f64, [f64; 3])> = Vec::new();
    for i in 0..=nr {
        let r1 = i as f64 / nr as f64;
        if n == 1 {
            let p = [r1, 0.0, 0.0];
            push(&mut top, score(&p), p);
            continue;
        }
        for j in 0..=nr {
            let r2 = j as f64 / nr as f64;
            for k in 0..np {
                let p = [r1, r2, 2.0 * PI * k as f64 / np as f64];
                push(&mut top, score(&p), p);
            }
        }
    }

    let mut dr = grid.mag_step;
    let mut dp = grid.phase_step;
    for _ in 0..grid.refine_rounds {
        let mut next = top.clone();
        for (_, c) in &top {
            for i in -3i32..=3 {
                let r1 = (c[0] + i as f64 * dr / 3.0).clamp(0.0, 1.0);
                if n == 1 {
                    let p = [r1, 0.0, 0.0];
                    push(&mut next, score(&p), p);
                    continue;
                }
                for j in -3i32..=3 {
                    let r2 = (c[1] + j as f64 * dr / 3.0).clamp(0.0, 1.0);
                    for k in -3i32..=3 {
                        let p = [r1, r2, c[2] + k as f64 * dp / 3.0];
                        push(&mut next, score(&p), p);
                    }
                }
            }
        }
        top = next;
        dr *= 0.7;
        dp *= 0.7;
    }
    Ok(SolverResult::new(problem, feasible_point(&top[0].1), 0, true))
}
