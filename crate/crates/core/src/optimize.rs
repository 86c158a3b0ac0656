//! Constrained minimization of a joint-quadrature variance over the four
//! beam-splitter settings, subject to a floor on the heralding probability.
//!
//! The search space is the transmissivities `T_i` with non-negative
//! amplitudes `t_i = sqrt(T_i)` and `r_i = sqrt(1 - T_i)`. Signed amplitudes
//! would add sign flips that rotate the output quadratures, which erases the
//! dependence on the quadrature angle.
//!
//! Each start runs a quasi-Newton descent (BFGS, central finite-difference
//! gradients) on an exterior quadratic penalty whose weight grows tenfold per
//! stage. A final repair step walks uphill in probability if the end point is
//! still infeasible. Starts come from a Halton sequence with a seeded random
//! shift, so a run is reproducible and the first `k` starts never depend on
//! how many more are requested.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{InterferometerConfig, LossChannel};
use crate::detect::DetectionEvent;
use crate::error::{invalid, Result};
use crate::fock::FockCutoff;
use crate::squeeze::{evaluate, output_moments, squeezing_db, two_mode_variance, SqueezingReport};

/// Which joint quadrature is minimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrature {
    C1,
    C2,
}

/// Coordinates the optimizer moves in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parameterization {
    /// Unconstrained angles with `T = cos^2(theta)`. Only `T` reaches the
    /// circuit, so every splitter keeps non-negative `t` and `r`.
    Angle,
    /// Transmissivities boxed to `[0, 1]`, reflection amplitudes non-negative.
    Transmissivity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    pub objective: Quadrature,
    pub phi: f64,
    pub xi: f64,
    pub event: DetectionEvent,
    pub alpha_in: f64,
    pub p_crit: f64,
    pub losses: Vec<LossChannel>,
    pub cutoff: FockCutoff,
}

impl OptimizationProblem {
    pub fn new(event: DetectionEvent, alpha_in: f64, phi: f64, xi: f64, p_crit: f64) -> Self {
        OptimizationProblem {
            objective: Quadrature::C1,
            phi,
            xi,
            event,
            alpha_in,
            p_crit,
            losses: Vec::new(),
            cutoff: FockCutoff::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_crit > 0.0 && self.p_crit <= 1.0) {
            return invalid(format!("P_crit must lie in (0, 1], got {}", self.p_crit));
        }
        if !self.alpha_in.is_finite() || !self.phi.is_finite() || !self.xi.is_finite() {
            return invalid("alpha, phi and xi must be finite");
        }
        for l in &self.losses {
            l.validate()?;
        }
        // Surfaces an under-resolved coherent input before the search hides it.
        self.config([0.0; 4]).input_state()?;
        Ok(())
    }

    /// Configuration with the given angles and everything else fixed.
    pub fn config(&self, theta: [f64; 4]) -> InterferometerConfig {
        InterferometerConfig::from_angles(theta, self.phi, self.alpha_in, self.event)
            .with_cutoff(self.cutoff)
            .with_losses(self.losses.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    pub starts: usize,
    /// Objective evaluations allowed per start.
    pub budget: usize,
    pub seed: u64,
    /// Penalty weights, applied in order.
    pub penalty_schedule: Vec<f64>,
    pub fd_step: f64,
    pub gradient_tol: f64,
    pub parameterization: Parameterization,
    /// Extra starting points, tried before the quasi-random ones.
    pub initial: Vec<[f64; 4]>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            starts: 16,
            budget: 2000,
            seed: 0,
            penalty_schedule: vec![10.0, 1e2, 1e3, 1e4, 1e5],
            fd_step: 1e-6,
            gradient_tol: 1e-9,
            parameterization: Parameterization::Angle,
            initial: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub start: usize,
    pub iteration: usize,
    pub objective: f64,
    pub probability: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub origin: [f64; 4],
    pub theta: [f64; 4],
    pub variance: f64,
    pub probability: f64,
    pub feasible: bool,
    pub converged: bool,
    pub evaluations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizationResult {
    /// Report at the best point. When nothing feasible was found this is the
    /// point with the largest heralding probability.
    pub best: SqueezingReport,
    pub theta: [f64; 4],
    pub transmissivities: [f64; 4],
    pub variance: f64,
    pub s_db: f64,
    pub probability: f64,
    pub feasible: bool,
    pub converged: bool,
    pub starts_used: usize,
    pub evaluations: usize,
    pub trace: Vec<TraceEntry>,
    pub starts: Vec<StartSummary>,
}

impl OptimizationResult {
    /// Errors with the diagnostics when no feasible point was found.
    pub fn require_feasible(self, p_crit: f64) -> Result<Self> {
        if self.feasible {
            Ok(self)
        } else {
            Err(crate::error::MinlError::Infeasible {
                p_best: self.probability,
                p_crit,
            })
        }
    }
}

/// One pipeline evaluation: (variance, probability). An event that cannot
/// herald is reported as probability zero at shot noise.
fn raw(problem: &OptimizationProblem, base: &InterferometerConfig, theta: [f64; 4]) -> (f64, f64) {
    let mut cfg = base.clone();
    cfg.theta = theta;
    match output_moments(&cfg) {
        Ok((m, p, _)) => {
            let (v1, v2) = two_mode_variance(&m, problem.xi);
            let v = match problem.objective {
                Quadrature::C1 => v1,
                Quadrature::C2 => v2,
            };
            (v, p)
        }
        Err(_) => (crate::squeeze::SHOT_NOISE, 0.0),
    }
}

fn to_theta(x: [f64; 4], param: Parameterization) -> [f64; 4] {
    match param {
        Parameterization::Angle => x.map(|t| t.cos().abs().acos()),
        Parameterization::Transmissivity => x.map(|t| t.clamp(0.0, 1.0).sqrt().acos()),
    }
}

fn from_unit(u: [f64; 4], param: Parameterization) -> [f64; 4] {
    match param {
        Parameterization::Angle => u.map(|v| v * FRAC_PI_2),
        Parameterization::Transmissivity => u,
    }
}

fn from_theta(theta: [f64; 4], param: Parameterization) -> [f64; 4] {
    match param {
        Parameterization::Angle => theta,
        Parameterization::Transmissivity => theta.map(|t| t.cos().powi(2)),
    }
}

fn halton(mut index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Starting points in the unit cube: a Halton sequence (bases 2, 3, 5, 7)
/// shifted modulo one by a seeded random vector.
pub fn start_points(n: usize, seed: u64) -> Vec<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [f64; 4] = [rng.gen(), rng.gen(), rng.gen(), rng.gen()];
    let bases = [2, 3, 5, 7];
    (0..n)
        .map(|k| {
            let mut u = [0.0; 4];
            for d in 0..4 {
                u[d] = (halton(k + 1, bases[d]) + shift[d]).fract();
            }
            u
        })
        .collect()
}

struct Local<'a> {
    problem: &'a OptimizationProblem,
    base: &'a InterferometerConfig,
    opts: &'a OptimizerOptions,
    evals: usize,
    best_feasible: Option<([f64; 4], f64, f64)>,
    best_any: ([f64; 4], f64, f64),
}

impl Local<'_> {
    fn clamp(&self, x: [f64; 4]) -> [f64; 4] {
        match self.opts.parameterization {
            Parameterization::Angle => x,
            Parameterization::Transmissivity => x.map(|t| t.clamp(0.0, 1.0)),
        }
    }

    fn eval(&mut self, x: [f64; 4]) -> (f64, f64) {
        self.evals += 1;
        let (v, p) = raw(self.problem, self.base, to_theta(x, self.opts.parameterization));
        if p >= self.problem.p_crit {
            let better = match self.best_feasible {
                None => true,
                Some((bx, bv, bp)) => better_point((v, p, x), (bv, bp, bx)),
            };
            if better {
                self.best_feasible = Some((x, v, p));
            }
        }
        if p > self.best_any.2 {
            self.best_any = (x, v, p);
        }
        (v, p)
    }

    fn penalized(&self, v: f64, p: f64, mu: f64) -> f64 {
        let gap = ((self.problem.p_crit - p) / self.problem.p_crit).max(0.0);
        v + mu * gap * gap
    }

    fn gradient(&mut self, x: [f64; 4], mu: f64) -> ([f64; 4], [f64; 4]) {
        let h = self.opts.fd_step;
        let mut g = [0.0; 4];
        let mut gp = [0.0; 4];
        for k in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let (xp, xm) = (self.clamp(xp), self.clamp(xm));
            let span = xp[k] - xm[k];
            if span <= 0.0 {
                continue;
            }
            let (vp, pp) = self.eval(xp);
            let (vm, pm) = self.eval(xm);
            g[k] = (self.penalized(vp, pp, mu) - self.penalized(vm, pm, mu)) / span;
            gp[k] = (pp - pm) / span;
        }
        (g, gp)
    }

    /// BFGS on the penalized objective at weight `mu`. Returns the end point
    /// and whether the gradient test was met.
    fn descend(&mut self, mut x: [f64; 4], mu: f64, start: usize, trace: &mut Vec<TraceEntry>) -> ([f64; 4], bool) {
        let budget = self.opts.budget;
        let mut hinv = identity();
        let (v, p) = self.eval(x);
        let mut f = self.penalized(v, p, mu);
        let (mut g, _) = self.gradient(x, mu);
        let mut iteration = trace.iter().filter(|t| t.start == start).count();
        loop {
            if norm_inf(&g) < self.opts.gradient_tol {
                return (x, true);
            }
            if self.evals + 12 > budget {
                return (x, false);
            }
            let mut d = matvec(&hinv, &g).map(|v| -v);
            if dot(&d, &g) >= 0.0 {
                hinv = identity();
                d = g.map(|v| -v);
            }
            let len = dot(&d, &d).sqrt();
            if len > 0.5 {
                d = d.map(|v| v * 0.5 / len);
            }
            let mut step = 1.0;
            let mut accepted = None;
            while self.evals < budget {
                let trial = self.clamp(add(&x, &d.map(|v| v * step)));
                let moved = sub(&trial, &x);
                let (tv, tp) = self.eval(trial);
                let tf = self.penalized(tv, tp, mu);
                if tf <= f + 1e-4 * dot(&g, &moved) && tf < f {
                    accepted = Some((trial, tf, tp, tv));
                    break;
                }
                step *= 0.5;
                if step < 1e-12 {
                    break;
                }
            }
            let Some((xn, fnew, pn, vn)) = accepted else {
                return (x, norm_inf(&g) < 1e-6);
            };
            iteration += 1;
            trace.push(TraceEntry {
                start,
                iteration,
                objective: vn,
                probability: pn,
            });
            if self.evals + 8 > budget {
                return (xn, false);
            }
            let (gn, _) = self.gradient(xn, mu);
            let s = sub(&xn, &x);
            let y = sub(&gn, &g);
            let sy = dot(&s, &y);
            if sy > 1e-16 {
                hinv = bfgs_update(&hinv, &s, &y, sy);
            }
            let df = f - fnew;
            x = xn;
            f = fnew;
            g = gn;
            if df < 1e-15 * (1.0 + f.abs()) && norm_inf(&s) < 1e-10 {
                return (x, true);
            }
        }
    }

    /// Moves uphill in probability until the floor is met.
    fn repair(&mut self, x: [f64; 4]) -> [f64; 4] {
        let (_, p0) = self.eval(x);
        if p0 >= self.problem.p_crit {
            return x;
        }
        let (_, gp) = self.gradient(x, 0.0);
        let n = dot(&gp, &gp).sqrt();
        if !(n > 0.0) {
            return x;
        }
        let dir = gp.map(|v| v / n);
        let mut hi = 1e-4;
        let mut found = false;
        while hi < 4.0 {
            let (_, p) = self.eval(self.clamp(add(&x, &dir.map(|v| v * hi))));
            if p >= self.problem.p_crit {
                found = true;
                break;
            }
            hi *= 2.0;
        }
        if !found {
            return x;
        }
        let mut lo = 0.0;
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            let (_, p) = self.eval(self.clamp(add(&x, &dir.map(|v| v * mid))));
            if p >= self.problem.p_crit {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        self.clamp(add(&x, &dir.map(|v| v * hi)))
    }
}

/// Strict ordering used for merging: lower variance, then higher probability,
/// then lexicographically smaller transmissivities.
fn better_point(a: (f64, f64, [f64; 4]), b: (f64, f64, [f64; 4])) -> bool {
    const EQ: f64 = 1e-12;
    if (a.0 - b.0).abs() > EQ {
        return a.0 < b.0;
    }
    if (a.1 - b.1).abs() > EQ {
        return a.1 > b.1;
    }
    let ta = a.2.map(|t| t.cos().powi(2));
    let tb = b.2.map(|t| t.cos().powi(2));
    ta.partial_cmp(&tb) == Some(std::cmp::Ordering::Less)
}

fn run_start(
    problem: &OptimizationProblem,
    base: &InterferometerConfig,
    opts: &OptimizerOptions,
    start: usize,
    origin: [f64; 4],
) -> (StartSummary, Vec<TraceEntry>) {
    let mut local = Local {
        problem,
        base,
        opts,
        evals: 0,
        best_feasible: None,
        best_any: (origin, f64::INFINITY, -1.0),
    };
    let mut trace = Vec::new();
    let mut x = local.clamp(origin);
    let mut converged = false;
    for &mu in &opts.penalty_schedule {
        let (xn, c) = local.descend(x, mu, start, &mut trace);
        x = xn;
        converged = c;
        if local.evals >= opts.budget {
            break;
        }
    }
    let x = local.repair(x);
    local.eval(x);
    let param = opts.parameterization;
    let summary = match local.best_feasible {
        Some((bx, v, p)) => StartSummary {
            origin: to_theta(origin, param),
            theta: to_theta(bx, param),
            variance: v,
            probability: p,
            feasible: true,
            converged,
            evaluations: local.evals,
        },
        None => {
            let (bx, v, p) = local.best_any;
            StartSummary {
                origin: to_theta(origin, param),
                theta: to_theta(bx, param),
                variance: v,
                probability: p,
                feasible: false,
                converged: false,
                evaluations: local.evals,
            }
        }
    };
    (summary, trace)
}

/// Minimizes the chosen variance subject to `P >= P_crit`.
pub fn maximize_squeezing(problem: &OptimizationProblem, opts: &OptimizerOptions) -> Result<OptimizationResult> {
    problem.validate()?;
    if opts.starts == 0 && opts.initial.is_empty() {
        return invalid("at least one start is required");
    }
    if opts.budget < 20 {
        return invalid("evaluation budget must be at least 20 per start");
    }
    if opts.penalty_schedule.is_empty() || opts.penalty_schedule.iter().any(|m| !(*m > 0.0)) {
        return invalid("penalty schedule must be non-empty and positive");
    }
    let param = opts.parameterization;
    let mut base = problem.config([0.0; 4]);
    base.input = Some(base.input_state()?);

    let mut origins: Vec<[f64; 4]> = opts.initial.iter().map(|t| from_theta(*t, param)).collect();
    origins.extend(start_points(opts.starts, opts.seed).into_iter().map(|u| from_unit(u, param)));

    let runs: Vec<(StartSummary, Vec<TraceEntry>)> = origins
        .par_iter()
        .enumerate()
        .map(|(k, &o)| run_start(problem, &base, opts, k, o))
        .collect();

    let mut best: Option<&StartSummary> = None;
    for (s, _) in &runs {
        best = match best {
            None => Some(s),
            Some(b) => {
                let take = match (s.feasible, b.feasible) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => better_point((s.variance, s.probability, s.theta), (b.variance, b.probability, b.theta)),
                    (false, false) => s.probability > b.probability,
                };
                if take {
                    Some(s)
                } else {
                    Some(b)
                }
            }
        };
    }
    let best = *best.expect("at least one start");
    let report = evaluate(&problem.config(best.theta), problem.xi)?;
    let (variance, s_db) = match problem.objective {
        Quadrature::C1 => (report.var_c1, report.s1_db),
        Quadrature::C2 => (report.var_c2, report.s2_db),
    };
    let evaluations = runs.iter().map(|(s, _)| s.evaluations).sum();
    let converged = best.feasible && runs.iter().any(|(s, _)| s.converged);
    let starts: Vec<StartSummary> = runs.iter().map(|(s, _)| *s).collect();
    let trace = runs.into_iter().flat_map(|(_, t)| t).collect();
    log::debug!(
        "optimum {s_db:.5} dB at P = {:.5} after {evaluations} evaluations",
        report.probability
    );
    Ok(OptimizationResult {
        theta: best.theta,
        transmissivities: best.theta.map(|t| t.cos().powi(2)),
        variance,
        s_db,
        probability: report.probability,
        feasible: best.feasible,
        converged,
        starts_used: starts.len(),
        evaluations,
        trace,
        starts,
        best: report,
    })
}

/// Central finite-difference gradient of the chosen variance and of the
/// heralding probability with respect to the four angles.
pub fn finite_difference_gradient(problem: &OptimizationProblem, theta: [f64; 4], h: f64) -> Result<([f64; 4], [f64; 4])> {
    problem.validate()?;
    let base = problem.config(theta);
    let mut gv = [0.0; 4];
    let mut gp = [0.0; 4];
    for k in 0..4 {
        let mut tp = theta;
        let mut tm = theta;
        tp[k] += h;
        tm[k] -= h;
        let (vp, pp) = raw(problem, &base, tp);
        let (vm, pm) = raw(problem, &base, tm);
        gv[k] = (vp - vm) / (2.0 * h);
        gp[k] = (pp - pm) / (2.0 * h);
    }
    Ok((gv, gp))
}

#[derive(Clone, Debug, Serialize)]
pub struct HeatmapCell {
    pub phi: f64,
    pub xi: f64,
    pub s_db: f64,
    pub probability: f64,
    pub theta: [f64; 4],
    pub feasible: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Heatmap {
    pub phi_grid: Vec<f64>,
    pub xi_grid: Vec<f64>,
    /// Row-major in (phi, xi).
    pub cells: Vec<HeatmapCell>,
}

impl Heatmap {
    pub fn cell(&self, i_phi: usize, i_xi: usize) -> &HeatmapCell {
        &self.cells[i_phi * self.xi_grid.len() + i_xi]
    }

    /// Feasible cell with the lowest squeezing value.
    pub fn minimum(&self) -> Option<&HeatmapCell> {
        self.cells
            .iter()
            .filter(|c| c.feasible)
            .min_by(|a, b| a.s_db.total_cmp(&b.s_db))
    }
}

/// Optimizes every (phi, xi) cell. Within each phi row, the optimum of the
/// previous cell is added as an extra start for the next.
pub fn phase_heatmap(
    problem: &OptimizationProblem,
    phi_grid: &[f64],
    xi_grid: &[f64],
    opts: &OptimizerOptions,
) -> Result<Heatmap> {
    if phi_grid.is_empty() || xi_grid.is_empty() {
        return invalid("phase grids must be non-empty");
    }
    problem.validate()?;
    let rows: Vec<Result<Vec<HeatmapCell>>> = phi_grid
        .par_iter()
        .map(|&phi| {
            let mut row = Vec::with_capacity(xi_grid.len());
            let mut warm: Option<[f64; 4]> = None;
            for &xi in xi_grid {
                let mut p = problem.clone();
                p.phi = phi;
                p.xi = xi;
                let mut o = opts.clone();
                o.initial.extend(warm);
                let r = maximize_squeezing(&p, &o)?;
                warm = Some(r.theta);
                row.push(HeatmapCell {
                    phi,
                    xi,
                    s_db: r.s_db,
                    probability: r.probability,
                    theta: r.theta,
                    feasible: r.feasible,
                });
            }
            Ok(row)
        })
        .collect();
    let mut cells = Vec::with_capacity(phi_grid.len() * xi_grid.len());
    for r in rows {
        cells.extend(r?);
    }
    Ok(Heatmap {
        phi_grid: phi_grid.to_vec(),
        xi_grid: xi_grid.to_vec(),
        cells,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TradeoffPoint {
    pub p_crit: f64,
    pub s_db: f64,
    pub probability: f64,
    pub theta: [f64; 4],
    pub feasible: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TradeoffCurve {
    pub alpha: f64,
    /// Sorted by increasing `p_crit`.
    pub points: Vec<TradeoffPoint>,
}

/// Optimum squeezing against the probability floor, one curve per alpha.
/// Floors are visited from the tightest down; the previous optimum stays a
/// candidate because it remains feasible under a looser floor.
pub fn probability_tradeoff_curve(
    problem: &OptimizationProblem,
    alphas: &[f64],
    p_crit_grid: &[f64],
    opts: &OptimizerOptions,
) -> Result<Vec<TradeoffCurve>> {
    if alphas.is_empty() || p_crit_grid.is_empty() {
        return invalid("alpha and P_crit grids must be non-empty");
    }
    let mut floors = p_crit_grid.to_vec();
    floors.sort_by(|a, b| b.total_cmp(a));
    alphas
        .par_iter()
        .map(|&alpha| {
            let mut points: Vec<TradeoffPoint> = Vec::with_capacity(floors.len());
            let mut prev: Option<TradeoffPoint> = None;
            for &pc in &floors {
                let mut p = problem.clone();
                p.alpha_in = alpha;
                p.p_crit = pc;
                let mut o = opts.clone();
                if let Some(pr) = &prev {
                    o.initial.push(pr.theta);
                }
                let r = maximize_squeezing(&p, &o)?;
                let mut pt = TradeoffPoint {
                    p_crit: pc,
                    s_db: r.s_db,
                    probability: r.probability,
                    theta: r.theta,
                    feasible: r.feasible,
                };
                if let Some(pr) = &prev {
                    if pr.feasible && (!pt.feasible || pr.s_db < pt.s_db) {
                        pt = TradeoffPoint { p_crit: pc, ..pr.clone() };
                    }
                }
                prev = Some(pt.clone());
                points.push(pt);
            }
            points.reverse();
            Ok(TradeoffCurve { alpha, points })
        })
        .collect()
}

/// Squeezing in dB at a point, for callers that only need the objective.
pub fn objective_db(problem: &OptimizationProblem, theta: [f64; 4]) -> Result<(f64, f64)> {
    let base = problem.config(theta);
    let (v, p) = raw(problem, &base, theta);
    Ok((squeezing_db(v)?, p))
}

type Mat4 = [[f64; 4]; 4];

fn identity() -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn matvec(m: &Mat4, v: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = (0..4).map(|j| m[i][j] * v[j]).sum();
    }
    out
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

fn sub(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

fn norm_inf(a: &[f64; 4]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn bfgs_update(h: &Mat4, s: &[f64; 4], y: &[f64; 4], sy: f64) -> Mat4 {
    let rho = 1.0 / sy;
    let hy = matvec(h, y);
    let yhy = dot(y, &hy);
    let mut out = *h;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{DetectorKind, Outcome};
    use std::f64::consts::PI;

    fn pnr_single() -> OptimizationProblem {
        OptimizationProblem::new(
            DetectionEvent::new(DetectorKind::Pnr, Outcome::Ch4Only),
            1.0,
            1.5 * PI,
            FRAC_PI_2,
            0.1,
        )
    }

    #[test]
    fn halton_prefix_is_stable() {
        let a = start_points(5, 7);
        let b = start_points(9, 7);
        assert_eq!(a[..], b[..5]);
        assert!(a.iter().flatten().all(|u| (0.0..1.0).contains(u)));
        assert_ne!(start_points(3, 1), start_points(3, 2));
    }

    #[test]
    fn bfgs_update_satisfies_secant() {
        let h = identity();
        let s = [0.1, -0.2, 0.05, 0.3];
        let y = [0.3, -0.1, 0.2, 0.4];
        let hn = bfgs_update(&h, &s, &y, dot(&s, &y));
        let hy = matvec(&hn, &y);
        for k in 0..4 {
            assert!((hy[k] - s[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn small_run_is_deterministic_and_feasible() {
        let p = pnr_single();
        let o = OptimizerOptions {
            starts: 2,
            budget: 400,
            seed: 3,
            ..Default::default()
        };
        let a = maximize_squeezing(&p, &o).unwrap();
        let b = maximize_squeezing(&p, &o).unwrap();
        assert_eq!(a.theta, b.theta);
        assert!(a.feasible);
        assert!(a.probability >= p.p_crit - 1e-9);
        assert!(a.starts.iter().all(|s| s.evaluations <= o.budget + 100));
    }

    #[test]
    fn unreachable_floor_reports_infeasible() {
        let mut p = pnr_single();
        p.p_crit = 1.0;
        let o = OptimizerOptions {
            starts: 1,
            budget: 200,
            ..Default::default()
        };
        let r = maximize_squeezing(&p, &o).unwrap();
        assert!(!r.feasible);
        assert!(r.probability < 1.0);
        assert!(r.require_feasible(1.0).is_err());
    }

    #[test]
    fn rejects_bad_problems() {
        let mut p = pnr_single();
        p.p_crit = 0.0;
        assert!(maximize_squeezing(&p, &OptimizerOptions::default()).is_err());
        let o = OptimizerOptions {
            starts: 0,
            ..Default::default()
        };
        assert!(maximize_squeezing(&pnr_single(), &o).is_err());
    }
}
