//! Named experiments that turn a flat parameter map into a CSV table plus a
//! JSON sidecar. Presets carry the settings of each reference scenario; the
//! experiment kind decides what is computed from them.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::circuit::{simulate, to_mode0_phase_frame, InterferometerConfig, LossChannel, LossPosition};
use crate::closedform::{
    click_probability, click_state, no_detection_state, no_detection_variance, pnr_moments, pnr_probability, pnr_state,
    special_case_probability, special_case_variance, Herald, SumBounds,
};
use crate::detect::{DetectionEvent, DetectorKind, Outcome};
use crate::error::{invalid, MinlError, Result};
use crate::fock::{photon_number_distribution, two_mode_squeezed_vacuum, FockCutoff};
use crate::optimize::{
    maximize_squeezing, phase_heatmap, probability_tradeoff_curve, OptimizationProblem, OptimizerOptions,
    Parameterization, Quadrature,
};
use crate::squeeze::{evaluate, output_moments, squeezing_db, two_mode_variance, xi_sweep, Moments};
use crate::wigner::{reduced_wigner, GridSpec, ReducedPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Optimize,
    XiSweep,
    PhaseHeatmap,
    Tradeoff,
    LossSweep,
    Wigner,
    PhotonDist,
    OracleCheck,
    SpecialCase,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::Simulate,
        ExperimentKind::Optimize,
        ExperimentKind::XiSweep,
        ExperimentKind::PhaseHeatmap,
        ExperimentKind::Tradeoff,
        ExperimentKind::LossSweep,
        ExperimentKind::Wigner,
        ExperimentKind::PhotonDist,
        ExperimentKind::OracleCheck,
        ExperimentKind::SpecialCase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Optimize => "optimize",
            ExperimentKind::XiSweep => "xi_sweep",
            ExperimentKind::PhaseHeatmap => "phase_heatmap",
            ExperimentKind::Tradeoff => "tradeoff",
            ExperimentKind::LossSweep => "loss_sweep",
            ExperimentKind::Wigner => "wigner",
            ExperimentKind::PhotonDist => "photon_dist",
            ExperimentKind::OracleCheck => "oracle_check",
            ExperimentKind::SpecialCase => "special_case",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = MinlError;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| MinlError::InvalidParameter(format!("unknown experiment kind '{s}'")))
    }
}

/// Every key any experiment reads, with its default.
const DEFAULTS: &[(&str, &str)] = &[
    ("alpha", "1"),
    ("t1", "0.68"),
    ("t2", "0.82"),
    ("t3", "0.38"),
    ("t4", "1"),
    ("phi", "4.71238898038469"),
    ("xi", "1.5707963267948966"),
    ("detector", "pnr"),
    ("event", "single"),
    ("quadrature", "c1"),
    ("p_crit", "0.1"),
    ("starts", "16"),
    ("budget", "2000"),
    ("parameterization", "angle"),
    ("rb", "0"),
    ("ra", "0"),
    ("xi_points", "121"),
    ("grid", "25"),
    ("alphas", "0.4,0.6,0.8,1.0,1.2,1.4,1.6"),
    ("p_crit_grid", "0.02:0.4:20"),
    ("rb_max", "0.1"),
    ("ra_max", "0.1"),
    ("loss_points", "11"),
    ("state", "interferometer"),
    ("z", "0.143"),
    ("pair", "all"),
    ("frame", "native"),
    ("range", "6"),
    ("points", "81"),
    ("count", "100"),
    ("t_points", "20"),
    ("alpha_max", "2"),
    ("alpha_points", "20"),
];

/// Named parameter overrides.
pub fn preset(name: &str) -> Result<BTreeMap<String, String>> {
    let pairs: &[(&str, &str)] = match name {
        "fig2" => &[("t1", "0.5"), ("t4", "1"), ("t_points", "20"), ("alpha_max", "2"), ("alpha_points", "20")],
        "fig3" => &[("detector", "pnr"), ("event", "single"), ("alpha", "1"), ("p_crit", "0.1"), ("grid", "25")],
        "fig4" => &[("detector", "pnr"), ("event", "single"), ("alphas", "0.2,0.4,0.6,0.8,1.0,1.2,1.4,1.6")],
        "fig5" => &[("detector", "click"), ("event", "single"), ("alpha", "1"), ("p_crit", "0.1"), ("grid", "25")],
        "fig6" => &[("detector", "pnr"), ("event", "single"), ("state", "interferometer"), ("frame", "mode0")],
        "fig7" => &[("state", "tmsv"), ("z", "0.143")],
        "fig8" => &[("detector", "pnr"), ("event", "single"), ("rb_max", "0.1"), ("ra_max", "0.1")],
        other => return invalid(format!("unknown preset '{other}'")),
    };
    Ok(pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| MinlError::InvalidParameter(format!("line {}: expected key=value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub kind: ExperimentKind,
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentSpec {
            name: kind.name().to_string(),
            kind,
            params: BTreeMap::new(),
            seed: 0,
            output_path: None,
        }
    }

    pub fn with_preset(mut self, name: &str) -> Result<Self> {
        for (k, v) in preset(name)? {
            self.params.entry(k).or_insert(v);
        }
        self.name = format!("{}-{}", name, self.kind.name());
        Ok(self)
    }

    pub fn set(mut self, key: &str, value: &str) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    /// All parameters with defaults filled in. Unknown keys are rejected.
    pub fn resolved(&self) -> Result<Params> {
        let mut map: BTreeMap<String, String> = DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in &self.params {
            if k == "cutoff" {
                map.insert(k.clone(), v.clone());
                continue;
            }
            if !map.contains_key(k) {
                return invalid(format!("unknown parameter '{k}'"));
            }
            map.insert(k.clone(), v.clone());
        }
        if !map.contains_key("cutoff") {
            map.insert("cutoff".into(), FockCutoff::from_env()?.n_max().to_string());
        }
        Ok(Params(map))
    }
}

/// Resolved parameter map with typed accessors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Params(pub BTreeMap<String, String>);

impl Params {
    fn raw(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        parse_f64(self.raw(key)).map_err(|_| MinlError::InvalidParameter(format!("{key}: '{}' is not a number", self.raw(key))))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.raw(key)
            .parse()
            .map_err(|_| MinlError::InvalidParameter(format!("{key}: '{}' is not a count", self.raw(key))))
    }

    /// Either `a,b,c` or `start:stop:count` (inclusive, evenly spaced).
    pub fn list(&self, key: &str) -> Result<Vec<f64>> {
        let s = self.raw(key);
        let bad = || MinlError::InvalidParameter(format!("{key}: cannot parse list '{s}'"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() == 3 {
            let a = parse_f64(parts[0]).map_err(|_| bad())?;
            let b = parse_f64(parts[1]).map_err(|_| bad())?;
            let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
            return Ok(linspace(a, b, n));
        }
        s.split(',')
            .filter(|x| !x.trim().is_empty())
            .map(|x| parse_f64(x).map_err(|_| bad()))
            .collect()
    }

    pub fn event(&self) -> Result<DetectionEvent> {
        let kind: DetectorKind = self.raw("detector").parse()?;
        let outcome: Outcome = self.raw("event").parse()?;
        Ok(DetectionEvent::new(kind, outcome))
    }

    pub fn cutoff(&self) -> Result<FockCutoff> {
        FockCutoff::new(self.usize("cutoff")?)
    }

    pub fn quadrature(&self) -> Result<Quadrature> {
        match self.raw("quadrature").to_ascii_lowercase().as_str() {
            "c1" => Ok(Quadrature::C1),
            "c2" => Ok(Quadrature::C2),
            other => invalid(format!("quadrature must be c1 or c2, got '{other}'")),
        }
    }

    pub fn losses(&self, rb: f64, ra: f64) -> Result<Vec<LossChannel>> {
        let mut out = Vec::new();
        if rb > 0.0 {
            out.extend(LossChannel::split(rb, LossPosition::BeforeDetection)?);
        }
        if ra > 0.0 {
            out.extend(LossChannel::split(ra, LossPosition::AfterDetection)?);
        }
        Ok(out)
    }

    pub fn config(&self) -> Result<InterferometerConfig> {
        let t = [self.f64("t1")?, self.f64("t2")?, self.f64("t3")?, self.f64("t4")?];
        let cfg = InterferometerConfig::from_transmissivities(t, self.f64("phi")?, self.f64("alpha")?, self.event()?)?
            .with_cutoff(self.cutoff()?)
            .with_losses(self.losses(self.f64("rb")?, self.f64("ra")?)?);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn problem(&self) -> Result<OptimizationProblem> {
        let mut p = OptimizationProblem::new(
            self.event()?,
            self.f64("alpha")?,
            self.f64("phi")?,
            self.f64("xi")?,
            self.f64("p_crit")?,
        );
        p.objective = self.quadrature()?;
        p.cutoff = self.cutoff()?;
        p.losses = self.losses(self.f64("rb")?, self.f64("ra")?)?;
        p.validate()?;
        Ok(p)
    }

    pub fn optimizer(&self, seed: u64) -> Result<OptimizerOptions> {
        let parameterization = match self.raw("parameterization") {
            "angle" => Parameterization::Angle,
            "transmissivity" => Parameterization::Transmissivity,
            other => return invalid(format!("parameterization must be angle or transmissivity, got '{other}'")),
        };
        Ok(OptimizerOptions {
            starts: self.usize("starts")?,
            budget: self.usize("budget")?,
            seed,
            parameterization,
            ..Default::default()
        })
    }
}

/// Accepts plain numbers and multiples of pi such as `pi/2` or `1.5pi`.
fn parse_f64(s: &str) -> std::result::Result<f64, ()> {
    let s = s.trim().to_ascii_lowercase();
    if let Ok(v) = s.parse::<f64>() {
        return if v.is_finite() { Ok(v) } else { Err(()) };
    }
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim().to_string(), b.trim().parse::<f64>().map_err(|_| ())?),
        None => (s.clone(), 1.0),
    };
    let coeff = match num.strip_suffix("pi").map(str::trim) {
        Some("") => 1.0,
        Some(c) => c.trim_end_matches('*').parse::<f64>().map_err(|_| ())?,
        None => return Err(()),
    };
    Ok(coeff * PI / den)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Formats a number at 12 significant digits, in scientific notation below
/// 1e-4 in magnitude.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    if x.abs() < 1e-4 || x.abs() >= 1e15 {
        let s = format!("{:.11e}", x);
        let (mant, exp) = s.split_once('e').unwrap();
        let mant = trim_zeros(mant);
        return format!("{mant}e{exp}");
    }
    let digits = 11 - x.abs().log10().floor() as i32;
    let s = format!("{:.*}", digits.max(0) as usize, x);
    trim_zeros(&s).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            comments: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.comments.push(s.into());
    }

    fn push(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| format_number(*v)).collect());
    }

    fn push_cells(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentOutput {
    pub name: String,
    pub kind: ExperimentKind,
    pub summary: String,
    pub tables: Vec<(String, Table)>,
    pub metadata: serde_json::Value,
    /// False when a check inside the experiment failed (oracle_check).
    pub ok: bool,
}

impl ExperimentOutput {
    /// Writes each table as CSV next to a JSON sidecar. A single table goes to
    /// `path`; several tables get their label appended to the file stem.
    pub fn write(&self, path: &Path) -> Result<Vec<PathBuf>> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut written = Vec::new();
        for (label, table) in &self.tables {
            let p = if self.tables.len() == 1 {
                path.to_path_buf()
            } else {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
                path.with_file_name(format!("{stem}_{label}.csv"))
            };
            std::fs::write(&p, table.to_csv())?;
            written.push(p);
        }
        let sidecar = path.with_extension("json");
        let text = serde_json::to_string_pretty(&self.metadata).map_err(|e| MinlError::Io(e.to_string()))?;
        std::fs::write(&sidecar, text)?;
        written.push(sidecar);
        Ok(written)
    }
}

fn header(t: &mut Table, spec: &ExperimentSpec, p: &Params) {
    t.note(format!("experiment {} ({})", spec.name, spec.kind.name()));
    t.note(format!("seed {} cutoff {}", spec.seed, p.raw("cutoff")));
    t.note("quadratures C1, C2 of S = a + b at angle xi; vacuum variance 0.25; S_dB = 10 log10(var / 0.25)");
    t.note("angles in radians; transmissivities T = cos^2(theta); probabilities are heralding probabilities");
}

/// Runs one experiment.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let started = Instant::now();
    let p = spec.resolved()?;
    let mut t_main = Table::new(&[]);
    header(&mut t_main, spec, &p);
    let (summary, tables, ok, extra) = match spec.kind {
        ExperimentKind::Simulate => run_simulate(&p, t_main)?,
        ExperimentKind::Optimize => run_optimize(&p, spec.seed, t_main)?,
        ExperimentKind::XiSweep => run_xi_sweep(&p, t_main)?,
        ExperimentKind::PhaseHeatmap => run_heatmap(&p, spec.seed, t_main)?,
        ExperimentKind::Tradeoff => run_tradeoff(&p, spec.seed, t_main)?,
        ExperimentKind::LossSweep => run_loss_sweep(&p, t_main)?,
        ExperimentKind::Wigner => run_wigner(&p, t_main)?,
        ExperimentKind::PhotonDist => run_photon_dist(&p, t_main)?,
        ExperimentKind::OracleCheck => run_oracle_check(&p, spec.seed, t_main)?,
        ExperimentKind::SpecialCase => run_special_case(&p, t_main)?,
    };
    let metadata = json!({
        "name": spec.name,
        "kind": spec.kind.name(),
        "params": p.0,
        "seed": spec.seed,
        "cutoff": p.usize("cutoff")?,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": started.elapsed().as_secs_f64(),
        "summary": summary,
        "ok": ok,
        "details": extra,
    });
    Ok(ExperimentOutput {
        name: spec.name.clone(),
        kind: spec.kind,
        summary,
        tables,
        metadata,
        ok,
    })
}

type KindOutput = (String, Vec<(String, Table)>, bool, serde_json::Value);

fn with_columns(mut t: Table, cols: &[&str]) -> Table {
    t.columns = cols.iter().map(|c| c.to_string()).collect();
    t
}

fn run_simulate(p: &Params, t: Table) -> Result<KindOutput> {
    let cfg = p.config()?;
    let xi = p.f64("xi")?;
    let r = evaluate(&cfg, xi)?;
    let mut t = with_columns(t, &["t1", "t2", "t3", "t4", "phi", "xi", "var_c1", "var_c2", "s1_db", "s2_db", "probability"]);
    let tr = cfg.transmissivities();
    t.push(&[tr[0], tr[1], tr[2], tr[3], cfg.phi, xi, r.var_c1, r.var_c2, r.s1_db, r.s2_db, r.probability]);
    let summary = format!("S1 = {:.4} dB, S2 = {:.4} dB, P = {:.4}", r.s1_db, r.s2_db, r.probability);
    let extra = json!({ "truncation_flag": r.truncation_flag });
    Ok((summary, vec![("main".into(), t)], true, extra))
}

fn run_xi_sweep(p: &Params, t: Table) -> Result<KindOutput> {
    let cfg = p.config()?;
    let (m, prob, _) = output_moments(&cfg)?;
    let grid = linspace(0.0, TAU, p.usize("xi_points")?);
    let pts = xi_sweep(&m, &grid)?;
    let mut t = with_columns(t, &["xi", "var_c1", "var_c2", "s1_db", "s2_db"]);
    for q in &pts {
        t.push(&[q.xi, q.var_c1, q.var_c2, q.s1_db, q.s2_db]);
    }
    let best = pts
        .iter()
        .min_by(|a, b| a.s1_db.total_cmp(&b.s1_db))
        .ok_or_else(|| MinlError::InvalidParameter("xi_points must be positive".into()))?;
    let summary = format!("min S1 = {:.4} dB at xi = {:.4}, P = {:.4}", best.s1_db, best.xi, prob);
    Ok((summary, vec![("main".into(), t)], true, json!({ "probability": prob })))
}

fn optimizer_meta(o: &OptimizerOptions) -> serde_json::Value {
    json!({
        "starts": o.starts,
        "budget_per_start": o.budget,
        "penalty_schedule": o.penalty_schedule,
        "fd_step": o.fd_step,
        "gradient_tol": o.gradient_tol,
        "parameterization": format!("{:?}", o.parameterization),
        "start_points": "Halton bases 2,3,5,7 with seeded shift over [0, pi/2]^4",
    })
}

fn run_optimize(p: &Params, seed: u64, t: Table) -> Result<KindOutput> {
    let problem = p.problem()?;
    let opts = p.optimizer(seed)?;
    let res = maximize_squeezing(&problem, &opts)?.require_feasible(problem.p_crit)?;
    let head = t.comments.clone();
    let mut t = with_columns(
        t,
        &["start", "t1", "t2", "t3", "t4", "variance", "s_db", "probability", "feasible", "converged", "evaluations"],
    );
    t.note("one row per start; the final row (start = -1) is the reported optimum");
    let mut row = |k: f64, theta: [f64; 4], v: f64, pr: f64, f: bool, c: bool, e: usize| {
        let tr = theta.map(|x| x.cos().powi(2));
        let s = squeezing_db(v).unwrap_or(f64::NAN);
        t.push(&[k, tr[0], tr[1], tr[2], tr[3], v, s, pr, f as u8 as f64, c as u8 as f64, e as f64]);
    };
    for (k, st) in res.starts.iter().enumerate() {
        row(k as f64, st.theta, st.variance, st.probability, st.feasible, st.converged, st.evaluations);
    }
    row(-1.0, res.theta, res.variance, res.probability, res.feasible, res.converged, res.evaluations);
    let mut trace = Table::new(&["start", "iteration", "objective", "probability"]);
    trace.comments = head;
    trace.note("penalized objective and heralding probability after each accepted step");
    for e in &res.trace {
        trace.push(&[e.start as f64, e.iteration as f64, e.objective, e.probability]);
    }
    let tr = res.transmissivities;
    let summary = format!(
        "S = {:.4} dB, P = {:.4}, T = [{:.4}, {:.4}, {:.4}, {:.4}]",
        res.s_db, res.probability, tr[0], tr[1], tr[2], tr[3]
    );
    let extra = json!({ "optimizer": optimizer_meta(&opts), "converged": res.converged, "theta": res.theta });
    Ok((summary, vec![("main".into(), t), ("trace".into(), trace)], true, extra))
}

fn run_heatmap(p: &Params, seed: u64, t: Table) -> Result<KindOutput> {
    let problem = p.problem()?;
    let opts = p.optimizer(seed)?;
    let n = p.usize("grid")?;
    let grid = linspace(0.0, TAU, n);
    let h = phase_heatmap(&problem, &grid, &grid, &opts)?;
    let mut t = with_columns(t, &["phi", "xi", "s_db", "probability", "t1", "t2", "t3", "t4", "feasible"]);
    for c in &h.cells {
        let tr = c.theta.map(|x| x.cos().powi(2));
        t.push(&[c.phi, c.xi, c.s_db, c.probability, tr[0], tr[1], tr[2], tr[3], c.feasible as u8 as f64]);
    }
    let summary = match h.minimum() {
        Some(m) => format!("minimum {:.4} dB at phi = {:.4}, xi = {:.4}", m.s_db, m.phi, m.xi),
        None => "no feasible cell".to_string(),
    };
    let ok = h.minimum().is_some();
    Ok((summary, vec![("main".into(), t)], ok, json!({ "optimizer": optimizer_meta(&opts) })))
}

fn run_tradeoff(p: &Params, seed: u64, t: Table) -> Result<KindOutput> {
    let problem = p.problem()?;
    let opts = p.optimizer(seed)?;
    let alphas = p.list("alphas")?;
    let floors = p.list("p_crit_grid")?;
    if floors.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return invalid("p_crit_grid values must lie in (0, 1]");
    }
    let curves = probability_tradeoff_curve(&problem, &alphas, &floors, &opts)?;
    let mut t = with_columns(t, &["alpha", "p_crit", "s_db", "probability", "t1", "t2", "t3", "t4", "feasible"]);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for c in &curves {
        for q in &c.points {
            let tr = q.theta.map(|x| x.cos().powi(2));
            t.push(&[c.alpha, q.p_crit, q.s_db, q.probability, tr[0], tr[1], tr[2], tr[3], q.feasible as u8 as f64]);
            if q.feasible && q.s_db < best.0 {
                best = (q.s_db, c.alpha, q.p_crit);
            }
        }
    }
    let summary = format!("best {:.4} dB at alpha = {}, P_crit = {}", best.0, best.1, best.2);
    Ok((summary, vec![("main".into(), t)], true, json!({ "optimizer": optimizer_meta(&opts) })))
}

/// Squeezing at fixed configuration for every (R_b, R_a) pair, with each total
/// split equally between the two signal modes.
pub fn loss_grid(base: &InterferometerConfig, xi: f64, rb: &[f64], ra: &[f64]) -> Result<Vec<(f64, f64, f64, f64)>> {
    let mut out = Vec::with_capacity(rb.len() * ra.len());
    for &b in rb {
        for &a in ra {
            let mut losses = Vec::new();
            if b > 0.0 {
                losses.extend(LossChannel::split(b, LossPosition::BeforeDetection)?);
            }
            if a > 0.0 {
                losses.extend(LossChannel::split(a, LossPosition::AfterDetection)?);
            }
            let cfg = base.clone().with_losses(losses);
            let r = evaluate(&cfg, xi)?;
            out.push((b, a, r.s1_db, r.probability));
        }
    }
    Ok(out)
}

fn run_loss_sweep(p: &Params, t: Table) -> Result<KindOutput> {
    let base = p.config()?.with_losses(Vec::new());
    let n = p.usize("loss_points")?;
    let rb = linspace(0.0, p.f64("rb_max")?, n);
    let ra = linspace(0.0, p.f64("ra_max")?, n);
    let cells = loss_grid(&base, p.f64("xi")?, &rb, &ra)?;
    let mut t = with_columns(t, &["rb_total", "ra_total", "s1_db", "probability"]);
    t.note("losses split equally between the two signal modes; rb before detection, ra after");
    for c in &cells {
        t.push(&[c.0, c.1, c.2, c.3]);
    }
    let corner = cells.last().map(|c| c.2).unwrap_or(f64::NAN);
    let summary = format!("lossless {:.4} dB, fully lossy corner {:.4} dB", cells[0].2, corner);
    Ok((summary, vec![("main".into(), t)], true, json!({})))
}

fn run_wigner(p: &Params, t: Table) -> Result<KindOutput> {
    let cutoff = p.cutoff()?;
    let rho = match p.raw("state") {
        "interferometer" => {
            let cfg = p.config()?;
            let rho = simulate(&cfg)?.density()?;
            match p.raw("frame") {
                "native" => rho,
                "mode0" => to_mode0_phase_frame(&rho, cfg.phi)?,
                other => return invalid(format!("frame must be native or mode0, got '{other}'")),
            }
        }
        "tmsv" => two_mode_squeezed_vacuum(p.f64("z")?, cutoff)?.normalized()?.to_density(),
        other => return invalid(format!("state must be interferometer or tmsv, got '{other}'")),
    };
    let range = p.f64("range")?;
    let grid = GridSpec {
        min: -range,
        max: range,
        points: p.usize("points")?,
    };
    let pairs: Vec<ReducedPair> = match p.raw("pair") {
        "all" => ReducedPair::ALL.to_vec(),
        s => vec![s.parse()?],
    };
    let mut tables = Vec::new();
    let mut meta = serde_json::Map::new();
    let mut summary = Vec::new();
    for pair in pairs {
        let g = reduced_wigner(&rho, pair, &grid)?;
        let (a, b) = pair.labels();
        let mut tb = with_columns(t.clone(), &[a, b, "w", "w_l2"]);
        tb.note(format!("{pair}: w integrates the other two coordinates; w_l2 rescales so that the integral of w^2 is one"));
        let l2n = g.l2_normalized();
        for (i, x) in g.x_axis.iter().enumerate() {
            for (j, y) in g.y_axis.iter().enumerate() {
                tb.push(&[*x, *y, g.values[(i, j)], l2n[(i, j)]]);
            }
        }
        let (cx, cy) = g.centroid();
        summary.push(format!("{pair}: centroid ({cx:.3}, {cy:.3}) cov {:.4}", g.covariance()));
        meta.insert(
            pair.to_string(),
            json!({ "mass": g.mass, "l2": g.l2, "coverage_ok": g.coverage_ok, "centroid": [cx, cy], "covariance": g.covariance() }),
        );
        tables.push((pair.to_string(), tb));
    }
    Ok((summary.join("; "), tables, true, serde_json::Value::Object(meta)))
}

fn run_photon_dist(p: &Params, t: Table) -> Result<KindOutput> {
    let cfg = p.config()?;
    let h = simulate(&cfg)?;
    let dist = photon_number_distribution(&h.density()?)?;
    let mut t = with_columns(t, &["n1", "n2", "probability"]);
    let mut mean = (0.0, 0.0);
    for (n1, row) in dist.iter().enumerate() {
        for (n2, v) in row.iter().enumerate() {
            t.push(&[n1 as f64, n2 as f64, *v]);
            mean.0 += n1 as f64 * v;
            mean.1 += n2 as f64 * v;
        }
    }
    let summary = format!("<n1> = {:.4}, <n2> = {:.4}, P_det = {:.4}", mean.0, mean.1, h.probability);
    Ok((summary, vec![("main".into(), t)], true, json!({ "probability": h.probability })))
}

fn run_special_case(p: &Params, t: Table) -> Result<KindOutput> {
    let alpha = linspace(0.0, p.f64("alpha_max")?, p.usize("alpha_points")?);
    let ts = linspace(0.0, 1.0, p.usize("t_points")?);
    let (phi, xi) = (p.f64("phi")?, p.f64("xi")?);
    let mut t = with_columns(t, &["t", "alpha", "var_c1", "s1_db", "probability"]);
    t.note("T1 = 1/2, T2 = T3 = t, T4 = 1, single PNR herald; closed-form values");
    let mut best = f64::INFINITY;
    for &tt in &ts {
        for &a in &alpha {
            let (v1, _) = special_case_variance(tt, a, phi, xi);
            let s = squeezing_db(v1)?;
            best = best.min(s);
            t.push(&[tt, a, v1, s, special_case_probability(tt, a)]);
        }
    }
    Ok((format!("best {best:.4} dB"), vec![("main".into(), t)], true, json!({})))
}

/// One closed-form versus simulator comparison.
#[derive(Clone, Debug, Serialize)]
pub struct OracleRow {
    pub case: usize,
    pub check: String,
    pub delta: f64,
    pub threshold: f64,
}

impl OracleRow {
    pub fn pass(&self) -> bool {
        self.delta <= self.threshold
    }
}

fn max_moment_diff(a: &Moments, b: &Moments) -> f64 {
    [
        (a.a, b.a),
        (a.b, b.b),
        (a.a2, b.a2),
        (a.b2, b.b2),
        (a.ab, b.ab),
        (a.ab_dag, b.ab_dag),
        (a.aa_dag, b.aa_dag),
        (a.bb_dag, b.bb_dag),
    ]
    .iter()
    .map(|(x, y)| (x - y).norm())
    .fold(0.0, f64::max)
}

/// Compares every closed form against the simulator on `count` random
/// configurations drawn from `seed`.
pub fn oracle_rows(count: usize, seed: u64) -> Result<Vec<OracleRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for case in 0..count {
        let alpha: f64 = rng.gen_range(0.0..1.6);
        let t: [f64; 4] = [rng.gen(), rng.gen(), rng.gen(), rng.gen()];
        let phi = rng.gen_range(0.0..TAU);
        let xi = rng.gen_range(0.0..TAU);
        let theta = t.map(|x: f64| x.sqrt().acos());
        let a = Complex64::new(alpha, 0.0);
        let cutoff = FockCutoff::new(FockCutoff::for_coherent(alpha, 1e-14).n_max().max(12))?;
        for (kind, herald, outcome) in [
            (DetectorKind::Pnr, Herald::Single, Outcome::Ch4Only),
            (DetectorKind::Pnr, Herald::Both, Outcome::Both),
            (DetectorKind::Click, Herald::Single, Outcome::Ch4Only),
            (DetectorKind::Click, Herald::Both, Outcome::Both),
        ] {
            let ev = DetectionEvent::new(kind, outcome);
            let cfg = InterferometerConfig::from_angles(theta, phi, alpha, ev).with_cutoff(cutoff);
            let (ms, ps) = match output_moments(&cfg) {
                Ok((m, p, _)) => (m, p),
                Err(MinlError::HeraldingImpossible { .. }) => continue,
                Err(e) => return Err(e),
            };
            let (vs, _) = two_mode_variance(&ms, xi);
            match kind {
                DetectorKind::Pnr => {
                    let c = pnr_state(&theta, phi, a, herald)?;
                    let mc = pnr_moments(&c);
                    let (vc, _) = two_mode_variance(&mc, xi);
                    let name = if herald == Herald::Single { "pnr_single" } else { "pnr_both" };
                    let poly = pnr_probability(&t, alpha, herald);
                    let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-300);
                    rows.push(OracleRow { case, check: format!("{name}_probability"), delta: rel(ps, c.probability), threshold: 1e-9 });
                    rows.push(OracleRow { case, check: format!("{name}_probability_poly"), delta: rel(ps, poly), threshold: 1e-9 });
                    rows.push(OracleRow { case, check: format!("{name}_moments"), delta: max_moment_diff(&ms, &mc), threshold: 1e-9 });
                    rows.push(OracleRow { case, check: format!("{name}_variance"), delta: (vs - vc).abs(), threshold: 1e-9 });
                    let h = simulate(&cfg)?;
                    let fid = h.density()?.fidelity_with_pure(&c.state(cutoff))?;
                    rows.push(OracleRow { case, check: format!("{name}_state_infidelity"), delta: (1.0 - fid).abs(), threshold: 1e-9 });
                }
                DetectorKind::Click => {
                    let c = click_state(&theta, phi, a, herald, SumBounds::default())?;
                    let (vc, _) = two_mode_variance(&c.moments(), xi);
                    let name = if herald == Herald::Single { "click_single" } else { "click_both" };
                    let ps2 = click_probability(&theta, a, herald, SumBounds::default());
                    rows.push(OracleRow { case, check: format!("{name}_probability"), delta: (ps - c.probability).abs(), threshold: 1e-7 });
                    rows.push(OracleRow { case, check: format!("{name}_probability_sums"), delta: (ps - ps2).abs(), threshold: 1e-7 });
                    rows.push(OracleRow { case, check: format!("{name}_variance"), delta: (vs - vc).abs(), threshold: 1e-7 });
                }
            }
        }
        // No-detection path: T2 = T3 = 1 with the PNR vacuum outcome.
        let ev = DetectionEvent::new(DetectorKind::Pnr, Outcome::None);
        let th = [theta[0], 0.0, 0.0, theta[3]];
        let cfg = InterferometerConfig::from_angles(th, phi, alpha, ev).with_cutoff(cutoff);
        let (m, p0, _) = output_moments(&cfg)?;
        let (v, _) = two_mode_variance(&m, xi);
        let nd = no_detection_state(theta[0], theta[3], phi, a).to_state(cutoff);
        let fid = simulate(&cfg)?.density()?.fidelity_with_pure(&nd)?;
        rows.push(OracleRow { case, check: "no_detection_state_infidelity".into(), delta: (1.0 - fid).abs(), threshold: 1e-9 });
        rows.push(OracleRow { case, check: "no_detection_probability".into(), delta: (p0 - 1.0).abs(), threshold: 1e-9 });
        rows.push(OracleRow {
            case,
            check: "no_detection_variance".into(),
            delta: (v - no_detection_variance(theta[0], phi)).abs(),
            threshold: 1e-9,
        });
        // Special case T1 = 1/2, T2 = T3 = t, T4 = 1.
        let tt = t[1];
        let ev = DetectionEvent::new(DetectorKind::Pnr, Outcome::Ch4Only);
        let cfg = InterferometerConfig::from_transmissivities([0.5, tt, tt, 1.0], phi, alpha, ev)?.with_cutoff(cutoff);
        if let Ok((m, p, _)) = output_moments(&cfg) {
            let (v1, v2) = two_mode_variance(&m, xi);
            let (c1, c2) = special_case_variance(tt, alpha, phi, xi);
            rows.push(OracleRow { case, check: "special_case_variance".into(), delta: (v1 - c1).abs().max((v2 - c2).abs()), threshold: 1e-9 });
            rows.push(OracleRow { case, check: "special_case_probability".into(), delta: (p - special_case_probability(tt, alpha)).abs(), threshold: 1e-9 });
        }
    }
    Ok(rows)
}

fn run_oracle_check(p: &Params, seed: u64, t: Table) -> Result<KindOutput> {
    let rows = oracle_rows(p.usize("count")?, seed)?;
    let mut t = with_columns(t, &["case", "check", "delta", "threshold", "pass"]);
    t.note("delta is the closed-form versus simulator difference (relative for PNR probabilities)");
    let mut worst: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for r in &rows {
        t.push_cells(vec![
            r.case.to_string(),
            r.check.clone(),
            format_number(r.delta),
            format_number(r.threshold),
            (r.pass() as u8).to_string(),
        ]);
        let e = worst.entry(r.check.as_str()).or_insert((0.0, r.threshold));
        e.0 = e.0.max(r.delta);
    }
    let failed = rows.iter().filter(|r| !r.pass()).count();
    let summary = format!("{} checks, {} failed", rows.len(), failed);
    let meta: serde_json::Map<String, serde_json::Value> = worst
        .iter()
        .map(|(k, (d, th))| (k.to_string(), json!({ "max_delta": d, "threshold": th, "pass": d <= th })))
        .collect();
    Ok((summary, vec![("main".into(), t)], failed == 0, serde_json::Value::Object(meta)))
}

/// Reference operating point used by presets and tests.
pub fn anchor_config() -> InterferometerConfig {
    InterferometerConfig::from_transmissivities(
        [0.68, 0.82, 0.38, 1.0],
        1.5 * PI,
        1.0,
        DetectionEvent::new(DetectorKind::Pnr, Outcome::Ch4Only),
    )
    .expect("anchor transmissivities are valid")
}

/// Quadrature angle paired with [`anchor_config`].
pub const ANCHOR_XI: f64 = FRAC_PI_2;

/// Runs the optimizer for a problem described by parameters, for the CLI.
pub fn optimize_from(p: &Params, seed: u64) -> Result<crate::optimize::OptimizationResult> {
    maximize_squeezing(&p.problem()?, &p.optimizer(seed)?)
}
