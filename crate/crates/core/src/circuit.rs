//! Linear-optical elements and the heralded interferometer pipeline.
//!
//! Beam splitters act as `exp[i theta (a_i a_j† + a_i† a_j)]`, so a photon
//! entering port `i` leaves as `t a_i† + i r a_j†` with `t = cos theta`,
//! `r = sin theta`. Angles are signed: a negative angle flips the sign of the
//! reflection amplitude, which a transmissivity alone cannot express.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detect::{self, DetectionEvent};
use crate::error::{invalid, MinlError, Result};
use crate::fock::{coherent_state, fock_state, stride, DensityOperator, FockCutoff, PureState};

/// Phase picked up on reflection.
pub const REFLECTION_PHASE: Complex64 = Complex64::new(0.0, 1.0);

/// Heralding probabilities below this are treated as impossible events.
pub const HERALD_FLOOR: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamSplitter {
    pub theta: f64,
    pub modes: (usize, usize),
}

impl BeamSplitter {
    pub fn new(theta: f64, modes: (usize, usize)) -> Result<Self> {
        if modes.0 == modes.1 {
            return Err(MinlError::IdenticalModes(modes.0));
        }
        if !theta.is_finite() {
            return invalid("beam splitter angle must be finite");
        }
        Ok(BeamSplitter { theta, modes })
    }

    pub fn from_transmissivity(t: f64, modes: (usize, usize)) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return invalid(format!("transmissivity must lie in [0, 1], got {t}"));
        }
        BeamSplitter::new(t.sqrt().acos(), modes)
    }

    pub fn t(&self) -> f64 {
        self.theta.cos()
    }

    pub fn r(&self) -> f64 {
        self.theta.sin()
    }

    pub fn transmissivity(&self) -> f64 {
        self.t().powi(2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseShifter {
    pub phi: f64,
    pub mode: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossPosition {
    /// Between the first beam splitter and the out-couplers.
    BeforeDetection,
    /// Between heralding and the phase shifter.
    AfterDetection,
}

/// Pure loss of reflectivity `R` on one of the two signal modes (0 or 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossChannel {
    pub reflectivity: f64,
    pub mode: usize,
    pub position: LossPosition,
}

impl LossChannel {
    /// Splits a total loss equally over both signal modes.
    pub fn split(total: f64, position: LossPosition) -> Result<[LossChannel; 2]> {
        if !(0.0..=2.0).contains(&total) {
            return invalid(format!("total loss must lie in [0, 2], got {total}"));
        }
        let r = total / 2.0;
        Ok([
            LossChannel {
                reflectivity: r,
                mode: 0,
                position,
            },
            LossChannel {
                reflectivity: r,
                mode: 1,
                position,
            },
        ])
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.reflectivity) {
            return invalid(format!(
                "loss reflectivity must lie in [0, 1], got {}",
                self.reflectivity
            ));
        }
        if self.mode > 1 {
            return invalid(format!("loss mode must be 0 or 1, got {}", self.mode));
        }
        Ok(())
    }
}

/// Beam-splitter action restricted to each total-photon-number sector.
/// Block `N` is stored column-major: entry `[n1 * (N + 1) + m1]` is
/// `<m1, N - m1| U |n1, N - n1>`.
pub(crate) struct SectorUnitary {
    blocks: Vec<Vec<Complex64>>,
}

impl SectorUnitary {
    pub(crate) fn new(theta: f64, max_total: usize) -> Self {
        let t = Complex64::new(theta.cos(), 0.0);
        let er = REFLECTION_PHASE * theta.sin();
        let mut blocks = Vec::with_capacity(max_total + 1);
        blocks.push(vec![Complex64::new(1.0, 0.0)]);
        for n in 0..max_total {
            let prev = &blocks[n];
            let (d0, d1) = (n + 1, n + 2);
            let mut next = vec![ZERO; d1 * d1];
            // Column n1 = 0 of sector n + 1 from column 0 of sector n via a2†.
            let scale = 1.0 / ((n + 1) as f64).sqrt();
            for m1 in 0..d0 {
                let u = prev[m1];
                if u == ZERO {
                    continue;
                }
                let m2 = n - m1;
                next[m1] += t * u * ((m2 + 1) as f64).sqrt() * scale;
                next[m1 + 1] += er * u * ((m1 + 1) as f64).sqrt() * scale;
            }
            // Columns n1 >= 1 via a1†.
            for n1 in 1..d1 {
                let scale = 1.0 / (n1 as f64).sqrt();
                let src = &prev[(n1 - 1) * d0..n1 * d0];
                let dst = &mut next[n1 * d1..(n1 + 1) * d1];
                for m1 in 0..d0 {
                    let u = src[m1];
                    if u == ZERO {
                        continue;
                    }
                    let m2 = n - m1;
                    dst[m1 + 1] += t * u * ((m1 + 1) as f64).sqrt() * scale;
                    dst[m1] += er * u * ((m2 + 1) as f64).sqrt() * scale;
                }
            }
            blocks.push(next);
        }
        SectorUnitary { blocks }
    }

    #[cfg(test)]
    pub(crate) fn element(&self, m1: usize, m2: usize, n1: usize, n2: usize) -> Complex64 {
        let n = n1 + n2;
        if m1 + m2 != n || n >= self.blocks.len() {
            return ZERO;
        }
        self.blocks[n][n1 * (n + 1) + m1]
    }

    /// Applies the unitary to modes (i, j) of a flat amplitude array in place
    /// and returns the weight pushed beyond the cutoff.
    pub(crate) fn apply(&self, amps: &mut [Complex64], modes: usize, dim: usize, i: usize, j: usize) -> f64 {
        let si = stride(i, modes, dim);
        let sj = stride(j, modes, dim);
        let n_max = dim - 1;
        let mut dropped = 0.0;
        let mut v = vec![ZERO; 2 * dim];
        let mut w = vec![ZERO; 2 * dim];
        for base in 0..amps.len() {
            if (base / si) % dim != 0 || (base / sj) % dim != 0 {
                continue;
            }
            for n in 0..=2 * n_max {
                let lo = n.saturating_sub(n_max);
                let hi = n.min(n_max);
                let mut any = false;
                for n1 in lo..=hi {
                    let a = amps[base + n1 * si + (n - n1) * sj];
                    v[n1] = a;
                    any |= a != ZERO;
                }
                if !any {
                    continue;
                }
                let block = &self.blocks[n];
                w[..=n].iter_mut().for_each(|x| *x = ZERO);
                for n1 in lo..=hi {
                    let a = v[n1];
                    if a == ZERO {
                        continue;
                    }
                    let col = &block[n1 * (n + 1)..(n1 + 1) * (n + 1)];
                    for (m1, u) in col.iter().enumerate() {
                        w[m1] += u * a;
                    }
                }
                for m1 in 0..=n {
                    if m1 >= lo && m1 <= hi {
                        amps[base + m1 * si + (n - m1) * sj] = w[m1];
                    } else {
                        dropped += w[m1].norm_sqr();
                    }
                }
            }
        }
        dropped
    }
}

fn check_pair(bs: &BeamSplitter, modes: usize) -> Result<()> {
    let (i, j) = bs.modes;
    if i == j {
        return Err(MinlError::IdenticalModes(i));
    }
    for m in [i, j] {
        if m >= modes {
            return Err(MinlError::InvalidMode { mode: m, modes });
        }
    }
    Ok(())
}

pub fn apply_beamsplitter(state: &PureState, bs: &BeamSplitter) -> Result<PureState> {
    check_pair(bs, state.modes())?;
    let dim = state.cutoff().dim();
    let su = SectorUnitary::new(bs.theta, 2 * (dim - 1));
    let mut out = state.clone();
    let dropped = su.apply(out.amplitudes_mut(), state.modes(), dim, bs.modes.0, bs.modes.1);
    out.add_dropped(dropped);
    Ok(out)
}

fn conjugate_by(rho: &DensityOperator, f: impl Fn(&mut [Complex64])) -> DensityOperator {
    let mut m = rho.matrix().clone();
    for mut col in m.column_iter_mut() {
        f(col.as_mut_slice());
    }
    let mut m = m.adjoint();
    for mut col in m.column_iter_mut() {
        f(col.as_mut_slice());
    }
    DensityOperator::from_matrix(rho.modes(), rho.cutoff(), m.adjoint())
        .expect("shape preserved")
}

pub fn apply_beamsplitter_density(rho: &DensityOperator, bs: &BeamSplitter) -> Result<DensityOperator> {
    check_pair(bs, rho.modes())?;
    let dim = rho.cutoff().dim();
    let su = SectorUnitary::new(bs.theta, 2 * (dim - 1));
    let modes = rho.modes();
    Ok(conjugate_by(rho, |col| {
        su.apply(col, modes, dim, bs.modes.0, bs.modes.1);
    }))
}

fn phase_in_place(amps: &mut [Complex64], modes: usize, dim: usize, ps: &PhaseShifter) {
    let s = stride(ps.mode, modes, dim);
    let factors: Vec<Complex64> = (0..dim)
        .map(|n| Complex64::from_polar(1.0, ps.phi * n as f64))
        .collect();
    for (i, a) in amps.iter_mut().enumerate() {
        *a *= factors[(i / s) % dim];
    }
}

/// Multiplies |n> on the chosen mode by exp(i n phi).
pub fn apply_phase(state: &PureState, ps: &PhaseShifter) -> Result<PureState> {
    if ps.mode >= state.modes() {
        return Err(MinlError::InvalidMode {
            mode: ps.mode,
            modes: state.modes(),
        });
    }
    let mut out = state.clone();
    phase_in_place(out.amplitudes_mut(), state.modes(), state.cutoff().dim(), ps);
    Ok(out)
}

pub fn apply_phase_density(rho: &DensityOperator, ps: &PhaseShifter) -> Result<DensityOperator> {
    if ps.mode >= rho.modes() {
        return Err(MinlError::InvalidMode {
            mode: ps.mode,
            modes: rho.modes(),
        });
    }
    let (modes, dim) = (rho.modes(), rho.cutoff().dim());
    Ok(conjugate_by(rho, |col| phase_in_place(col, modes, dim, ps)))
}

/// Rotates both modes of a two-mode output state by `-phi`. The result is the
/// state a circuit with the phase `-phi` on mode 0 (instead of `phi` on mode 1)
/// would produce; quadrature angles map as `xi -> xi - phi`.
pub fn to_mode0_phase_frame(rho: &DensityOperator, phi: f64) -> Result<DensityOperator> {
    if rho.modes() != 2 {
        return invalid("frame change expects a two-mode state");
    }
    let r = apply_phase_density(rho, &PhaseShifter { phi: -phi, mode: 0 })?;
    apply_phase_density(&r, &PhaseShifter { phi: -phi, mode: 1 })
}

/// Couples signal modes 0 and 1 of a four-mode state into vacuum ancillas:
/// mode 1 into mode 2 with angle `theta2`, mode 0 into mode 3 with `theta3`.
pub fn apply_outcoupling(state: &PureState, theta2: f64, theta3: f64) -> Result<PureState> {
    if state.modes() != 4 {
        return Err(MinlError::ModeMismatch {
            expected: 4,
            found: state.modes(),
        });
    }
    let dim = state.cutoff().dim();
    for (i, a) in state.amplitudes().iter().enumerate() {
        if a.norm_sqr() > 0.0 {
            if (i / dim) % dim != 0 {
                return Err(MinlError::NonVacuumAncilla(2));
            }
            if i % dim != 0 {
                return Err(MinlError::NonVacuumAncilla(3));
            }
        }
    }
    let s = apply_beamsplitter(state, &BeamSplitter::new(theta2, (1, 2))?)?;
    apply_beamsplitter(&s, &BeamSplitter::new(theta3, (0, 3))?)
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut b = 1.0;
    for i in 0..k {
        b = b * (n - i) as f64 / (i + 1) as f64;
    }
    b
}

/// Kraus branches of a pure loss channel applied to one mode.
pub fn loss_branches(state: &PureState, reflectivity: f64, mode: usize) -> Result<Vec<PureState>> {
    if mode >= state.modes() {
        return Err(MinlError::InvalidMode {
            mode,
            modes: state.modes(),
        });
    }
    if !(0.0..=1.0).contains(&reflectivity) {
        return invalid(format!("loss reflectivity must lie in [0, 1], got {reflectivity}"));
    }
    if reflectivity == 0.0 {
        return Ok(vec![state.clone()]);
    }
    let dim = state.cutoff().dim();
    let s = stride(mode, state.modes(), dim);
    let eta = 1.0 - reflectivity;
    let mut out = Vec::new();
    for k in 0..dim {
        let mut b = PureState::zeros(state.modes(), state.cutoff());
        let mut any = false;
        {
            let dst = b.amplitudes_mut();
            for (i, a) in state.amplitudes().iter().enumerate() {
                let n = (i / s) % dim;
                if n < k || *a == ZERO {
                    continue;
                }
                let f = (binomial(n, k) * eta.powi((n - k) as i32) * reflectivity.powi(k as i32)).sqrt();
                if f == 0.0 {
                    continue;
                }
                dst[i - k * s] = a * f;
                any = true;
            }
        }
        if any {
            out.push(b);
        }
    }
    if let Some(first) = out.first_mut() {
        first.add_dropped(state.dropped_weight());
    }
    Ok(out)
}

/// Pure loss on one mode of a density operator, via Kraus operators.
pub fn apply_loss(rho: &DensityOperator, channel: &LossChannel) -> Result<DensityOperator> {
    if !(0.0..=1.0).contains(&channel.reflectivity) {
        return invalid("loss reflectivity must lie in [0, 1]");
    }
    if channel.mode >= rho.modes() {
        return Err(MinlError::InvalidMode {
            mode: channel.mode,
            modes: rho.modes(),
        });
    }
    let dim = rho.cutoff().dim();
    let s = stride(channel.mode, rho.modes(), dim);
    let (r, eta) = (channel.reflectivity, 1.0 - channel.reflectivity);
    let d = rho.dim();
    let mut out = nalgebra::DMatrix::<Complex64>::zeros(d, d);
    let m = rho.matrix();
    let amp = |n: usize, k: usize| (binomial(n, k) * eta.powi((n - k) as i32) * r.powi(k as i32)).sqrt();
    for c in 0..d {
        let nc = (c / s) % dim;
        for row in 0..d {
            let x = m[(row, c)];
            if x == ZERO {
                continue;
            }
            let nr = (row / s) % dim;
            for k in 0..=nr.min(nc) {
                let f = amp(nr, k) * amp(nc, k);
                if f != 0.0 {
                    out[(row - k * s, c - k * s)] += x * f;
                }
            }
        }
    }
    DensityOperator::from_matrix(rho.modes(), rho.cutoff(), out)
}

/// Loss modelled literally: mix the mode with a vacuum ancilla on a beam
/// splitter of transmissivity `1 - R` and trace the ancilla out.
pub fn apply_loss_via_beamsplitter(rho: &DensityOperator, channel: &LossChannel) -> Result<DensityOperator> {
    let vac = fock_state(&[0], rho.cutoff())?.to_density();
    let ext = rho.tensor(&vac)?;
    let bs = BeamSplitter::from_transmissivity(1.0 - channel.reflectivity, (channel.mode, rho.modes()))?;
    let mixed = apply_beamsplitter_density(&ext, &bs)?;
    let keep: Vec<usize> = (0..rho.modes()).collect();
    mixed.partial_trace(&keep)
}

/// Full configuration of one interferometer run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterferometerConfig {
    /// Beam-splitter angles: BS1 (modes 1,2), BS2 (2 into 3), BS3 (1 into 4), BS4 (1,2).
    pub theta: [f64; 4],
    /// Phase on the second signal mode, applied before BS4.
    pub phi: f64,
    pub alpha_in: Complex64,
    pub losses: Vec<LossChannel>,
    pub event: DetectionEvent,
    pub cutoff: FockCutoff,
    /// Replaces the default |1>|alpha> two-mode input when set.
    #[serde(skip)]
    pub input: Option<PureState>,
}

impl InterferometerConfig {
    pub fn from_transmissivities(t: [f64; 4], phi: f64, alpha: f64, event: DetectionEvent) -> Result<Self> {
        let mut theta = [0.0; 4];
        for (k, &tk) in t.iter().enumerate() {
            if !(0.0..=1.0).contains(&tk) {
                return invalid(format!("T{} must lie in [0, 1], got {tk}", k + 1));
            }
            theta[k] = tk.sqrt().acos();
        }
        Ok(InterferometerConfig {
            theta,
            phi,
            alpha_in: Complex64::new(alpha, 0.0),
            losses: Vec::new(),
            event,
            cutoff: FockCutoff::default(),
            input: None,
        })
    }

    pub fn from_angles(theta: [f64; 4], phi: f64, alpha: f64, event: DetectionEvent) -> Self {
        InterferometerConfig {
            theta,
            phi,
            alpha_in: Complex64::new(alpha, 0.0),
            losses: Vec::new(),
            event,
            cutoff: FockCutoff::default(),
            input: None,
        }
    }

    pub fn with_cutoff(mut self, cutoff: FockCutoff) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_losses(mut self, losses: Vec<LossChannel>) -> Self {
        self.losses = losses;
        self
    }

    pub fn transmissivities(&self) -> [f64; 4] {
        self.theta.map(|t| t.cos().powi(2))
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.iter().any(|t| !t.is_finite()) || !self.phi.is_finite() {
            return invalid("angles must be finite");
        }
        if !self.alpha_in.re.is_finite() || !self.alpha_in.im.is_finite() {
            return invalid("coherent amplitude must be finite");
        }
        for l in &self.losses {
            l.validate()?;
        }
        if let Some(inp) = &self.input {
            if inp.modes() != 2 || inp.cutoff() != self.cutoff {
                return invalid("custom input must be a two-mode state at the configured cutoff");
            }
        }
        Ok(())
    }

    /// The two-mode input state, `|1>|alpha>` unless overridden.
    pub fn input_state(&self) -> Result<PureState> {
        match &self.input {
            Some(s) => Ok(s.clone()),
            None => {
                let photon = fock_state(&[1], self.cutoff)?;
                let coh = coherent_state(self.alpha_in, self.cutoff);
                if coh.cutoff_insufficient() {
                    return Err(MinlError::CutoffInsufficient {
                        alpha: self.alpha_in.norm(),
                        n_max: self.cutoff.n_max(),
                        deficit: coh.deficit,
                    });
                }
                photon.tensor(&coh.state)
            }
        }
    }
}

/// Heralded two-mode output, either as pure branches or as a density matrix.
#[derive(Clone, Debug)]
pub enum HeraldedState {
    /// Unnormalized branches whose squared norms sum to the probability.
    Ensemble(Vec<PureState>),
    /// Unnormalized density matrix with trace equal to the probability.
    Mixed(DensityOperator),
}

#[derive(Clone, Debug)]
pub struct Heralded {
    pub state: HeraldedState,
    pub probability: f64,
    pub dropped: f64,
}

impl Heralded {
    /// Normalized density operator of the heralded state.
    pub fn density(&self) -> Result<DensityOperator> {
        match &self.state {
            HeraldedState::Ensemble(b) => DensityOperator::from_ensemble(b)?.normalized(),
            HeraldedState::Mixed(rho) => rho.normalized(),
        }
    }

    pub fn truncation_flag(&self) -> bool {
        self.dropped > crate::fock::TRUNCATION_TOL * self.probability
    }
}

/// Output of [`run_interferometer`].
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub rho: DensityOperator,
    pub probability: f64,
    pub truncation_flag: bool,
}

/// Heralded two-mode state just before the phase shifter and BS4, after any
/// post-detection losses. Branches are unnormalized pure states.
#[derive(Clone, Debug)]
pub struct PreOutput {
    pub branches: Vec<PureState>,
    pub probability: f64,
    pub dropped: f64,
}

impl PreOutput {
    /// True when the weight lost to the cutoff is not negligible next to the
    /// heralding probability.
    pub fn truncation_flag(&self) -> bool {
        self.dropped > crate::fock::TRUNCATION_TOL * self.probability
    }
}

/// Runs BS1, pre-detection losses, out-coupling and heralding.
pub fn herald_stage(cfg: &InterferometerConfig) -> Result<PreOutput> {
    herald_stage_inner(cfg, true)
}

fn herald_stage_inner(cfg: &InterferometerConfig, apply_after: bool) -> Result<PreOutput> {
    cfg.validate()?;
    let dim = cfg.cutoff.dim();
    let bs1 = SectorUnitary::new(cfg.theta[0], 2 * (dim - 1));
    let mut psi = cfg.input_state()?;
    // Weight the truncated input already misses counts as dropped too.
    let deficit = (1.0 - psi.norm_sqr()).max(0.0);
    let d1 = bs1.apply(psi.amplitudes_mut(), 2, dim, 0, 1);
    psi.add_dropped(d1 + deficit);

    let mut branches = vec![psi];
    for l in cfg.losses.iter().filter(|l| l.position == LossPosition::BeforeDetection) {
        let mut next = Vec::new();
        for b in &branches {
            next.extend(loss_branches(b, l.reflectivity, l.mode)?);
        }
        branches = next;
    }
    let dropped: f64 = branches.iter().map(|b| b.dropped_weight()).sum();

    let mut heralded = Vec::new();
    for b in &branches {
        heralded.extend(detect::herald_outcoupled(b, cfg.theta[1], cfg.theta[2], &cfg.event)?);
    }
    let probability: f64 = heralded.iter().map(|b| b.norm_sqr()).sum();
    if !(probability > HERALD_FLOOR) {
        return Err(MinlError::HeraldingImpossible {
            p: probability,
            floor: HERALD_FLOOR,
        });
    }
    if apply_after {
        for l in cfg.losses.iter().filter(|l| l.position == LossPosition::AfterDetection) {
            let mut next = Vec::new();
            for b in &heralded {
                next.extend(loss_branches(b, l.reflectivity, l.mode)?);
            }
            heralded = next;
        }
    }
    Ok(PreOutput {
        branches: heralded,
        probability,
        dropped,
    })
}

/// Runs the interferometer and returns the heralded state in the cheapest
/// representation available.
pub fn simulate(cfg: &InterferometerConfig) -> Result<Heralded> {
    let pre = herald_stage_inner(cfg, false)?;
    let dim = cfg.cutoff.dim();
    let mut heralded = pre.branches;
    let after: Vec<&LossChannel> = cfg
        .losses
        .iter()
        .filter(|l| l.position == LossPosition::AfterDetection)
        .collect();
    let phase = PhaseShifter { phi: cfg.phi, mode: 1 };
    let bs4 = BeamSplitter::new(cfg.theta[3], (0, 1))?;

    let expanded = after.iter().fold(heralded.len(), |n, l| {
        if l.reflectivity > 0.0 {
            n * dim
        } else {
            n
        }
    });
    let state = if expanded <= dim * dim {
        for l in &after {
            let mut next = Vec::new();
            for b in &heralded {
                next.extend(loss_branches(b, l.reflectivity, l.mode)?);
            }
            heralded = next;
        }
        let su4 = SectorUnitary::new(cfg.theta[3], 2 * (dim - 1));
        let mut dropped = 0.0;
        for b in heralded.iter_mut() {
            phase_in_place(b.amplitudes_mut(), 2, dim, &phase);
            dropped += su4.apply(b.amplitudes_mut(), 2, dim, 0, 1);
        }
        if let Some(b) = heralded.first_mut() {
            b.add_dropped(dropped);
        }
        HeraldedState::Ensemble(heralded)
    } else {
        let mut rho = DensityOperator::from_ensemble(&heralded)?;
        for l in &after {
            rho = apply_loss(&rho, l)?;
        }
        rho = apply_phase_density(&rho, &phase)?;
        HeraldedState::Mixed(apply_beamsplitter_density(&rho, &bs4)?)
    };
    let dropped_after: f64 = match &state {
        HeraldedState::Ensemble(b) => b.iter().map(|x| x.dropped_weight()).sum(),
        HeraldedState::Mixed(_) => 0.0,
    };
    Ok(Heralded {
        state,
        probability: pre.probability,
        dropped: pre.dropped.max(dropped_after),
    })
}

/// Runs the full pipeline and returns the normalized heralded density
/// operator together with the heralding probability.
pub fn run_interferometer(cfg: &InterferometerConfig) -> Result<PipelineOutput> {
    let h = simulate(cfg)?;
    Ok(PipelineOutput {
        rho: h.density()?,
        probability: h.probability,
        truncation_flag: h.truncation_flag(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, fock_state};
    use approx::assert_abs_diff_eq;

    fn cut(n: usize) -> FockCutoff {
        FockCutoff::new(n).unwrap()
    }

    #[test]
    fn balanced_splitter_on_single_photon() {
        let s = fock_state(&[1, 0], cut(3)).unwrap();
        let bs = BeamSplitter::from_transmissivity(0.5, (0, 1)).unwrap();
        let out = apply_beamsplitter(&s, &bs).unwrap();
        let h = 0.5f64.sqrt();
        assert_abs_diff_eq!(out.amplitude(&[1, 0]).unwrap().re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(out.amplitude(&[0, 1]).unwrap().im, h, epsilon = 1e-15);
    }

    #[test]
    fn hong_ou_mandel() {
        let s = fock_state(&[1, 1], cut(3)).unwrap();
        let bs = BeamSplitter::from_transmissivity(0.5, (0, 1)).unwrap();
        let out = apply_beamsplitter(&s, &bs).unwrap();
        assert!(out.amplitude(&[1, 1]).unwrap().norm() < 1e-15);
        assert_abs_diff_eq!(out.amplitude(&[2, 0]).unwrap().norm_sqr(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn sector_elements_match_binomial_sum() {
        let theta = 0.37;
        let su = SectorUnitary::new(theta, 12);
        let f = crate::fock::factorials(12);
        let (t, er) = (theta.cos(), REFLECTION_PHASE * theta.sin());
        for n1 in 0..=6usize {
            for n2 in 0..=6usize {
                for m1 in 0..=(n1 + n2) {
                    let m2 = n1 + n2 - m1;
                    let mut s = ZERO;
                    for k in 0..=n1 {
                        // k photons stay in port 1, l = m1 - k cross over from port 2
                        if m1 < k || m1 - k > n2 {
                            continue;
                        }
                        let l = m1 - k;
                        let c = binomial(n1, k) * binomial(n2, l);
                        s += er.powu((n1 - k + l) as u32) * t.powi((k + n2 - l) as i32) * c;
                    }
                    s *= (f[m1] * f[m2] / (f[n1] * f[n2])).sqrt();
                    let e = su.element(m1, m2, n1, n2);
                    assert!((e - s).norm() < 1e-12, "{m1}{m2}{n1}{n2}: {e} vs {s}");
                }
            }
        }
    }

    #[test]
    fn splitter_inverse_restores_state() {
        let c = cut(16);
        let s = fock_state(&[1], c).unwrap().tensor(&coherent_state(Complex64::new(0.8, 0.1), c).state).unwrap();
        let a = apply_beamsplitter(&s, &BeamSplitter::new(0.6, (0, 1)).unwrap()).unwrap();
        let b = apply_beamsplitter(&a, &BeamSplitter::new(-0.6, (0, 1)).unwrap()).unwrap();
        assert!(b.fidelity(&s).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn overflow_is_flagged() {
        let s = fock_state(&[3, 3], cut(3)).unwrap();
        let out = apply_beamsplitter(&s, &BeamSplitter::from_transmissivity(0.5, (0, 1)).unwrap()).unwrap();
        assert!(out.truncation_flag());
        assert_abs_diff_eq!(out.norm_sqr() + out.dropped_weight(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn outcoupling_rejects_occupied_ancilla() {
        let s = fock_state(&[0, 0, 1, 0], cut(2)).unwrap();
        assert_eq!(apply_outcoupling(&s, 0.3, 0.3).unwrap_err(), MinlError::NonVacuumAncilla(2));
        let bad = BeamSplitter::new(0.3, (1, 1));
        assert_eq!(bad.unwrap_err(), MinlError::IdenticalModes(1));
    }

    #[test]
    fn kraus_loss_matches_ancilla_route() {
        let c = cut(6);
        let s = fock_state(&[1], c).unwrap().tensor(&coherent_state(Complex64::new(0.6, 0.2), c).state).unwrap();
        let s = apply_beamsplitter(&s, &BeamSplitter::new(0.5, (0, 1)).unwrap()).unwrap();
        let rho = s.to_density();
        for mode in 0..2 {
            let ch = LossChannel {
                reflectivity: 0.3,
                mode,
                position: LossPosition::BeforeDetection,
            };
            let a = apply_loss(&rho, &ch).unwrap();
            let b = apply_loss_via_beamsplitter(&rho, &ch).unwrap();
            assert!(a.max_abs_diff(&b).unwrap() < 1e-13);
            let branches = loss_branches(&s, 0.3, mode).unwrap();
            let e = DensityOperator::from_ensemble(&branches).unwrap();
            assert!(a.max_abs_diff(&e).unwrap() < 1e-13);
        }
    }

    #[test]
    fn no_outcoupling_heralds_with_certainty() {
        use crate::detect::{DetectorKind, Outcome};
        let cfg = InterferometerConfig::from_transmissivities(
            [0.5, 1.0, 1.0, 0.3],
            0.4,
            1.0,
            DetectionEvent::new(DetectorKind::Pnr, Outcome::None),
        )
        .unwrap();
        let out = run_interferometer(&cfg).unwrap();
        assert_abs_diff_eq!(out.probability, 1.0, epsilon = 1e-11);
        assert!(!out.truncation_flag);
    }
}
