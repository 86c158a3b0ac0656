//! Heralding on the two detector channels.
//!
//! Channel 3 watches the light tapped from signal mode 2, channel 4 the light
//! tapped from signal mode 1. Photon-number-resolving detectors accept exactly
//! one photon in a firing channel; click detectors accept any non-zero count.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{REFLECTION_PHASE, HERALD_FLOOR};
use crate::error::{invalid, MinlError, Result};
use crate::fock::{factorials, DensityOperator, PureState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Pnr,
    Click,
}

/// Which channels fire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Both,
    Ch4Only,
    Ch3Only,
    None,
}

impl Outcome {
    /// Whether channel 3 and channel 4 fire.
    pub fn fires(self) -> (bool, bool) {
        match self {
            Outcome::Both => (true, true),
            Outcome::Ch4Only => (false, true),
            Outcome::Ch3Only => (true, false),
            Outcome::None => (false, false),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub kind: DetectorKind,
    pub outcome: Outcome,
}

impl DetectionEvent {
    pub fn new(kind: DetectorKind, outcome: Outcome) -> Self {
        DetectionEvent { kind, outcome }
    }

    /// Whether the detector counts (n3, n4) are consistent with this event.
    pub fn accepts(&self, n3: usize, n4: usize) -> bool {
        let (f3, f4) = self.outcome.fires();
        match self.kind {
            DetectorKind::Pnr => n3 == f3 as usize && n4 == f4 as usize,
            DetectorKind::Click => (n3 > 0) == f3 && (n4 > 0) == f4,
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectorKind::Pnr => "pnr",
            DetectorKind::Click => "click",
        })
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Both => "both",
            Outcome::Ch4Only => "ch4_only",
            Outcome::Ch3Only => "ch3_only",
            Outcome::None => "none",
        })
    }
}

impl FromStr for DetectorKind {
    type Err = MinlError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pnr" => Ok(DetectorKind::Pnr),
            "click" | "on_off" | "onoff" => Ok(DetectorKind::Click),
            other => invalid(format!("unknown detector kind '{other}'")),
        }
    }
}

impl FromStr for Outcome {
    type Err = MinlError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "both" => Ok(Outcome::Both),
            "ch4_only" | "single" => Ok(Outcome::Ch4Only),
            "ch3_only" => Ok(Outcome::Ch3Only),
            "none" => Ok(Outcome::None),
            other => invalid(format!("unknown outcome '{other}'")),
        }
    }
}

fn check_four_modes(modes: usize) -> Result<()> {
    if modes != 4 {
        return Err(MinlError::ModeMismatch {
            expected: 4,
            found: modes,
        });
    }
    Ok(())
}

/// Two-mode slices `<n3, n4|psi>` of a four-mode pure state for every
/// detector pattern the event accepts. Slices are unnormalized.
pub fn herald_pure(state: &PureState, event: &DetectionEvent) -> Result<Vec<PureState>> {
    check_four_modes(state.modes())?;
    let cutoff = state.cutoff();
    let dim = cutoff.dim();
    let mut out = Vec::new();
    for n3 in 0..dim {
        for n4 in 0..dim {
            if !event.accepts(n3, n4) {
                continue;
            }
            let mut slice = PureState::zeros(2, cutoff);
            {
                let dst = slice.amplitudes_mut();
                for m1 in 0..dim {
                    for m2 in 0..dim {
                        dst[m1 * dim + m2] = state.amplitudes()[((m1 * dim + m2) * dim + n3) * dim + n4];
                    }
                }
            }
            if slice.norm_sqr() > 0.0 {
                out.push(slice);
            }
        }
    }
    Ok(out)
}

/// Photon-number-resolving projection of a four-mode pure state. Returns the
/// unnormalized two-mode conditional state and its probability.
pub fn pnr_project(state: &PureState, event: &DetectionEvent) -> Result<(PureState, f64)> {
    if event.kind != DetectorKind::Pnr {
        return invalid("pnr_project needs a photon-number-resolving event");
    }
    let slices = herald_pure(state, event)?;
    let out = match slices.into_iter().next() {
        Some(s) => s,
        None => PureState::zeros(2, state.cutoff()),
    };
    let p = out.norm_sqr() / state.norm_sqr();
    Ok((out, p))
}

/// Applies the detector POVM element on modes 2 and 3 of a four-mode density
/// operator and traces them out. Works for both detector kinds; for click
/// detectors the POVM element is `1 - |0><0|` on each firing channel.
pub fn click_povm(rho: &DensityOperator, event: &DetectionEvent) -> Result<(DensityOperator, f64)> {
    check_four_modes(rho.modes())?;
    let dim = rho.cutoff().dim();
    let d2 = dim * dim;
    let m = rho.matrix();
    let mut out = nalgebra::DMatrix::<Complex64>::zeros(d2, d2);
    for n3 in 0..dim {
        for n4 in 0..dim {
            if !event.accepts(n3, n4) {
                continue;
            }
            let tail = n3 * dim + n4;
            for c in 0..d2 {
                for r in 0..d2 {
                    out[(r, c)] += m[(r * d2 + tail, c * d2 + tail)];
                }
            }
        }
    }
    let p = out.trace().re / rho.trace().re;
    Ok((DensityOperator::from_matrix(2, rho.cutoff(), out)?, p))
}

/// Divides a heralded operator by its probability, refusing impossible events.
pub fn normalize_heralded(rho: &DensityOperator, p: f64) -> Result<DensityOperator> {
    if !(p > HERALD_FLOOR) {
        return Err(MinlError::HeraldingImpossible {
            p,
            floor: HERALD_FLOOR,
        });
    }
    Ok(rho.scaled(1.0 / p))
}

/// Amplitudes `sqrt(C(n,k)) t^(n-k) (i r)^k` for splitting `n` photons on a
/// beam splitter with a vacuum second input, leaving `k` in the ancilla.
fn vacuum_split(theta: f64, n_max: usize) -> Vec<Vec<Complex64>> {
    let f = factorials(n_max);
    let (t, er) = (theta.cos(), REFLECTION_PHASE * theta.sin());
    (0..=n_max)
        .map(|n| {
            (0..=n)
                .map(|k| er.powu(k as u32) * t.powi((n - k) as i32) * (f[n] / (f[k] * f[n - k])).sqrt())
                .collect()
        })
        .collect()
}

/// Out-couples a two-mode state into vacuum ancillas (mode 1 to channel 3
/// with `theta2`, mode 0 to channel 4 with `theta3`) and heralds, without
/// materializing the four-mode state. Returns unnormalized slices.
pub fn herald_outcoupled(
    psi: &PureState,
    theta2: f64,
    theta3: f64,
    event: &DetectionEvent,
) -> Result<Vec<PureState>> {
    if psi.modes() != 2 {
        return Err(MinlError::ModeMismatch {
            expected: 2,
            found: psi.modes(),
        });
    }
    let cutoff = psi.cutoff();
    let n_max = cutoff.n_max();
    let dim = cutoff.dim();
    let s2 = vacuum_split(theta2, n_max);
    let s3 = vacuum_split(theta3, n_max);
    let amps = psi.amplitudes();
    let mut out = Vec::new();
    for n3 in 0..dim {
        for n4 in 0..dim {
            if !event.accepts(n3, n4) {
                continue;
            }
            let mut slice = PureState::zeros(2, cutoff);
            let mut any = false;
            {
                let dst = slice.amplitudes_mut();
                for m1 in 0..=(n_max - n4) {
                    let a1 = s3[m1 + n4][n4];
                    for m2 in 0..=(n_max - n3) {
                        let a = amps[(m1 + n4) * dim + m2 + n3];
                        if a.norm_sqr() == 0.0 {
                            continue;
                        }
                        dst[m1 * dim + m2] = a * a1 * s2[m2 + n3][n3];
                        any = true;
                    }
                }
            }
            if any && slice.norm_sqr() > 0.0 {
                out.push(slice);
            }
        }
    }
    if let Some(first) = out.first_mut() {
        first.add_dropped(psi.dropped_weight());
    }
    Ok(out)
}
