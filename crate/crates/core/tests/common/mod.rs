#![allow(dead_code)]

use minl_core::circuit::InterferometerConfig;
use minl_core::detect::{DetectionEvent, DetectorKind, Outcome};
use minl_core::fock::{DensityOperator, FockCutoff, PureState};
use minl_core::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn cutoff(n: usize) -> FockCutoff {
    FockCutoff::new(n).unwrap()
}

/// Random normalized state whose total photon number stays at or below `max_total`.
pub fn random_pure(modes: usize, c: FockCutoff, max_total: usize, seed: u64) -> PureState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = c.dim();
    let len = dim.pow(modes as u32);
    let mut amps = vec![Complex64::new(0.0, 0.0); len];
    for (i, a) in amps.iter_mut().enumerate() {
        let mut rest = i;
        let mut total = 0;
        for _ in 0..modes {
            total += rest % dim;
            rest /= dim;
        }
        if total <= max_total {
            *a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    PureState::from_amplitudes(modes, c, amps).unwrap().normalized().unwrap()
}

/// Random mixture of three states from [`random_pure`].
pub fn random_mixed(modes: usize, c: FockCutoff, max_total: usize, seed: u64) -> DensityOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let branches: Vec<PureState> = (0..3)
        .map(|k| {
            let w: f64 = rng.gen_range(0.1..1.0);
            random_pure(modes, c, max_total, seed.wrapping_add(k)).scaled(Complex64::new(w.sqrt(), 0.0))
        })
        .collect();
    DensityOperator::from_ensemble(&branches).unwrap().normalized().unwrap()
}

pub const EVENTS: [(DetectorKind, Outcome); 4] = [
    (DetectorKind::Pnr, Outcome::Ch4Only),
    (DetectorKind::Pnr, Outcome::Both),
    (DetectorKind::Click, Outcome::Ch4Only),
    (DetectorKind::Click, Outcome::Both),
];

pub fn event(k: usize) -> DetectionEvent {
    let (kind, outcome) = EVENTS[k % 4];
    DetectionEvent::new(kind, outcome)
}

/// Angles strictly inside (0, pi/2) so no splitter is trivial.
pub fn angles() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(0.05f64..1.52)
}

pub fn config(theta: [f64; 4], phi: f64, alpha: f64, ev: DetectionEvent) -> InterferometerConfig {
    InterferometerConfig::from_angles(theta, phi, alpha, ev)
}

pub fn db(v: f64) -> f64 {
    10.0 * (v / 0.25).log10()
}
