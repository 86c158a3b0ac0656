mod common;

use common::*;
use minl_core::circuit::{apply_beamsplitter, apply_outcoupling, simulate, BeamSplitter};
use minl_core::detect::{pnr_project, DetectionEvent, DetectorKind, Outcome};
use minl_core::fock::{coherent_state, fock_state, FockCutoff, PureState};
use minl_core::Complex64;
use proptest::prelude::*;

const OUTCOMES: [Outcome; 4] = [Outcome::None, Outcome::Ch4Only, Outcome::Ch3Only, Outcome::Both];

/// The four-mode state just before the detectors, built element by element.
fn four_mode(theta: [f64; 4], alpha: f64, c: FockCutoff) -> PureState {
    let input = fock_state(&[1], c)
        .unwrap()
        .tensor(&coherent_state(Complex64::new(alpha, 0.0), c).state)
        .unwrap();
    let mixed = apply_beamsplitter(&input, &BeamSplitter::new(theta[0], (0, 1)).unwrap()).unwrap();
    let four = mixed.tensor(&PureState::vacuum(2, c)).unwrap();
    apply_outcoupling(&four, theta[1], theta[2]).unwrap()
}

fn probability(theta: [f64; 4], phi: f64, alpha: f64, ev: DetectionEvent) -> f64 {
    simulate(&config(theta, phi, alpha, ev)).map(|h| h.probability).unwrap_or(0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pnr_deficit_is_the_multi_photon_weight(theta in angles(), phi in 0.0f64..6.3, alpha in 0.0f64..1.2) {
        let c = cutoff(14);
        let psi = four_mode(theta, alpha, c);
        let dim = c.dim();
        let mut multi = 0.0;
        for (i, a) in psi.amplitudes().iter().enumerate() {
            let (n3, n4) = ((i / dim) % dim, i % dim);
            if n3 >= 2 || n4 >= 2 {
                multi += a.norm_sqr();
            }
        }
        let total: f64 = OUTCOMES
            .iter()
            .map(|&o| probability(theta, phi, alpha, DetectionEvent::new(DetectorKind::Pnr, o)))
            .sum();
        prop_assert!(total <= psi.norm_sqr() + 1e-12);
        prop_assert!((psi.norm_sqr() - total - multi).abs() < 1e-9);
    }

    #[test]
    fn click_outcomes_are_complete(theta in angles(), phi in 0.0f64..6.3, alpha in 0.0f64..1.6) {
        let c = FockCutoff::for_coherent(alpha, 1e-14);
        let total: f64 = OUTCOMES
            .iter()
            .map(|&o| {
                let cfg = config(theta, phi, alpha, DetectionEvent::new(DetectorKind::Click, o)).with_cutoff(c);
                simulate(&cfg).map(|h| h.probability).unwrap_or(0.0)
            })
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pnr_heralding_keeps_states_pure(theta in angles(), alpha in 0.0f64..1.2, k in 0usize..4) {
        let c = cutoff(10);
        let psi = four_mode(theta, alpha, c);
        let ev = DetectionEvent::new(DetectorKind::Pnr, OUTCOMES[k]);
        let (out, p) = pnr_project(&psi, &ev).unwrap();
        prop_assume!(p > 1e-10);
        let rho = out.normalized().unwrap().to_density();
        // The largest eigenvalue is at least the purity.
        prop_assert!(rho.purity() >= 1.0 - 1e-9);
    }

    #[test]
    fn swapping_channels_and_inputs_preserves_single_rates(
        theta in angles(), phi in 0.0f64..6.3, alpha in 0.0f64..1.2, click in any::<bool>(),
    ) {
        let c = cutoff(14);
        let kind = if click { DetectorKind::Click } else { DetectorKind::Pnr };
        let a = config(theta, phi, alpha, DetectionEvent::new(kind, Outcome::Ch4Only)).with_cutoff(c);
        let mut b = config([theta[0], theta[2], theta[1], theta[3]], phi, alpha, DetectionEvent::new(kind, Outcome::Ch3Only))
            .with_cutoff(c);
        b.input = Some(
            coherent_state(Complex64::new(alpha, 0.0), c)
                .state
                .tensor(&fock_state(&[1], c).unwrap())
                .unwrap(),
        );
        let pa = simulate(&a).map(|h| h.probability).unwrap_or(0.0);
        let pb = simulate(&b).map(|h| h.probability).unwrap_or(0.0);
        prop_assert!((pa - pb).abs() < 1e-12, "{} vs {}", pa, pb);
    }
}
