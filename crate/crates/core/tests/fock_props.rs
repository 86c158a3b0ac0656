mod common;

use common::*;
use minl_core::circuit::{
    apply_beamsplitter, apply_beamsplitter_density, apply_phase, apply_phase_density, simulate, BeamSplitter,
    PhaseShifter,
};
use minl_core::error::MinlError;
use minl_core::squeeze::{output_moments, two_mode_variance};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn beamsplitter_preserves_trace(theta in -3.2f64..3.2, seed in any::<u64>()) {
        let c = cutoff(6);
        let psi = random_pure(2, c, 6, seed);
        let bs = BeamSplitter::new(theta, (0, 1)).unwrap();
        let out = apply_beamsplitter(&psi, &bs).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!(!out.truncation_flag());

        let rho = random_mixed(2, c, 6, seed);
        let t = apply_beamsplitter_density(&rho, &bs).unwrap().trace();
        prop_assert!((t.re - 1.0).abs() < 1e-12 && t.im.abs() < 1e-12);
    }

    #[test]
    fn heralded_states_are_hermitian_and_positive(
        theta in angles(), phi in 0.0f64..6.3, alpha in 0.0f64..1.6, k in 0usize..4,
    ) {
        let cfg = config(theta, phi, alpha, event(k));
        let h = match simulate(&cfg) {
            Ok(h) => h,
            Err(MinlError::HeraldingImpossible { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let rho = h.density().unwrap().normalized().unwrap();
        prop_assert!(rho.hermiticity_error() < 1e-12);
        prop_assert!(rho.min_eigenvalue() > -1e-10);
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_and_density_routes_agree(theta1 in -1.6f64..1.6, theta4 in -1.6f64..1.6, phi in 0.0f64..6.3, seed in any::<u64>()) {
        let c = cutoff(5);
        let psi = random_pure(2, c, 5, seed);
        let b1 = BeamSplitter::new(theta1, (0, 1)).unwrap();
        let b4 = BeamSplitter::new(theta4, (0, 1)).unwrap();
        let ps = PhaseShifter { phi, mode: 1 };
        let pure = apply_beamsplitter(&psi, &b1).unwrap();
        let pure = apply_phase(&pure, &ps).unwrap();
        let pure = apply_beamsplitter(&pure, &b4).unwrap().to_density();
        let rho = apply_beamsplitter_density(&psi.to_density(), &b1).unwrap();
        let rho = apply_phase_density(&rho, &ps).unwrap();
        let rho = apply_beamsplitter_density(&rho, &b4).unwrap();
        prop_assert!(pure.max_abs_diff(&rho).unwrap() < 1e-10);
    }

    /// Above 1e-6 the cutoff-14 run must have raised its truncation flag.
    #[test]
    fn variances_converge_in_the_cutoff(
        theta in angles(), phi in 0.0f64..6.3, xi in 0.0f64..6.3, alpha in 0.0f64..1.6, k in 0usize..4,
    ) {
        let base = config(theta, phi, alpha, event(k));
        let run = |n: usize| output_moments(&base.clone().with_cutoff(cutoff(n))).ok();
        if let (Some((m14, _, flag)), Some((m16, _, _))) = (run(14), run(16)) {
            let d = (two_mode_variance(&m14, xi).0 - two_mode_variance(&m16, xi).0).abs();
            prop_assert!(d < 1e-6 || flag, "unflagged change {}", d);
        }
    }

    #[test]
    fn low_amplitude_variances_converge(
        theta in angles(), phi in 0.0f64..6.3, xi in 0.0f64..6.3, alpha in 0.0f64..1.0, k in 0usize..4,
    ) {
        let base = config(theta, phi, alpha, event(k));
        let run = |n: usize| output_moments(&base.clone().with_cutoff(cutoff(n))).ok();
        if let (Some((m14, p, _)), Some((m16, _, _))) = (run(14), run(16)) {
            prop_assume!(p > 1e-6);
            let d = (two_mode_variance(&m14, xi).0 - two_mode_variance(&m16, xi).0).abs();
            prop_assert!(d < 1e-6, "change {}", d);
        }
    }
}
