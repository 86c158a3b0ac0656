mod common;

use common::*;
use minl_core::circuit::{
    apply_beamsplitter, apply_beamsplitter_density, apply_loss, apply_outcoupling, apply_phase, simulate,
    to_mode0_phase_frame, BeamSplitter, LossChannel, LossPosition, PhaseShifter,
};
use minl_core::closedform::no_detection_variance;
use minl_core::detect::{DetectionEvent, DetectorKind, Outcome};
use minl_core::fock::{coherent_state, fock_state, PureState};
use minl_core::squeeze::{direct_variance, output_moments, two_mode_variance};
use minl_core::Complex64;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lossless_elements_preserve_norm(theta in -3.2f64..3.2, t2 in 0.0f64..1.6, t3 in 0.0f64..1.6, phi in -7.0f64..7.0, seed in any::<u64>()) {
        let c = cutoff(5);
        let psi = random_pure(2, c, 5, seed);
        let bs = apply_beamsplitter(&psi, &BeamSplitter::new(theta, (1, 0)).unwrap()).unwrap();
        prop_assert!((bs.norm_sqr() - 1.0).abs() < 1e-12);
        let ph = apply_phase(&psi, &PhaseShifter { phi, mode: 1 }).unwrap();
        prop_assert!((ph.norm_sqr() - 1.0).abs() < 1e-12);
        let four = psi.tensor(&PureState::vacuum(2, c)).unwrap();
        let out = apply_outcoupling(&four, t2, t3).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn splitter_then_inverse_is_identity(theta in -3.2f64..3.2, seed in any::<u64>()) {
        let c = cutoff(6);
        let psi = random_pure(2, c, 6, seed);
        let fwd = apply_beamsplitter(&psi, &BeamSplitter::new(theta, (0, 1)).unwrap()).unwrap();
        let back = apply_beamsplitter(&fwd, &BeamSplitter::new(-theta, (0, 1)).unwrap()).unwrap();
        let worst = psi
            .amplitudes()
            .iter()
            .zip(back.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        prop_assert!(worst < 1e-12);
    }

    #[test]
    fn equal_losses_commute_with_splitter_on_coherent_inputs(
        ar in -0.6f64..0.6, ai in -0.6f64..0.6, br in -0.6f64..0.6, bi in -0.6f64..0.6,
        theta in -1.6f64..1.6, loss in 0.0f64..1.0,
    ) {
        // The top truncated sector enters linearly through coherences, so the
        // cutoff sits well above the coherent tail.
        let c = cutoff(18);
        let a = coherent_state(Complex64::new(ar, ai), c).state;
        let b = coherent_state(Complex64::new(br, bi), c).state;
        let rho = a.tensor(&b).unwrap().to_density();
        let bs = BeamSplitter::new(theta, (0, 1)).unwrap();
        let lossy = |r: &minl_core::fock::DensityOperator| {
            let l0 = LossChannel { reflectivity: loss, mode: 0, position: LossPosition::BeforeDetection };
            let l1 = LossChannel { reflectivity: loss, mode: 1, position: LossPosition::BeforeDetection };
            apply_loss(&apply_loss(r, &l0).unwrap(), &l1).unwrap()
        };
        let first = apply_beamsplitter_density(&lossy(&rho), &bs).unwrap();
        let second = lossy(&apply_beamsplitter_density(&rho, &bs).unwrap());
        let d = first.max_abs_diff(&second).unwrap();
        prop_assert!(d < 1e-10, "diff {}", d);
    }

    #[test]
    fn phase_is_two_pi_periodic(theta in angles(), phi in 0.0f64..6.3, alpha in 0.0f64..1.2, k in 0usize..4) {
        let ev = event(k);
        let a = simulate(&config(theta, phi, alpha, ev));
        let b = simulate(&config(theta, phi + std::f64::consts::TAU, alpha, ev));
        if let (Ok(a), Ok(b)) = (a, b) {
            let d = a.density().unwrap().max_abs_diff(&b.density().unwrap()).unwrap();
            prop_assert!(d < 1e-12);
            prop_assert!((a.probability - b.probability).abs() < 1e-12);
        }
    }

    #[test]
    fn mode0_frame_shifts_the_quadrature_angle(theta in angles(), phi in 0.0f64..6.3, xi in 0.0f64..6.3, alpha in 0.0f64..1.2, k in 0usize..4) {
        if let Ok(h) = simulate(&config(theta, phi, alpha, event(k))) {
            let rho = h.density().unwrap();
            let moved = to_mode0_phase_frame(&rho, phi).unwrap();
            let (a1, a2) = direct_variance(&rho, xi).unwrap();
            let (b1, b2) = direct_variance(&moved, xi - phi).unwrap();
            prop_assert!((a1 - b1).abs() < 1e-10 && (a2 - b2).abs() < 1e-10, "{} {} vs {} {}", a1, a2, b1, b2);
        }
    }

    #[test]
    fn transparent_taps_herald_with_certainty(
        t1 in 0.0f64..1.0, t4 in 0.0f64..1.0, phi in 0.0f64..6.3, xi in 0.0f64..6.3, alpha in 0.0f64..1.6,
    ) {
        let ev = DetectionEvent::new(DetectorKind::Pnr, Outcome::None);
        let cfg = minl_core::circuit::InterferometerConfig::from_transmissivities([t1, 1.0, 1.0, t4], phi, alpha, ev)
            .unwrap()
            .with_cutoff(minl_core::fock::FockCutoff::for_coherent(alpha, 1e-14));
        let (m, p, _) = output_moments(&cfg).unwrap();
        prop_assert!((p - 1.0).abs() < 1e-9);
        let (v, _) = two_mode_variance(&m, xi);
        prop_assert!((v - no_detection_variance(cfg.theta[0], phi)).abs() < 1e-9);
    }

    /// Without a coherent input only the single photon travels, so the
    /// vacuum herald is a one-photon amplitude sum.
    #[test]
    fn single_photon_vacuum_herald_by_hand(theta in prop::array::uniform4(0.0f64..1.57), phi in 0.0f64..6.3) {
        let ev = DetectionEvent::new(DetectorKind::Pnr, Outcome::None);
        let cfg = config(theta, phi, 0.0, ev).with_cutoff(cutoff(4));
        let (t, r): (Vec<f64>, Vec<f64>) = theta.iter().map(|x| (x.cos(), x.sin())).unzip();
        // After BS1: t1 |1,0> + i r1 |0,1>; the taps keep t3 on mode 0 and t2 on mode 1.
        let p_hand = (t[0] * t[2]).powi(2) + (r[0] * t[1]).powi(2);
        let h = match simulate(&cfg) {
            Ok(h) => h,
            Err(_) => { prop_assert!(p_hand < 1e-13); return Ok(()); }
        };
        prop_assert!((h.probability - p_hand).abs() < 1e-12);

        let c = cfg.cutoff;
        let e10 = fock_state(&[1, 0], c).unwrap();
        let e01 = fock_state(&[0, 1], c).unwrap();
        let mut amps: Vec<Complex64> = e10.amplitudes().iter().map(|a| a * (t[0] * t[2])).collect();
        for (x, y) in amps.iter_mut().zip(e01.amplitudes()) {
            *x += y * Complex64::new(0.0, r[0] * t[1]);
        }
        let hand = PureState::from_amplitudes(2, c, amps).unwrap().normalized().unwrap();
        let hand = apply_phase(&hand, &PhaseShifter { phi, mode: 1 }).unwrap();
        let hand = apply_beamsplitter(&hand, &BeamSplitter::new(theta[3], (0, 1)).unwrap()).unwrap();
        let f = h.density().unwrap().fidelity_with_pure(&hand).unwrap();
        prop_assert!((f - 1.0).abs() < 1e-10);
    }
}
