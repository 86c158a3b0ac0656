//! Joint-quadrature variances and squeezing in dB.
//!
//! With `S = a + b`, the joint quadratures are
//! `C1 = (e^{-i xi} S + e^{i xi} S†) / sqrt(8)` and
//! `C2 = (e^{-i xi} S - e^{i xi} S†) / (i sqrt(8))`, so vacuum gives 1/4.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{herald_stage, Heralded, HeraldedState, InterferometerConfig};
use crate::error::{MinlError, Result};
use crate::fock::{expectation, DensityOperator, Ladder, OperatorExpr, PureState};

/// Variance of either joint quadrature for vacuum.
pub const SHOT_NOISE: f64 = 0.25;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// First and second moments of a two-mode state. The anti-normally ordered
/// entries are `<a a†>` and `<b b†>`; `ab_dag` is `<a b†>`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub a: Complex64,
    pub b: Complex64,
    pub a2: Complex64,
    pub b2: Complex64,
    pub ab: Complex64,
    pub ab_dag: Complex64,
    pub aa_dag: Complex64,
    pub bb_dag: Complex64,
}

impl Moments {
    fn add(&mut self, o: &Moments) {
        self.a += o.a;
        self.b += o.b;
        self.a2 += o.a2;
        self.b2 += o.b2;
        self.ab += o.ab;
        self.ab_dag += o.ab_dag;
        self.aa_dag += o.aa_dag;
        self.bb_dag += o.bb_dag;
    }

    fn scale(&mut self, f: f64) {
        for x in [
            &mut self.a,
            &mut self.b,
            &mut self.a2,
            &mut self.b2,
            &mut self.ab,
            &mut self.ab_dag,
            &mut self.aa_dag,
            &mut self.bb_dag,
        ] {
            *x *= f;
        }
    }

    /// Unnormalized moment sums over a flat two-mode amplitude vector.
    fn sums(amps: &[Complex64], dim: usize) -> (Moments, f64) {
        let mut m = Moments::default();
        let mut norm = 0.0;
        let sq: Vec<f64> = (0..=dim).map(|n| (n as f64).sqrt()).collect();
        for n1 in 0..dim {
            for n2 in 0..dim {
                let psi = amps[n1 * dim + n2];
                if psi == ZERO {
                    continue;
                }
                let w = psi.norm_sqr();
                norm += w;
                m.aa_dag += w * (n1 + 1) as f64;
                m.bb_dag += w * (n2 + 1) as f64;
                if n1 >= 1 {
                    m.a += amps[(n1 - 1) * dim + n2].conj() * psi * sq[n1];
                    if n2 + 1 < dim {
                        m.ab_dag += amps[(n1 - 1) * dim + n2 + 1].conj() * psi * sq[n1] * sq[n2 + 1];
                    }
                }
                if n2 >= 1 {
                    m.b += amps[n1 * dim + n2 - 1].conj() * psi * sq[n2];
                }
                if n1 >= 2 {
                    m.a2 += amps[(n1 - 2) * dim + n2].conj() * psi * sq[n1] * sq[n1 - 1];
                }
                if n2 >= 2 {
                    m.b2 += amps[n1 * dim + n2 - 2].conj() * psi * sq[n2] * sq[n2 - 1];
                }
                if n1 >= 1 && n2 >= 1 {
                    m.ab += amps[(n1 - 1) * dim + n2 - 1].conj() * psi * sq[n1] * sq[n2];
                }
            }
        }
        (m, norm)
    }

    pub fn of_pure(psi: &PureState) -> Result<Moments> {
        Moments::of_ensemble(std::slice::from_ref(psi))
    }

    /// Moments of the mixture of unnormalized pure branches.
    pub fn of_ensemble(branches: &[PureState]) -> Result<Moments> {
        let mut total = Moments::default();
        let mut norm = 0.0;
        for b in branches {
            if b.modes() != 2 {
                return Err(MinlError::ModeMismatch {
                    expected: 2,
                    found: b.modes(),
                });
            }
            let (m, n) = Moments::sums(b.amplitudes(), b.cutoff().dim());
            total.add(&m);
            norm += n;
        }
        if !(norm > 0.0) {
            return Err(MinlError::ZeroNorm);
        }
        total.scale(1.0 / norm);
        Ok(total)
    }

    /// Moments after a phase `exp(i n phi)` on mode b followed by a beam
    /// splitter of angle `theta` on (a, b), in the Heisenberg picture.
    pub fn through_output(&self, phi: f64, theta: f64) -> Moments {
        let e = Complex64::from_polar(1.0, phi);
        let i = Complex64::new(0.0, 1.0);
        let (t, r) = (theta.cos(), theta.sin());
        let na = self.aa_dag.re - 1.0;
        let nb = self.bb_dag.re - 1.0;
        let adag_b = self.ab_dag.conj();
        let cross = (i * r * t * e * adag_b).re;
        let na_out = t * t * na + r * r * nb + 2.0 * cross;
        let nb_out = r * r * na + t * t * nb - 2.0 * cross;
        Moments {
            a: self.a * t + i * r * e * self.b,
            b: i * r * self.a + self.b * t * e,
            a2: self.a2 * t * t + 2.0 * i * r * t * e * self.ab - r * r * e * e * self.b2,
            b2: -r * r * self.a2 + 2.0 * i * r * t * e * self.ab + t * t * e * e * self.b2,
            ab: i * r * t * self.a2 + (t * t - r * r) * e * self.ab + i * r * t * e * e * self.b2,
            ab_dag: -i * r * t * na + r * r * e * adag_b + t * t * e.conj() * self.ab_dag + i * r * t * nb,
            aa_dag: Complex64::new(na_out + 1.0, 0.0),
            bb_dag: Complex64::new(nb_out + 1.0, 0.0),
        }
    }

    pub fn of_heralded(h: &Heralded) -> Result<Moments> {
        match &h.state {
            HeraldedState::Ensemble(b) => Moments::of_ensemble(b),
            HeraldedState::Mixed(rho) => moments(rho),
        }
    }
}

/// Moments of a two-mode density operator.
pub fn moments(rho: &DensityOperator) -> Result<Moments> {
    if rho.modes() != 2 {
        return Err(MinlError::ModeMismatch {
            expected: 2,
            found: rho.modes(),
        });
    }
    let dim = rho.cutoff().dim();
    let r = rho.matrix();
    let tr = rho.trace().re;
    if !(tr > 0.0) {
        return Err(MinlError::ZeroNorm);
    }
    let idx = |n1: usize, n2: usize| n1 * dim + n2;
    let mut m = Moments::default();
    for n1 in 0..dim {
        for n2 in 0..dim {
            let j = idx(n1, n2);
            let (s1, s2) = ((n1 as f64).sqrt(), (n2 as f64).sqrt());
            let diag = r[(j, j)].re;
            m.aa_dag += diag * (n1 + 1) as f64;
            m.bb_dag += diag * (n2 + 1) as f64;
            if n1 >= 1 {
                m.a += r[(j, idx(n1 - 1, n2))] * s1;
                if n2 + 1 < dim {
                    m.ab_dag += r[(j, idx(n1 - 1, n2 + 1))] * s1 * ((n2 + 1) as f64).sqrt();
                }
            }
            if n2 >= 1 {
                m.b += r[(j, idx(n1, n2 - 1))] * s2;
            }
            if n1 >= 2 {
                m.a2 += r[(j, idx(n1 - 2, n2))] * s1 * ((n1 - 1) as f64).sqrt();
            }
            if n2 >= 2 {
                m.b2 += r[(j, idx(n1, n2 - 2))] * s2 * ((n2 - 1) as f64).sqrt();
            }
            if n1 >= 1 && n2 >= 1 {
                m.ab += r[(j, idx(n1 - 1, n2 - 1))] * s1 * s2;
            }
        }
    }
    m.scale(1.0 / tr);
    Ok(m)
}

/// Variances of (C1, C2) at quadrature angle `xi`.
pub fn two_mode_variance(m: &Moments, xi: f64) -> (f64, f64) {
    let e1 = Complex64::from_polar(1.0, -xi);
    let e2 = e1 * e1;
    let s2 = m.a2 + m.b2 + m.ab * 2.0;
    let s = m.a + m.b;
    let common = m.aa_dag.re + m.bb_dag.re;
    let v1 = 0.25 * ((e2 * s2).re + 2.0 * m.ab_dag.re + common - 1.0) - 0.5 * (e1 * s).re.powi(2);
    let v2 = -0.25 * ((e2 * s2).re - 2.0 * m.ab_dag.re - common + 1.0) - 0.5 * (e1 * s).im.powi(2);
    (v1, v2)
}

/// Squeezing relative to shot noise, in dB. Negative means squeezed.
pub fn squeezing_db(variance: f64) -> Result<f64> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(MinlError::NonPositiveVariance(variance));
    }
    Ok(10.0 * (variance / SHOT_NOISE).log10())
}

/// Variances from the Fock-basis operators `(C - <C>)^2` directly, used to
/// cross-check the moment route.
pub fn direct_variance(rho: &DensityOperator, xi: f64) -> Result<(f64, f64)> {
    use Ladder::{Annihilate as A, Create as C};
    let e = Complex64::from_polar(1.0, -xi);
    let k = 1.0 / 8f64.sqrt();
    // C1 = k (e a + e b + e* a† + e* b†), C2 = -i k (e a + e b - e* a† - e* b†)
    let c1: Vec<(Complex64, (usize, Ladder))> = vec![
        (e * k, (0, A)),
        (e * k, (1, A)),
        (e.conj() * k, (0, C)),
        (e.conj() * k, (1, C)),
    ];
    let mi = Complex64::new(0.0, -1.0);
    let c2: Vec<(Complex64, (usize, Ladder))> = vec![
        (mi * e * k, (0, A)),
        (mi * e * k, (1, A)),
        (-mi * e.conj() * k, (0, C)),
        (-mi * e.conj() * k, (1, C)),
    ];
    let var = |c: &[(Complex64, (usize, Ladder))]| -> Result<f64> {
        let mut lin = OperatorExpr::new();
        let mut sq = OperatorExpr::new();
        for (x, f) in c {
            lin = lin.term(*x, &[*f]);
            for (y, g) in c {
                sq = sq.term(x * y, &[*f, *g]);
            }
        }
        let mean = expectation(rho, &lin)?;
        Ok(expectation(rho, &sq)?.re - mean.re * mean.re)
    };
    Ok((var(&c1)?, var(&c2)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiPoint {
    pub xi: f64,
    pub var_c1: f64,
    pub var_c2: f64,
    pub s1_db: f64,
    pub s2_db: f64,
}

pub fn xi_sweep(m: &Moments, xi_grid: &[f64]) -> Result<Vec<XiPoint>> {
    xi_grid
        .iter()
        .map(|&xi| {
            let (v1, v2) = two_mode_variance(m, xi);
            Ok(XiPoint {
                xi,
                var_c1: v1,
                var_c2: v2,
                s1_db: squeezing_db(v1)?,
                s2_db: squeezing_db(v2)?,
            })
        })
        .collect()
}

/// Everything known about one evaluated configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezingReport {
    pub xi: f64,
    pub var_c1: f64,
    pub var_c2: f64,
    pub s1_db: f64,
    pub s2_db: f64,
    pub probability: f64,
    pub cutoff: usize,
    pub truncation_flag: bool,
    pub config: InterferometerConfig,
}

/// Output moments and heralding probability of a configuration. Moments are
/// taken on the heralded state before the phase shifter and BS4 and carried
/// through both analytically, which avoids rotating every Fock branch.
pub fn output_moments(cfg: &InterferometerConfig) -> Result<(Moments, f64, bool)> {
    let pre = herald_stage(cfg)?;
    let m = Moments::of_ensemble(&pre.branches)?.through_output(cfg.phi, cfg.theta[3]);
    Ok((m, pre.probability, pre.truncation_flag()))
}

/// Simulates `cfg` and reports squeezing at quadrature angle `xi`.
pub fn evaluate(cfg: &InterferometerConfig, xi: f64) -> Result<SqueezingReport> {
    let (m, probability, truncation_flag) = output_moments(cfg)?;
    let (v1, v2) = two_mode_variance(&m, xi);
    Ok(SqueezingReport {
        xi,
        var_c1: v1,
        var_c2: v2,
        s1_db: squeezing_db(v1)?,
        s2_db: squeezing_db(v2)?,
        probability,
        cutoff: cfg.cutoff.n_max(),
        truncation_flag,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, fock_state, two_mode_squeezed_vacuum, FockCutoff};
    use approx::assert_abs_diff_eq;

    #[test]
    fn shot_noise_reference_points() {
        assert_abs_diff_eq!(squeezing_db(0.25).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(squeezing_db(0.1875).unwrap(), -1.2494, epsilon = 1e-4);
        assert!(matches!(squeezing_db(0.0), Err(MinlError::NonPositiveVariance(_))));
        assert!(matches!(squeezing_db(-0.1), Err(MinlError::NonPositiveVariance(_))));
    }

    #[test]
    fn vacuum_and_coherent_sit_at_shot_noise() {
        let cut = FockCutoff::default();
        let vac = fock_state(&[0, 0], cut).unwrap();
        let coh = coherent_state(Complex64::new(0.8, -0.4), cut)
            .state
            .tensor(&coherent_state(Complex64::new(0.2, 0.5), cut).state)
            .unwrap();
        for s in [vac, coh] {
            let m = Moments::of_pure(&s).unwrap();
            for xi in [0.0, 0.7, 2.1] {
                let (v1, v2) = two_mode_variance(&m, xi);
                assert_abs_diff_eq!(v1, 0.25, epsilon = 1e-9);
                assert_abs_diff_eq!(v2, 0.25, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn tmsv_squeezing() {
        let z: f64 = 0.143;
        let s = two_mode_squeezed_vacuum(z, FockCutoff::default()).unwrap();
        let m = Moments::of_pure(&s).unwrap();
        let (v1, _) = two_mode_variance(&m, std::f64::consts::FRAC_PI_2);
        let r = z.atanh();
        assert_abs_diff_eq!(v1, 0.25 * (-2.0 * r).exp(), epsilon = 1e-12);
    }

    #[test]
    fn heisenberg_output_matches_fock_route() {
        use crate::circuit::{simulate, InterferometerConfig, LossChannel, LossPosition};
        use crate::detect::{DetectionEvent, DetectorKind, Outcome};
        let mut cases = Vec::new();
        for kind in [DetectorKind::Pnr, DetectorKind::Click] {
            for o in [Outcome::Ch4Only, Outcome::Both] {
                cases.push(DetectionEvent::new(kind, o));
            }
        }
        for (k, ev) in cases.into_iter().enumerate() {
            let mut cfg = InterferometerConfig::from_angles([0.5, 0.8, -0.6, 0.3 + 0.2 * k as f64], 1.9, 0.9, ev)
                .with_cutoff(FockCutoff::new(12).unwrap());
            if k == 1 {
                cfg.losses = LossChannel::split(0.1, LossPosition::AfterDetection).unwrap().to_vec();
            }
            let h = simulate(&cfg).unwrap();
            let slow = Moments::of_heralded(&h).unwrap();
            let (fast, p, _) = output_moments(&cfg).unwrap();
            assert_abs_diff_eq!(p, h.probability, epsilon = 1e-15);
            for (x, y) in [
                (slow.a, fast.a),
                (slow.b, fast.b),
                (slow.a2, fast.a2),
                (slow.b2, fast.b2),
                (slow.ab, fast.ab),
                (slow.ab_dag, fast.ab_dag),
                (slow.aa_dag, fast.aa_dag),
                (slow.bb_dag, fast.bb_dag),
            ] {
                assert!((x - y).norm() < 1e-9, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn moment_routes_agree() {
        let cut = FockCutoff::new(10).unwrap();
        let s = fock_state(&[1], cut)
            .unwrap()
            .tensor(&coherent_state(Complex64::new(0.6, 0.3), cut).state)
            .unwrap();
        let s = crate::circuit::apply_beamsplitter(&s, &crate::circuit::BeamSplitter::new(0.4, (0, 1)).unwrap()).unwrap();
        let rho = s.to_density();
        let a = Moments::of_pure(&s).unwrap();
        let b = moments(&rho).unwrap();
        assert!((a.ab_dag - b.ab_dag).norm() < 1e-14);
        assert!((a.a2 - b.a2).norm() < 1e-14);
        for xi in [0.0, 1.0, 2.5] {
            let (v1, v2) = two_mode_variance(&b, xi);
            let (d1, d2) = direct_variance(&rho, xi).unwrap();
            assert_abs_diff_eq!(v1, d1, epsilon = 1e-9);
            assert_abs_diff_eq!(v2, d2, epsilon = 1e-9);
        }
    }
}
