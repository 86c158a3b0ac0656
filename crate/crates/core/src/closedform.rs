//! Closed-form heralded states, probabilities and moments.
//!
//! Every heralded state here has the shape
//! `(gamma0 + gamma1 a† + gamma2 b†) |alpha1, alpha2>` (or an incoherent sum of
//! such terms for click detectors). Coefficients are built in two stages: the
//! detector projection fixes the pre-stage coefficients, then the phase on
//! mode 2 and BS4 act linearly on them. All expressions use the same
//! conventions as [`crate::circuit`], so they can be compared with the Fock
//! simulation directly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::InterferometerConfig;
use crate::error::{invalid, MinlError, Result};
use crate::fock::{coherent_state, DensityOperator, FockCutoff, PureState};
use crate::squeeze::Moments;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Signed transmission and reflection amplitudes of the four beam splitters.
#[derive(Clone, Copy, Debug)]
struct Amps {
    t: [f64; 4],
    r: [f64; 4],
}

impl Amps {
    fn new(theta: &[f64; 4]) -> Self {
        Amps {
            t: theta.map(f64::cos),
            r: theta.map(f64::sin),
        }
    }
}

/// Photon coefficients and coherent amplitudes of a state
/// `(gamma[0] + gamma[1] a† + gamma[2] b†) |alpha[0], alpha[1]>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Superposition {
    pub gamma: [Complex64; 3],
    pub alpha: [Complex64; 2],
}

impl Superposition {
    /// Squared norm of the (unnormalized) superposition.
    pub fn weight(&self) -> f64 {
        let [g0, g1, g2] = self.gamma;
        let [a1, a2] = self.alpha;
        let (n1, n2) = (a1.norm_sqr(), a2.norm_sqr());
        g0.norm_sqr()
            + g1.norm_sqr() * (1.0 + n1)
            + g2.norm_sqr() * (1.0 + n2)
            + 2.0 * (g0.conj() * g1 * a1.conj() + g0.conj() * g2 * a2.conj() + g1.conj() * g2 * a1 * a2.conj()).re
    }

    /// Phase `exp(i n phi)` on mode 2 followed by BS4 with amplitudes (t4, r4).
    fn output_stage(&self, phi: f64, t4: f64, r4: f64) -> Superposition {
        let e = Complex64::from_polar(1.0, phi);
        let [g0, g1, g2] = self.gamma;
        let [c1, c2] = self.alpha;
        let (g2, c2) = (g2 * e, c2 * e);
        Superposition {
            gamma: [g0, g1 * t4 + I * r4 * g2, g2 * t4 + I * r4 * g1],
            alpha: [c1 * t4 + I * r4 * c2, c2 * t4 + I * r4 * c1],
        }
    }

    /// Fock amplitudes of `scale * (gamma0 + gamma1 a† + gamma2 b†)|alpha1, alpha2>`.
    pub fn to_state(&self, scale: Complex64, cutoff: FockCutoff) -> PureState {
        let dim = cutoff.dim();
        let c1 = coherent_state(self.alpha[0], cutoff).state;
        let c2 = coherent_state(self.alpha[1], cutoff).state;
        let (c1, c2) = (c1.amplitudes(), c2.amplitudes());
        let [g0, g1, g2] = self.gamma;
        let mut amps = vec![Complex64::new(0.0, 0.0); dim * dim];
        for n1 in 0..dim {
            for n2 in 0..dim {
                let mut a = g0 * c1[n1] * c2[n2];
                if n1 > 0 {
                    a += g1 * (n1 as f64).sqrt() * c1[n1 - 1] * c2[n2];
                }
                if n2 > 0 {
                    a += g2 * (n2 as f64).sqrt() * c1[n1] * c2[n2 - 1];
                }
                amps[n1 * dim + n2] = a * scale;
            }
        }
        PureState::from_amplitudes(2, cutoff, amps).expect("dimension matches cutoff")
    }
}

/// State without any out-coupling (T2 = T3 = 1): a displaced single photon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoDetectionState {
    /// Coefficients of a† and b†.
    pub gamma: [Complex64; 2],
    /// Coherent amplitudes of the two output modes.
    pub alpha: [Complex64; 2],
}

impl NoDetectionState {
    pub fn to_state(&self, cutoff: FockCutoff) -> PureState {
        Superposition {
            gamma: [re(0.0), self.gamma[0], self.gamma[1]],
            alpha: self.alpha,
        }
        .to_state(re(1.0), cutoff)
    }
}

/// Output state with T2 = T3 = 1 for beam-splitter angles `theta1`, `theta4`.
pub fn no_detection_state(theta1: f64, theta4: f64, phi: f64, alpha_in: Complex64) -> NoDetectionState {
    let (t1, r1) = (theta1.cos(), theta1.sin());
    let pre = Superposition {
        gamma: [re(0.0), re(t1), I * r1],
        alpha: [I * r1 * alpha_in, alpha_in * t1],
    };
    let out = pre.output_stage(phi, theta4.cos(), theta4.sin());
    NoDetectionState {
        gamma: [out.gamma[1], out.gamma[2]],
        alpha: out.alpha,
    }
}

/// Variance of C1 without out-coupling. It depends neither on `xi`, on the
/// coherent amplitude, nor on BS4, and never drops below shot noise.
pub fn no_detection_variance(theta1: f64, phi: f64) -> f64 {
    0.5 - 0.5 * theta1.cos() * theta1.sin() * phi.sin()
}

/// Variance of C1 without out-coupling when the phase shifter sits after BS4
/// instead of before it. BS1 and BS4 then merge into one splitter of angle
/// `theta1 + theta4`, so the result is symmetric in the two.
pub fn no_detection_variance_output_phase(theta1: f64, theta4: f64, phi: f64) -> f64 {
    let (t1, r1) = (theta1.cos(), theta1.sin());
    let (t4, r4) = (theta4.cos(), theta4.sin());
    0.5 + phi.sin() * (0.5 * (t1 * r1 + t4 * r4) - t1 * t1 * t4 * r4 - t4 * t4 * t1 * r1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Herald {
    /// One photon in channel 4, none in channel 3.
    Single,
    /// One photon in each channel.
    Both,
}

/// Coefficients of the heralded PNR state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PnrCoefficients {
    pub herald: Herald,
    /// Coefficients right after heralding, before the phase and BS4.
    pub pre: Superposition,
    /// Coefficients of the output state.
    pub out: Superposition,
    /// Coherent amplitudes that reached detector channels 3 and 4.
    pub alpha_detected: [Complex64; 2],
    /// Heralding probability.
    pub probability: f64,
    /// Normalization constant N of the output superposition.
    pub norm: f64,
}

impl PnrCoefficients {
    /// Normalized output state in the Fock basis.
    pub fn state(&self, cutoff: FockCutoff) -> PureState {
        self.out.to_state(re(self.norm), cutoff)
    }
}

/// Coherent amplitudes after BS1-BS3: signal modes 1, 2 and channels 3, 4.
fn coherent_after_taps(a: &Amps, alpha: Complex64) -> [Complex64; 4] {
    let ([t1, t2, t3, _], [r1, r2, r3, _]) = (a.t, a.r);
    [I * r1 * t3 * alpha, alpha * t1 * t2, I * t1 * r2 * alpha, -alpha * r1 * r3]
}

pub fn pnr_state(theta: &[f64; 4], phi: f64, alpha_in: Complex64, herald: Herald) -> Result<PnrCoefficients> {
    let a = Amps::new(theta);
    let ([t1, t2, t3, t4], [r1, r2, r3, r4]) = (a.t, a.r);
    let [c1, c2, c3, c4] = coherent_after_taps(&a, alpha_in);
    let gamma = match herald {
        Herald::Single => [I * t1 * r3, c4 * t1 * t3, c4 * I * r1 * t2],
        Herald::Both => [
            alpha_in * r2 * r3 * (r1 * r1 - t1 * t1),
            c3 * c4 * t1 * t3,
            c3 * c4 * I * r1 * t2,
        ],
    };
    let pre = Superposition {
        gamma,
        alpha: [c1, c2],
    };
    let out = pre.output_stage(phi, t4, r4);
    let probability = (-(c3.norm_sqr() + c4.norm_sqr())).exp() * pre.weight();
    if !(probability > 0.0) {
        return Err(MinlError::HeraldingImpossible {
            p: probability,
            floor: 0.0,
        });
    }
    let norm = (-(c3.norm_sqr() + c4.norm_sqr()) / 2.0).exp() / probability.sqrt();
    Ok(PnrCoefficients {
        herald,
        pre,
        out,
        alpha_detected: [c3, c4],
        probability,
        norm,
    })
}

/// Heralding probability as an explicit polynomial in the transmissivities.
pub fn pnr_probability(t: &[f64; 4], alpha_in: f64, herald: Herald) -> f64 {
    let [t1, t2, t3, _] = *t;
    let (r1, r2, r3) = (1.0 - t1, 1.0 - t2, 1.0 - t3);
    let x = alpha_in * alpha_in;
    let damp = (-x * (t1 * r2 + r1 * r3)).exp();
    match herald {
        Herald::Single => {
            damp * r3
                * (x * r1 * r1 * t2
                    + t1 * (1.0 + x * r1 * (3.0 * t3 - 2.0 * t2) + x * x * r1 * r1 * (t2 - t3).powi(2)))
        }
        Herald::Both => {
            damp * x
                * r2
                * r3
                * (t1 * t1
                    + r1 * r1 * (1.0 + x * t1 * (3.0 * t2 - 2.0 * t3) + x * x * t1 * t1 * (t2 - t3).powi(2))
                    + r1 * (-2.0 * t1 + x * t1 * t1 * (-2.0 * t2 + 3.0 * t3)))
        }
    }
}

/// Quadrature variances (C1, C2) of the single-PNR state for T1 = 1/2,
/// T2 = T3 = `t`, T4 = 1.
pub fn special_case_variance(t: f64, alpha: f64, phi: f64, xi: f64) -> (f64, f64) {
    // The polynomial below is written for a phase on mode 1. A phase on mode
    // 1 equals a phase -phi on mode 2 combined with a global rotation that
    // shifts xi by phi.
    let (p, q) = (-phi, xi - phi);
    let x = t * alpha * alpha;
    let base = 0.25 + x / 2.0 + x * x / 2.0;
    let osc = -(2.0 * q).cos() + (2.0 * q - 2.0 * p).cos() + 2.0 * (2.0 * q - p).sin();
    let tail = 2.0 * x * p.sin();
    let d = (1.0 + x).powi(2);
    ((base + x / 8.0 * (osc + tail)) / d, (base + x / 8.0 * (-osc + tail)) / d)
}

/// Heralding probability of the single-PNR event for T1 = 1/2, T2 = T3 = `t`, T4 = 1.
pub fn special_case_probability(t: f64, alpha: f64) -> f64 {
    let x = alpha * alpha;
    (1.0 - t) / 2.0 * (-x * (1.0 - t)).exp() * (1.0 + t * x)
}

/// Closed-form moments of a PNR state, term by term.
pub fn pnr_moments(c: &PnrCoefficients) -> Moments {
    superposition_moments(&c.out, c.norm * c.norm)
}

/// Moments of `sqrt(n2) (g0 + g1 a† + g2 b†)|a1, a2>` with `n2` the squared
/// normalization constant.
pub fn superposition_moments(s: &Superposition, n2: f64) -> Moments {
    let [g0, g1, g2] = s.gamma;
    let [a1, a2] = s.alpha;
    let (a1c, a2c) = (a1.conj(), a2.conj());
    let (g0c, g1c, g2c) = (g0.conj(), g1.conj(), g2.conj());
    let (n1, nn2) = (a1.norm_sqr(), a2.norm_sqr());
    let (z0, z1, z2) = (g0.norm_sqr(), g1.norm_sqr(), g2.norm_sqr());
    let one = re(1.0);
    let a = z0 * a1
        + g0c * g1 * (n1 + 1.0)
        + g0c * g2 * a1 * a2c
        + g1c * g0 * a1 * a1
        + z1 * a1 * (n1 + 2.0)
        + g1c * g2 * a1 * a1 * a2c
        + g2c * g0 * a1 * a2
        + g2c * g1 * a2 * (n1 + 1.0)
        + z2 * a1 * (nn2 + 1.0);
    let b = z0 * a2
        + g0c * g1 * a2 * a1c
        + g0c * g2 * (nn2 + 1.0)
        + g1c * g0 * a1 * a2
        + z1 * a2 * (n1 + 1.0)
        + g1c * g2 * a1 * (nn2 + 1.0)
        + g2c * g0 * a2 * a2
        + g2c * g1 * a2 * a2 * a1c
        + z2 * a2 * (nn2 + 2.0);
    let a2m = z0 * a1 * a1
        + g0c * g1 * a1 * (n1 + 2.0)
        + g0c * g2 * a1 * a1 * a2c
        + g1c * g0 * a1 * a1 * a1
        + z1 * a1 * a1 * (n1 + 3.0)
        + g1c * g2 * a1 * a1 * a1 * a2c
        + g2c * g0 * a2 * a1 * a1
        + g2c * g1 * a2 * a1 * (n1 + 2.0)
        + z2 * a1 * a1 * (nn2 + 1.0);
    let b2m = z0 * a2 * a2
        + g0c * g1 * a2 * a2 * a1c
        + g0c * g2 * a2 * (nn2 + 2.0)
        + g1c * g0 * a1 * a2 * a2
        + z1 * (n1 + 1.0) * a2 * a2
        + g1c * g2 * a1 * a2 * (nn2 + 2.0)
        + g2c * g0 * a2 * a2 * a2
        + g2c * g1 * a2 * a2 * a2 * a1c
        + z2 * a2 * a2 * (nn2 + 3.0);
    let aa_dag = z0 * (n1 + 1.0)
        + 2.0 * (g0c * g1 * a1c * (n1 + 2.0)).re
        + 2.0 * (g0c * g2 * a2c * (n1 + 1.0)).re
        + z1 * (n1 * n1 + 4.0 * n1 + 2.0)
        + 2.0 * (g1c * g2 * a2c * a1 * (n1 + 2.0)).re
        + z2 * (n1 + 1.0) * (nn2 + 1.0);
    let bb_dag = z0 * (nn2 + 1.0)
        + 2.0 * (g0c * g1 * a1c * (nn2 + 1.0)).re
        + 2.0 * (g0c * g2 * a2c * (nn2 + 2.0)).re
        + z1 * (n1 + 1.0) * (nn2 + 1.0)
        + 2.0 * (g1c * g2 * a1 * a2c * (nn2 + 2.0)).re
        + z2 * (nn2 * nn2 + 4.0 * nn2 + 2.0);
    let ab = z0 * a1 * a2
        + g0 * g1c * a1 * a1 * a2
        + g0 * g2c * a1 * a2 * a2
        + g1 * g0c * a2 * (n1 + 1.0)
        + z1 * a2 * a1 * (n1 + 2.0)
        + g1 * g2c * a2 * a2 * (n1 + 1.0)
        + g2 * g0c * a1 * (nn2 + 1.0)
        + g2 * g1c * a1 * a1 * (nn2 + 1.0)
        + z2 * a1 * a2 * (nn2 + 2.0);
    let ab_dag = z0 * a1 * a2c
        + g0c * g1 * a2c * (n1 + 1.0)
        + g0c * g2 * a1 * a2c * a2c
        + g1c * g0 * a1 * a1 * a2c
        + z1 * a2c * a1 * (n1 + 2.0)
        + g1c * g2 * a1 * a1 * a2c * a2c
        + g2c * g0 * a1 * (nn2 + 1.0)
        + g2c * g1 * one * (n1 + 1.0) * (nn2 + 1.0)
        + z2 * a1 * a2c * (nn2 + 2.0);
    Moments {
        a: a * n2,
        b: b * n2,
        a2: a2m * n2,
        b2: b2m * n2,
        ab: ab * n2,
        ab_dag: ab_dag * n2,
        aa_dag: re(aa_dag * n2),
        bb_dag: re(bb_dag * n2),
    }
}

/// Truncation of the infinite detector-count sums in the click expressions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SumBounds {
    pub max_count: usize,
}

impl Default for SumBounds {
    fn default() -> Self {
        SumBounds { max_count: 40 }
    }
}

/// Heralded click-detector state: an incoherent sum of superpositions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClickState {
    pub herald: Herald,
    /// Output-stage coefficients shared by all terms.
    pub out: Superposition,
    /// Count-dependent scalar coefficients: `[gamma0]` for a single click,
    /// `[gamma3, gamma4]` (channel 3 and channel 4 counts) for both.
    pub count_coeffs: Vec<Complex64>,
    pub alpha_detected: [Complex64; 2],
    pub probability: f64,
    pub bounds: SumBounds,
    /// Largest relative weight of a term at the summation bound.
    pub tail: f64,
}

impl ClickState {
    /// Terms (weight, superposition) of the mixture, unnormalized.
    pub fn terms(&self) -> Vec<(f64, Superposition)> {
        let [c3, c4] = self.alpha_detected;
        let damp = (-(c3.norm_sqr() + c4.norm_sqr())).exp();
        let k_max = self.bounds.max_count;
        let mut out = Vec::new();
        let mut fact = 1.0;
        match self.herald {
            Herald::Single => {
                for k in 1..=k_max {
                    fact *= k as f64;
                    let w = damp * c4.norm_sqr().powi(k as i32 - 1) / fact;
                    let mut s = self.out;
                    s.gamma[0] = self.count_coeffs[0] * k as f64;
                    out.push((w, s));
                }
            }
            Herald::Both => {
                let facts = crate::fock::factorials(k_max);
                for m in 1..=k_max {
                    for n in 1..=k_max {
                        let w = damp * c3.norm_sqr().powi(m as i32 - 1) * c4.norm_sqr().powi(n as i32 - 1)
                            / (facts[m] * facts[n]);
                        if w == 0.0 {
                            continue;
                        }
                        let mut s = self.out;
                        s.gamma[0] = self.count_coeffs[0] * m as f64 + self.count_coeffs[1] * n as f64;
                        out.push((w, s));
                    }
                }
            }
        }
        out
    }

    /// Normalized density operator in the Fock basis.
    pub fn density(&self, cutoff: FockCutoff) -> Result<DensityOperator> {
        let branches: Vec<PureState> = self
            .terms()
            .into_iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, s)| s.to_state(re((w / self.probability).sqrt()), cutoff))
            .collect();
        DensityOperator::from_ensemble(&branches)
    }

    /// Moments of the mixture from the closed-form superposition moments.
    pub fn moments(&self) -> Moments {
        let mut total = Moments::default();
        for (w, s) in self.terms() {
            let m = superposition_moments(&s, w / self.probability);
            total.a += m.a;
            total.b += m.b;
            total.a2 += m.a2;
            total.b2 += m.b2;
            total.ab += m.ab;
            total.ab_dag += m.ab_dag;
            total.aa_dag += m.aa_dag;
            total.bb_dag += m.bb_dag;
        }
        total
    }
}

pub fn click_state(
    theta: &[f64; 4],
    phi: f64,
    alpha_in: Complex64,
    herald: Herald,
    bounds: SumBounds,
) -> Result<ClickState> {
    if bounds.max_count == 0 {
        return invalid("click sums need max_count >= 1");
    }
    let a = Amps::new(theta);
    let ([t1, _, _, t4], [r1, r2, r3, r4]) = (a.t, a.r);
    // Same pre-stage coefficients as the single-photon PNR herald.
    let [c1, c2, c3, c4] = coherent_after_taps(&a, alpha_in);
    let pre = Superposition {
        gamma: [I * t1 * r3, c4 * t1 * a.t[2], c4 * I * r1 * a.t[1]],
        alpha: [c1, c2],
    };
    let out_single = pre.output_stage(phi, t4, r4);
    let (out, count_coeffs, tail) = match herald {
        Herald::Single => {
            let x = c4.norm_sqr();
            let k = bounds.max_count as f64;
            (out_single, vec![pre.gamma[0]], x.powf(k) / factorial(bounds.max_count))
        }
        Herald::Both => {
            let mut o = out_single;
            o.gamma[1] *= c3;
            o.gamma[2] *= c3;
            let g3 = alpha_in * r1 * r1 * r2 * r3;
            let g4 = -alpha_in * t1 * t1 * r2 * r3;
            let x = c3.norm_sqr().max(c4.norm_sqr());
            let k = bounds.max_count as f64;
            (o, vec![g3, g4], x.powf(k) / factorial(bounds.max_count))
        }
    };
    let mut st = ClickState {
        herald,
        out,
        count_coeffs,
        alpha_detected: [c3, c4],
        probability: 1.0,
        bounds,
        tail,
    };
    let p: f64 = st.terms().iter().map(|(w, s)| w * s.weight()).sum();
    if !(p > 0.0) {
        return Err(MinlError::HeraldingImpossible { p, floor: 0.0 });
    }
    st.probability = p;
    Ok(st)
}

fn factorial(n: usize) -> f64 {
    crate::fock::factorials(n)[n]
}

/// `sum |T|^2` over three counts, where `T` collects the ways a single photon
/// (coefficients `g`) plus coherent light (amplitudes `c`) produces the
/// pattern. A count of zero for a channel is forced when `free[k]` is false.
fn pattern_sum(g: [Complex64; 3], c: [Complex64; 3], free: [bool; 3], k_max: usize) -> f64 {
    let facts = crate::fock::factorials(k_max);
    let pow = |z: Complex64, n: i64| -> Complex64 {
        if n < 0 {
            re(0.0)
        } else {
            z.powu(n as u32)
        }
    };
    let range = |f: bool| if f { k_max } else { 0 };
    let mut s = 0.0;
    for n0 in 0..=range(free[0]) {
        for n1 in 0..=range(free[1]) {
            for n2 in 0..=range(free[2]) {
                let n = [n0 as i64, n1 as i64, n2 as i64];
                let mut term = re(0.0);
                for k in 0..3 {
                    if n[k] == 0 {
                        continue;
                    }
                    let mut p = g[k] * n[k] as f64;
                    for j in 0..3 {
                        p *= pow(c[j], if j == k { n[j] - 1 } else { n[j] });
                    }
                    term += p;
                }
                s += term.norm_sqr() / (facts[n0] * facts[n1] * facts[n2]);
            }
        }
    }
    s
}

/// Click heralding probability from explicit sums over detector counts.
pub fn click_probability(theta: &[f64; 4], alpha_in: Complex64, herald: Herald, bounds: SumBounds) -> f64 {
    let a = Amps::new(theta);
    let ([t1, t2, t3, _], [r1, r2, r3, _]) = (a.t, a.r);
    let [c1, c2, c3, c4] = coherent_after_taps(&a, alpha_in);
    // Photon amplitudes into: signal mode 1, signal mode 2, channel 3, channel 4.
    let (g_m1, g_m2, g_ch3, g_ch4) = (re(t1 * t3), I * r1 * t2, re(-r1 * r2), I * t1 * r3);
    let k = bounds.max_count;
    let damp = (-alpha_in.norm_sqr()).exp();
    // Channel 3 dark, channel 4 free.
    let dark3 = pattern_sum([g_m2, g_ch4, g_m1], [c2, c4, c1], [true, true, true], k);
    // Both channels dark.
    let dark34 = pattern_sum([g_m2, g_ch4, g_m1], [c2, c4, c1], [true, false, true], k);
    match herald {
        Herald::Single => damp * (dark3 - dark34),
        Herald::Both => {
            // Channel 4 dark, channel 3 free.
            let dark4 = pattern_sum([g_ch3, g_m2, g_m1], [c3, c2, c1], [true, true, true], k);
            1.0 - damp * (dark3 + dark4 - dark34)
        }
    }
}

/// Click state for an interferometer configuration.
pub fn click_state_for(cfg: &InterferometerConfig, herald: Herald) -> Result<ClickState> {
    click_state(&cfg.theta, cfg.phi, cfg.alpha_in, herald, SumBounds::default())
}
