//! Two-mode Wigner function from the displaced-parity expectation and its
//! four two-dimensional reductions.
//!
//! Coordinates use `X = a + a†`, `P = -i(a - a†)`, so vacuum has unit
//! quadrature variance and
//! `W(X1, P1, X2, P2) = 4 Tr[rho D1(X1 + iP1) D2(X2 + iP2) Pi1 Pi2]`
//! with `Pi = (-1)^n`. Vacuum gives `W(0) = 4` and the integral of `W` over
//! all four coordinates is `16 pi^2`.
//!
//! Displacement matrix elements are the exact Laguerre expressions restricted
//! to the truncated space. Since the state lives inside that space, the trace
//! is exact and no cutoff check on the displacement is needed.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, MinlError, Result};
use crate::fock::{factorials, DensityOperator, FockCutoff};

/// Normalization of the full Wigner function over four coordinates.
pub const WIGNER_VOLUME: f64 = 16.0 * std::f64::consts::PI * std::f64::consts::PI;

const IMAG_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpacePoint {
    pub x1: f64,
    pub p1: f64,
    pub x2: f64,
    pub p2: f64,
}

impl PhaseSpacePoint {
    pub fn new(x1: f64, p1: f64, x2: f64, p2: f64) -> Result<Self> {
        if ![x1, p1, x2, p2].iter().all(|v| v.is_finite()) {
            return invalid("phase-space coordinates must be finite");
        }
        Ok(PhaseSpacePoint { x1, p1, x2, p2 })
    }

    pub fn alpha(&self) -> Complex64 {
        Complex64::new(self.x1, self.p1) / 2.0
    }

    pub fn beta(&self) -> Complex64 {
        Complex64::new(self.x2, self.p2) / 2.0
    }
}

/// Generalized Laguerre values `L_j^{(k)}(x)` for `j = 0..=n`.
fn laguerre(n: usize, k: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n == 0 {
        return out;
    }
    out.push(1.0 + k as f64 - x);
    for j in 1..n {
        let jf = j as f64;
        let kf = k as f64;
        let next = ((2.0 * jf + 1.0 + kf - x) * out[j] - (jf + kf) * out[j - 1]) / (jf + 1.0);
        out.push(next);
    }
    out
}

/// Matrix elements `<m|D(gamma)|n>` on the truncated space.
pub fn displacement_matrix(gamma: Complex64, cutoff: FockCutoff) -> DMatrix<Complex64> {
    let dim = cutoff.dim();
    let fact = factorials(dim);
    let x = gamma.norm_sqr();
    let env = (-0.5 * x).exp();
    let mut d = DMatrix::zeros(dim, dim);
    let neg_conj = -gamma.conj();
    for k in 0..dim {
        // Elements with |m - n| = k share the same Laguerre order.
        let lag = laguerre(dim - 1 - k, k, x);
        let up = gamma.powu(k as u32);
        let down = neg_conj.powu(k as u32);
        for lo in 0..dim - k {
            let hi = lo + k;
            let c = (fact[lo] / fact[hi]).sqrt() * env * lag[lo];
            d[(hi, lo)] = up * c;
            if k > 0 {
                d[(lo, hi)] = down * c;
            }
        }
    }
    d
}

/// Single-mode kernel `K[n][m] = <n|D(x + ip)|m> (-1)^m`.
fn kernel(x: f64, p: f64, cutoff: FockCutoff) -> DMatrix<Complex64> {
    let mut d = displacement_matrix(Complex64::new(x, p), cutoff);
    for m in (1..cutoff.dim()).step_by(2) {
        d.column_mut(m).neg_mut();
    }
    d
}

fn check_two_mode(rho: &DensityOperator) -> Result<()> {
    if rho.modes() != 2 {
        return Err(MinlError::ModeMismatch {
            expected: 2,
            found: rho.modes(),
        });
    }
    Ok(())
}

fn real_part(w: Complex64) -> Result<f64> {
    if w.im.abs() > IMAG_TOL * w.re.abs().max(1.0) {
        return Err(MinlError::Numerical(format!("Wigner value has imaginary part {:e}", w.im)));
    }
    Ok(w.re)
}

/// `4 Tr[rho (K1 x K2)]` for single-mode kernels.
fn contract(rho: &DensityOperator, k1: &DMatrix<Complex64>, k2: &DMatrix<Complex64>) -> Complex64 {
    let dim = rho.cutoff().dim();
    let r = rho.matrix();
    let mut acc = Complex64::new(0.0, 0.0);
    for m1 in 0..dim {
        for m2 in 0..dim {
            let row = m1 * dim + m2;
            for n1 in 0..dim {
                let a = k1[(n1, m1)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for n2 in 0..dim {
                    acc += r[(row, n1 * dim + n2)] * a * k2[(n2, m2)];
                }
            }
        }
    }
    acc * 4.0
}

/// Two-mode Wigner function at one point. `rho` should be normalized.
pub fn wigner_point(rho: &DensityOperator, pt: &PhaseSpacePoint) -> Result<f64> {
    check_two_mode(rho)?;
    let k1 = kernel(pt.x1, pt.p1, rho.cutoff());
    let k2 = kernel(pt.x2, pt.p2, rho.cutoff());
    real_part(contract(rho, &k1, &k2))
}

/// Which coordinate pair survives the reduction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReducedPair {
    X2P2,
    X1P1,
    P1P2,
    X1X2,
}

impl ReducedPair {
    pub const ALL: [ReducedPair; 4] = [ReducedPair::X2P2, ReducedPair::X1P1, ReducedPair::P1P2, ReducedPair::X1X2];

    pub fn labels(self) -> (&'static str, &'static str) {
        match self {
            ReducedPair::X2P2 => ("X2", "P2"),
            ReducedPair::X1P1 => ("X1", "P1"),
            ReducedPair::P1P2 => ("P1", "P2"),
            ReducedPair::X1X2 => ("X1", "X2"),
        }
    }
}

impl std::fmt::Display for ReducedPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (a, b) = self.labels();
        write!(f, "{}{}", a.to_lowercase(), b.to_lowercase())
    }
}

impl std::str::FromStr for ReducedPair {
    type Err = MinlError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x2p2" => Ok(ReducedPair::X2P2),
            "x1p1" => Ok(ReducedPair::X1P1),
            "p1p2" => Ok(ReducedPair::P1P2),
            "x1x2" => Ok(ReducedPair::X1X2),
            other => Err(MinlError::InvalidParameter(format!("unknown Wigner pair '{other}'"))),
        }
    }
}

/// Uniform grid used both for the kept axes and for integration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            min: -6.0,
            max: 6.0,
            points: 81,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 2 || !(self.max > self.min) || !self.min.is_finite() || !self.max.is_finite() {
            return invalid("grid needs at least two points and max > min");
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn axis(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.min + k as f64 * self.step()).collect()
    }

    /// Trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points)
            .map(|k| if k == 0 || k + 1 == self.points { 0.5 * h } else { h })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WignerGrid {
    pub which: ReducedPair,
    pub x_axis: Vec<f64>,
    pub y_axis: Vec<f64>,
    /// `values[(i, j)]` is at `(x_axis[i], y_axis[j])`.
    pub values: DMatrix<f64>,
    /// Trapezoid estimate of the integral of `values`, over `16 pi^2`.
    pub mass: f64,
    /// Trapezoid estimate of the integral of `values^2`.
    pub l2: f64,
    /// False when the grid misses more than 1e-3 of the state's weight.
    pub coverage_ok: bool,
}

impl WignerGrid {
    /// Values rescaled so that the integral of their square is one.
    pub fn l2_normalized(&self) -> DMatrix<f64> {
        if self.l2 > 0.0 {
            &self.values / self.l2.sqrt()
        } else {
            self.values.clone()
        }
    }

    /// Mean of the two kept coordinates under the raw values.
    pub fn centroid(&self) -> (f64, f64) {
        let (mut s, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for (i, x) in self.x_axis.iter().enumerate() {
            for (j, y) in self.y_axis.iter().enumerate() {
                let w = self.values[(i, j)];
                s += w;
                sx += w * x;
                sy += w * y;
            }
        }
        (sx / s, sy / s)
    }

    /// Covariance of the two kept coordinates under the raw values.
    pub fn covariance(&self) -> f64 {
        let (mx, my) = self.centroid();
        let (mut s, mut c) = (0.0, 0.0);
        for (i, x) in self.x_axis.iter().enumerate() {
            for (j, y) in self.y_axis.iter().enumerate() {
                let w = self.values[(i, j)];
                s += w;
                c += w * (x - mx) * (y - my);
            }
        }
        c / s
    }
}

/// Contracts mode 2 of `rho` against a kernel, leaving a mode-1 operator.
fn contract_mode2(rho: &DensityOperator, k2: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let dim = rho.cutoff().dim();
    let r = rho.matrix();
    DMatrix::from_fn(dim, dim, |m1, n1| {
        let mut acc = Complex64::new(0.0, 0.0);
        for m2 in 0..dim {
            for n2 in 0..dim {
                acc += r[(m1 * dim + m2, n1 * dim + n2)] * k2[(n2, m2)];
            }
        }
        acc
    })
}

/// Contracts mode 1 of `rho` against a kernel, leaving a mode-2 operator.
fn contract_mode1(rho: &DensityOperator, k1: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let dim = rho.cutoff().dim();
    let r = rho.matrix();
    DMatrix::from_fn(dim, dim, |m2, n2| {
        let mut acc = Complex64::new(0.0, 0.0);
        for m1 in 0..dim {
            for n1 in 0..dim {
                acc += r[(m1 * dim + m2, n1 * dim + n2)] * k1[(n1, m1)];
            }
        }
        acc
    })
}

/// `Tr[sigma K]` for a single-mode operator and kernel.
fn trace_with(sigma: &DMatrix<Complex64>, k: &DMatrix<Complex64>) -> Complex64 {
    let dim = sigma.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..dim {
        for n in 0..dim {
            acc += sigma[(m, n)] * k[(n, m)];
        }
    }
    acc
}

/// Kernel integrals on one grid: over P at each X, over X at each P, and over both.
struct Integrated {
    over_p: Vec<DMatrix<Complex64>>,
    over_x: Vec<DMatrix<Complex64>>,
    full: DMatrix<Complex64>,
}

fn integrate_kernels(cutoff: FockCutoff, grid: &GridSpec) -> Integrated {
    let axis = grid.axis();
    let w = grid.weights();
    let n = grid.points;
    let dim = cutoff.dim();
    let kernels: Vec<DMatrix<Complex64>> = (0..n * n)
        .into_par_iter()
        .map(|k| kernel(axis[k / n], axis[k % n], cutoff))
        .collect();
    let zero = DMatrix::<Complex64>::zeros(dim, dim);
    let mut over_p = vec![zero.clone(); n];
    let mut over_x = vec![zero.clone(); n];
    let mut full = zero;
    for i in 0..n {
        for j in 0..n {
            let k = &kernels[i * n + j];
            over_p[i] += k * Complex64::new(w[j], 0.0);
            over_x[j] += k * Complex64::new(w[i], 0.0);
            full += k * Complex64::new(w[i] * w[j], 0.0);
        }
    }
    Integrated { over_p, over_x, full }
}

/// Reduced Wigner function on `grid`, integrating the two dropped
/// coordinates over the same grid with the trapezoid rule.
pub fn reduced_wigner(rho: &DensityOperator, which: ReducedPair, grid: &GridSpec) -> Result<WignerGrid> {
    check_two_mode(rho)?;
    grid.validate()?;
    let cutoff = rho.cutoff();
    let axis = grid.axis();
    let w = grid.weights();
    let n = grid.points;
    let ints = integrate_kernels(cutoff, grid);

    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(n);
            match which {
                ReducedPair::X1P1 | ReducedPair::X2P2 => {
                    let sigma = if which == ReducedPair::X1P1 {
                        contract_mode2(rho, &ints.full)
                    } else {
                        contract_mode1(rho, &ints.full)
                    };
                    for &p in &axis {
                        let k = kernel(axis[i], p, cutoff);
                        row.push(real_part(trace_with(&sigma, &k) * 4.0)?);
                    }
                }
                ReducedPair::X1X2 | ReducedPair::P1P2 => {
                    let ks = if which == ReducedPair::X1X2 {
                        &ints.over_p
                    } else {
                        &ints.over_x
                    };
                    let tau = contract_mode1(rho, &ks[i]);
                    for k2 in ks.iter() {
                        row.push(real_part(trace_with(&tau, k2) * 4.0)?);
                    }
                }
            }
            Ok(row)
        })
        .collect();
    let mut values = DMatrix::zeros(n, n);
    for (i, r) in rows.into_iter().enumerate() {
        for (j, v) in r?.into_iter().enumerate() {
            values[(i, j)] = v;
        }
    }
    let (mut mass, mut l2) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let v = values[(i, j)];
            mass += w[i] * w[j] * v;
            l2 += w[i] * w[j] * v * v;
        }
    }
    mass /= WIGNER_VOLUME;
    let trace = rho.trace().re;
    let coverage_ok = (mass - trace).abs() <= 1e-3 * trace.max(f64::MIN_POSITIVE);
    if !coverage_ok {
        log::warn!("{which} Wigner grid captures {mass:.6} of trace {trace:.6}; widen the range");
    }
    Ok(WignerGrid {
        which,
        x_axis: axis.clone(),
        y_axis: axis,
        values,
        mass,
        l2,
        coverage_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, PureState};

    fn vacuum(n: usize) -> DensityOperator {
        PureState::vacuum(2, FockCutoff::new(n).unwrap()).to_density()
    }

    #[test]
    fn displacement_is_unitary_on_low_block() {
        let c = FockCutoff::new(40).unwrap();
        let d = displacement_matrix(Complex64::new(0.7, -0.4), c);
        let prod = d.adjoint() * &d;
        for i in 0..10 {
            for j in 0..10 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn displacement_column_zero_is_coherent() {
        let c = FockCutoff::new(12).unwrap();
        let g = Complex64::new(0.3, 0.8);
        let d = displacement_matrix(g, c);
        let coh = coherent_state(g, c).state;
        for n in 0..c.dim() {
            assert!((d[(n, 0)] - coh.amplitudes()[n]).norm() < 1e-14);
        }
    }

    #[test]
    fn vacuum_gaussian() {
        let rho = vacuum(6);
        for (x1, p1, x2, p2) in [(0.0, 0.0, 0.0, 0.0), (2.0, 0.0, 0.0, 0.0), (0.5, -1.0, 0.3, 0.2)] {
            let w = wigner_point(&rho, &PhaseSpacePoint::new(x1, p1, x2, p2).unwrap()).unwrap();
            let want = 4.0 * (-(x1 * x1 + p1 * p1 + x2 * x2 + p2 * p2) / 2.0_f64).exp();
            assert!((w - want).abs() < 1e-12, "{w} vs {want}");
        }
    }

    #[test]
    fn pair_parsing_round_trips() {
        for p in ReducedPair::ALL {
            assert_eq!(p.to_string().parse::<ReducedPair>().unwrap(), p);
        }
        assert!("x1y1".parse::<ReducedPair>().is_err());
    }

    #[test]
    fn vacuum_reduction_mass_is_one() {
        let rho = vacuum(4);
        let g = reduced_wigner(&rho, ReducedPair::X1X2, &GridSpec { points: 41, ..Default::default() }).unwrap();
        assert!((g.mass - 1.0).abs() < 1e-6);
        assert!(g.coverage_ok);
        assert!(g.covariance().abs() < 1e-9);
        let tight = reduced_wigner(&rho, ReducedPair::X1P1, &GridSpec { min: -1.0, max: 1.0, points: 11 }).unwrap();
        assert!(!tight.coverage_ok);
    }
}
