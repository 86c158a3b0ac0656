//! Truncated Fock-space states and operators.
//!
//! Multi-mode states are stored as flat arrays in row-major order: mode 0 is
//! the most significant index, every mode keeps occupations `0..=n_max`.
//! Anything that would push an occupation past `n_max` is dropped and the lost
//! probability weight is recorded, so callers can tell when the cutoff bites.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, MinlError, Result};

pub const DEFAULT_CUTOFF: usize = 14;

/// Weight lost at the cutoff above which a state is flagged as truncated.
pub const TRUNCATION_TOL: f64 = 1e-10;

/// Norm deficit above which a coherent state is considered under-resolved.
pub const COHERENT_DEFICIT_TOL: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Maximum occupation kept per mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockCutoff(usize);

impl FockCutoff {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max == 0 || n_max > 80 {
            return invalid(format!("cutoff must lie in 1..=80, got {n_max}"));
        }
        Ok(FockCutoff(n_max))
    }

    pub fn n_max(self) -> usize {
        self.0
    }

    /// Local Hilbert-space dimension per mode.
    pub fn dim(self) -> usize {
        self.0 + 1
    }

    /// Reads `MINL_CUTOFF` from the environment, falling back to the default.
    pub fn from_env() -> Result<Self> {
        match std::env::var("MINL_CUTOFF") {
            Ok(v) => {
                let n: usize = v
                    .trim()
                    .parse()
                    .map_err(|_| MinlError::InvalidParameter(format!("MINL_CUTOFF={v}")))?;
                FockCutoff::new(n)
            }
            Err(_) => Ok(FockCutoff::default()),
        }
    }

    /// Smallest cutoff (at least the default) whose coherent-state tail for
    /// amplitude `|alpha|` stays below `tol`.
    pub fn for_coherent(alpha_abs: f64, tol: f64) -> Self {
        let mut n = DEFAULT_CUTOFF;
        while n < 80 && coherent_tail(alpha_abs, n) > tol {
            n += 1;
        }
        FockCutoff(n)
    }
}

impl Default for FockCutoff {
    fn default() -> Self {
        FockCutoff(DEFAULT_CUTOFF)
    }
}

/// Probability weight of a coherent state above occupation `n_max`.
pub fn coherent_tail(alpha_abs: f64, n_max: usize) -> f64 {
    let x = alpha_abs * alpha_abs;
    let mut term = (-x).exp();
    let mut kept = term;
    for n in 1..=n_max {
        term *= x / n as f64;
        kept += term;
    }
    (1.0 - kept).max(0.0)
}

pub(crate) fn factorials(n: usize) -> Vec<f64> {
    let mut f = vec![1.0; n + 1];
    for k in 1..=n {
        f[k] = f[k - 1] * k as f64;
    }
    f
}

pub(crate) fn flat_index(occ: &[usize], dim: usize) -> usize {
    occ.iter().fold(0, |acc, &n| acc * dim + n)
}

pub(crate) fn occupations(mut idx: usize, modes: usize, dim: usize) -> Vec<usize> {
    let mut occ = vec![0; modes];
    for k in (0..modes).rev() {
        occ[k] = idx % dim;
        idx /= dim;
    }
    occ
}

pub(crate) fn stride(mode: usize, modes: usize, dim: usize) -> usize {
    dim.pow((modes - 1 - mode) as u32)
}

fn check_mode(mode: usize, modes: usize) -> Result<()> {
    if mode >= modes {
        Err(MinlError::InvalidMode { mode, modes })
    } else {
        Ok(())
    }
}

fn check_keep(keep: &[usize], modes: usize) -> Result<()> {
    if keep.is_empty() {
        return Err(MinlError::InvalidKeepSet);
    }
    for (i, &k) in keep.iter().enumerate() {
        check_mode(k, modes)?;
        if keep[..i].contains(&k) {
            return Err(MinlError::InvalidKeepSet);
        }
    }
    Ok(())
}

/// Maps each full basis index to (kept index, traced index).
fn split_indices(modes: usize, dim: usize, keep: &[usize]) -> Vec<(usize, usize)> {
    let traced: Vec<usize> = (0..modes).filter(|m| !keep.contains(m)).collect();
    (0..dim.pow(modes as u32))
        .map(|i| {
            let occ = occupations(i, modes, dim);
            let k = keep.iter().fold(0, |a, &m| a * dim + occ[m]);
            let t = traced.iter().fold(0, |a, &m| a * dim + occ[m]);
            (k, t)
        })
        .collect()
}

/// Pure state of `modes` bosonic modes. Amplitudes need not be normalized:
/// heralded states carry their success probability as squared norm.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    modes: usize,
    cutoff: FockCutoff,
    amps: Vec<Complex64>,
    dropped: f64,
}

impl PureState {
    pub fn from_amplitudes(modes: usize, cutoff: FockCutoff, amps: Vec<Complex64>) -> Result<Self> {
        if modes == 0 {
            return invalid("a state needs at least one mode");
        }
        let expected = cutoff.dim().pow(modes as u32);
        if amps.len() != expected {
            return invalid(format!(
                "amplitude vector has length {}, expected {expected}",
                amps.len()
            ));
        }
        Ok(PureState {
            modes,
            cutoff,
            amps,
            dropped: 0.0,
        })
    }

    pub fn vacuum(modes: usize, cutoff: FockCutoff) -> Self {
        let mut amps = vec![ZERO; cutoff.dim().pow(modes as u32)];
        amps[0] = Complex64::new(1.0, 0.0);
        PureState {
            modes,
            cutoff,
            amps,
            dropped: 0.0,
        }
    }

    pub(crate) fn zeros(modes: usize, cutoff: FockCutoff) -> Self {
        PureState {
            modes,
            cutoff,
            amps: vec![ZERO; cutoff.dim().pow(modes as u32)],
            dropped: 0.0,
        }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn amplitude(&self, occ: &[usize]) -> Result<Complex64> {
        if occ.len() != self.modes {
            return Err(MinlError::ModeMismatch {
                expected: self.modes,
                found: occ.len(),
            });
        }
        for (mode, &n) in occ.iter().enumerate() {
            if n > self.cutoff.n_max() {
                return Err(MinlError::OccupationExceedsCutoff {
                    mode,
                    occupation: n,
                    n_max: self.cutoff.n_max(),
                });
            }
        }
        Ok(self.amps[flat_index(occ, self.cutoff.dim())])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if n <= 0.0 || !n.is_finite() {
            return Err(MinlError::ZeroNorm);
        }
        Ok(self.scaled(Complex64::new(1.0 / n.sqrt(), 0.0)))
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.amps.iter_mut().for_each(|a| *a *= c);
        out.dropped *= c.norm_sqr();
        out
    }

    /// Probability weight discarded at the cutoff by operations on this state.
    pub fn dropped_weight(&self) -> f64 {
        self.dropped
    }

    pub(crate) fn add_dropped(&mut self, w: f64) {
        self.dropped += w;
    }

    pub fn truncation_flag(&self) -> bool {
        self.dropped > TRUNCATION_TOL
    }

    pub fn inner(&self, other: &PureState) -> Result<Complex64> {
        self.check_compatible(other.modes, other.cutoff)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// |<a|b>|^2 with both states normalized first.
    pub fn fidelity(&self, other: &PureState) -> Result<f64> {
        let ov = self.inner(other)?;
        let n = self.norm_sqr() * other.norm_sqr();
        if n <= 0.0 {
            return Err(MinlError::ZeroNorm);
        }
        Ok(ov.norm_sqr() / n)
    }

    pub fn mean_photon_number(&self, mode: usize) -> Result<f64> {
        check_mode(mode, self.modes)?;
        let dim = self.cutoff.dim();
        let s = stride(mode, self.modes, dim);
        let total: f64 = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| ((i / s) % dim) as f64 * a.norm_sqr())
            .sum();
        Ok(total / self.norm_sqr())
    }

    pub fn to_density(&self) -> DensityOperator {
        let v = nalgebra::DVector::from_column_slice(&self.amps);
        DensityOperator {
            modes: self.modes,
            cutoff: self.cutoff,
            matrix: &v * v.adjoint(),
        }
    }

    /// Reduced density operator on `keep`, in the order given.
    pub fn reduced_density(&self, keep: &[usize]) -> Result<DensityOperator> {
        check_keep(keep, self.modes)?;
        let dim = self.cutoff.dim();
        let kdim = dim.pow(keep.len() as u32);
        let tdim = dim.pow((self.modes - keep.len()) as u32);
        let mut slices = vec![vec![ZERO; kdim]; tdim];
        for (i, (k, t)) in split_indices(self.modes, dim, keep).into_iter().enumerate() {
            slices[t][k] = self.amps[i];
        }
        let mut m = DMatrix::<Complex64>::zeros(kdim, kdim);
        for s in &slices {
            for (r, a) in s.iter().enumerate() {
                if *a == ZERO {
                    continue;
                }
                for (c, b) in s.iter().enumerate() {
                    m[(r, c)] += a * b.conj();
                }
            }
        }
        Ok(DensityOperator {
            modes: keep.len(),
            cutoff: self.cutoff,
            matrix: m,
        })
    }

    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        if self.cutoff != other.cutoff {
            return Err(MinlError::CutoffMismatch(
                self.cutoff.n_max(),
                other.cutoff.n_max(),
            ));
        }
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Ok(PureState {
            modes: self.modes + other.modes,
            cutoff: self.cutoff,
            amps,
            dropped: self.dropped * other.norm_sqr() + other.dropped * self.norm_sqr(),
        })
    }

    fn check_compatible(&self, modes: usize, cutoff: FockCutoff) -> Result<()> {
        if self.cutoff != cutoff {
            return Err(MinlError::CutoffMismatch(self.cutoff.n_max(), cutoff.n_max()));
        }
        if self.modes != modes {
            return Err(MinlError::ModeMismatch {
                expected: self.modes,
                found: modes,
            });
        }
        Ok(())
    }
}

/// Fock basis state with the given occupations.
pub fn fock_state(occ: &[usize], cutoff: FockCutoff) -> Result<PureState> {
    let mut s = PureState::zeros(occ.len().max(1), cutoff);
    if occ.is_empty() {
        return invalid("occupation list is empty");
    }
    for (mode, &n) in occ.iter().enumerate() {
        if n > cutoff.n_max() {
            return Err(MinlError::OccupationExceedsCutoff {
                mode,
                occupation: n,
                n_max: cutoff.n_max(),
            });
        }
    }
    s.amps[flat_index(occ, cutoff.dim())] = Complex64::new(1.0, 0.0);
    Ok(s)
}

/// Truncated coherent state together with the weight missing below the cutoff.
#[derive(Clone, Debug)]
pub struct Coherent {
    pub state: PureState,
    pub deficit: f64,
}

impl Coherent {
    pub fn cutoff_insufficient(&self) -> bool {
        self.deficit > COHERENT_DEFICIT_TOL
    }
}

/// Single-mode coherent state, not renormalized after truncation.
pub fn coherent_state(alpha: Complex64, cutoff: FockCutoff) -> Coherent {
    let mut amps = Vec::with_capacity(cutoff.dim());
    let mut c = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    amps.push(c);
    for n in 1..=cutoff.n_max() {
        c *= alpha / (n as f64).sqrt();
        amps.push(c);
    }
    let state = PureState {
        modes: 1,
        cutoff,
        amps,
        dropped: 0.0,
    };
    let deficit = (1.0 - state.norm_sqr()).max(0.0);
    if deficit > COHERENT_DEFICIT_TOL {
        log::warn!(
            "coherent amplitude {} is under-resolved at cutoff {} (deficit {deficit:e})",
            alpha.norm(),
            cutoff.n_max()
        );
    }
    Coherent { state, deficit }
}

/// Two-mode squeezed vacuum sqrt(1-z^2) sum_n z^n |n,n>, truncated.
pub fn two_mode_squeezed_vacuum(z: f64, cutoff: FockCutoff) -> Result<PureState> {
    if !(z.abs() < 1.0) {
        return invalid(format!("squeezing parameter |z| must be < 1, got {z}"));
    }
    let mut s = PureState::zeros(2, cutoff);
    let norm = (1.0 - z * z).sqrt();
    let dim = cutoff.dim();
    for n in 0..dim {
        s.amps[n * dim + n] = Complex64::new(norm * z.powi(n as i32), 0.0);
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ladder {
    Create,
    Annihilate,
}

/// Applies a creation or annihilation operator to one mode.
pub fn ladder_apply(state: &PureState, mode: usize, op: Ladder) -> Result<PureState> {
    check_mode(mode, state.modes)?;
    let dim = state.cutoff.dim();
    let s = stride(mode, state.modes, dim);
    let mut out = PureState::zeros(state.modes, state.cutoff);
    out.dropped = state.dropped;
    for (i, a) in state.amps.iter().enumerate() {
        if *a == ZERO {
            continue;
        }
        let n = (i / s) % dim;
        match op {
            Ladder::Annihilate => {
                if n > 0 {
                    out.amps[i - s] += a * (n as f64).sqrt();
                }
            }
            Ladder::Create => {
                if n + 1 < dim {
                    out.amps[i + s] += a * ((n + 1) as f64).sqrt();
                } else {
                    out.dropped += a.norm_sqr() * (n + 1) as f64;
                }
            }
        }
    }
    Ok(out)
}

/// Linear combination of products of ladder operators. Each product is listed
/// left to right as written, so `[(0, Annihilate), (0, Create)]` is `a a†`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OperatorExpr {
    pub terms: Vec<(Complex64, Vec<(usize, Ladder)>)>,
}

impl OperatorExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn term(mut self, coeff: Complex64, factors: &[(usize, Ladder)]) -> Self {
        self.terms.push((coeff, factors.to_vec()));
        self
    }

    pub fn single(factors: &[(usize, Ladder)]) -> Self {
        Self::new().term(Complex64::new(1.0, 0.0), factors)
    }
}

/// Density operator on the truncated multi-mode space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    modes: usize,
    cutoff: FockCutoff,
    matrix: DMatrix<Complex64>,
}

impl DensityOperator {
    pub fn from_matrix(modes: usize, cutoff: FockCutoff, matrix: DMatrix<Complex64>) -> Result<Self> {
        let d = cutoff.dim().pow(modes as u32);
        if matrix.nrows() != d || matrix.ncols() != d {
            return invalid(format!(
                "density matrix is {}x{}, expected {d}x{d}",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        Ok(DensityOperator {
            modes,
            cutoff,
            matrix,
        })
    }

    /// Incoherent sum of (unnormalized) pure branches.
    pub fn from_ensemble(branches: &[PureState]) -> Result<Self> {
        let first = branches
            .first()
            .ok_or_else(|| MinlError::InvalidParameter("empty ensemble".into()))?;
        let d = first.dim();
        let mut m = DMatrix::<Complex64>::zeros(d, d);
        for b in branches {
            first.check_compatible(b.modes, b.cutoff)?;
            let nz: Vec<(usize, Complex64)> = b
                .amps
                .iter()
                .enumerate()
                .filter(|(_, a)| a.norm_sqr() > 0.0)
                .map(|(i, a)| (i, *a))
                .collect();
            for &(c, bc) in &nz {
                let bc = bc.conj();
                let mut col = m.column_mut(c);
                for &(r, ar) in &nz {
                    col[r] += ar * bc;
                }
            }
        }
        Ok(DensityOperator {
            modes: first.modes,
            cutoff: first.cutoff,
            matrix: m,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn normalized(&self) -> Result<Self> {
        let t = self.trace().re;
        if t <= 0.0 || !t.is_finite() {
            return Err(MinlError::ZeroNorm);
        }
        Ok(self.scaled(1.0 / t))
    }

    pub fn scaled(&self, f: f64) -> Self {
        DensityOperator {
            modes: self.modes,
            cutoff: self.cutoff,
            matrix: self.matrix.map(|x| x * f),
        }
    }

    pub fn element(&self, row: &[usize], col: &[usize]) -> Result<Complex64> {
        let dim = self.cutoff.dim();
        for occ in [row, col] {
            if occ.len() != self.modes {
                return Err(MinlError::ModeMismatch {
                    expected: self.modes,
                    found: occ.len(),
                });
            }
            if let Some((mode, &n)) = occ.iter().enumerate().find(|(_, &n)| n >= dim) {
                return Err(MinlError::OccupationExceedsCutoff {
                    mode,
                    occupation: n,
                    n_max: self.cutoff.n_max(),
                });
            }
        }
        Ok(self.matrix[(flat_index(row, dim), flat_index(col, dim))])
    }

    pub fn purity(&self) -> f64 {
        let t = self.trace().re;
        self.matrix.iter().map(|x| x.norm_sqr()).sum::<f64>() / (t * t)
    }

    /// Largest |rho - rho^dagger| entry.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut e: f64 = 0.0;
        for r in 0..d {
            for c in r..d {
                e = e.max((self.matrix[(r, c)] - self.matrix[(c, r)].conj()).norm());
            }
        }
        e
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()).map(|x| x * 0.5);
        h.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &DensityOperator) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(MinlError::CutoffMismatch(
                self.cutoff.n_max(),
                other.cutoff.n_max(),
            ));
        }
        Ok((&self.matrix - &other.matrix)
            .iter()
            .map(|x| x.norm())
            .fold(0.0, f64::max))
    }

    /// <psi|rho|psi> with both normalized.
    pub fn fidelity_with_pure(&self, psi: &PureState) -> Result<f64> {
        if psi.dim() != self.dim() {
            return Err(MinlError::CutoffMismatch(
                self.cutoff.n_max(),
                psi.cutoff.n_max(),
            ));
        }
        let v = nalgebra::DVector::from_column_slice(&psi.amps);
        let val = (v.adjoint() * &self.matrix * &v)[(0, 0)].re;
        Ok(val / (psi.norm_sqr() * self.trace().re))
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityOperator> {
        check_keep(keep, self.modes)?;
        let dim = self.cutoff.dim();
        let kdim = dim.pow(keep.len() as u32);
        let tdim = dim.pow((self.modes - keep.len()) as u32);
        let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::new(); tdim];
        for (i, (k, t)) in split_indices(self.modes, dim, keep).into_iter().enumerate() {
            groups[t].push((i, k));
        }
        let mut m = DMatrix::<Complex64>::zeros(kdim, kdim);
        for g in &groups {
            for &(c, kc) in g {
                for &(r, kr) in g {
                    m[(kr, kc)] += self.matrix[(r, c)];
                }
            }
        }
        Ok(DensityOperator {
            modes: keep.len(),
            cutoff: self.cutoff,
            matrix: m,
        })
    }

    pub fn tensor(&self, other: &DensityOperator) -> Result<DensityOperator> {
        if self.cutoff != other.cutoff {
            return Err(MinlError::CutoffMismatch(
                self.cutoff.n_max(),
                other.cutoff.n_max(),
            ));
        }
        Ok(DensityOperator {
            modes: self.modes + other.modes,
            cutoff: self.cutoff,
            matrix: self.matrix.kronecker(&other.matrix),
        })
    }
}

/// Tr(rho O) for a sum of ladder products, evaluated in the truncated space.
pub fn expectation(rho: &DensityOperator, op: &OperatorExpr) -> Result<Complex64> {
    let dim = rho.cutoff.dim();
    let modes = rho.modes;
    let mut total = ZERO;
    for (coeff, factors) in &op.terms {
        for (mode, _) in factors {
            check_mode(*mode, modes)?;
        }
        let mut acc = ZERO;
        'basis: for j in 0..rho.dim() {
            let mut occ = occupations(j, modes, dim);
            let mut amp = 1.0;
            for &(mode, l) in factors.iter().rev() {
                match l {
                    Ladder::Annihilate => {
                        if occ[mode] == 0 {
                            continue 'basis;
                        }
                        amp *= (occ[mode] as f64).sqrt();
                        occ[mode] -= 1;
                    }
                    Ladder::Create => {
                        if occ[mode] + 1 >= dim {
                            continue 'basis;
                        }
                        occ[mode] += 1;
                        amp *= (occ[mode] as f64).sqrt();
                    }
                }
            }
            acc += rho.matrix[(j, flat_index(&occ, dim))] * amp;
        }
        total += coeff * acc;
    }
    Ok(total / rho.trace().re)
}

/// Joint photon-number distribution P(n1, n2) of a two-mode state.
pub fn photon_number_distribution(rho: &DensityOperator) -> Result<Vec<Vec<f64>>> {
    if rho.modes != 2 {
        return Err(MinlError::ModeMismatch {
            expected: 2,
            found: rho.modes,
        });
    }
    let dim = rho.cutoff.dim();
    let t = rho.trace().re;
    Ok((0..dim)
        .map(|n1| (0..dim).map(|n2| rho.matrix[(n1 * dim + n2, n1 * dim + n2)].re / t).collect())
        .collect())
}
