//! Truncated Fock-space linear algebra.
//!
//! Everything here works on dense `N x N` complex matrices in units where
//! `hbar = omega_o = 1`. Truncation breaks the canonical commutator on the last
//! level; callers that care about it use [`truncation_leakage`] on the states
//! they keep.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const C1: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const CI: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Tolerance for the Hermitian tag, scaled by `max(1, max|M_ij|)`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Unitarity defect above which unitary-only routines refuse the input.
pub const UNITARY_TOL: f64 = 1e-8;
/// Population allowed in the top tenth of the Fock ladder before a state is
/// flagged as truncation-limited.
pub const LEAKAGE_THRESHOLD: f64 = 1e-6;

/// Eigenvalues and orthonormal eigenvectors (as columns).
///
/// For Hermitian input `values` are ascending energies; for unitary input they
/// are eigenphases in `[0, 2pi)`, also ascending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> CVector {
        self.vectors.column(k).into_owned()
    }

    /// `V diag(f(value)) V^dagger`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> Complex64) -> CMatrix {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for (k, &v) in self.values.iter().enumerate() {
            let s = f(v);
            scaled.column_mut(k).scale_mut_complex(s);
        }
        let _ = n;
        &scaled * self.vectors.adjoint()
    }

    /// Largest deviation of `V^dagger V` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        unitarity_defect(&self.vectors)
    }
}

trait ScaleComplex {
    fn scale_mut_complex(&mut self, s: Complex64);
}

impl<S> ScaleComplex for nalgebra::Matrix<Complex64, nalgebra::Dyn, nalgebra::U1, S>
where
    S: nalgebra::StorageMut<Complex64, nalgebra::Dyn, nalgebra::U1>,
{
    fn scale_mut_complex(&mut self, s: Complex64) {
        for z in self.iter_mut() {
            *z *= s;
        }
    }
}

/// Annihilation and creation operators truncated to `n` Fock levels.
pub fn ladder_operators(n: usize) -> Result<(CMatrix, CMatrix)> {
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    let mut a = CMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = Complex64::new((k as f64).sqrt(), 0.0);
    }
    let adag = a.adjoint();
    Ok((a, adag))
}

pub fn number_operator(n: usize) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_fn(n, |k, _| Complex64::new(k as f64, 0.0)))
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |M - M^dagger|` entrywise.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `max |M^dagger M - 1|` entrywise.
pub fn unitarity_defect(m: &CMatrix) -> f64 {
    let p = m.adjoint() * m;
    let n = p.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..p.ncols() {
            let target = if i == j { C1 } else { C0 };
            worst = worst.max((p[(i, j)] - target).norm());
        }
    }
    worst
}

pub fn is_hermitian(m: &CMatrix) -> bool {
    m.is_square() && hermiticity_defect(m) <= HERMITIAN_TOL * max_abs(m).max(1.0)
}

fn check_finite(m: &CMatrix) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Rotate `v` so its first significant component is real and positive.
pub fn fix_phase(v: &mut [Complex64]) {
    let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return;
    }
    if let Some(lead) = v.iter().find(|z| z.norm() > 1e-8 * scale).copied() {
        let rot = lead.conj() / lead.norm();
        for z in v.iter_mut() {
            *z *= rot;
        }
    }
}

fn fix_column_phases(vectors: &mut CMatrix) {
    for mut col in vectors.column_iter_mut() {
        fix_phase(col.as_mut_slice());
    }
}

/// `exp(M)`.
///
/// Skew-Hermitian generators go through the Hermitian eigensolver and come
/// back unitary to rounding; anything else uses Pade scaling-and-squaring.
pub fn matrix_exponential(m: &CMatrix) -> Result<CMatrix> {
    check_finite(m)?;
    if !m.is_square() {
        return Err(Error::Contract("matrix exponential of a non-square matrix".into()));
    }
    let h = m * CI;
    if is_hermitian(&h) {
        // M = -iH
        return exp_hermitian(&h, Complex64::new(0.0, -1.0));
    }
    Ok(m.exp())
}

/// `exp(z H)` for Hermitian `H` and complex scalar `z`.
pub fn exp_hermitian(h: &CMatrix, z: Complex64) -> Result<CMatrix> {
    let dec = eig_hermitian(h)?;
    Ok(dec.reconstruct_with(|e| (z * e).exp()))
}

/// Eigendecomposition of a Hermitian matrix; values ascending.
pub fn eig_hermitian(h: &CMatrix) -> Result<SpectralDecomposition> {
    check_finite(h)?;
    if !h.is_square() {
        return Err(Error::Contract("eig_hermitian on a non-square matrix".into()));
    }
    let defect = hermiticity_defect(h);
    let scale = max_abs(h).max(1.0);
    if defect > HERMITIAN_TOL * scale {
        return Err(Error::Contract(format!(
            "eig_hermitian input is not Hermitian (defect {defect:e})"
        )));
    }
    let n = h.nrows();
    let mut sym = h.clone();
    // symmetrize exactly so the solver sees a Hermitian matrix
    for i in 0..n {
        sym[(i, i)] = Complex64::new(sym[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
            sym[(i, j)] = avg;
            sym[(j, i)] = avg.conj();
        }
    }
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    fix_column_phases(&mut vectors);
    Ok(SpectralDecomposition { values, vectors })
}

/// Eigendecomposition of a unitary matrix; values are eigenphases in
/// `[0, 2pi)`, ascending.
///
/// Uses the commuting Hermitian pair `(U + U^dagger)/2` and
/// `(U - U^dagger)/2i`: the first is diagonalized, and every cluster of its
/// (near-)degenerate eigenvalues is split with the second. The eigenvectors
/// therefore come out orthonormal even for nearly degenerate phases.
pub fn eig_unitary(u: &CMatrix) -> Result<SpectralDecomposition> {
    check_finite(u)?;
    if !u.is_square() {
        return Err(Error::Contract("eig_unitary on a non-square matrix".into()));
    }
    let defect = unitarity_defect(u);
    if defect > UNITARY_TOL {
        return Err(Error::Contract(format!(
            "eig_unitary input is not unitary (defect {defect:e})"
        )));
    }
    let n = u.nrows();
    let ud = u.adjoint();
    let cos_part = (u + &ud) * Complex64::new(0.5, 0.0);
    let sin_part = (u - &ud) * Complex64::new(0.0, -0.5);
    let base = eig_hermitian(&cos_part)?;
    let mut vectors = base.vectors.clone();

    const CLUSTER_TOL: f64 = 1e-7;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && base.values[end] - base.values[end - 1] < CLUSTER_TOL {
            end += 1;
        }
        if end - start > 1 {
            let q = base.vectors.columns(start, end - start).into_owned();
            let restricted = q.adjoint() * &sin_part * &q;
            let inner = eig_hermitian(&hermitize(&restricted))?;
            let rotated = &q * &inner.vectors;
            for k in 0..(end - start) {
                vectors.set_column(start + k, &rotated.column(k));
            }
        }
        start = end;
    }

    let tau = 2.0 * std::f64::consts::PI;
    let uv = u * &vectors;
    let mut phases: Vec<(f64, usize)> = (0..n)
        .map(|k| {
            let lambda = vectors.column(k).dotc(&uv.column(k));
            let mut ph = lambda.arg().rem_euclid(tau);
            if ph >= tau {
                ph -= tau;
            }
            (ph, k)
        })
        .collect();
    phases.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut sorted = CMatrix::zeros(n, n);
    for (dst, &(_, src)) in phases.iter().enumerate() {
        sorted.set_column(dst, &vectors.column(src));
    }
    fix_column_phases(&mut sorted);
    Ok(SpectralDecomposition {
        values: phases.into_iter().map(|(p, _)| p).collect(),
        vectors: sorted,
    })
}

/// `(M + M^dagger) / 2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Population carried by the top tenth (rounded up) of the Fock ladder.
pub fn truncation_leakage(state: &[Complex64]) -> f64 {
    let n = state.len();
    let top = n.div_ceil(10).max(1);
    state[n - top..].iter().map(|z| z.norm_sqr()).sum()
}

pub fn is_leaking(state: &[Complex64]) -> bool {
    truncation_leakage(state) > LEAKAGE_THRESHOLD
}

/// `<psi| a^dagger a |psi>` in the Fock basis.
pub fn mean_photon_number(state: &[Complex64]) -> f64 {
    state
        .iter()
        .enumerate()
        .map(|(n, z)| n as f64 * z.norm_sqr())
        .sum()
}

/// `<psi| P |psi>` with `P = (-1)^n`.
pub fn parity_expectation(state: &[Complex64]) -> f64 {
    state
        .iter()
        .enumerate()
        .map(|(n, z)| if n % 2 == 0 { z.norm_sqr() } else { -z.norm_sqr() })
        .sum()
}
