//! Agreement metrics between effective and Floquet descriptions, spectral
//! diagnostics, and Wigner functions.

use std::f64::consts::FRAC_2_PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use pathfinding::prelude::{kuhn_munkres, Matrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effective::{self, EffectiveModel};
use crate::error::{Error, Result};
use crate::expansion::{self, ExpansionResult};
use crate::floquet::FloquetSolution;
use crate::fock::{self, CMatrix, CVector, C0};

/// Prefactor of the empirical localization boundary `g4 = a g3^(3/4) / control`.
pub const BOUNDARY_A: f64 = 0.65;

/// Greedy matching is kept only when every assigned overlap reaches this.
pub const GREEDY_MIN_OVERLAP: f64 = 0.7;

/// The frame unitary `U_S` together with the order of its generator.
#[derive(Debug, Clone)]
pub struct FrameUnitary {
    pub order: u32,
    pub matrix: CMatrix,
}

impl FrameUnitary {
    pub fn identity(n: usize, order: u32) -> Self {
        FrameUnitary {
            order,
            matrix: fock::identity(n),
        }
    }

    pub fn from_expansion(result: &ExpansionResult, order: u32, n: usize) -> Result<Self> {
        Ok(FrameUnitary {
            order,
            matrix: expansion::u_s_matrix(result, order, n)?,
        })
    }
}

fn check_square(m: &CMatrix, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.nrows().max(m.ncols()),
        });
    }
    Ok(())
}

/// `sum_j |<phi_j| U_S |E>|^4`.
pub fn ipr(state: &CVector, modes: &CMatrix, u_s: &CMatrix) -> Result<f64> {
    let n = state.len();
    check_square(modes, n)?;
    check_square(u_s, n)?;
    let amps = modes.adjoint() * (u_s * state);
    Ok(amps.iter().map(|z| z.norm_sqr().powi(2)).sum())
}

/// IPR of every column of `states`.
pub fn ipr_columns(states: &CMatrix, modes: &CMatrix, u_s: &CMatrix) -> Result<Vec<f64>> {
    let n = states.nrows();
    check_square(modes, n)?;
    check_square(u_s, n)?;
    let amps = modes.adjoint() * (u_s * states);
    Ok((0..amps.ncols())
        .map(|k| amps.column(k).iter().map(|z| z.norm_sqr().powi(2)).sum())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IprReport {
    /// `(state index, I_k)` for the below-well states, lowest first.
    pub per_state: Vec<(usize, f64)>,
    pub average: f64,
    pub n_b: usize,
}

/// Mean IPR over the `floor(2 control / pi)` lowest states of `model`.
pub fn avg_ipr_below_well(
    model: &EffectiveModel,
    kerr: f64,
    solution: &FloquetSolution,
    u_s: &FrameUnitary,
    control: f64,
) -> Result<IprReport> {
    if model.order != u_s.order {
        return Err(Error::Contract(format!(
            "effective model of order {} paired with U_S of order {}",
            model.order, u_s.order
        )));
    }
    let info = effective::esqpt_info(control)?;
    if info.n_b == 0 {
        return Err(Error::EmptyWell(control));
    }
    let spec = effective::excitation_spectrum(model, kerr)?;
    let n_b = info.n_b.min(spec.levels.len());
    let states = spec.vectors.columns(0, n_b).into_owned();
    let values = ipr_columns(&states, &solution.modes, &u_s.matrix)?;
    let average = values.iter().sum::<f64>() / n_b as f64;
    Ok(IprReport {
        per_state: values.into_iter().enumerate().collect(),
        average,
        n_b,
    })
}

/// `(1/2N) sum_k |e^{i theta_k} - 1|`, the normalized trace distance from the identity.
pub fn trace_distance_identity(u_s: &CMatrix) -> Result<f64> {
    let defect = fock::unitarity_defect(u_s);
    if defect > fock::UNITARY_TOL {
        return Err(Error::Contract(format!("U_S not unitary (defect {defect:e})")));
    }
    let dec = fock::eig_unitary(u_s)?;
    let n = dec.dim() as f64;
    Ok(dec
        .values
        .iter()
        .map(|&t| Complex64::from_polar(1.0, t) - 1.0)
        .map(|z| z.norm())
        .sum::<f64>()
        / (2.0 * n))
}

/// Gaps of adjacent opposite-parity pairs, walking up from the bottom.
///
/// Returns `(pair index, gap)`; a level whose upper neighbour has the same
/// parity is skipped.
pub fn kissing_gaps(spectrum: &[f64], parities: &[i8]) -> Result<Vec<(usize, f64)>> {
    if spectrum.len() != parities.len() || parities.iter().any(|&p| p != 1 && p != -1) {
        return Err(Error::UnlabeledSpectrum);
    }
    if spectrum.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Contract("spectrum must be ascending".into()));
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i + 1 < spectrum.len() {
        if parities[i] != parities[i + 1] {
            out.push((out.len(), spectrum[i + 1] - spectrum[i]));
            i += 2;
        } else {
            i += 1;
        }
    }
    Ok(out)
}

/// `(energy, <a'a>)` per column of `states`, sorted by energy.
pub fn photon_number_profile(states: &CMatrix, energies: &[f64]) -> Result<Vec<(f64, f64)>> {
    if states.ncols() != energies.len() {
        return Err(Error::DimensionMismatch {
            expected: energies.len(),
            found: states.ncols(),
        });
    }
    let mut out: Vec<(f64, f64)> = energies
        .iter()
        .enumerate()
        .map(|(k, &e)| (e, fock::mean_photon_number(states.column(k).as_slice())))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// A dip in a photon-number profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileDip {
    pub index: usize,
    pub energy: f64,
    pub photon_number: f64,
    /// Mean of the values two levels below and two levels above.
    pub neighbor_mean: f64,
}

impl ProfileDip {
    pub fn ratio(&self) -> f64 {
        self.photon_number / self.neighbor_mean
    }
}

/// Deepest local minimum (relative to the levels two away) with energy in
/// `center (1 +- rel_window)`.
pub fn find_dip(profile: &[(f64, f64)], center: f64, rel_window: f64) -> Option<ProfileDip> {
    let lo = center * (1.0 - rel_window);
    let hi = center * (1.0 + rel_window);
    (2..profile.len().saturating_sub(2))
        .filter(|&k| profile[k].0 >= lo && profile[k].0 <= hi)
        .filter(|&k| profile[k].1 <= profile[k - 1].1.max(profile[k + 1].1))
        .map(|k| ProfileDip {
            index: k,
            energy: profile[k].0,
            photon_number: profile[k].1,
            neighbor_mean: 0.5 * (profile[k - 2].1 + profile[k + 2].1),
        })
        .min_by(|a, b| a.ratio().total_cmp(&b.ratio()))
}

/// `a g3^(3/4) / control`.
pub fn boundary_curve(g3: f64, control: f64, a: f64) -> Result<f64> {
    if !(g3 > 0.0) || !(control > 0.0) {
        return Err(Error::InvalidParams(format!("boundary needs g3 > 0 and control > 0, got {g3}, {control}")));
    }
    Ok(a * g3.powf(0.75) / control)
}

/// Uniform axis from `min` to `max` with `count` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Axis { min, max, count }
    }

    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|k| self.min + k as f64 * step).collect()
    }

    pub fn step(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.max - self.min) / (self.count - 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: Axis,
    pub p: Axis,
}

impl GridSpec {
    pub fn square(half_width: f64, count: usize) -> Self {
        GridSpec {
            x: Axis::new(-half_width, half_width, count),
            p: Axis::new(-half_width, half_width, count),
        }
    }
}

/// `W(x, p)` with `alpha = x + i p`; `values[(ix, ip)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub x_axis: Vec<f64>,
    pub p_axis: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl WignerGrid {
    pub fn cell_area(&self) -> f64 {
        let dx = if self.x_axis.len() > 1 { self.x_axis[1] - self.x_axis[0] } else { 0.0 };
        let dp = if self.p_axis.len() > 1 { self.p_axis[1] - self.p_axis[0] } else { 0.0 };
        dx * dp
    }

    /// Riemann sum of `W`; close to 1 when the grid covers the state.
    pub fn normalization(&self) -> f64 {
        self.values.sum() * self.cell_area()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Root of the summed squared difference times the cell area.
    pub fn l2_distance(&self, other: &WignerGrid) -> Result<f64> {
        if self.values.shape() != other.values.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                found: other.values.len(),
            });
        }
        Ok(((&self.values - &other.values).norm_squared() * self.cell_area()).sqrt())
    }

    pub fn value_at(&self, x: f64, p: f64) -> Option<f64> {
        let ix = self.x_axis.iter().position(|&v| (v - x).abs() < 1e-12)?;
        let ip = self.p_axis.iter().position(|&v| (v - p).abs() < 1e-12)?;
        Some(self.values[(ix, ip)])
    }
}

fn check_normalized(state: &CVector) -> Result<()> {
    let norm = state.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::Contract(format!("state not normalized (norm {norm})")));
    }
    Ok(())
}

/// `(2/pi) <psi| D(alpha) P D(alpha)' |psi>` through the closed-form
/// displacement matrix elements, with normalized generalized Laguerre
/// recursions so large `|alpha|` stays finite.
fn wigner_value(psi: &[Complex64], alpha: Complex64) -> f64 {
    let n = psi.len();
    let beta = 2.0 * alpha;
    let x = beta.norm_sqr();
    let (ln_b, phase) = if x > 0.0 { (0.5 * x.ln(), beta.arg()) } else { (f64::NEG_INFINITY, 0.0) };
    let mut total = 0.0;
    let mut ln_fact = 0.0f64;
    for k in 0..n {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        // g_0 = beta^k e^{-x/2} / sqrt(k!)
        let start = if k == 0 {
            Complex64::new((-0.5 * x).exp(), 0.0)
        } else if x == 0.0 {
            break;
        } else {
            Complex64::from_polar((k as f64 * ln_b - 0.5 * ln_fact - 0.5 * x).exp(), k as f64 * phase)
        };
        let kf = k as f64;
        let mut prev = C0;
        let mut cur = start;
        let mut acc = 0.0;
        for m in 0..(n - k) {
            // <m+k| D(beta) |m> = cur
            let z = psi[m] * psi[m + k].conj() * cur;
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * if k == 0 { z.re } else { 2.0 * z.re };
            let mf = m as f64;
            let next = ((2.0 * mf + 1.0 + kf - x) * cur - (mf * (mf + kf)).sqrt() * prev) / ((mf + 1.0) * (mf + 1.0 + kf)).sqrt();
            prev = cur;
            cur = next;
        }
        total += acc;
    }
    FRAC_2_PI * total
}

/// Wigner function on a grid, rows in parallel.
pub fn wigner(state: &CVector, grid: &GridSpec) -> Result<WignerGrid> {
    check_normalized(state)?;
    let xs = grid.x.points();
    let ps = grid.p.points();
    let psi = state.as_slice();
    let rows: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|&x| ps.iter().map(|&p| wigner_value(psi, Complex64::new(x, p))).collect())
        .collect();
    let values = DMatrix::from_fn(xs.len(), ps.len(), |i, j| rows[i][j]);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(WignerGrid {
        x_axis: xs,
        p_axis: ps,
        values,
    })
}

/// Single Wigner value from an explicit displaced parity, with
/// `D(alpha) = exp(alpha a' - alpha* a)` built by matrix exponential in a
/// space padded by `pad` levels.
pub fn wigner_displaced_parity(state: &CVector, alpha: Complex64, pad: usize) -> Result<f64> {
    check_normalized(state)?;
    let n = state.len() + pad;
    let (a, adag) = fock::ladder_operators(n)?;
    let gen = adag * alpha - a * alpha.conj();
    let d = fock::matrix_exponential(&gen)?;
    let mut psi = CVector::zeros(n);
    psi.rows_mut(0, state.len()).copy_from(state);
    let shifted = d.adjoint() * psi;
    let w = (shifted.adjoint() * parity_apply(&shifted))[(0, 0)] * FRAC_2_PI;
    if w.im.abs() > 1e-6 {
        return Err(Error::Numeric(format!("Wigner imaginary residue {:e}", w.im)));
    }
    Ok(w.re)
}

fn parity_apply(v: &CVector) -> CVector {
    CVector::from_iterator(v.len(), v.iter().enumerate().map(|(k, z)| if k % 2 == 0 { *z } else { -*z }))
}

/// One matched pair: `(row in left, column in right, |overlap|^2)`.
pub type Assignment = (usize, usize, f64);

fn overlap_matrix(left: &CMatrix, right: &CMatrix) -> Result<DMatrix<f64>> {
    if left.nrows() != right.nrows() {
        return Err(Error::DimensionMismatch {
            expected: left.nrows(),
            found: right.nrows(),
        });
    }
    Ok((left.adjoint() * right).map(|z| z.norm_sqr()))
}

/// Assign every column of `left` to a distinct column of `right`.
///
/// Greedy by largest `|overlap|^2`; when any greedy pair falls below
/// [`GREEDY_MIN_OVERLAP`], a maximum-total-overlap assignment is used instead.
pub fn match_states(left: &CMatrix, right: &CMatrix) -> Result<Vec<Assignment>> {
    let ov = overlap_matrix(left, right)?;
    let (rows, cols) = ov.shape();
    if rows > cols {
        return Err(Error::DimensionMismatch { expected: cols, found: rows });
    }
    let mut pairs: Vec<(usize, usize, f64)> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, ov[(i, j)]))
        .collect();
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_l = vec![false; rows];
    let mut used_r = vec![false; cols];
    let mut greedy = Vec::with_capacity(rows);
    for (i, j, w) in pairs {
        if !used_l[i] && !used_r[j] {
            used_l[i] = true;
            used_r[j] = true;
            greedy.push((i, j, w));
        }
    }
    greedy.sort_by_key(|p| p.0);
    if greedy.iter().all(|p| p.2 >= GREEDY_MIN_OVERLAP) {
        return Ok(greedy);
    }
    let weights = Matrix::from_fn(rows, cols, |(i, j)| (ov[(i, j)] * 1e12).round() as i64);
    let (_, assign) = kuhn_munkres(&weights);
    Ok(assign.into_iter().enumerate().map(|(i, j)| (i, j, ov[(i, j)])).collect())
}

/// Best single match of `state` among columns of `candidates`; fails below `min_overlap`.
pub fn best_match(state: &CVector, candidates: &CMatrix, min_overlap: f64) -> Result<(usize, f64)> {
    let ov = candidates.adjoint() * state;
    let (k, w) = ov
        .iter()
        .enumerate()
        .map(|(k, z)| (k, z.norm_sqr()))
        .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
    if w < min_overlap {
        return Err(Error::MatchingFailure(w.max(0.0)));
    }
    Ok((k, w))
}

/// `(2/pi) <psi|P|psi>`.
pub fn wigner_origin_from_parity(state: &CVector) -> f64 {
    FRAC_2_PI * fock::parity_expectation(state.as_slice())
}

/// Width of a square grid that holds a state of mean photon number `nbar`.
pub fn suggested_half_width(nbar: f64) -> f64 {
    (2.0 * nbar + 1.0).sqrt() + 3.5
}

/// Point count resolving interference fringes of period `pi / (2 sqrt(nbar))`
/// with at least three samples each.
pub fn suggested_points(nbar: f64, half_width: f64) -> usize {
    let step = std::f64::consts::PI / (6.0 * (nbar + 1.0).sqrt());
    ((2.0 * half_width / step).ceil() as usize + 1).max(41)
}
