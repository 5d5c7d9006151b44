//! Drive and nonlinearity parameters, and the lab-frame and displaced
//! rotating-frame Hamiltonians.
//!
//! The rotating frame rotates at half the drive frequency and displaces by the
//! linear response `Pi`, so
//!
//! ```text
//! H(t) = -delta a'a + sum_{m=3,4} (g_m/m) (a e^{-i w t/2} + a' e^{i w t/2} + Pi e^{-i w t} + Pi* e^{i w t})^m
//! ```
//!
//! with `w = omega_d` and `delta = omega_d/2 - omega_o`. Terms built only from
//! `Pi` are multiples of the identity and are dropped: they shift every level
//! equally and only change the global phase of the propagator.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, CMatrix, C0};

/// Five dimensionless physical parameters plus the Fock truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega_o: f64,
    pub g3: f64,
    pub g4: f64,
    /// Drive strength `Omega_d`.
    pub drive: f64,
    /// Drive frequency `omega_d`.
    pub omega_d: f64,
    pub dim: usize,
}

impl ModelParams {
    /// Undriven oscillator with `omega_d = 2 omega_o`.
    pub fn new(g3: f64, g4: f64, dim: usize) -> Self {
        ModelParams {
            omega_o: 1.0,
            g3,
            g4,
            drive: 0.0,
            omega_d: 2.0,
            dim,
        }
    }

    pub fn with_drive(mut self, drive: f64, omega_d: f64) -> Self {
        self.drive = drive;
        self.omega_d = omega_d;
        self
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega_o, self.g3, self.g4, self.drive, self.omega_d]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if self.omega_o <= 0.0 {
            return Err(Error::InvalidParams("omega_o must be positive".into()));
        }
        if self.omega_d <= 0.0 {
            return Err(Error::InvalidParams("omega_d must be positive".into()));
        }
        if self.dim < 2 {
            return Err(Error::InvalidDimension(self.dim));
        }
        if self.g3.abs() > 0.1 || self.g4.abs() > 0.1 {
            log::warn!(
                "nonlinearities g3 = {}, g4 = {} are not small compared to omega_o",
                self.g3,
                self.g4
            );
        }
        Ok(())
    }

    /// Drive period `2 pi / omega_d`.
    pub fn drive_period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega_d
    }

    /// Period of the rotating-frame Hamiltonian, twice the drive period.
    pub fn frame_period(&self) -> f64 {
        2.0 * self.drive_period()
    }

    /// Half the drive frequency, the fundamental of the frame Hamiltonian.
    pub fn frame_frequency(&self) -> f64 {
        0.5 * self.omega_d
    }

    /// Linear-response displacement amplitude.
    pub fn pi(&self) -> f64 {
        2.0 * self.drive / (3.0 * self.omega_o)
    }

    pub fn delta(&self) -> f64 {
        0.5 * self.omega_d - self.omega_o
    }
}

/// Closed-form second-order quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub pi: f64,
    pub delta: f64,
    pub omega_a2: f64,
    pub k2: f64,
    pub eps2_2: f64,
    /// `eps2_2 / k2`, `None` when `k2 == 0`.
    pub control: Option<f64>,
}

/// Second-order Kerr coefficient `-3 g4/2 + 10 g3^2/(3 omega_o)`.
pub fn kerr2(g3: f64, g4: f64, omega_o: f64) -> f64 {
    -1.5 * g4 + 10.0 * g3 * g3 / (3.0 * omega_o)
}

/// Stark and Lamb shifted frequency at displacement `pi`.
pub fn omega_a2(g3: f64, g4: f64, omega_o: f64, pi: f64) -> f64 {
    omega_o + 3.0 * g4 - 20.0 * g3 * g3 / (3.0 * omega_o)
        + (6.0 * g4 + 9.0 * g3 * g3 / omega_o) * pi * pi
}

pub fn derive(params: &ModelParams) -> Result<DerivedParams> {
    params.validate()?;
    let pi = params.pi();
    let k2 = kerr2(params.g3, params.g4, params.omega_o);
    let eps2_2 = params.g3 * pi;
    Ok(DerivedParams {
        pi,
        delta: params.delta(),
        omega_a2: omega_a2(params.g3, params.g4, params.omega_o, pi),
        k2,
        eps2_2,
        control: if k2 == 0.0 { None } else { Some(eps2_2 / k2) },
    })
}

/// Drive strength giving `eps2_2 / k2 = target`, with `omega_d = 2 omega_a2`.
pub fn control_to_drive(target: f64, params: &ModelParams) -> Result<ModelParams> {
    if !target.is_finite() {
        return Err(Error::InvalidParams("control must be finite".into()));
    }
    if params.g3 == 0.0 {
        return Err(Error::NoDriveCoupling);
    }
    let k2 = kerr2(params.g3, params.g4, params.omega_o);
    if k2 == 0.0 {
        return Err(Error::RescalingUndefined(0.0));
    }
    let drive = target * k2 * 3.0 * params.omega_o / (2.0 * params.g3);
    let mut out = *params;
    out.drive = drive;
    out.omega_d = 2.0 * omega_a2(params.g3, params.g4, params.omega_o, out.pi());
    out.validate()?;
    Ok(out)
}

/// `sum_m H_m e^{i m omega_d t / 2}`, `|m| <= 8`.
#[derive(Debug, Clone)]
pub struct HarmonicSeries {
    pub terms: BTreeMap<i32, CMatrix>,
    pub omega_d: f64,
}

impl HarmonicSeries {
    pub fn dim(&self) -> usize {
        self.terms.values().next().map_or(0, |m| m.nrows())
    }

    pub fn max_harmonic(&self) -> i32 {
        self.terms.keys().map(|m| m.abs()).max().unwrap_or(0)
    }

    pub fn harmonic(&self, m: i32) -> Option<&CMatrix> {
        self.terms.get(&m)
    }

    /// Sum of the series at time `t`.
    pub fn at(&self, t: f64) -> CMatrix {
        let n = self.dim();
        let mut out = CMatrix::zeros(n, n);
        let theta = 0.5 * self.omega_d * t;
        for (&m, h) in &self.terms {
            let phase = Complex64::from_polar(1.0, m as f64 * theta);
            out.zip_apply(h, |o, x| *o += x * phase);
        }
        out
    }

    /// `max_m max|H_{-m} - H_m^dagger|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (&m, h) in &self.terms {
            let partner = self.terms.get(&-m);
            let d = match partner {
                Some(p) => fock::max_abs(&(p - h.adjoint())),
                None => fock::max_abs(h),
            };
            worst = worst.max(d);
        }
        worst
    }
}

/// `M a` for the truncated annihilation operator.
fn right_mul_a(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    let mut out = CMatrix::zeros(n, n);
    for j in 1..n {
        let s = (j as f64).sqrt();
        for i in 0..n {
            out[(i, j)] = m[(i, j - 1)] * s;
        }
    }
    out
}

/// `M a'` for the truncated creation operator.
fn right_mul_adag(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    let mut out = CMatrix::zeros(n, n);
    for j in 0..n - 1 {
        let s = ((j + 1) as f64).sqrt();
        for i in 0..n {
            out[(i, j)] = m[(i, j + 1)] * s;
        }
    }
    out
}

fn add_into(map: &mut BTreeMap<i32, CMatrix>, m: i32, x: CMatrix) {
    match map.get_mut(&m) {
        Some(acc) => *acc += x,
        None => {
            map.insert(m, x);
        }
    }
}

/// Harmonic decomposition of the frame Hamiltonian.
///
/// Powers of the displaced quadrature are expanded harmonic by harmonic with
/// truncated-matrix products, so the sum reproduces [`frame_hamiltonian`] at
/// the same truncation.
pub fn harmonic_series(params: &ModelParams) -> Result<HarmonicSeries> {
    params.validate()?;
    let n = params.dim;
    let pi = Complex64::new(params.pi(), 0.0);
    let id = fock::identity(n);

    // powers[k][m]: harmonic m of A^k, A = a e^{-i th} + a' e^{i th} + Pi e^{-2i th} + Pi* e^{2i th}
    let mut power: BTreeMap<i32, CMatrix> = BTreeMap::new();
    power.insert(0, id.clone());
    let mut scalar: BTreeMap<i32, Complex64> = BTreeMap::new();
    scalar.insert(0, Complex64::new(1.0, 0.0));

    let mut terms: BTreeMap<i32, CMatrix> = BTreeMap::new();
    let mut h0 = CMatrix::zeros(n, n);
    let delta = params.delta();
    for k in 0..n {
        h0[(k, k)] = Complex64::new(-delta * k as f64, 0.0);
    }
    terms.insert(0, h0);

    for k in 1..=4usize {
        let mut next: BTreeMap<i32, CMatrix> = BTreeMap::new();
        let mut next_scalar: BTreeMap<i32, Complex64> = BTreeMap::new();
        for (&m, p) in &power {
            add_into(&mut next, m - 1, right_mul_a(p));
            add_into(&mut next, m + 1, right_mul_adag(p));
            if pi != C0 {
                add_into(&mut next, m - 2, p * pi);
                add_into(&mut next, m + 2, p * pi.conj());
            }
        }
        if pi != C0 {
            for (&m, &s) in &scalar {
                *next_scalar.entry(m - 2).or_insert(C0) += s * pi;
                *next_scalar.entry(m + 2).or_insert(C0) += s * pi.conj();
            }
        }
        power = next;
        scalar = next_scalar;
        let g = match k {
            3 => params.g3 / 3.0,
            4 => params.g4 / 4.0,
            _ => continue,
        };
        if g == 0.0 {
            continue;
        }
        let gc = Complex64::new(g, 0.0);
        for (&m, p) in &power {
            let mut x = p * gc;
            if let Some(&s) = scalar.get(&m) {
                for i in 0..n {
                    x[(i, i)] -= s * gc;
                }
            }
            add_into(&mut terms, m, x);
        }
    }
    terms.retain(|&m, h| m == 0 || fock::max_abs(h) > 0.0);
    Ok(HarmonicSeries {
        terms,
        omega_d: params.omega_d,
    })
}

/// Frame Hamiltonian at time `t`, built directly from powers of the
/// displaced quadrature matrix.
pub fn frame_hamiltonian(params: &ModelParams, t: f64) -> Result<CMatrix> {
    params.validate()?;
    let n = params.dim;
    let (a, ad) = fock::ladder_operators(n)?;
    let th = 0.5 * params.omega_d * t;
    let e1 = Complex64::from_polar(1.0, th);
    let pi = params.pi();
    let x = 2.0 * pi * (2.0 * th).cos();
    let quad = &a * e1.conj() + &ad * e1 + fock::identity(n) * Complex64::new(x, 0.0);
    let q2 = &quad * &quad;
    let q3 = &q2 * &quad;
    let q4 = &q3 * &quad;
    let mut h = q3 * Complex64::new(params.g3 / 3.0, 0.0) + q4 * Complex64::new(params.g4 / 4.0, 0.0);
    let shift = params.g3 / 3.0 * x.powi(3) + params.g4 / 4.0 * x.powi(4);
    let delta = params.delta();
    for k in 0..n {
        h[(k, k)] -= Complex64::new(shift + delta * k as f64, 0.0);
    }
    Ok(h)
}

/// Lab-frame Hamiltonian at time `t`.
pub fn lab_hamiltonian(params: &ModelParams, t: f64) -> Result<CMatrix> {
    params.validate()?;
    let n = params.dim;
    let (a, ad) = fock::ladder_operators(n)?;
    let x = &a + &ad;
    let x2 = &x * &x;
    let x3 = &x2 * &x;
    let x4 = &x3 * &x;
    let num = fock::number_operator(n);
    let drive = (&a - &ad) * Complex64::new(0.0, -params.drive * (params.omega_d * t).cos());
    Ok(num * Complex64::new(params.omega_o, 0.0)
        + x3 * Complex64::new(params.g3 / 3.0, 0.0)
        + x4 * Complex64::new(params.g4 / 4.0, 0.0)
        + drive)
}
