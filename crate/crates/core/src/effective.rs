//! Hand-coded static effective Hamiltonians, parity, and rescaled spectra.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, CMatrix, CVector, C0};
use crate::model::{DerivedParams, ModelParams};

/// Smallest `|K|` accepted for rescaling.
pub const MIN_KERR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    HandCoded,
    Engine,
}

/// Whether the fourth-order frequency shift stays in the Hamiltonian or is
/// assumed absorbed into the drive-frequency calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetuningMode {
    #[default]
    Kept,
    Absorbed,
}

/// Named coefficients, units of `omega_o`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub delta4: [f64; 3],
    pub k4: [f64; 2],
    pub lambda4: f64,
    pub eps4_4: f64,
    pub k2: f64,
    pub eps2_2: f64,
}

impl Coefficients {
    /// `sum_k Delta4_[k] |Pi|^{2k}`.
    pub fn delta4_total(&self, pi: f64) -> f64 {
        let p2 = pi * pi;
        self.delta4[0] + self.delta4[1] * p2 + self.delta4[2] * p2 * p2
    }

    pub fn k4_total(&self, pi: f64) -> f64 {
        self.k4[0] + self.k4[1] * pi * pi
    }

    /// Largest magnitude among the fourth-order entries.
    pub fn fourth_order_norm(&self) -> f64 {
        self.delta4
            .iter()
            .chain(self.k4.iter())
            .chain([self.lambda4, self.eps4_4].iter())
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone)]
pub struct EffectiveModel {
    pub order: u32,
    pub matrix: CMatrix,
    pub coefficients: Coefficients,
    pub source: Source,
}

impl EffectiveModel {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Order-2 validity at Fock level `n`: the sextic correction must stay
    /// below the quartic one, `|lambda4| n < |K2 - K4_[0]|`.
    pub fn order2_reliable_at(&self, n: usize) -> bool {
        let c = &self.coefficients;
        c.lambda4.abs() * (n as f64) < (c.k2 - c.k4[0]).abs()
    }

    /// First Fock level where [`Self::order2_reliable_at`] fails.
    pub fn order2_breakdown_level(&self) -> Option<usize> {
        let c = &self.coefficients;
        if c.lambda4 == 0.0 {
            return None;
        }
        let n = ((c.k2 - c.k4[0]).abs() / c.lambda4.abs()).ceil() as usize;
        Some(n.max(1))
    }
}

/// `(a')^p a^q` as a dense truncated matrix.
pub fn monomial_matrix(n: usize, p: usize, q: usize) -> CMatrix {
    let mut out = CMatrix::zeros(n, n);
    // <k+p-q| a'^p a^q |k> = sqrt(k!/(k-q)!) sqrt((k-q+p)!/(k-q)!)
    for k in q..n {
        let mid = k - q;
        let row = mid + p;
        if row >= n {
            continue;
        }
        let mut amp = 1.0f64;
        for j in (mid + 1)..=k {
            amp *= (j as f64).sqrt();
        }
        for j in (mid + 1)..=row {
            amp *= (j as f64).sqrt();
        }
        out[(row, k)] = Complex64::new(amp, 0.0);
    }
    out
}

/// `eps2 (a'^2 + a^2) - K a'^2 a^2`.
pub fn h_eff2(derived: &DerivedParams, n: usize) -> Result<EffectiveModel> {
    kerr_cat_model(derived.eps2_2, derived.k2, n)
}

/// Order-2 model from raw `eps2` and `K`.
pub fn kerr_cat_model(eps2: f64, k: f64, n: usize) -> Result<EffectiveModel> {
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    let sq = monomial_matrix(n, 2, 0) + monomial_matrix(n, 0, 2);
    let kerr = monomial_matrix(n, 2, 2);
    let matrix = sq * Complex64::new(eps2, 0.0) - kerr * Complex64::new(k, 0.0);
    Ok(EffectiveModel {
        order: 2,
        matrix,
        coefficients: Coefficients {
            k2: k,
            eps2_2: eps2,
            ..Default::default()
        },
        source: Source::HandCoded,
    })
}

/// Fourth-order coefficient table evaluated with `omega_a = omega_a2`.
pub fn fourth_order_coefficients(params: &ModelParams, derived: &DerivedParams) -> Coefficients {
    let wa = derived.omega_a2;
    let g3 = params.g3;
    let g4 = params.g4;
    let a = g4 * g4 / wa;
    let b = g3 * g3 * g4 / (wa * wa);
    let c = g3.powi(4) / wa.powi(3);
    let pi2 = derived.pi * derived.pi;
    Coefficients {
        delta4: [
            -(9.0 * a + 47.0 * b - 6269.0 / 324.0 * c),
            -(54.0 / 5.0 * a + 671.0 / 10.0 * b + 113.0 / 360.0 * c),
            -(-9.0 / 2.0 * a + 15113.0 / 600.0 * b - 297947.0 / 32400.0 * c),
        ],
        k4: [
            -(153.0 / 16.0 * a + 225.0 / 4.0 * b + 805.0 / 36.0 * c),
            -(27.0 / 5.0 * a + 671.0 / 20.0 * b + 113.0 / 720.0 * c),
        ],
        lambda4: -(17.0 / 8.0 * a + 25.0 / 2.0 * b + 805.0 / 162.0 * c),
        // the g3^2 g4 entry carries a single power of omega_a
        eps4_4: (33.0 / 8.0 * a - 101.0 / 96.0 * g3 * g3 * g4 / wa - 2009.0 / 1296.0 * c) * pi2,
        k2: derived.k2,
        eps2_2: derived.eps2_2,
    }
}

/// Order-2 model plus the fourth-order corrections.
pub fn h_eff4(
    params: &ModelParams,
    derived: &DerivedParams,
    n: usize,
    detuning: DetuningMode,
) -> Result<EffectiveModel> {
    let base = h_eff2(derived, n)?;
    let c = fourth_order_coefficients(params, derived);
    let delta = match detuning {
        DetuningMode::Kept => c.delta4_total(derived.pi),
        DetuningMode::Absorbed => 0.0,
    };
    let re = |x: f64| Complex64::new(x, 0.0);
    let eps4 = re(c.eps4_4);
    let matrix = base.matrix
        - monomial_matrix(n, 1, 1) * re(delta)
        - monomial_matrix(n, 2, 2) * re(c.k4_total(derived.pi))
        - monomial_matrix(n, 3, 3) * re(c.lambda4)
        + monomial_matrix(n, 4, 0) * eps4
        + monomial_matrix(n, 0, 4) * eps4.conj();
    Ok(EffectiveModel {
        order: 4,
        matrix,
        coefficients: c,
        source: Source::HandCoded,
    })
}

/// `diag((-1)^n)`.
pub fn parity_operator(n: usize) -> Result<CMatrix> {
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    Ok(CMatrix::from_diagonal(&CVector::from_fn(n, |k, _| {
        Complex64::new(if k % 2 == 0 { 1.0 } else { -1.0 }, 0.0)
    })))
}

/// Eigenpairs of a Hermitian matrix with parity labels, ascending energy.
#[derive(Debug, Clone)]
pub struct LabeledSpectrum {
    pub energies: Vec<f64>,
    pub parities: Vec<i8>,
    pub vectors: CMatrix,
}

impl LabeledSpectrum {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn vector(&self, k: usize) -> CVector {
        self.vectors.column(k).into_owned()
    }
}

fn parity_leak(h: &CMatrix) -> f64 {
    let n = h.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if (i + j) % 2 == 1 {
                worst = worst.max(h[(i, j)].norm());
            }
        }
    }
    worst
}

/// Diagonalize sector by sector when `H` conserves parity, so levels in
/// opposite sectors never mix however close they are.
pub fn eig_with_parity(h: &CMatrix) -> Result<LabeledSpectrum> {
    let n = h.nrows();
    let scale = fock::max_abs(h).max(f64::MIN_POSITIVE);
    if parity_leak(h) > 1e-13 * scale {
        let dec = fock::eig_hermitian(h)?;
        let parities = (0..n)
            .map(|k| {
                let v = dec.vectors.column(k);
                if fock::parity_expectation(v.as_slice()) >= 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        return Ok(LabeledSpectrum {
            energies: dec.values,
            parities,
            vectors: dec.vectors,
        });
    }
    let mut levels: Vec<(f64, i8, CVector)> = Vec::with_capacity(n);
    for (parity, offset) in [(1i8, 0usize), (-1i8, 1usize)] {
        let idx: Vec<usize> = (offset..n).step_by(2).collect();
        if idx.is_empty() {
            continue;
        }
        let block = CMatrix::from_fn(idx.len(), idx.len(), |i, j| h[(idx[i], idx[j])]);
        let dec = fock::eig_hermitian(&block)?;
        for (k, &e) in dec.values.iter().enumerate() {
            let mut v = CVector::from_element(n, C0);
            for (i, &row) in idx.iter().enumerate() {
                v[row] = dec.vectors[(i, k)];
            }
            levels.push((e, parity, v));
        }
    }
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut vectors = CMatrix::zeros(n, n);
    for (k, (_, _, v)) in levels.iter().enumerate() {
        vectors.set_column(k, v);
    }
    Ok(LabeledSpectrum {
        energies: levels.iter().map(|l| l.0).collect(),
        parities: levels.iter().map(|l| l.1).collect(),
        vectors,
    })
}

/// One rescaled level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    /// Rescaled excitation energy, `>= 0`.
    pub energy: f64,
    pub parity: i8,
    pub photon_number: f64,
    /// Index into the raw ascending-energy eigenbasis.
    pub index: usize,
}

/// Rescaled excitation spectrum with eigenvectors ordered like `levels`.
#[derive(Debug, Clone)]
pub struct ExcitationSpectrum {
    pub levels: Vec<Level>,
    pub vectors: CMatrix,
    pub kerr: f64,
}

impl ExcitationSpectrum {
    pub fn energies(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.energy).collect()
    }

    pub fn parities(&self) -> Vec<i8> {
        self.levels.iter().map(|l| l.parity).collect()
    }

    pub fn vector(&self, k: usize) -> CVector {
        self.vectors.column(k).into_owned()
    }

    /// Number of levels strictly below `threshold` in rescaled units.
    pub fn count_below(&self, threshold: f64) -> usize {
        self.levels.iter().filter(|l| l.energy < threshold).count()
    }
}

/// Map raw energies to `-E/K - min(-E/K)`, so the well bottom sits at zero
/// and excitations are positive for either sign of `K`.
pub fn rescale_energies(energies: &[f64], kerr: f64) -> Result<Vec<f64>> {
    if kerr.abs() <= MIN_KERR || !kerr.is_finite() {
        return Err(Error::RescalingUndefined(kerr));
    }
    let lam: Vec<f64> = energies.iter().map(|e| -e / kerr).collect();
    let min = lam.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(lam.into_iter().map(|l| l - min).collect())
}

pub fn excitation_spectrum(model: &EffectiveModel, kerr: f64) -> Result<ExcitationSpectrum> {
    if kerr.abs() <= MIN_KERR || !kerr.is_finite() {
        return Err(Error::RescalingUndefined(kerr));
    }
    // diagonalize the K-normalized matrix so tiny coefficients keep full precision
    let scaled = &model.matrix * Complex64::new(-1.0 / kerr, 0.0);
    let spec = eig_with_parity(&scaled)?;
    let min = spec.energies.first().copied().unwrap_or(0.0);
    let levels = spec
        .energies
        .iter()
        .enumerate()
        .map(|(k, &lam)| Level {
            energy: lam - min,
            parity: spec.parities[k],
            photon_number: fock::mean_photon_number(spec.vectors.column(k).as_slice()),
            index: k,
        })
        .collect();
    Ok(ExcitationSpectrum {
        levels,
        vectors: spec.vectors,
        kerr,
    })
}

/// Below-well bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsqptInfo {
    pub n_b: usize,
    pub critical_energy: f64,
}

/// `n_b = floor(2 control / pi)` and the separatrix energy `control^2`.
pub fn esqpt_info(control: f64) -> Result<EsqptInfo> {
    if !(control >= 0.0) || !control.is_finite() {
        return Err(Error::InvalidParams(format!("control must be >= 0, got {control}")));
    }
    Ok(EsqptInfo {
        n_b: (2.0 * control / std::f64::consts::PI).floor() as usize,
        critical_energy: control * control,
    })
}
