//! Two-drive-period propagator of the frame Hamiltonian, Floquet modes and
//! quasienergies, and ground-branch tracking.
//!
//! The frame Hamiltonian obeys `H(t + T_d) = P H(t) P` with `P` the parity,
//! so `U(2 T_d) = (P U(T_d))^2`. Only one drive period is integrated, and the
//! Floquet modes are taken from `V = P U(T_d)`, whose eigenvalues separate the
//! parity partners that `U(2 T_d)` leaves degenerate.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effective::MIN_KERR;
use crate::error::{Error, Result};
use crate::fock::{self, CMatrix, CVector, C0};
use crate::model::{self, HarmonicSeries, ModelParams};

/// Unitarity defect that makes the integrator give up.
pub const INTEGRATOR_TOL: f64 = 1e-8;

/// Relative distance from the zone edge treated as a negative offset when rescaling.
pub const EDGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `exp(-i H(t_mid) dt)` per step, second order.
    #[default]
    Midpoint,
    /// Two-exponential commutator-free Magnus scheme, fourth order.
    Cf4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub steps_per_drive_period: usize,
    pub scheme: Scheme,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            steps_per_drive_period: 512,
            scheme: Scheme::Midpoint,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_drive_period < 64 {
            return Err(Error::InvalidParams(format!(
                "steps_per_drive_period must be at least 64, got {}",
                self.steps_per_drive_period
            )));
        }
        Ok(())
    }
}

/// Column-major band storage: entry `(j + d, j)` at `(d + w) + (2w + 1) j`.
#[derive(Debug, Clone)]
struct Band {
    n: usize,
    w: usize,
    data: Vec<Complex64>,
}

impl Band {
    fn zeros(n: usize, w: usize) -> Self {
        Band {
            n,
            w,
            data: vec![C0; (2 * w + 1) * n],
        }
    }

    fn from_dense(m: &CMatrix, w: usize) -> Self {
        let n = m.nrows();
        let mut b = Band::zeros(n, w);
        for j in 0..n {
            for d in -(w as isize)..=(w as isize) {
                let i = j as isize + d;
                if i >= 0 && (i as usize) < n {
                    b.data[(d + w as isize) as usize + (2 * w + 1) * j] = m[(i as usize, j)];
                }
            }
        }
        b
    }

    fn axpy(&mut self, z: Complex64, other: &Band) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += z * b;
        }
    }

    /// Largest absolute column sum.
    fn norm1(&self) -> f64 {
        self.data
            .chunks(2 * self.w + 1)
            .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        let w = self.w as isize;
        let n = self.n as isize;
        y.iter_mut().for_each(|v| *v = C0);
        for (j, &xj) in x.iter().enumerate().take(self.n) {
            if xj == C0 {
                continue;
            }
            let col = &self.data[(2 * self.w + 1) * j..(2 * self.w + 1) * (j + 1)];
            for d in -w..=w {
                let i = j as isize + d;
                if i >= 0 && i < n {
                    y[i as usize] += col[(d + w) as usize] * xj;
                }
            }
        }
    }
}

fn bandwidth(m: &CMatrix) -> usize {
    let n = m.nrows();
    let mut w = 0;
    for j in 0..n {
        for i in 0..n {
            if m[(i, j)] != C0 {
                w = w.max(i.abs_diff(j));
            }
        }
    }
    w
}

/// Harmonics of the frame Hamiltonian in band form.
struct BandedSeries {
    harmonics: Vec<(i32, Band)>,
    n: usize,
    w: usize,
    omega_d: f64,
}

impl BandedSeries {
    fn new(series: &HarmonicSeries) -> Self {
        let w = series.terms.values().map(bandwidth).max().unwrap_or(0).max(1);
        let harmonics = series
            .terms
            .iter()
            .map(|(&m, h)| (m, Band::from_dense(h, w)))
            .collect();
        BandedSeries {
            harmonics,
            n: series.dim(),
            w,
            omega_d: series.omega_d,
        }
    }

    fn at(&self, t: f64) -> Band {
        let mut out = Band::zeros(self.n, self.w);
        let theta = 0.5 * self.omega_d * t;
        for (m, b) in &self.harmonics {
            out.axpy(Complex64::from_polar(1.0, *m as f64 * theta), b);
        }
        out
    }
}

/// `x <- exp(-i dt H) x` by Taylor series, with substeps keeping `||H dt|| <= 1`.
fn expm_apply(h: &Band, norm1: f64, dt: f64, x: &mut [Complex64], term: &mut Vec<Complex64>, next: &mut Vec<Complex64>) {
    let sub = (norm1 * dt.abs()).ceil().max(1.0) as usize;
    let h_dt = dt / sub as f64;
    let n = x.len();
    term.resize(n, C0);
    next.resize(n, C0);
    for _ in 0..sub {
        term.copy_from_slice(x);
        for k in 1..100 {
            h.matvec(term, next);
            let f = Complex64::new(0.0, -h_dt / k as f64);
            let mut tn = 0.0f64;
            let mut xn = 0.0f64;
            for i in 0..n {
                let v = next[i] * f;
                term[i] = v;
                x[i] += v;
                tn += v.norm_sqr();
                xn += x[i].norm_sqr();
            }
            if tn <= 1e-34 * xn {
                break;
            }
        }
    }
}

/// Time-ordered propagator of `series` from `t0` to `t1` in `steps` steps.
pub fn propagate(series: &HarmonicSeries, t0: f64, t1: f64, steps: usize, scheme: Scheme) -> Result<CMatrix> {
    if steps == 0 {
        return Err(Error::InvalidParams("steps must be positive".into()));
    }
    let banded = BandedSeries::new(series);
    let n = banded.n;
    let dt = (t1 - t0) / steps as f64;
    // generator bands with their 1-norms, applied in order
    let mut stages: Vec<(Band, f64)> = Vec::new();
    match scheme {
        Scheme::Midpoint => {
            for s in 0..steps {
                let h = banded.at(t0 + (s as f64 + 0.5) * dt);
                let norm = h.norm1();
                stages.push((h, norm));
            }
        }
        Scheme::Cf4 => {
            let r3 = 3f64.sqrt();
            let (c1, c2) = (0.5 - r3 / 6.0, 0.5 + r3 / 6.0);
            let (a1, a2) = (0.25 + r3 / 6.0, 0.25 - r3 / 6.0);
            for s in 0..steps {
                let t = t0 + s as f64 * dt;
                let h1 = banded.at(t + c1 * dt);
                let h2 = banded.at(t + c2 * dt);
                let mut first = Band::zeros(n, banded.w);
                first.axpy(Complex64::new(a1, 0.0), &h1);
                first.axpy(Complex64::new(a2, 0.0), &h2);
                let mut second = Band::zeros(n, banded.w);
                second.axpy(Complex64::new(a2, 0.0), &h1);
                second.axpy(Complex64::new(a1, 0.0), &h2);
                let (n1, n2) = (first.norm1(), second.norm1());
                stages.push((first, n1));
                stages.push((second, n2));
            }
        }
    }
    let columns: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut x = vec![C0; n];
            x[j] = Complex64::new(1.0, 0.0);
            let mut term = Vec::with_capacity(n);
            let mut next = Vec::with_capacity(n);
            for (h, norm) in &stages {
                expm_apply(h, *norm, dt, &mut x, &mut term, &mut next);
            }
            x
        })
        .collect();
    let mut u = CMatrix::zeros(n, n);
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            u[(i, j)] = *v;
        }
    }
    let defect = fock::unitarity_defect(&u);
    if !defect.is_finite() || defect > INTEGRATOR_TOL {
        return Err(Error::IntegratorFailure(defect));
    }
    Ok(u)
}

/// Propagators over one drive period and over the frame period.
#[derive(Debug, Clone)]
pub struct Propagators {
    /// `U(T_d)`.
    pub drive_period: CMatrix,
    /// `P U(T_d)`, whose square is the frame-period propagator.
    pub half_step: CMatrix,
    /// `U(2 T_d)`.
    pub frame_period: CMatrix,
}

pub fn propagate_period(params: &ModelParams, settings: &SolverSettings) -> Result<Propagators> {
    settings.validate()?;
    params.validate()?;
    let series = model::harmonic_series(params)?;
    let ud = propagate(&series, 0.0, params.drive_period(), settings.steps_per_drive_period, settings.scheme)?;
    let mut v = ud.clone();
    for i in (1..v.nrows()).step_by(2) {
        for j in 0..v.ncols() {
            v[(i, j)] = -v[(i, j)];
        }
    }
    let ut = &v * &v;
    let defect = fock::unitarity_defect(&ut);
    if defect > INTEGRATOR_TOL {
        return Err(Error::IntegratorFailure(defect));
    }
    Ok(Propagators {
        drive_period: ud,
        half_step: v,
        frame_period: ut,
    })
}

/// Fold into `[0, omega_d/2)`.
pub fn fold(eps: f64, omega_d: f64) -> f64 {
    let zone = 0.5 * omega_d;
    let f = eps.rem_euclid(zone);
    if f >= zone {
        0.0
    } else {
        f
    }
}

#[derive(Debug, Clone)]
pub struct FloquetSolution {
    pub u_t: CMatrix,
    /// Quasienergies in `[0, omega_d/2)`, ascending.
    pub quasienergies: Vec<f64>,
    /// Modes as columns, ordered like `quasienergies`.
    pub modes: CMatrix,
    pub params: ModelParams,
    /// Per mode: population in the top tenth of the Fock ladder above 1e-6.
    pub truncation_flags: Vec<bool>,
}

impl FloquetSolution {
    pub fn dim(&self) -> usize {
        self.quasienergies.len()
    }

    pub fn mode(&self, k: usize) -> CVector {
        self.modes.column(k).into_owned()
    }

    pub fn photon_numbers(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| fock::mean_photon_number(self.modes.column(k).as_slice()))
            .collect()
    }

    pub fn any_truncation_flag(&self) -> bool {
        self.truncation_flags.iter().any(|&f| f)
    }

    /// Mode index with the largest `|<mode|state>|^2`, and that overlap.
    pub fn best_match(&self, state: &CVector) -> (usize, f64) {
        let overlaps = self.modes.adjoint() * state;
        overlaps
            .iter()
            .enumerate()
            .map(|(k, z)| (k, z.norm_sqr()))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
    }
}

fn assemble(
    u_t: CMatrix,
    mut pairs: Vec<(f64, CVector)>,
    params: &ModelParams,
) -> FloquetSolution {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let mut modes = CMatrix::zeros(n, n);
    for (k, (_, v)) in pairs.iter().enumerate() {
        modes.set_column(k, v);
    }
    let truncation_flags = pairs.iter().map(|(_, v)| fock::is_leaking(v.as_slice())).collect();
    FloquetSolution {
        u_t,
        quasienergies: pairs.into_iter().map(|(e, _)| e).collect(),
        modes,
        params: *params,
        truncation_flags,
    }
}

/// Quasienergies and modes of a frame-period propagator.
pub fn floquet_decompose(u_t: &CMatrix, params: &ModelParams) -> Result<FloquetSolution> {
    let dec = fock::eig_unitary(u_t)?;
    let period = params.frame_period();
    let tau = 2.0 * std::f64::consts::PI;
    let pairs = dec
        .values
        .iter()
        .enumerate()
        .map(|(k, &theta)| (fold((tau - theta).rem_euclid(tau) / period, params.omega_d), dec.vector(k)))
        .collect();
    Ok(assemble(u_t.clone(), pairs, params))
}

/// Decompose through `V = P U(T_d)`; `U(2 T_d) = V^2`.
pub fn floquet_from_half_step(props: &Propagators, params: &ModelParams) -> Result<FloquetSolution> {
    let dec = fock::eig_unitary(&props.half_step)?;
    let period = params.frame_period();
    let tau = 2.0 * std::f64::consts::PI;
    let pairs = dec
        .values
        .iter()
        .enumerate()
        .map(|(k, &phi)| {
            let theta = (2.0 * phi).rem_euclid(tau);
            (fold((tau - theta).rem_euclid(tau) / period, params.omega_d), dec.vector(k))
        })
        .collect();
    Ok(assemble(props.frame_period.clone(), pairs, params))
}

/// Propagate and decompose.
pub fn solve(params: &ModelParams, settings: &SolverSettings) -> Result<FloquetSolution> {
    let props = propagate_period(params, settings)?;
    floquet_from_half_step(&props, params)
}

/// `fold(-sgn(K) (eps - eps0)) / |K|`: zero at the tracked ground and
/// positive excitations for either sign of `K`.
pub fn rescale_quasienergy(eps: f64, eps0: f64, kerr: f64, omega_d: f64) -> Result<f64> {
    if kerr.abs() <= MIN_KERR || !kerr.is_finite() {
        return Err(Error::RescalingUndefined(kerr));
    }
    let zone = 0.5 * omega_d;
    let mut f = fold(-kerr.signum() * (eps - eps0), omega_d);
    // partners sitting a hair below the ground wrap to the zone edge
    if zone - f < EDGE_TOL * zone {
        f -= zone;
    }
    Ok(f / kerr.abs() + 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaledLevel {
    pub value: f64,
    pub photon_number: f64,
    /// Index into the solution's modes.
    pub index: usize,
}

/// Rescaled quasienergies, ascending.
pub fn rescaled_quasienergies(solution: &FloquetSolution, eps0: f64, kerr: f64) -> Result<Vec<RescaledLevel>> {
    let photons = solution.photon_numbers();
    let mut out = solution
        .quasienergies
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            Ok(RescaledLevel {
                value: rescale_quasienergy(e, eps0, kerr, solution.params.omega_d)?,
                photon_number: photons[k],
                index: k,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(out)
}

/// Modes with `<a'a> <= threshold` and the rest.
pub fn photon_filter(solution: &FloquetSolution, threshold: f64) -> (Vec<usize>, Vec<usize>) {
    let mut retained = Vec::new();
    let mut grayed = Vec::new();
    for (k, n) in solution.photon_numbers().into_iter().enumerate() {
        if n <= threshold {
            retained.push(k);
        } else {
            grayed.push(k);
        }
    }
    (retained, grayed)
}

#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub control: f64,
    pub eps0: f64,
    pub mode: CVector,
    pub overlap: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrackedBranch {
    pub points: Vec<BranchPoint>,
}

impl TrackedBranch {
    pub fn last(&self) -> Option<&BranchPoint> {
        self.points.last()
    }

    pub fn at(&self, control: f64) -> Option<&BranchPoint> {
        self.points.iter().rev().find(|p| p.control == control)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingSettings {
    pub solver: SolverSettings,
    pub overlap_threshold: f64,
    /// Maximum number of interval halvings after a failed step.
    pub max_refinements: u32,
}

impl Default for TrackingSettings {
    fn default() -> Self {
        TrackingSettings {
            solver: SolverSettings::default(),
            overlap_threshold: 0.5,
            max_refinements: 6,
        }
    }
}

/// Eigenstate of the static part of the undriven frame Hamiltonian closest
/// to the Fock vacuum.
pub fn static_ground_state(base: &ModelParams) -> Result<CVector> {
    let p0 = model::control_to_drive(0.0, base)?;
    let series = model::harmonic_series(&p0)?;
    let h0 = series.harmonic(0).cloned().unwrap_or_else(|| CMatrix::zeros(p0.dim, p0.dim));
    let dec = fock::eig_hermitian(&fock::hermitize(&h0))?;
    let (k, _) = (0..dec.dim())
        .map(|k| (k, dec.vectors[(0, k)].norm_sqr()))
        .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
    Ok(dec.vector(k))
}

/// Floquet solution at `eps2/K = control` on the driving condition.
pub fn solve_at_control(base: &ModelParams, control: f64, settings: &SolverSettings) -> Result<FloquetSolution> {
    let p = model::control_to_drive(control, base)?;
    solve(&p, settings)
}

/// Follow the mode continuously connected to the undriven ground state.
///
/// `on_point` sees every accepted solution, including ones inserted by
/// refinement.
pub fn track_ground_branch_with(
    base: &ModelParams,
    controls: &[f64],
    settings: &TrackingSettings,
    mut on_point: impl FnMut(&BranchPoint, &FloquetSolution),
) -> Result<TrackedBranch> {
    if controls.is_empty() {
        return Err(Error::InvalidParams("empty control list".into()));
    }
    if controls[0] != 0.0 {
        return Err(Error::InvalidParams("tracking must start at control 0".into()));
    }
    if controls.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParams("controls must be ascending".into()));
    }
    let mut branch = TrackedBranch::default();
    let mut prev_state = static_ground_state(base)?;
    let mut prev_control = 0.0;
    let mut cached: Option<(f64, FloquetSolution)> = None;

    let step = |target: f64,
                    prev_state: &CVector,
                    cached: &mut Option<(f64, FloquetSolution)>|
     -> Result<(BranchPoint, FloquetSolution)> {
        let sol = match cached {
            Some((c, s)) if *c == target => s.clone(),
            _ => solve_at_control(base, target, &settings.solver)?,
        };
        let (k, overlap) = sol.best_match(prev_state);
        let point = BranchPoint {
            control: target,
            eps0: sol.quasienergies[k],
            mode: sol.mode(k),
            overlap,
        };
        *cached = Some((target, sol.clone()));
        Ok((point, sol))
    };

    for &target in controls {
        // pending targets, refined on failure
        let mut queue = vec![target];
        let mut depth = 0;
        while let Some(&next) = queue.last() {
            let (point, sol) = step(next, &prev_state, &mut cached)?;
            if point.overlap >= settings.overlap_threshold {
                queue.pop();
                prev_state = point.mode.clone();
                prev_control = next;
                on_point(&point, &sol);
                branch.points.push(point);
                continue;
            }
            if depth >= settings.max_refinements {
                return Err(Error::BranchBreak {
                    last_good: prev_control,
                    failed: next,
                    overlap: point.overlap,
                });
            }
            depth += 1;
            log::info!("refining tracking step {prev_control} -> {next}");
            queue.push(0.5 * (prev_control + next));
        }
    }
    Ok(branch)
}

pub fn track_ground_branch(base: &ModelParams, controls: &[f64], settings: &TrackingSettings) -> Result<TrackedBranch> {
    track_ground_branch_with(base, controls, settings, |_, _| {})
}

/// `0, step, 2 step, ...` up to and including `end`.
pub fn control_ramp(end: f64, step: f64) -> Vec<f64> {
    let count = (end / step).round() as usize;
    let mut out: Vec<f64> = (0..=count).map(|k| k as f64 * step).collect();
    if let Some(last) = out.last_mut() {
        *last = end;
    }
    out
}
