//! Experiment drivers: spectra, Wigner panels, IPR and `U_S` distance maps,
//! order scans and ground-branch tracking, with CSV output and a manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{self, FrameUnitary, GridSpec, WignerGrid};
use crate::config::{logspace, Experiment, RunConfig};
use crate::effective::{self, DetuningMode, EffectiveModel};
use crate::error::{Error, Result};
use crate::expansion;
use crate::floquet::{self, FloquetSolution, SolverSettings};
use crate::fock::{self, CVector};
use crate::model::{self, ModelParams};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Iso-Kerr contour levels emitted next to maps.
pub const ISO_KERR_LEVELS: [f64; 4] = [-1e-5, 1e-5, 1e-4, 1e-3];

/// Candidates below this overlap never match a Wigner selector.
pub const WIGNER_MIN_OVERLAP: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointStatus {
    Ok,
    TruncationFlag,
    BranchBreak,
    Error,
}

impl PointStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointStatus::Ok => "ok",
            PointStatus::TruncationFlag => "truncation-flag",
            PointStatus::BranchBreak => "branch-break",
            PointStatus::Error => "error",
        }
    }

    /// Whether a resumed run keeps this result.
    pub fn is_final(&self) -> bool {
        matches!(self, PointStatus::Ok | PointStatus::TruncationFlag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub key: String,
    pub status: PointStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub config: RunConfig,
    pub code_version: String,
    pub points: Vec<PointRecord>,
    pub wall_time_s: f64,
    pub files: Vec<FileRecord>,
}

impl RunManifest {
    pub fn all_ok(&self) -> bool {
        self.points.iter().all(|p| p.status == PointStatus::Ok)
    }

    pub fn count(&self, status: PointStatus) -> usize {
        self.points.iter().filter(|p| p.status == status).count()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let m: RunManifest = serde_json::from_str(&text)?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("manifest schema {} unsupported", m.schema_version)));
        }
        Ok(m)
    }

    /// Recompute every file checksum and compare with the record.
    pub fn verify_files(&self, dir: &Path) -> Result<()> {
        for f in &self.files {
            let got = file_record(dir, &f.name)?;
            if got.sha256 != f.sha256 {
                return Err(Error::Consistency(format!("checksum mismatch for {}", f.name)));
            }
        }
        Ok(())
    }

    pub fn point(&self, key: &str) -> Option<&PointRecord> {
        self.points.iter().find(|p| p.key == key)
    }
}

fn file_record(dir: &Path, name: &str) -> Result<FileRecord> {
    let bytes = std::fs::read(dir.join(name))?;
    Ok(FileRecord {
        name: name.to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

/// Result of one point computation before bookkeeping.
struct Outcome {
    values: BTreeMap<String, f64>,
    truncated: bool,
    note: Option<String>,
}

fn record(key: String, started: Instant, result: Result<Outcome>) -> PointRecord {
    let wall_time_s = started.elapsed().as_secs_f64();
    match result {
        Ok(o) => PointRecord {
            key,
            status: if o.truncated { PointStatus::TruncationFlag } else { PointStatus::Ok },
            message: o.note,
            values: o.values,
            wall_time_s,
        },
        Err(e) => PointRecord {
            key,
            status: if matches!(e, Error::BranchBreak { .. }) {
                PointStatus::BranchBreak
            } else {
                PointStatus::Error
            },
            message: Some(e.to_string()),
            values: BTreeMap::new(),
            wall_time_s,
        },
    }
}

/// CSV file assembled in memory, written in one go.
struct Table {
    name: String,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Table {
            name: name.to_string(),
            writer,
        })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    fn finish(self, dir: &Path) -> Result<FileRecord> {
        let bytes = self.writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        std::fs::write(dir.join(&self.name), &bytes)?;
        file_record(dir, &self.name)
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn base_params(cfg: &RunConfig, g3: f64, g4: f64) -> ModelParams {
    let mut p = cfg.model.params();
    p.g3 = g3;
    p.g4 = g4;
    p
}

fn map_key(control: f64, g3: f64, g4: f64) -> String {
    format!("control={control};g3={g3:e};g4={g4:e}")
}

/// Run `f` over `items` on `workers` threads; results keep input order.
fn parallel<T: Sync, R: Send>(workers: usize, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Result<Vec<R>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

/// Effective model used for spectra: closed forms at orders 2 and 4, engine at 6.
pub fn spectrum_model(params: &ModelParams, order: u32) -> Result<EffectiveModel> {
    let d = model::derive(params)?;
    match order {
        2 => effective::h_eff2(&d, params.dim),
        4 => effective::h_eff4(params, &d, params.dim, DetuningMode::Kept),
        _ => {
            let res = expansion::expand(params, order)?;
            expansion::engine_model(&res, order, params.dim)
        }
    }
}

/// Below-well IPR at each order, sharing one Floquet solution.
#[derive(Debug)]
pub struct IprPoint {
    pub params: ModelParams,
    pub kerr: f64,
    pub reports: Vec<(u32, Result<analysis::IprReport>)>,
    pub truncated: bool,
}

/// Floquet solution, engine `U_S` and engine `H_eff` at each order, and `I_bar`.
pub fn ipr_point(base: &ModelParams, control: f64, orders: &[u32], solver: &SolverSettings) -> Result<IprPoint> {
    let params = model::control_to_drive(control, base)?;
    let kerr = model::derive(&params)?.k2;
    let solution = floquet::solve(&params, solver)?;
    let max_order = orders.iter().copied().max().unwrap_or(2);
    let mut reports = Vec::new();
    let mut truncated = false;
    let full = expansion::expand(&params, max_order);
    for &o in orders {
        let report = match &full {
            Ok(res) => ipr_with(&params, kerr, &solution, res, o, control, &mut truncated),
            Err(_) => expansion::expand(&params, o)
                .and_then(|res| ipr_with(&params, kerr, &solution, &res, o, control, &mut truncated)),
        };
        reports.push((o, report));
    }
    Ok(IprPoint {
        params,
        kerr,
        reports,
        truncated,
    })
}

fn ipr_with(
    params: &ModelParams,
    kerr: f64,
    solution: &FloquetSolution,
    res: &expansion::ExpansionResult,
    order: u32,
    control: f64,
    truncated: &mut bool,
) -> Result<analysis::IprReport> {
    let model = expansion::engine_model(res, order, params.dim)?;
    let u_s = FrameUnitary::from_expansion(res, order, params.dim)?;
    let report = analysis::avg_ipr_below_well(&model, kerr, solution, &u_s, control)?;
    let spec = effective::excitation_spectrum(&model, kerr)?;
    for k in 0..report.n_b {
        let state = spec.vector(k);
        let moved = &u_s.matrix * &state;
        let (j, _) = solution.best_match(&moved);
        if fock::is_leaking(state.as_slice()) || solution.truncation_flags[j] {
            *truncated = true;
        }
    }
    Ok(report)
}

/// Run the configured experiment into `out`.
pub fn run(cfg: &RunConfig, out: &Path, resume: bool) -> Result<RunManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let previous = if resume {
        match RunManifest::load(out) {
            Ok(m) if same_run(&m.config, cfg) => Some(m),
            Ok(_) => {
                log::warn!("existing manifest belongs to a different configuration, starting over");
                None
            }
            Err(_) => None,
        }
    } else {
        None
    };
    let started = Instant::now();
    let exp = cfg.experiment()?;
    let (points, files) = match exp {
        Experiment::IprMap => run_ipr_map(cfg, out, previous.as_ref())?,
        Experiment::UsdistMap => run_usdist_map(cfg, out, previous.as_ref())?,
        Experiment::OrderScan => run_order_scan(cfg, out, previous.as_ref())?,
        Experiment::Spectrum => run_spectrum(cfg, out)?,
        Experiment::Track => run_track(cfg, out)?,
        Experiment::Wigner => run_wigner(cfg, out)?,
    };
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        experiment: exp,
        config: cfg.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        points,
        wall_time_s: started.elapsed().as_secs_f64(),
        files,
    };
    std::fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn same_run(a: &RunConfig, b: &RunConfig) -> bool {
    let strip = |c: &RunConfig| {
        let mut c = c.clone();
        c.workers = 1;
        c.out = None;
        c
    };
    strip(a) == strip(b)
}

/// Reuse a finished point from a previous manifest or compute it.
fn reuse_or(previous: Option<&RunManifest>, key: String, compute: impl FnOnce(String) -> PointRecord) -> PointRecord {
    match previous.and_then(|m| m.point(&key)) {
        Some(p) if p.status.is_final() => p.clone(),
        _ => compute(key),
    }
}

fn map_points(cfg: &RunConfig) -> Result<Vec<(f64, f64, f64)>> {
    let grid = cfg.grid()?;
    Ok(cfg
        .control
        .values()
        .into_iter()
        .flat_map(|c| grid.points().into_iter().map(move |(g3, g4)| (c, g3, g4)))
        .collect())
}

fn run_ipr_map(cfg: &RunConfig, out: &Path, previous: Option<&RunManifest>) -> Result<(Vec<PointRecord>, Vec<FileRecord>)> {
    let order = cfg.effective.order;
    let settings = cfg.solver.settings();
    let records = parallel(cfg.workers, &map_points(cfg)?, |&(c, g3, g4)| {
        reuse_or(previous, map_key(c, g3, g4), |key| {
            let t = Instant::now();
            let result = ipr_point(&base_params(cfg, g3, g4), c, &[order], &settings).and_then(|p| {
                let (_, rep) = p.reports.into_iter().next().expect("one order requested");
                let rep = rep?;
                Ok(Outcome {
                    values: BTreeMap::from([
                        ("avg_ipr".into(), rep.average),
                        ("n_b".into(), rep.n_b as f64),
                        ("kerr".into(), p.kerr),
                        ("drive".into(), p.params.drive),
                    ]),
                    truncated: p.truncated,
                    note: None,
                })
            });
            record(key, t, result)
        })
    })?;
    let mut table = Table::new(
        "ipr_map.csv",
        &["control", "g3_per_omega_o", "g4_per_omega_o", "avg_ipr", "n_b", "kerr_per_omega_o", "status"],
    )?;
    for (p, &(c, g3, g4)) in records.iter().zip(&map_points(cfg)?) {
        table.row(&[
            num(c),
            num(g3),
            num(g4),
            opt(p.values.get("avg_ipr").copied()),
            opt(p.values.get("n_b").copied()),
            num(model::kerr2(g3, g4, cfg.model.omega_o)),
            p.status.as_str().into(),
        ])?;
    }
    let files = vec![table.finish(out)?, contours(cfg, out)?];
    Ok((records, files))
}

fn run_usdist_map(cfg: &RunConfig, out: &Path, previous: Option<&RunManifest>) -> Result<(Vec<PointRecord>, Vec<FileRecord>)> {
    let order = cfg.effective.order;
    let records = parallel(cfg.workers, &map_points(cfg)?, |&(c, g3, g4)| {
        reuse_or(previous, map_key(c, g3, g4), |key| {
            let t = Instant::now();
            let result = usdist_point(&base_params(cfg, g3, g4), c, order).map(|d| Outcome {
                values: BTreeMap::from([("distance".into(), d)]),
                truncated: false,
                note: None,
            });
            record(key, t, result)
        })
    })?;
    let mut table = Table::new("usdist_map.csv", &["control", "g3_per_omega_o", "g4_per_omega_o", "distance", "status"])?;
    for (p, &(c, g3, g4)) in records.iter().zip(&map_points(cfg)?) {
        table.row(&[
            num(c),
            num(g3),
            num(g4),
            opt(p.values.get("distance").copied()),
            p.status.as_str().into(),
        ])?;
    }
    let files = vec![table.finish(out)?, contours(cfg, out)?];
    Ok((records, files))
}

/// `d(U_S, 1)` at the given control.
pub fn usdist_point(base: &ModelParams, control: f64, order: u32) -> Result<f64> {
    let params = model::control_to_drive(control, base)?;
    let res = expansion::expand(&params, order)?;
    let u_s = expansion::u_s_matrix(&res, order, params.dim)?;
    analysis::trace_distance_identity(&u_s)
}

/// K = 0, iso-K and boundary curves over the grid's g3 range.
fn contours(cfg: &RunConfig, out: &Path) -> Result<FileRecord> {
    let grid = cfg.grid()?;
    let sign = grid.g4_sign as f64;
    let (lo, hi) = (grid.g4_min, grid.g4_max);
    let inside = |g4: f64| g4 * sign >= lo && g4 * sign <= hi;
    let mut table = Table::new("contours.csv", &["kind", "level", "g3_per_omega_o", "g4_per_omega_o"])?;
    let wo = cfg.model.omega_o;
    for g3 in logspace(grid.g3_min, grid.g3_max, 200) {
        // K2 = -3 g4/2 + 10 g3^2/(3 omega_o) solved for g4
        let g4_for = |k: f64| (10.0 * g3 * g3 / (3.0 * wo) - k) / 1.5;
        let g4 = g4_for(0.0);
        if inside(g4) {
            table.row(&["k_zero".into(), num(0.0), num(g3), num(g4)])?;
        }
        for k in ISO_KERR_LEVELS {
            let g4 = g4_for(k);
            if inside(g4) {
                table.row(&["iso_k".into(), num(k), num(g3), num(g4)])?;
            }
        }
        for c in cfg.control.values() {
            if c > 0.0 {
                let g4 = sign * analysis::boundary_curve(g3, c, cfg.effective.boundary_a)?;
                if inside(g4) {
                    table.row(&["boundary".into(), num(c), num(g3), num(g4)])?;
                }
            }
        }
    }
    table.finish(out)
}

/// First `g3` where `values` falls below `level`, interpolated in `log g3`.
pub fn crossing(g3: &[f64], values: &[Option<f64>], level: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = g3.iter().zip(values).filter_map(|(&g, v)| v.map(|v| (g, v))).collect();
    if pts.first().is_some_and(|p| p.1 < level) {
        return Some(pts[0].0);
    }
    pts.windows(2).find(|w| w[0].1 >= level && w[1].1 < level).map(|w| {
        let (x0, y0) = (w[0].0.ln(), w[0].1);
        let (x1, y1) = (w[1].0.ln(), w[1].1);
        (x0 + (level - y0) * (x1 - x0) / (y1 - y0)).exp()
    })
}

fn run_order_scan(cfg: &RunConfig, out: &Path, previous: Option<&RunManifest>) -> Result<(Vec<PointRecord>, Vec<FileRecord>)> {
    let grid = cfg.grid()?;
    let g3s = grid.g3_values();
    let g4 = cfg.model.g4;
    let control = cfg.control.min;
    let orders: Vec<u32> = cfg.effective.orders.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let settings = cfg.solver.settings();
    let records = parallel(cfg.workers, &g3s, |&g3| {
        reuse_or(previous, map_key(control, g3, g4), |key| {
            let t = Instant::now();
            let result = ipr_point(&base_params(cfg, g3, g4), control, &orders, &settings).and_then(|p| {
                let mut values = BTreeMap::new();
                let mut notes = Vec::new();
                for (o, rep) in p.reports {
                    match rep {
                        Ok(r) => {
                            values.insert(format!("avg_ipr_o{o}"), r.average);
                        }
                        Err(e) if o > 2 => notes.push(format!("order {o} unavailable: {e}")),
                        Err(e) => return Err(e),
                    }
                }
                Ok(Outcome {
                    values,
                    truncated: p.truncated,
                    note: (!notes.is_empty()).then(|| notes.join("; ")),
                })
            });
            record(key, t, result)
        })
    })?;
    let mut table = Table::new("order_scan.csv", &["order", "g3_per_omega_o", "g4_per_omega_o", "control", "avg_ipr", "status"])?;
    let mut cross = Table::new("crossings.csv", &["order", "g3_crossing_per_omega_o"])?;
    for &o in &orders {
        let key = format!("avg_ipr_o{o}");
        let vals: Vec<Option<f64>> = records.iter().map(|r| r.values.get(&key).copied()).collect();
        for ((r, g3), v) in records.iter().zip(&g3s).zip(&vals) {
            table.row(&[o.to_string(), num(*g3), num(g4), num(control), opt(*v), r.status.as_str().into()])?;
        }
        cross.row(&[o.to_string(), opt(crossing(&g3s, &vals, 0.5))])?;
    }
    Ok((records, vec![table.finish(out)?, cross.finish(out)?]))
}

/// Union of the tracking ramp and the requested controls, ascending.
fn tracking_controls(requested: &[f64], step: f64) -> Vec<f64> {
    let max = requested.iter().copied().fold(0.0, f64::max);
    let mut all: Vec<f64> = floquet::control_ramp(max, step);
    all.extend_from_slice(requested);
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

fn parity_label(state: &[num_complex::Complex64]) -> i8 {
    let p = fock::parity_expectation(state);
    if p > 0.5 {
        1
    } else if p < -0.5 {
        -1
    } else {
        0
    }
}

fn run_spectrum(cfg: &RunConfig, out: &Path) -> Result<(Vec<PointRecord>, Vec<FileRecord>)> {
    let base = cfg.model.params();
    let requested = cfg.control.values();
    let order = cfg.effective.order;
    let threshold = cfg.effective.photon_threshold;
    let mut table = Table::new(
        "spectrum.csv",
        &["control", "kind", "level", "value_rescaled", "parity", "photon_number", "grayed"],
    )?;
    let mut ground = Table::new("ground.csv", &["control", "eps0_per_omega_o", "overlap"])?;
    let mut floquet_rows: BTreeMap<u64, (PointRecord, Vec<[String; 7]>)> = BTreeMap::new();
    let wanted: BTreeSet<u64> = requested.iter().map(|c| c.to_bits()).collect();
    let ramp = tracking_controls(&requested, cfg.solver.tracking_step);
    let tracking = cfg.solver.tracking();
    let mut clock = Instant::now();
    let tracked = floquet::track_ground_branch_with(&base, &ramp, &tracking, |point, sol| {
        if !wanted.contains(&point.control.to_bits()) {
            return;
        }
        let t = clock;
        let result = floquet_levels(sol, point, threshold);
        let rec = record(format!("control={}", point.control), t, result.as_ref().map(|(o, _)| Outcome {
            values: o.values.clone(),
            truncated: o.truncated,
            note: None,
        }).map_err(|e| Error::Numeric(e.to_string())));
        let rows = result.map(|(_, r)| r).unwrap_or_default();
        floquet_rows.insert(point.control.to_bits(), (rec, rows));
        clock = Instant::now();
    });
    let break_msg = tracked.as_ref().err().map(|e| e.to_string());
    if let Ok(b) = &tracked {
        for p in b.points.iter().filter(|p| wanted.contains(&p.control.to_bits())) {
            ground.row(&[num(p.control), num(p.eps0), num(p.overlap)])?;
        }
    }
    let mut records = Vec::new();
    for &c in &requested {
        let t = Instant::now();
        let params = model::control_to_drive(c, &base)?;
        let kerr = model::derive(&params)?.k2;
        let model = spectrum_model(&params, order)?;
        let spec = effective::excitation_spectrum(&model, kerr)?;
        for (k, l) in spec.levels.iter().enumerate() {
            table.row(&[
                num(c),
                "effective".into(),
                k.to_string(),
                num(l.energy),
                l.parity.to_string(),
                num(l.photon_number),
                "false".into(),
            ])?;
        }
        match floquet_rows.remove(&c.to_bits()) {
            Some((rec, rows)) => {
                for r in rows {
                    table.row(&r)?;
                }
                records.push(rec);
            }
            None => records.push(PointRecord {
                key: format!("control={c}"),
                status: PointStatus::BranchBreak,
                message: break_msg.clone(),
                values: BTreeMap::new(),
                wall_time_s: t.elapsed().as_secs_f64(),
            }),
        }
    }
    Ok((records, vec![table.finish(out)?, ground.finish(out)?]))
}

fn floquet_levels(
    sol: &FloquetSolution,
    point: &floquet::BranchPoint,
    threshold: Option<f64>,
) -> Result<(Outcome, Vec<[String; 7]>)> {
    let kerr = model::derive(&sol.params)?.k2;
    let levels = floquet::rescaled_quasienergies(sol, point.eps0, kerr)?;
    let rows = levels
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let mode = sol.modes.column(l.index);
            [
                num(point.control),
                "floquet".into(),
                k.to_string(),
                num(l.value),
                parity_label(mode.as_slice()).to_string(),
                num(l.photon_number),
                threshold.is_some_and(|t| l.photon_number > t).to_string(),
            ]
        })
        .collect();
    let truncated = fock::is_leaking(point.mode.as_slice());
    Ok((
        Outcome {
            values: BTreeMap::from([("eps0".into(), point.eps0), ("overlap".into(), point.overlap)]),
            truncated,
            note: None,
        },
        rows,
    ))
}

fn run_track(cfg: &RunConfig, out: &Path) -> Result<(Vec<PointRecord>, Vec<FileRecord>)> {
    let base = cfg.model.params();
    let requested = cfg.control.values();
    let ramp = tracking_controls(&requested, cfg.solver.tracking_step);
    let mut table = Table::new("branch.csv", &["control", "eps0_per_omega_o", "overlap", "photon_number", "requested"])?;
    let wanted: BTreeSet<u64> = requested.iter().map(|c| c.to_bits()).collect();
    let mut records = Vec::new();
    let mut clock = Instant::now();
    let result = floquet::track_ground_branch_with(&base, &ramp, &cfg.solver.tracking(), |p, _| {
        if wanted.contains(&p.control.to_bits()) {
            records.push(record(
                format!("control={}", p.control),
                clock,
                Ok(Outcome {
                    values: BTreeMap::from([("eps0".into(), p.eps0), ("overlap".into(), p.overlap)]),
                    truncated: fock::is_leaking(p.mode.as_slice()),
                    note: None,
                }),
            ));
            clock = Instant::now();
        }
    });
    match &result {
        Ok(branch) => {
            for p in &branch.points {
                table.row(&[
                    num(p.control),
                    num(p.eps0),
                    num(p.overlap),
                    num(fock::mean_photon_number(p.mode.as_slice())),
                    wanted.contains(&p.control.to_bits()).to_string(),
                ])?;
            }
        }
        Err(e) => {
            let done: BTreeSet<String> = records.iter().map(|r| r.key.clone()).collect();
            for &c in &requested {
                let key = format!("control={c}");
                if !done.contains(&key) {
                    records.push(PointRecord {
                        key,
                        status: PointStatus::BranchBreak,
                        message: Some(e.to_string()),
                        values: BTreeMap::new(),
                        wall_time_s: 0.0,
                    });
                }
            }
        }
    }
    Ok((records, vec![table.finish(out)?]))
}

/// Wigner grids of a Floquet mode, the same mode moved by `U_S'`, and the
/// effective eigenstate it matches.
#[derive(Debug, Clone)]
pub struct WignerTriptych {
    pub level: usize,
    pub energy: f64,
    pub mode_index: usize,
    pub overlap: f64,
    pub floquet: WignerGrid,
    pub transformed: WignerGrid,
    pub effective: WignerGrid,
}

impl WignerTriptych {
    pub fn l2_raw(&self) -> Result<f64> {
        self.floquet.l2_distance(&self.effective)
    }

    pub fn l2_transformed(&self) -> Result<f64> {
        self.transformed.l2_distance(&self.effective)
    }
}

/// Triptychs for the given effective levels at one control value.
pub fn wigner_triptychs(
    base: &ModelParams,
    control: f64,
    order: u32,
    levels: &[usize],
    solver: &SolverSettings,
    half_width: Option<f64>,
    points: Option<usize>,
) -> Result<Vec<WignerTriptych>> {
    let params = model::control_to_drive(control, base)?;
    let kerr = model::derive(&params)?.k2;
    let res = expansion::expand(&params, order)?;
    let model = expansion::engine_model(&res, order, params.dim)?;
    let u_s = expansion::u_s_matrix(&res, order, params.dim)?;
    let spec = effective::excitation_spectrum(&model, kerr)?;
    let sol = floquet::solve(&params, solver)?;
    let moved_modes = u_s.adjoint() * &sol.modes;
    levels
        .iter()
        .map(|&k| {
            if k >= spec.levels.len() {
                return Err(Error::InvalidParams(format!("level {k} beyond truncation")));
            }
            let e = spec.vector(k);
            let (j, overlap) = analysis::best_match(&e, &moved_modes, WIGNER_MIN_OVERLAP)?;
            let raw: CVector = sol.mode(j);
            let transformed: CVector = moved_modes.column(j).into_owned();
            let nbar = fock::mean_photon_number(raw.as_slice()).max(fock::mean_photon_number(e.as_slice()));
            let hw = half_width.unwrap_or_else(|| analysis::suggested_half_width(nbar));
            let grid = GridSpec::square(hw, points.unwrap_or_else(|| analysis::suggested_points(nbar, hw)));
            Ok(WignerTriptych {
                level: k,
                energy: spec.levels[k].energy,
                mode_index: j,
                overlap,
                floquet: analysis::wigner(&raw, &grid)?,
                transformed: analysis::wigner(&transformed, &grid)?,
                effective: analysis::wigner(&e, &grid)?,
            })
        })
        .collect()
}

fn wigner_table(name: &str, grid: &WignerGrid, dir: &Path) -> Result<FileRecord> {
    let mut t = Table::new(name, &["x", "p", "w"])?;
    for (i, x) in grid.x_axis.iter().enumerate() {
        for (j, p) in grid.p_axis.iter().enumerate() {
            t.row(&[num(*x), num(*p), num(grid.values[(i, j)])])?;
        }
    }
    t.finish(dir)
}

fn run_wigner(cfg: &RunConfig, out: &Path) -> Result<(Vec<PointRecord>, Vec<FileRecord>)> {
    let control = cfg.control.min;
    let t = Instant::now();
    let result = wigner_triptychs(
        &cfg.model.params(),
        control,
        cfg.effective.order,
        &cfg.wigner.levels,
        &cfg.solver.settings(),
        cfg.wigner.half_width,
        cfg.wigner.points,
    );
    let mut files = Vec::new();
    let mut records = Vec::new();
    let mut summary = Table::new(
        "wigner_summary.csv",
        &["level", "energy_rescaled", "mode_index", "overlap", "l2_raw", "l2_transformed", "normalization_effective"],
    )?;
    match result {
        Ok(panels) => {
            for p in &panels {
                for (kind, grid) in [("floquet", &p.floquet), ("transformed", &p.transformed), ("effective", &p.effective)] {
                    files.push(wigner_table(&format!("wigner_L{}_{kind}.csv", p.level), grid, out)?);
                }
                let (raw, moved) = (p.l2_raw()?, p.l2_transformed()?);
                summary.row(&[
                    p.level.to_string(),
                    num(p.energy),
                    p.mode_index.to_string(),
                    num(p.overlap),
                    num(raw),
                    num(moved),
                    num(p.effective.normalization()),
                ])?;
                records.push(record(
                    format!("level={}", p.level),
                    t,
                    Ok(Outcome {
                        values: BTreeMap::from([("l2_raw".into(), raw), ("l2_transformed".into(), moved)]),
                        truncated: false,
                        note: None,
                    }),
                ));
            }
        }
        Err(e) => {
            for &k in &cfg.wigner.levels {
                records.push(record(format!("level={k}"), t, Err(Error::Numeric(e.to_string()))));
            }
        }
    }
    files.push(summary.finish(out)?);
    Ok((records, files))
}

/// Default output directory for a config.
pub fn output_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.map(|e| e.name()).unwrap_or("run")))
}
