//! Run configuration, read from TOML.
//!
//! ```toml
//! experiment = "ipr-map"
//! out = "out/ipr-c10"
//! workers = 1
//!
//! [model]
//! g3 = 7.5e-4
//! g4 = 1.27e-7
//! dim = 150
//!
//! [control]
//! min = 10.0
//! max = 10.0
//! count = 1
//!
//! [grid]
//! g3_min = 1e-5
//! g3_max = 2e-2
//! g3_count = 20
//! g4_min = 1e-8
//! g4_max = 1e-5
//! g4_count = 20
//! g4_sign = 1
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::BOUNDARY_A;
use crate::error::{Error, Result};
use crate::floquet::{Scheme, SolverSettings, TrackingSettings};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Spectrum,
    Wigner,
    IprMap,
    UsdistMap,
    OrderScan,
    Track,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Wigner => "wigner",
            Experiment::IprMap => "ipr-map",
            Experiment::UsdistMap => "usdist-map",
            Experiment::OrderScan => "order-scan",
            Experiment::Track => "track",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "one")]
    pub omega_o: f64,
    pub g3: f64,
    pub g4: f64,
    pub dim: usize,
}

fn one() -> f64 {
    1.0
}

impl ModelSection {
    pub fn params(&self) -> ModelParams {
        let mut p = ModelParams::new(self.g3, self.g4, self.dim);
        p.omega_o = self.omega_o;
        p
    }
}

/// Linear range of `eps2/K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlRange {
    pub min: f64,
    pub max: f64,
    #[serde(default = "one_usize")]
    pub count: usize,
}

fn one_usize() -> usize {
    1
}

impl ControlRange {
    pub fn single(c: f64) -> Self {
        ControlRange { min: c, max: c, count: 1 }
    }

    pub fn values(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.count)
    }
}

pub fn linspace(min: f64, max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![min];
    }
    (0..count)
        .map(|k| {
            if k + 1 == count {
                max
            } else {
                min + (max - min) * k as f64 / (count - 1) as f64
            }
        })
        .collect()
}

pub fn logspace(min: f64, max: f64, count: usize) -> Vec<f64> {
    linspace(min.ln(), max.ln(), count)
        .into_iter()
        .enumerate()
        .map(|(k, v)| if k == 0 { min } else if k + 1 == count { max } else { v.exp() })
        .collect()
}

/// Log-spaced `(g3, g4)` grid; `g4_sign` applies to every `g4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub g3_min: f64,
    pub g3_max: f64,
    pub g3_count: usize,
    #[serde(default)]
    pub g4_min: f64,
    #[serde(default)]
    pub g4_max: f64,
    #[serde(default = "one_usize")]
    pub g4_count: usize,
    #[serde(default = "plus_one")]
    pub g4_sign: i8,
}

fn plus_one() -> i8 {
    1
}

impl GridSection {
    pub fn g3_values(&self) -> Vec<f64> {
        logspace(self.g3_min, self.g3_max, self.g3_count)
    }

    pub fn g4_values(&self) -> Vec<f64> {
        logspace(self.g4_min, self.g4_max, self.g4_count)
            .into_iter()
            .map(|g| g * self.g4_sign as f64)
            .collect()
    }

    /// Row-major points: `g4` outer, `g3` inner.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let g3 = self.g3_values();
        self.g4_values()
            .into_iter()
            .flat_map(|g4| g3.iter().map(move |&g| (g, g4)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_steps")]
    pub steps_per_drive_period: usize,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_threshold")]
    pub overlap_threshold: f64,
    #[serde(default = "default_increment")]
    pub tracking_step: f64,
}

fn default_steps() -> usize {
    512
}

fn default_threshold() -> f64 {
    0.5
}

fn default_increment() -> f64 {
    0.25
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            steps_per_drive_period: default_steps(),
            scheme: Scheme::default(),
            overlap_threshold: default_threshold(),
            tracking_step: default_increment(),
        }
    }
}

impl SolverSection {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            steps_per_drive_period: self.steps_per_drive_period,
            scheme: self.scheme,
        }
    }

    pub fn tracking(&self) -> TrackingSettings {
        TrackingSettings {
            solver: self.settings(),
            overlap_threshold: self.overlap_threshold,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectiveSection {
    #[serde(default = "two")]
    pub order: u32,
    /// Orders compared by `order-scan`.
    #[serde(default = "default_orders")]
    pub orders: Vec<u32>,
    /// Floquet modes above this mean photon number are grayed.
    pub photon_threshold: Option<f64>,
    #[serde(default = "default_a")]
    pub boundary_a: f64,
}

fn two() -> u32 {
    2
}

fn default_orders() -> Vec<u32> {
    vec![2, 4]
}

fn default_a() -> f64 {
    BOUNDARY_A
}

impl Default for EffectiveSection {
    fn default() -> Self {
        EffectiveSection {
            order: 2,
            orders: default_orders(),
            photon_threshold: None,
            boundary_a: BOUNDARY_A,
        }
    }
}

/// Which states the Wigner experiment draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerSection {
    /// Effective eigenstate indices, lowest first.
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    pub half_width: Option<f64>,
    /// Points per axis; chosen from the state size when absent.
    pub points: Option<usize>,
}

fn default_levels() -> Vec<usize> {
    vec![0]
}

impl Default for WignerSection {
    fn default() -> Self {
        WignerSection {
            levels: default_levels(),
            half_width: None,
            points: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    pub model: ModelSection,
    pub control: ControlRange,
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub effective: EffectiveSection,
    #[serde(default)]
    pub wigner: WignerSection,
    pub out: Option<PathBuf>,
    #[serde(default = "one_usize")]
    pub workers: usize,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn experiment(&self) -> Result<Experiment> {
        self.experiment.ok_or_else(|| Error::Config("experiment not set".into()))
    }

    pub fn grid(&self) -> Result<&GridSection> {
        self.grid.as_ref().ok_or_else(|| Error::Config("[grid] section required".into()))
    }

    pub fn validate(&self) -> Result<()> {
        let exp = self.experiment()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.model.dim < 2 {
            return bad(format!("model.dim must be at least 2, got {}", self.model.dim));
        }
        if !(self.model.omega_o > 0.0) {
            return bad("model.omega_o must be positive".into());
        }
        let c = &self.control;
        if c.count == 0 || !(c.min.is_finite() && c.max.is_finite()) || c.max < c.min {
            return bad(format!("control range [{}, {}] x {} is empty", c.min, c.max, c.count));
        }
        if c.min < 0.0 {
            return bad("control values must be non-negative".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.solver.steps_per_drive_period < 64 {
            return bad("solver.steps_per_drive_period must be at least 64".into());
        }
        if !(self.solver.tracking_step > 0.0) {
            return bad("solver.tracking_step must be positive".into());
        }
        if !(self.solver.overlap_threshold > 0.0 && self.solver.overlap_threshold <= 1.0) {
            return bad("solver.overlap_threshold must lie in (0, 1]".into());
        }
        for &o in std::iter::once(&self.effective.order).chain(&self.effective.orders) {
            if ![2, 4, 6].contains(&o) {
                return bad(format!("effective order must be 2, 4 or 6, got {o}"));
            }
        }
        if let Some(t) = self.effective.photon_threshold {
            if !(t > 0.0) {
                return bad("effective.photon_threshold must be positive".into());
            }
        }
        if matches!(exp, Experiment::IprMap | Experiment::UsdistMap | Experiment::OrderScan) {
            let g = self.grid()?;
            if g.g3_count == 0 || !(g.g3_min > 0.0) || g.g3_max < g.g3_min {
                return bad("grid g3 range must be positive and non-empty".into());
            }
            if exp != Experiment::OrderScan && (g.g4_count == 0 || !(g.g4_min > 0.0) || g.g4_max < g.g4_min) {
                return bad("grid g4 range must be positive and non-empty".into());
            }
            if g.g4_sign != 1 && g.g4_sign != -1 {
                return bad("grid.g4_sign must be 1 or -1".into());
            }
        }
        if exp == Experiment::Wigner && (self.wigner.levels.is_empty() || self.wigner.points.is_some_and(|p| p < 2)) {
            return bad("wigner needs at least one level and two grid points".into());
        }
        Ok(())
    }
}
