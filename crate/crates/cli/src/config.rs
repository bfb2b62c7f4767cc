//! TOML run configuration and its conversion into library types.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use strata_core::analysis::{StudyConfig, StudyLayers, StudyMode, Thresholds};
use strata_core::fem::LinearSolver;
use strata_core::fine_solver::{Loads, TimeSpec, VectorFn};
use strata_core::grid::GridSpec;
use strata_core::operators::{MaterialScaling, SoftClass};
use strata_core::stochastic::{ProcessKind, ProcessModel};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub microstructure: Microstructure,
    pub material: Material,
    pub loads: LoadsConfig,
    pub time: TimeConfig,
    pub solver: SolverConfig,
    pub thresholds: Thresholds,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    pub width: f64,
    pub length: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            width: 1.0,
            length: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerLayout {
    Periodic,
    Explicit,
    Stochastic,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Microstructure {
    pub mode: LayerLayout,
    pub epsilon: Option<f64>,
    pub epsilon_list: Vec<f64>,
    /// `b` in `r_ε = c2 ε^b`.
    pub r_exponent: f64,
    /// `c2` in `r_ε = c2 ε^b`.
    pub r_coeff: f64,
    pub delta: f64,
    /// Layer centers for the explicit layout.
    pub centers: Vec<f64>,
    pub seed: u64,
    /// Averaging window for the layer density of non-periodic layouts.
    pub window: Option<f64>,
    pub replicas: usize,
    pub process: Option<ProcessConfig>,
}

impl Default for Microstructure {
    fn default() -> Self {
        Self {
            mode: LayerLayout::Periodic,
            epsilon: None,
            epsilon_list: Vec::new(),
            r_exponent: 2.0,
            r_coeff: 1.0,
            delta: 0.5,
            centers: Vec::new(),
            seed: 0,
            window: None,
            replicas: 8,
            process: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub kind: ProcessName,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub p1: Option<f64>,
    #[serde(default)]
    pub p2: Option<f64>,
    #[serde(default)]
    pub mix_weight: Option<f64>,
    #[serde(default)]
    pub jitter: Option<f64>,
    #[serde(default = "one")]
    pub min_gap: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessName {
    BernoulliLattice,
    Mixture,
    ShiftedLattice,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Material {
    pub a: f64,
    pub c1: f64,
    pub l: f64,
    pub soft: SoftClass,
    pub rho: f64,
    pub rho1_bar: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            a: 1.0,
            c1: 1.0,
            l: 1.0,
            soft: SoftClass::Unit { mu: 1.0, lambda: 1.0 },
            rho: 1.0,
            rho1_bar: 1.0,
        }
    }
}

/// `amp · S_p(x1/W) · S_q(x3/L) · cos(ω t + phase)` with `S_0 = 1` and
/// `S_k(s) = sin(kπs)` for `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub amp: [f64; 2],
    #[serde(default = "one_u32")]
    pub p: u32,
    #[serde(default = "one_u32")]
    pub q: u32,
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
}

fn one_u32() -> u32 {
    1
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadsConfig {
    pub f: Vec<Mode>,
    pub a0: Vec<Mode>,
    pub b0: Vec<Mode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub mode: StudyMode,
    pub t_final: f64,
    pub dt: Option<f64>,
    pub samples: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        let t = TimeSpec::default();
        Self {
            mode: StudyMode::Dynamic,
            t_final: t.t_final,
            dt: t.dt,
            samples: t.samples,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub n1: usize,
    pub cells_per_layer: usize,
    pub cells_per_gap: usize,
    pub grading: f64,
    pub h3_floor: f64,
    pub linear: LinearSolver,
    pub tol: f64,
    /// Micro cells of the two-scale model; defaults to `cells_per_gap`.
    pub micro_cells: Option<usize>,
    /// Rows of the uniform macro grid used for non-periodic layouts.
    pub macro_n3: usize,
    /// Every how many interior nodes a micro profile is exported.
    pub micro_node_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        Self {
            n1: g.n1,
            cells_per_layer: g.cells_per_layer,
            cells_per_gap: g.cells_per_gap,
            grading: g.grading,
            h3_floor: g.h3_floor,
            linear: LinearSolver::Direct,
            tol: 1e-10,
            micro_cells: None,
            macro_n3: 32,
            micro_node_stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Vtk,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn vtk(self) -> bool {
        matches!(self, Format::Vtk | Format::Both)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: Format::Csv,
        }
    }
}

fn mode_fn(modes: &[Mode], width: f64, length: f64) -> VectorFn {
    let modes = modes.to_vec();
    let shape = |k: u32, s: f64| if k == 0 { 1.0 } else { (k as f64 * PI * s).sin() };
    Arc::new(move |x1, x3, t| {
        let mut out = [0.0; 2];
        for m in &modes {
            let s = shape(m.p, x1 / width) * shape(m.q, x3 / length) * (m.omega * t + m.phase).cos();
            out[0] += m.amp[0] * s;
            out[1] += m.amp[1] * s;
        }
        out
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn scaling(&self) -> MaterialScaling {
        let m = &self.material;
        MaterialScaling {
            a: m.a,
            b: self.microstructure.r_exponent,
            c1: m.c1,
            c2: self.microstructure.r_coeff,
            l: m.l,
            soft: m.soft,
            rho: m.rho,
            rho1_bar: m.rho1_bar,
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        let s = &self.solver;
        GridSpec {
            n1: s.n1,
            cells_per_layer: s.cells_per_layer,
            cells_per_gap: s.cells_per_gap,
            grading: s.grading,
            h3_floor: s.h3_floor,
        }
    }

    pub fn time_spec(&self) -> TimeSpec {
        TimeSpec {
            t_final: self.time.t_final,
            dt: self.time.dt,
            samples: self.time.samples,
        }
    }

    pub fn loads(&self) -> Loads {
        let (w, l) = (self.geometry.width, self.geometry.length);
        Loads {
            f: mode_fn(&self.loads.f, w, l),
            a0: mode_fn(&self.loads.a0, w, l),
            b0: mode_fn(&self.loads.b0, w, l),
        }
    }

    pub fn micro_cells(&self) -> usize {
        self.solver.micro_cells.unwrap_or(self.solver.cells_per_gap).max(2)
    }

    /// The single ε of `fine`, `effective` and `compare` runs.
    pub fn epsilon(&self) -> Result<f64, CliError> {
        self.microstructure
            .epsilon
            .ok_or_else(|| CliError::Config("microstructure.epsilon is required for this command".into()))
    }

    /// The ε list of `sweep` and `stochastic` runs.
    pub fn epsilon_list(&self) -> Result<Vec<f64>, CliError> {
        if self.microstructure.epsilon_list.is_empty() {
            return Err(CliError::Config("microstructure.epsilon_list is required for this command".into()));
        }
        Ok(self.microstructure.epsilon_list.clone())
    }

    pub fn process(&self) -> Result<ProcessModel, CliError> {
        let pc = self
            .microstructure
            .process
            .ok_or_else(|| CliError::Config("microstructure.process is required for the stochastic layout".into()))?;
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| CliError::Config(format!("microstructure.process.{name} is required for this process")))
        };
        let kind = match pc.kind {
            ProcessName::BernoulliLattice => ProcessKind::BernoulliLattice { p: need("p", pc.p)? },
            ProcessName::Mixture => ProcessKind::Mixture {
                p1: need("p1", pc.p1)?,
                p2: need("p2", pc.p2)?,
                mix_weight: need("mix_weight", pc.mix_weight)?,
            },
            ProcessName::ShiftedLattice => ProcessKind::ShiftedLattice {
                jitter: need("jitter", pc.jitter)?,
            },
        };
        Ok(ProcessModel {
            kind,
            min_gap: pc.min_gap,
            seed: self.microstructure.seed,
        })
    }

    pub fn study(&self) -> Result<StudyConfig, CliError> {
        let layers = match self.microstructure.mode {
            LayerLayout::Periodic => StudyLayers::Periodic,
            LayerLayout::None => StudyLayers::None,
            other => {
                return Err(CliError::Config(format!(
                    "fine / effective comparisons need the periodic or none layout, got {other:?}"
                )))
            }
        };
        Ok(StudyConfig {
            scaling: self.scaling(),
            width: self.geometry.width,
            length: self.geometry.length,
            delta: self.microstructure.delta,
            layers,
            grid: self.grid_spec(),
            loads: self.loads(),
            time: self.time_spec(),
            mode: self.time.mode,
            solver: self.solver.linear,
            tol: self.solver.tol,
            thresholds: self.thresholds,
        })
    }
}
