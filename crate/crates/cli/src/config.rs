//! Run configuration file.
//!
//! ```toml
//! [system]
//! name = "harmonic"
//! params = { omega = 1.0 }
//!
//! [region]            # optional; every key overrides the system default
//! t_range = [0.0, 2.0]
//! q_box = [[-1.5, 1.5]]
//! p_box = [[-1.5, 1.5]]
//! count = 200
//! seed = 42
//! level_range = [0.05, 2.0]
//!
//! [step]
//! method = "rk45"     # or "rk4" with `step`
//! abs_tol = 1e-10
//! rel_tol = 1e-10
//! max_steps = 1000000
//!
//! [simulate]
//! t0 = 0.0
//! q = [1.0]
//! p = [0.0]
//! t_target = 6.283185307179586
//! ```
//!
//! `[verify]`, `[chart]`, `[transform]` and `[output]` are described on
//! their structs. Unknown keys anywhere are rejected.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;

use tdcis::flow::{Method, StepControl};
use tdcis::systems::{default_region, make_system, CustomSystem, SystemSpec};
use tdcis::verify::SampleRegion;
use tdcis::{PhasePoint, TDSystem};

use crate::CliError;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub region: RegionSection,
    #[serde(default)]
    pub step: StepSection,
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub chart: ChartSection,
    pub transform: Option<TransformSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Only for `name = "custom"`: expression over `t, q1.., p1..`.
    pub hamiltonian: Option<String>,
    pub integrals: Option<Vec<String>>,
    pub compact: Option<Vec<bool>>,
    pub centers: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub t_range: Option<[f64; 2]>,
    pub q_box: Option<Vec<[f64; 2]>>,
    pub p_box: Option<Vec<[f64; 2]>>,
    pub count: Option<usize>,
    pub seed: Option<u64>,
    pub level_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Rk4,
    Rk45,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StepSection {
    #[serde(default = "default_method")]
    pub method: MethodName,
    #[serde(default = "default_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_rk4_step")]
    pub step: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_method() -> MethodName {
    MethodName::Rk45
}
fn default_tol() -> f64 {
    1e-10
}
fn default_rk4_step() -> f64 {
    1e-3
}
fn default_max_steps() -> usize {
    1_000_000
}

impl Default for StepSection {
    fn default() -> Self {
        Self {
            method: default_method(),
            abs_tol: default_tol(),
            rel_tol: default_tol(),
            step: default_rk4_step(),
            max_steps: default_max_steps(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default)]
    pub t0: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub t_target: f64,
}

/// Tolerances of the verification suite; conservation is checked along
/// trajectories of `conservation_time` from the first `conservation_starts`
/// region samples.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub involution_tol: f64,
    pub lifted_tol: f64,
    pub first_integral_tol: f64,
    pub independence_tol: f64,
    pub projection_tol: f64,
    pub conservation_tol: f64,
    pub conservation_time: f64,
    pub conservation_starts: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            involution_tol: 1e-9,
            lifted_tol: 1e-9,
            first_integral_tol: 1e-8,
            independence_tol: 1e-3,
            projection_tol: 1e-14,
            conservation_tol: 1e-6,
            conservation_time: 10.0,
            conservation_starts: 3,
        }
    }
}

/// Chart construction and checks. `levels` lists integral values whose
/// action profile is reported for every degree; `samples` is the number of
/// region points used by the canonicity and in-chart checks. The chart CSV
/// follows the `[simulate]` trajectory when present, otherwise a trajectory
/// of `duration` from the first region sample.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ChartSection {
    pub tol: f64,
    pub canonicity_tol: f64,
    pub samples: usize,
    pub levels: Vec<f64>,
    pub duration: f64,
}

impl Default for ChartSection {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            canonicity_tol: 1e-5,
            samples: 50,
            levels: Vec::new(),
            duration: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Shift,
    #[default]
    Ww26,
}

/// `h_of_i` is an expression in `I1..Im`. Trajectories from the first
/// `starts` region samples are followed for `duration`, sampled at `points`
/// equally spaced times.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TransformSection {
    pub h_of_i: String,
    #[serde(default)]
    pub kind: TransformKind,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_transform_tol")]
    pub tol: f64,
}

fn default_duration() -> f64 {
    10.0
}
fn default_points() -> usize {
    21
}
fn default_starts() -> usize {
    3
}
fn default_transform_tol() -> f64 {
    1e-5
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn system_spec(&self) -> SystemSpec {
        let s = &self.system;
        let custom = (s.hamiltonian.is_some() || s.integrals.is_some()).then(|| CustomSystem {
            hamiltonian: s.hamiltonian.clone().unwrap_or_default(),
            integrals: s.integrals.clone().unwrap_or_default(),
            compact: s.compact.clone(),
            centers: s.centers.clone(),
        });
        SystemSpec {
            name: s.name.clone(),
            params: s.params.clone(),
            custom,
        }
    }

    pub fn build_system(&self) -> Result<TDSystem, CliError> {
        make_system(&self.system_spec()).map_err(|e| CliError::Config(format!("[system] {e}")))
    }

    /// System default region with the configured overrides applied.
    pub fn region(&self, sys: &TDSystem, seed_override: Option<u64>) -> Result<SampleRegion, CliError> {
        let mut r = default_region(sys);
        let o = &self.region;
        if let Some(v) = o.t_range {
            r.t_range = v;
        }
        if let Some(v) = &o.q_box {
            r.q_box = v.clone();
        }
        if let Some(v) = &o.p_box {
            r.p_box = v.clone();
        }
        if let Some(v) = o.count {
            r.count = v;
        }
        if let Some(v) = o.seed {
            r.seed = v;
        }
        if o.level_range.is_some() {
            r.level_range = o.level_range;
        }
        if let Some(seed) = seed_override {
            r.seed = seed;
        }
        if r.m() != sys.m() {
            return Err(CliError::Config(format!(
                "[region] boxes have {} entries but the system has {} degrees of freedom",
                r.m(),
                sys.m()
            )));
        }
        r.validate().map_err(|e| CliError::Config(format!("[region] {e}")))?;
        Ok(r)
    }

    pub fn step_control(&self) -> Result<StepControl, CliError> {
        let s = &self.step;
        let method = match s.method {
            MethodName::Rk4 => Method::Rk4 { step: s.step },
            MethodName::Rk45 => Method::Rk45 {
                abs_tol: s.abs_tol,
                rel_tol: s.rel_tol,
            },
        };
        StepControl {
            method,
            max_steps: s.max_steps,
        }
        .validated()
        .map_err(|e| CliError::Config(format!("[step] {e}")))
    }

    pub fn initial_point(&self, sys: &TDSystem) -> Result<Option<(PhasePoint, f64)>, CliError> {
        let Some(s) = &self.simulate else {
            return Ok(None);
        };
        let x = PhasePoint::new(s.t0, s.q.clone(), s.p.clone())
            .map_err(|e| CliError::Config(format!("[simulate] {e}")))?;
        if x.dim() != sys.m() {
            return Err(CliError::Config(format!(
                "[simulate] initial point has {} degrees of freedom, the system has {}",
                x.dim(),
                sys.m()
            )));
        }
        if !s.t_target.is_finite() {
            return Err(CliError::Config("[simulate] t_target must be finite".into()));
        }
        Ok(Some((x, s.t_target)))
    }
}
