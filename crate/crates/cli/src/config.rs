//! Experiment configuration: TOML schema, defaults and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sectlab_core::field_library::{CylinderField, ModelSpec};
use sectlab_core::flow_engine::IntegratorConfig;
use sectlab_core::suspension::{check_pair, OrbitOptions, SolenoidSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Equilibria,
    Transition,
    Symmetry,
    CompoundCheck,
    Birkhoff,
    Recurrence,
    Measure,
    SlowdownSweep,
    Psectional,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Equilibria => "equilibria",
            Experiment::Transition => "transition",
            Experiment::Symmetry => "symmetry",
            Experiment::CompoundCheck => "compound-check",
            Experiment::Birkhoff => "birkhoff",
            Experiment::Recurrence => "recurrence",
            Experiment::Measure => "measure",
            Experiment::SlowdownSweep => "slowdown-sweep",
            Experiment::Psectional => "psectional",
        }
    }

    /// Experiments that run on the suspension rather than the bare field.
    pub fn needs_glued(self) -> bool {
        matches!(
            self,
            Experiment::Birkhoff
                | Experiment::Recurrence
                | Experiment::Measure
                | Experiment::SlowdownSweep
                | Experiment::Psectional
        )
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_seed() -> u64 {
    1
}
fn default_n_returns() -> u64 {
    10_000
}
fn default_n_orbits() -> usize {
    4
}
fn default_t_end() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Filled from the subcommand when absent.
    #[serde(default)]
    pub experiment: Option<Experiment>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Poincare returns per orbit.
    #[serde(default = "default_n_returns")]
    pub n_returns: u64,
    /// Orbits per run; orbit i uses seed + i.
    #[serde(default = "default_n_orbits")]
    pub n_orbits: usize,
    /// Flow-time horizon for the bare-field experiments.
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    pub model: ModelSpec,
    #[serde(default)]
    pub solenoid: Option<SolenoidSpec>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub orbit: OrbitOptions,
    #[serde(default)]
    pub params: Params,
}

fn default_zeta_grid() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 0.9]
}
fn default_p() -> usize {
    3
}
fn default_nodes() -> usize {
    40
}
fn default_samples() -> usize {
    200
}

/// Experiment-specific settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Horizontal entry points (transition, symmetry, slowdown-sweep).
    /// Empty selects a default grid.
    #[serde(default)]
    pub entries: Vec<Vec<f64>>,
    /// Start point of the compound check.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    #[serde(default = "default_zeta_grid")]
    pub zeta0_grid: Vec<f64>,
    /// Order of the higher sectional observable in the sweep.
    #[serde(default = "default_p")]
    pub p: usize,
    /// Quadrature panels of the Lebesgue recurrence profile.
    #[serde(default = "default_nodes")]
    pub profile_nodes: usize,
    /// Random samples for the equivariance check.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
            initial: None,
            zeta0_grid: default_zeta_grid(),
            p: default_p(),
            profile_nodes: default_nodes(),
            samples: default_samples(),
        }
    }
}

/// A schema or semantic violation, located by its key path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

fn issue(path: &str, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue { path: path.to_string(), message: message.into() }
}

impl ExperimentConfig {
    pub fn experiment(&self) -> Experiment {
        self.experiment.expect("experiment resolved before running")
    }

    /// Seeds of the orbits of a run.
    pub fn orbit_seeds(&self) -> Vec<u64> {
        (0..self.n_orbits as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    /// Semantic checks that the schema cannot express.
    pub fn check(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        if let Err(e) = self.model.validate() {
            out.push(issue("model", e.to_string()));
        }
        if let Err(e) = self.integrator.validate() {
            out.push(issue("integrator", e.to_string()));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            out.push(issue("t_end", format!("must be positive, got {}", self.t_end)));
        }
        let glued = self.model.family.is_glued();
        match (glued, &self.solenoid) {
            (true, None) => out.push(issue("solenoid", "required for glued models")),
            (true, Some(s)) => {
                if let Err(e) = check_pair(s, &self.model) {
                    out.push(issue("solenoid", e.to_string()));
                }
            }
            (false, Some(_)) => out.push(issue("solenoid", "only meaningful for glued models")),
            (false, None) => {}
        }
        let h = self.model.horizontal_dim();
        for (i, e) in self.params.entries.iter().enumerate() {
            if e.len() != h {
                out.push(issue(&format!("params.entries[{i}]"), format!("expected {h} coordinates, got {}", e.len())));
            }
        }
        if let Some(w) = &self.params.initial {
            if w.len() != self.model.dim() {
                out.push(issue("params.initial", format!("expected {} coordinates, got {}", self.model.dim(), w.len())));
            }
        }
        let Some(exp) = self.experiment else {
            return out;
        };
        if exp.needs_glued() && !glued {
            out.push(issue("model.family", format!("{exp} runs on a glued family (G*, Ghat*)")));
        }
        if !exp.needs_glued() && glued {
            out.push(issue("model.family", format!("{exp} runs on a bare cylinder field (Y*)")));
        }
        if exp.needs_glued() && self.n_orbits == 0 {
            out.push(issue("n_orbits", "must be positive"));
        }
        let cf = self.model.cylinder_field();
        match exp {
            Experiment::Symmetry => {
                if !matches!(cf, CylinderField::Y0 | CylinderField::Y1 | CylinderField::Y3 | CylinderField::Y4) {
                    out.push(issue("model.family", "symmetry needs Y0, Y1, Y3 or Y4"));
                }
            }
            Experiment::Recurrence => {
                if !matches!(cf, CylinderField::Y3 | CylinderField::Y4) {
                    out.push(issue("model.family", "recurrence needs a rotational glued family (G3, G4, Ghat3, Ghat4)"));
                }
            }
            Experiment::SlowdownSweep => {
                if !self.model.family.is_slowed() {
                    out.push(issue("model.family", "slowdown-sweep needs a slowed family (Ghat*)"));
                }
                if self.params.zeta0_grid.iter().any(|z| !(0.0..=0.95).contains(z)) {
                    out.push(issue("params.zeta0_grid", "values must lie in [0, 0.95]"));
                }
                if self.params.p < 2 || self.params.p > self.model.dim() {
                    out.push(issue("params.p", format!("must lie in [2, {}]", self.model.dim())));
                }
            }
            Experiment::Measure => {
                if self.n_orbits < 2 {
                    out.push(issue("n_orbits", "measure compares orbits; need at least 2"));
                }
            }
            _ => {}
        }
        if exp == Experiment::Psectional && self.orbit.p_orders.iter().any(|&p| p < 3 || p > self.model.dim()) {
            out.push(issue("orbit.p_orders", format!("orders must lie in [3, {}]", self.model.dim())));
        }
        out
    }
}

/// Parses a config without semantic checks; schema errors carry the path
/// of the offending key.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigIssue> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        issue(&path, inner.message().trim().to_string())
    })
}

/// Reads, parses and checks a config file. The experiment, when given,
/// must agree with the config's own.
pub fn load_config(path: &Path, experiment: Option<Experiment>) -> Result<ExperimentConfig, Vec<ConfigIssue>> {
    let text = std::fs::read_to_string(path).map_err(|e| vec![issue("", format!("cannot read {}: {e}", path.display()))])?;
    let mut cfg = parse_config(&text).map_err(|e| vec![e])?;
    match (cfg.experiment, experiment) {
        (Some(a), Some(b)) if a != b => {
            return Err(vec![issue("experiment", format!("config says {a}, command says {b}"))]);
        }
        (None, Some(b)) => cfg.experiment = Some(b),
        _ => {}
    }
    let issues = cfg.check();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(issues)
    }
}

/// Full validation with defaults applied; the returned config is what a
/// run would use.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig, Vec<ConfigIssue>> {
    load_config(path, None)
}
