//! Experiment configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sgl_core::dynamics::RobotConfig;
use sgl_core::gait::GaitParams;
use sgl_core::rl::TrainConfig;
use sgl_core::search::{BoConfig, GaitBounds, GridSpec};

use crate::error::{RunError, RunResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Grid,
    Bayes,
    PpoTrain,
    PpoEval,
    Compare,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Grid => "grid",
            Kind::Bayes => "bayes",
            Kind::PpoTrain => "ppo-train",
            Kind::PpoEval => "ppo-eval",
            Kind::Compare => "compare",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub omega_values: Vec<f64>,
    pub y_values: Vec<f64>,
    pub amplitude_deg_values: Vec<f64>,
    pub lambda_deg_values: Vec<f64>,
    /// Velocity bin of the efficiency frontier, m/s.
    pub frontier_bin: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        let spec = GridSpec::default();
        Self {
            omega_values: spec.omega_values,
            y_values: spec.y_values,
            amplitude_deg_values: spec.amplitude_values,
            lambda_deg_values: spec.lambda_values,
            frontier_bin: 0.01,
        }
    }
}

impl GridSection {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            omega_values: self.omega_values.clone(),
            y_values: self.y_values.clone(),
            amplitude_values: self.amplitude_deg_values.clone(),
            lambda_values: self.lambda_deg_values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesSection {
    /// One independent trial per value.
    pub omega_values: Vec<f64>,
    pub n_explore: usize,
    pub n_exploit: usize,
    pub candidates: usize,
    pub refine: usize,
    pub y_range: [f64; 2],
    pub amplitude_deg_range: [f64; 2],
    pub lambda_deg_range: [f64; 2],
}

impl Default for BayesSection {
    fn default() -> Self {
        let bo = BoConfig::default();
        let b = GaitBounds::default();
        Self {
            omega_values: (1..=12).map(|i| i as f64 * 0.25).collect(),
            n_explore: bo.n_explore,
            n_exploit: bo.n_exploit,
            candidates: bo.candidates,
            refine: bo.refine,
            y_range: [b.y.0, b.y.1],
            amplitude_deg_range: [b.amplitude_deg.0, b.amplitude_deg.1],
            lambda_deg_range: [b.lambda_deg.0, b.lambda_deg.1],
        }
    }
}

impl BayesSection {
    pub fn bo_config(&self) -> BoConfig {
        BoConfig {
            n_explore: self.n_explore,
            n_exploit: self.n_exploit,
            candidates: self.candidates,
            refine: self.refine,
            log_objective: true,
        }
    }

    pub fn bounds(&self) -> GaitBounds {
        GaitBounds {
            y: (self.y_range[0], self.y_range[1]),
            amplitude_deg: (self.amplitude_deg_range[0], self.amplitude_deg_range[1]),
            lambda_deg: (self.lambda_deg_range[0], self.lambda_deg_range[1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub grid_csv: Option<PathBuf>,
    /// Directory holding the per-ω BO history tables.
    pub bayes_dir: Option<PathBuf>,
    pub ppo_eval_csv: Option<PathBuf>,
    /// Half-width of the velocity matching window, m/s.
    pub window: f64,
    /// Velocity at which the reference saving is quoted, m/s.
    pub reference_velocity: f64,
    /// Velocity of the per-joint power profile, m/s.
    pub profile_velocity: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            grid_csv: None,
            bayes_dir: None,
            ppo_eval_csv: None,
            window: 0.01,
            reference_velocity: 0.15,
            profile_velocity: 0.25,
        }
    }
}

/// Everything a run needs. `out` and `workers` are left out of the
/// serialized snapshot because they do not change any result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    pub seed: u64,
    #[serde(skip_serializing)]
    pub workers: usize,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Policy checkpoint for `ppo-eval`.
    pub checkpoint: Option<PathBuf>,
    pub robot: RobotConfig,
    pub grid: GridSection,
    pub bayes: BayesSection,
    pub train: TrainConfig,
    pub compare: CompareSection,
    /// Continue an existing output directory instead of refusing it.
    #[serde(skip)]
    pub resume: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            seed: 0,
            workers: 1,
            out: None,
            checkpoint: None,
            robot: RobotConfig::default(),
            grid: GridSection::default(),
            bayes: BayesSection::default(),
            train: TrainConfig::default(),
            compare: CompareSection::default(),
            resume: false,
        }
    }
}

fn invalid(field: impl fmt::Display, reason: impl fmt::Display) -> RunError {
    RunError::usage(format!("invalid value for `{field}`: {reason}"))
}

/// Re-labels a core validation error with the config section it came from.
fn in_section(section: &str, e: sgl_core::Error) -> RunError {
    match e {
        sgl_core::Error::Validation { field, reason } => invalid(format!("{section}.{field}"), reason),
        other => RunError::usage(format!("{section}: {other}")),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> RunResult<Self> {
        toml::from_str(text).map_err(|e| RunError::usage(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> RunResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| RunError::usage(format!("{}: {e}", path.display())))
    }

    /// Result-relevant settings as TOML; equal snapshots mean equal outputs.
    pub fn snapshot(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn kind(&self) -> RunResult<Kind> {
        self.kind.ok_or_else(|| invalid("kind", "no experiment kind selected"))
    }

    pub fn validate(&self) -> RunResult<()> {
        let kind = self.kind()?;
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        if self.out.is_none() {
            return Err(invalid("out", "no output directory given"));
        }
        self.robot.validate().map_err(|e| in_section("robot", e))?;
        match kind {
            Kind::Grid => self.validate_grid(),
            Kind::Bayes => self.validate_bayes(),
            Kind::PpoTrain => self.train.validate().map_err(|e| in_section("train", e)),
            Kind::PpoEval => match &self.checkpoint {
                Some(_) => Ok(()),
                None => Err(invalid("checkpoint", "ppo-eval needs a policy checkpoint")),
            },
            Kind::Compare => self.validate_compare(),
        }
    }

    fn validate_grid(&self) -> RunResult<()> {
        let g = &self.grid;
        let axes = [
            ("grid.omega_values", &g.omega_values),
            ("grid.y_values", &g.y_values),
            ("grid.amplitude_deg_values", &g.amplitude_deg_values),
            ("grid.lambda_deg_values", &g.lambda_deg_values),
        ];
        for (name, values) in axes {
            if values.is_empty() {
                return Err(invalid(name, "needs at least one value"));
            }
        }
        for &omega in &g.omega_values {
            for &y in &g.y_values {
                for &a in &g.amplitude_deg_values {
                    for &l in &g.lambda_deg_values {
                        GaitParams::new(omega, y, a, l).map_err(|e| in_section("grid", e))?;
                    }
                }
            }
        }
        if !(g.frontier_bin.is_finite() && g.frontier_bin > 0.0) {
            return Err(invalid("grid.frontier_bin", "must be positive"));
        }
        Ok(())
    }

    fn validate_bayes(&self) -> RunResult<()> {
        let b = &self.bayes;
        if b.omega_values.is_empty() {
            return Err(invalid("bayes.omega_values", "needs at least one value"));
        }
        if let Some(w) = b.omega_values.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(invalid("bayes.omega_values", format!("must be positive, got {w}")));
        }
        let ranges = [
            ("bayes.y_range", b.y_range),
            ("bayes.amplitude_deg_range", b.amplitude_deg_range),
            ("bayes.lambda_deg_range", b.lambda_deg_range),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(name, format!("needs lower < upper, got [{lo}, {hi}]")));
            }
        }
        for (y, a) in [(b.y_range[0], b.amplitude_deg_range[0]), (b.y_range[1], b.amplitude_deg_range[1])] {
            GaitParams::new(1.0, y, a, b.lambda_deg_range[0]).map_err(|e| in_section("bayes", e))?;
        }
        if b.n_explore < 2 {
            return Err(invalid("bayes.n_explore", "needs at least 2 exploration samples"));
        }
        if b.candidates == 0 {
            return Err(invalid("bayes.candidates", "must be positive"));
        }
        Ok(())
    }

    fn validate_compare(&self) -> RunResult<()> {
        let c = &self.compare;
        if c.grid_csv.is_none() {
            return Err(invalid("compare.grid_csv", "compare needs the grid table"));
        }
        if c.ppo_eval_csv.is_none() {
            return Err(invalid("compare.ppo_eval_csv", "compare needs the policy evaluation table"));
        }
        let positive = [
            ("compare.window", c.window),
            ("compare.reference_velocity", c.reference_velocity),
            ("compare.profile_velocity", c.profile_velocity),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}
