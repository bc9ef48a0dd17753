//! Run configuration: one JSON document covering every module.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tasks::TaskName;
use crate::controller::ControllerConfig;
use crate::planner::PlannerConfig;
use crate::sim::EnvConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Planner objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Return term plus the differentiated robustness constraint.
    #[default]
    Dscrl,
    /// Robustness folded into the score-function reward.
    Rs,
    /// Milestone reward machine.
    Rm,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Dscrl => "dscrl",
            Method::Rs => "rs",
            Method::Rm => "rm",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dscrl" => Ok(Method::Dscrl),
            "rs" => Ok(Method::Rs),
            "rm" => Ok(Method::Rm),
            _ => Err(format!("unknown mode {s:?} (expected dscrl, rs or rm)")),
        }
    }
}

/// Alternation lengths, budget and convergence probing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    /// Total simulated transitions.
    pub budget: u64,
    /// Stop after this many rounds even with budget left; 0 means no limit.
    pub max_rounds: usize,
    pub controller_transitions_per_phase: u64,
    pub planner_updates_per_phase: usize,
    /// Training maps, drawn uniformly per path or episode.
    pub map_pool_size: usize,
    pub probe_episodes: usize,
    /// Probe after every this many rounds; 0 disables probing.
    pub probe_every_rounds: usize,
    /// Converged when the probe SR is within `convergence_tolerance` of the probe this
    /// many probes earlier.
    pub convergence_window: usize,
    pub convergence_tolerance: f64,
    pub stop_on_convergence: bool,
    /// Probe SR counted as reaching the threshold.
    pub threshold_sr: f64,
    pub stop_at_threshold: bool,
    /// Weight of the avoidance penalty added to the milestone reward.
    pub rm_avoid_weight: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            budget: 2_000_000,
            max_rounds: 0,
            controller_transitions_per_phase: 50_000,
            planner_updates_per_phase: 200,
            map_pool_size: 1024,
            probe_episodes: 100,
            probe_every_rounds: 1,
            convergence_window: 3,
            convergence_tolerance: 0.05,
            stop_on_convergence: false,
            threshold_sr: 0.8,
            stop_at_threshold: false,
            rm_avoid_weight: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub task: TaskName,
    pub method: Method,
    /// Train the controller on uniform goals and the planner without return feedback.
    pub unaligned: bool,
    pub seed: u64,
    pub env: EnvConfig,
    pub planner: PlannerConfig,
    pub controller: ControllerConfig,
    pub schedule: TrainSchedule,
    pub eval: EvalConfig,
    /// Run directory; relative paths are resolved against the config file.
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            task: TaskName::Cover,
            method: Method::Dscrl,
            unaligned: false,
            seed: 0,
            env: EnvConfig::default(),
            planner: PlannerConfig::default(),
            controller: ControllerConfig::default(),
            schedule: TrainSchedule::default(),
            eval: EvalConfig::default(),
            out_dir: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config schema version {found} is not supported (expected {expected})")]
    Schema { found: u32, expected: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates `path`, resolving `out_dir` against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(out) = &cfg.out_dir {
            if out.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.out_dir = Some(base.join(out));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        self.env.validate().map_err(ConfigError::Invalid)?;
        self.planner.validate().map_err(ConfigError::Invalid)?;
        self.controller.validate().map_err(ConfigError::Invalid)?;
        let s = &self.schedule;
        if s.controller_transitions_per_phase == 0 || s.planner_updates_per_phase == 0 {
            return Err(ConfigError::Invalid(
                "schedule phase lengths must be positive".into(),
            ));
        }
        if s.map_pool_size == 0 {
            return Err(ConfigError::Invalid(
                "schedule.map_pool_size must be positive".into(),
            ));
        }
        if s.probe_every_rounds > 0 && s.probe_episodes == 0 {
            return Err(ConfigError::Invalid(
                "schedule.probe_episodes must be positive".into(),
            ));
        }
        if s.convergence_window == 0 {
            return Err(ConfigError::Invalid(
                "schedule.convergence_window must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}
