//! Tasks, run configuration, alternating training and evaluation.

mod config;
mod eval;
mod latency;
mod oracle;
mod tasks;
mod train;

pub use config::{ConfigError, EvalConfig, Method, RunConfig, TrainSchedule, SCHEMA_VERSION};
pub use eval::{
    eval_map_seed, evaluate, evaluate_paths, wilson_interval, EpisodeResult, EvalError, EvalReport,
    EvalSet,
};
pub use latency::{latency_masks, measure_plan_latency, LatencyStats};
pub use oracle::{
    brute_force_best, cell_center, compare_with_oracle, optimize_waypoints, oracle_plan,
    random_instance, OracleComparison, OracleError, OracleInstance, OraclePlan, WaypointOptConfig,
    WaypointOptResult, MAX_ORACLE_GRID, MAX_ORACLE_HORIZON, MAX_ORACLE_REGIONS,
};
pub use tasks::{TaskError, TaskName, TaskSpec};
pub use train::{checkpoint_config, MetricsRow, ProbeRecord, TrainError, TrainLog, Trainer};
