//! Signal temporal logic: syntax, parsing and semantics over waypoint trajectories.

mod ast;
mod parser;
mod predicate;
pub mod random;
mod semantics;

pub use ast::{Formula, Interval};
pub use parser::{parse_formula, parse_spec, SpecError};
pub use predicate::{Bindings, CircleRegion, LinearPredicate, Predicate};
pub use semantics::{
    eval_bool, robustness, soft_robustness, softmax, softmin, Aggregation, AggregationKind,
    CompiledFormula, EvalError, SmoothingConfig, Trajectory,
};
