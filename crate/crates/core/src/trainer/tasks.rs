//! The five navigation tasks on the 2.42 m desk world.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::sdf::{SignedDistanceField, AVOID_MAP};
use crate::stl::{
    parse_spec, Bindings, CircleRegion, CompiledFormula, EvalError, Formula, SpecError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskName {
    Sequence,
    Cover,
    Branch,
    Loop,
    Signal,
}

impl TaskName {
    pub const ALL: [TaskName; 5] = [
        TaskName::Sequence,
        TaskName::Cover,
        TaskName::Branch,
        TaskName::Loop,
        TaskName::Signal,
    ];
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskName::Sequence => "sequence",
            TaskName::Cover => "cover",
            TaskName::Branch => "branch",
            TaskName::Loop => "loop",
            TaskName::Signal => "signal",
        };
        f.write_str(s)
    }
}

impl FromStr for TaskName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskName::ALL
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown task {s:?}"))
    }
}

/// A task formula over named circular regions, always conjoined with map avoidance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: TaskName,
    /// Formula text without the avoidance conjunct.
    pub formula: String,
    pub regions: Vec<(String, CircleRegion)>,
    pub start_region: CircleRegion,
    pub horizon: usize,
    /// Loop count, for the tasks that repeat.
    pub loops: Option<usize>,
    /// Regions in the order the milestone reward expects them.
    pub milestones: Vec<String>,
}

fn region(name: &str, x: f64, y: f64, r: f64) -> (String, CircleRegion) {
    (name.to_string(), CircleRegion::new([x, y], r))
}

const RADIUS: f64 = 0.25;

impl TaskSpec {
    /// The desk-scale instance of `name` with horizon `horizon`.
    pub fn library(name: TaskName, horizon: usize) -> Self {
        let t = horizon;
        let start = CircleRegion::new([0.4, 0.4], 0.15);
        let far = || {
            vec![
                region("A", 1.9, 0.6, RADIUS),
                region("B", 1.7, 1.8, RADIUS),
                region("C", 0.6, 1.7, RADIUS),
            ]
        };
        let loop_regions = || {
            vec![
                region("L1", 1.0, 0.9, RADIUS),
                region("L2", 1.6, 0.9, RADIUS),
                region("L3", 1.3, 1.5, RADIUS),
            ]
        };
        let abc = || vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let m = 3;
        let k = t / m;
        let g = t.saturating_sub(k);
        match name {
            TaskName::Cover => Self {
                name,
                formula: format!("F[0,{t}] A & F[0,{t}] B & F[0,{t}] C"),
                regions: far(),
                start_region: start,
                horizon: t,
                loops: None,
                milestones: abc(),
            },
            TaskName::Sequence => {
                let (t1, t2) = ((t + 2) / 3, (2 * t + 2) / 3);
                Self {
                    name,
                    formula: format!("F[0,{t1}] A & F[{t1},{t2}] B & F[{t2},{t}] C"),
                    regions: far(),
                    start_region: start,
                    horizon: t,
                    loops: None,
                    milestones: abc(),
                }
            }
            TaskName::Branch => Self {
                name,
                formula: format!("(F[0,{t}] B1 & F[0,{t}] B2) | (F[0,{t}] G1 & F[0,{t}] G2)"),
                regions: vec![
                    region("B1", 1.9, 0.6, RADIUS),
                    region("B2", 1.7, 1.8, RADIUS),
                    region("G1", 0.6, 1.7, RADIUS),
                    region("G2", 1.2, 1.2, RADIUS),
                ],
                start_region: start,
                horizon: t,
                loops: None,
                milestones: vec!["B1".into(), "B2".into()],
            },
            TaskName::Loop => Self {
                name,
                formula: format!("G[0,{g}] (F[0,{k}] L1 & F[0,{k}] L2 & F[0,{k}] L3)"),
                regions: loop_regions(),
                start_region: start,
                horizon: t,
                loops: Some(m),
                milestones: ["L1", "L2", "L3"]
                    .repeat(m)
                    .into_iter()
                    .map(String::from)
                    .collect(),
            },
            TaskName::Signal => {
                let mut regions = loop_regions();
                regions.push(region("Y", 0.5, 1.9, RADIUS));
                Self {
                    name,
                    formula: format!(
                        "(G[0,{g}] (F[0,{k}] L1 & F[0,{k}] L2 & F[0,{k}] L3)) U[0,{k}] L1 & F[0,{t}] Y"
                    ),
                    regions,
                    start_region: start,
                    horizon: t,
                    loops: Some(m),
                    milestones: vec!["L1".into(), "L2".into(), "L3".into(), "L1".into(), "Y".into()],
                }
            }
        }
    }

    /// Formula text including the avoidance conjunct.
    pub fn full_formula(&self) -> String {
        format!("({}) & G[0,{}] {AVOID_MAP}", self.formula, self.horizon)
    }

    pub fn region(&self, name: &str) -> Option<&CircleRegion> {
        self.regions.iter().find(|(n, _)| n == name).map(|(_, r)| r)
    }

    pub fn milestone_regions(&self) -> Vec<CircleRegion> {
        self.milestones
            .iter()
            .filter_map(|m| self.region(m).copied())
            .collect()
    }

    /// Discs the map generator keeps free: the start region and every task region.
    pub fn reserved(&self) -> Vec<CircleRegion> {
        let mut v = vec![self.start_region];
        v.extend(self.regions.iter().map(|(_, r)| *r));
        v
    }

    /// Region bindings plus `avoid_map` for `field`.
    pub fn bindings(&self, field: &Arc<SignedDistanceField>) -> Bindings {
        let mut b = Bindings::new();
        for (name, r) in &self.regions {
            b.insert_region(name, r.center, r.radius);
        }
        b.insert(AVOID_MAP, field.avoid_predicate());
        b
    }

    pub fn parse(&self, field: &Arc<SignedDistanceField>) -> Result<Formula, SpecError> {
        parse_spec(&self.full_formula(), &self.bindings(field))
    }

    pub fn compile(&self, field: &Arc<SignedDistanceField>) -> Result<CompiledFormula, TaskError> {
        let b = self.bindings(field);
        let f = parse_spec(&self.full_formula(), &b)?;
        Ok(CompiledFormula::new(&f, &b)?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
