//! Boolean, robust and smoothed robust semantics over discrete trajectories.
//!
//! All temporal windows are relative to the evaluation time and clamped to the
//! last trajectory index; a window that starts past the end is an error.

use std::sync::Arc;

use thiserror::Error;

use super::ast::{Formula, Interval};
use super::predicate::{Bindings, Predicate};
use crate::grad::{GradError, Tape, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("time {t} outside trajectory indices 0..={horizon}")]
    TimeOutOfRange { t: usize, horizon: usize },
    #[error("window [{t}+{a}, {t}+{b}] is empty on a trajectory ending at {horizon}")]
    EmptyWindow {
        t: usize,
        a: usize,
        b: usize,
        horizon: usize,
    },
    #[error("unbound predicate {0:?}")]
    Unbound(String),
    #[error("predicate {0:?} is not differentiable")]
    NotDifferentiable(String),
    #[error("smoothing temperature must be finite and positive, got {0}")]
    InvalidBeta(f64),
    #[error(transparent)]
    Tape(#[from] GradError),
}

/// Waypoints `g₀ … g_T` in world meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self, EvalError> {
        if points.is_empty() {
            return Err(EvalError::InvalidTrajectory("no waypoints".into()));
        }
        if let Some(i) = points
            .iter()
            .position(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(EvalError::InvalidTrajectory(format!(
                "waypoint {i} is not finite"
            )));
        }
        Ok(Self { points })
    }

    /// Trajectory along the x axis (`y = 0`).
    pub fn from_x(xs: &[f64]) -> Result<Self, EvalError> {
        Self::new(xs.iter().map(|&x| [x, 0.0]).collect())
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Last valid time index `T`.
    pub fn horizon(&self) -> usize {
        self.points.len() - 1
    }
}

/// Temperature of the log-sum-exp soft min / max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    beta: f64,
}

impl SmoothingConfig {
    pub fn new(beta: f64) -> Result<Self, EvalError> {
        if beta.is_finite() && beta > 0.0 {
            Ok(Self { beta })
        } else {
            Err(EvalError::InvalidBeta(beta))
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// `ln Σ exp(β·(xᵢ − e))` with `e` the extremum of the `xᵢ`; `sign` is `−1` for min.
/// Every term is at most one and one term is exactly one, so the result lies in `[0, ln n]`
/// in floating point too.
fn log_mass(values: &[f64], e: f64, beta: f64, sign: f64) -> f64 {
    values
        .iter()
        .map(|v| (sign * beta * (v - e)).exp())
        .sum::<f64>()
        .ln()
}

/// `−(1/β)·log Σ exp(−β·xᵢ)`; a single value is returned unchanged.
pub fn softmin(values: &[f64], beta: f64) -> f64 {
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.len() == 1 || m.is_infinite() {
        return m;
    }
    m - log_mass(values, m, beta, -1.0) / beta
}

/// `(1/β)·log Σ exp(β·xᵢ)`; a single value is returned unchanged.
pub fn softmax(values: &[f64], beta: f64) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.len() == 1 || m.is_infinite() {
        return m;
    }
    m + log_mass(values, m, beta, 1.0) / beta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationKind {
    Min,
    Max,
}

/// One min / max aggregation performed during a smoothed evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub kind: AggregationKind,
    pub values: Vec<f64>,
    pub soft: f64,
}

impl Aggregation {
    pub fn hard(&self) -> f64 {
        match self.kind {
            AggregationKind::Min => self.values.iter().copied().fold(f64::INFINITY, f64::min),
            AggregationKind::Max => self
                .values
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Values robustness is computed in: plain reals, smoothed reals, or tape variables.
trait Backend {
    type V: Clone;
    fn predicate(&mut self, p: &dyn Predicate, name: &str, t: usize) -> Result<Self::V, EvalError>;
    fn constant(&mut self, c: f64) -> Self::V;
    fn neg(&mut self, v: Self::V) -> Self::V;
    fn min(&mut self, vs: Vec<Self::V>) -> Result<Self::V, EvalError>;
    fn max(&mut self, vs: Vec<Self::V>) -> Result<Self::V, EvalError>;
}

struct Hard<'a> {
    points: &'a [[f64; 2]],
}

impl Backend for Hard<'_> {
    type V = f64;

    fn predicate(&mut self, p: &dyn Predicate, _name: &str, t: usize) -> Result<f64, EvalError> {
        Ok(p.value(self.points[t], t))
    }

    fn constant(&mut self, c: f64) -> f64 {
        c
    }

    fn neg(&mut self, v: f64) -> f64 {
        -v
    }

    fn min(&mut self, vs: Vec<f64>) -> Result<f64, EvalError> {
        Ok(vs.into_iter().fold(f64::INFINITY, f64::min))
    }

    fn max(&mut self, vs: Vec<f64>) -> Result<f64, EvalError> {
        Ok(vs.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }
}

struct Soft<'a> {
    points: &'a [[f64; 2]],
    beta: f64,
    trace: Option<Vec<Aggregation>>,
}

impl Soft<'_> {
    fn record(&mut self, kind: AggregationKind, values: Vec<f64>, soft: f64) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push(Aggregation { kind, values, soft });
        }
    }
}

impl Backend for Soft<'_> {
    type V = f64;

    fn predicate(&mut self, p: &dyn Predicate, _name: &str, t: usize) -> Result<f64, EvalError> {
        Ok(p.value(self.points[t], t))
    }

    fn constant(&mut self, c: f64) -> f64 {
        c
    }

    fn neg(&mut self, v: f64) -> f64 {
        -v
    }

    fn min(&mut self, vs: Vec<f64>) -> Result<f64, EvalError> {
        let s = softmin(&vs, self.beta);
        self.record(AggregationKind::Min, vs, s);
        Ok(s)
    }

    fn max(&mut self, vs: Vec<f64>) -> Result<f64, EvalError> {
        let s = softmax(&vs, self.beta);
        self.record(AggregationKind::Max, vs, s);
        Ok(s)
    }
}

struct OnTape<'a, 't> {
    tape: &'t Tape,
    points: &'a [[Var<'t>; 2]],
    beta: f64,
}

impl<'t> Backend for OnTape<'_, 't> {
    type V = Var<'t>;

    fn predicate(&mut self, p: &dyn Predicate, name: &str, t: usize) -> Result<Var<'t>, EvalError> {
        let [x, y] = self.points[t];
        let g = [x.item(), y.item()];
        let grad = p
            .gradient(g, t)
            .ok_or_else(|| EvalError::NotDifferentiable(name.to_string()))?;
        Ok(self.tape.try_custom(&[x, y], p.value(g, t), &grad)?)
    }

    fn constant(&mut self, c: f64) -> Var<'t> {
        self.tape.scalar(c)
    }

    fn neg(&mut self, v: Var<'t>) -> Var<'t> {
        -v
    }

    fn min(&mut self, vs: Vec<Var<'t>>) -> Result<Var<'t>, EvalError> {
        if vs.len() == 1 {
            return Ok(vs[0]);
        }
        let stacked = self.tape.try_stack(&vs)?;
        let shifted = self.tape.scale(stacked, -self.beta);
        Ok(self
            .tape
            .scale(self.tape.try_logsumexp(shifted)?, -1.0 / self.beta))
    }

    fn max(&mut self, vs: Vec<Var<'t>>) -> Result<Var<'t>, EvalError> {
        if vs.len() == 1 {
            return Ok(vs[0]);
        }
        let stacked = self.tape.try_stack(&vs)?;
        let shifted = self.tape.scale(stacked, self.beta);
        Ok(self
            .tape
            .scale(self.tape.try_logsumexp(shifted)?, 1.0 / self.beta))
    }
}

#[derive(Clone)]
enum Node {
    True,
    False,
    Pred(String, Arc<dyn Predicate>),
    Not(usize),
    And(usize, usize),
    Or(usize, usize),
    Implies(usize, usize),
    Next(usize),
    Eventually(Interval, usize),
    Globally(Interval, usize),
    Until(Interval, usize, usize),
}

/// A formula with its predicates resolved, ready for repeated evaluation.
#[derive(Clone)]
pub struct CompiledFormula {
    nodes: Vec<Node>,
    root: usize,
    differentiable: Result<(), String>,
    horizon: usize,
}

impl std::fmt::Debug for CompiledFormula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompiledFormula")
            .field("nodes", &self.nodes.len())
            .finish()
    }
}

fn window(t: usize, i: Interval, horizon: usize) -> Result<(usize, usize), EvalError> {
    let lo = t + i.start();
    if lo > horizon {
        return Err(EvalError::EmptyWindow {
            t,
            a: i.start(),
            b: i.end(),
            horizon,
        });
    }
    Ok((lo, (t + i.end()).min(horizon)))
}

fn check_time(t: usize, horizon: usize) -> Result<(), EvalError> {
    if t > horizon {
        return Err(EvalError::TimeOutOfRange { t, horizon });
    }
    Ok(())
}

impl CompiledFormula {
    pub fn new(formula: &Formula, bindings: &Bindings) -> Result<Self, EvalError> {
        let mut out = Self {
            nodes: Vec::with_capacity(formula.size()),
            root: 0,
            differentiable: Ok(()),
            horizon: formula.horizon(),
        };
        out.root = out.add(formula, bindings)?;
        Ok(out)
    }

    fn add(&mut self, f: &Formula, bindings: &Bindings) -> Result<usize, EvalError> {
        let node = match f {
            Formula::True => Node::True,
            Formula::False => Node::False,
            Formula::Predicate(name) => {
                let p = bindings
                    .get(name)
                    .ok_or_else(|| EvalError::Unbound(name.clone()))?
                    .clone();
                if !p.is_differentiable() && self.differentiable.is_ok() {
                    self.differentiable = Err(name.clone());
                }
                Node::Pred(name.clone(), p)
            }
            Formula::Not(x) => Node::Not(self.add(x, bindings)?),
            Formula::Next(x) => Node::Next(self.add(x, bindings)?),
            Formula::Eventually(i, x) => Node::Eventually(*i, self.add(x, bindings)?),
            Formula::Globally(i, x) => Node::Globally(*i, self.add(x, bindings)?),
            Formula::And(l, r) => Node::And(self.add(l, bindings)?, self.add(r, bindings)?),
            Formula::Or(l, r) => Node::Or(self.add(l, bindings)?, self.add(r, bindings)?),
            Formula::Implies(l, r) => Node::Implies(self.add(l, bindings)?, self.add(r, bindings)?),
            Formula::Until(i, l, r) => {
                Node::Until(*i, self.add(l, bindings)?, self.add(r, bindings)?)
            }
        };
        self.nodes.push(node);
        Ok(self.nodes.len() - 1)
    }

    /// Look-ahead of the formula in steps.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn run<B: Backend>(
        &self,
        backend: &mut B,
        horizon: usize,
        t: usize,
    ) -> Result<B::V, EvalError> {
        check_time(t, horizon)?;
        let mut memo: Vec<Option<B::V>> = vec![None; self.nodes.len() * (horizon + 1)];
        self.eval(backend, &mut memo, horizon, self.root, t)
    }

    fn eval<B: Backend>(
        &self,
        b: &mut B,
        memo: &mut Vec<Option<B::V>>,
        horizon: usize,
        id: usize,
        t: usize,
    ) -> Result<B::V, EvalError> {
        let key = id * (horizon + 1) + t;
        if let Some(v) = &memo[key] {
            return Ok(v.clone());
        }
        let v = match &self.nodes[id] {
            Node::True => b.constant(f64::INFINITY),
            Node::False => b.constant(f64::NEG_INFINITY),
            Node::Pred(name, p) => b.predicate(p.as_ref(), name, t)?,
            Node::Not(x) => {
                let v = self.eval(b, memo, horizon, *x, t)?;
                b.neg(v)
            }
            Node::And(l, r) => {
                let vs = vec![
                    self.eval(b, memo, horizon, *l, t)?,
                    self.eval(b, memo, horizon, *r, t)?,
                ];
                b.min(vs)?
            }
            Node::Or(l, r) => {
                let vs = vec![
                    self.eval(b, memo, horizon, *l, t)?,
                    self.eval(b, memo, horizon, *r, t)?,
                ];
                b.max(vs)?
            }
            Node::Implies(l, r) => {
                let lv = self.eval(b, memo, horizon, *l, t)?;
                let vs = vec![b.neg(lv), self.eval(b, memo, horizon, *r, t)?];
                b.max(vs)?
            }
            Node::Next(x) => {
                let (lo, _) = window(t, Interval::new(1, 1).expect("unit interval"), horizon)?;
                self.eval(b, memo, horizon, *x, lo)?
            }
            Node::Eventually(i, x) => {
                let (lo, hi) = window(t, *i, horizon)?;
                let vs = (lo..=hi)
                    .map(|s| self.eval(b, memo, horizon, *x, s))
                    .collect::<Result<Vec<_>, _>>()?;
                b.max(vs)?
            }
            Node::Globally(i, x) => {
                let (lo, hi) = window(t, *i, horizon)?;
                let vs = (lo..=hi)
                    .map(|s| self.eval(b, memo, horizon, *x, s))
                    .collect::<Result<Vec<_>, _>>()?;
                b.min(vs)?
            }
            Node::Until(i, l, r) => {
                let (lo, hi) = window(t, *i, horizon)?;
                let mut outer = Vec::with_capacity(hi - lo + 1);
                for s in lo..=hi {
                    let mut inner = Vec::with_capacity(s - t + 2);
                    inner.push(self.eval(b, memo, horizon, *r, s)?);
                    for u in t..=s {
                        inner.push(self.eval(b, memo, horizon, *l, u)?);
                    }
                    outer.push(b.min(inner)?);
                }
                b.max(outer)?
            }
        };
        memo[key] = Some(v.clone());
        Ok(v)
    }

    fn require_differentiable(&self) -> Result<(), EvalError> {
        self.differentiable
            .clone()
            .map_err(EvalError::NotDifferentiable)
    }

    /// Hard min / max robustness at time `t`.
    pub fn robustness(&self, tau: &Trajectory, t: usize) -> Result<f64, EvalError> {
        self.run(
            &mut Hard {
                points: tau.points(),
            },
            tau.horizon(),
            t,
        )
    }

    /// Hard robustness over raw waypoints; `points` must be non-empty and finite.
    pub fn robustness_points(&self, points: &[[f64; 2]], t: usize) -> Result<f64, EvalError> {
        if points.is_empty() {
            return Err(EvalError::InvalidTrajectory("no waypoints".into()));
        }
        self.run(&mut Hard { points }, points.len() - 1, t)
    }

    pub fn soft_robustness(
        &self,
        tau: &Trajectory,
        t: usize,
        cfg: SmoothingConfig,
    ) -> Result<f64, EvalError> {
        self.require_differentiable()?;
        let mut b = Soft {
            points: tau.points(),
            beta: cfg.beta,
            trace: None,
        };
        self.run(&mut b, tau.horizon(), t)
    }

    /// Smoothed robustness together with every aggregation performed, in evaluation order.
    pub fn soft_robustness_traced(
        &self,
        tau: &Trajectory,
        t: usize,
        cfg: SmoothingConfig,
    ) -> Result<(f64, Vec<Aggregation>), EvalError> {
        self.require_differentiable()?;
        let mut b = Soft {
            points: tau.points(),
            beta: cfg.beta,
            trace: Some(Vec::new()),
        };
        let v = self.run(&mut b, tau.horizon(), t)?;
        Ok((v, b.trace.unwrap_or_default()))
    }

    /// Smoothed robustness recorded on `tape`; `points[t] = [x, y]` are scalar variables.
    pub fn soft_robustness_tape<'t>(
        &self,
        tape: &'t Tape,
        points: &[[Var<'t>; 2]],
        t: usize,
        cfg: SmoothingConfig,
    ) -> Result<Var<'t>, EvalError> {
        self.require_differentiable()?;
        if points.is_empty() {
            return Err(EvalError::InvalidTrajectory("no waypoints".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.iter()
                .any(|v| v.shape() != (1, 1) || !v.item().is_finite())
            {
                return Err(EvalError::InvalidTrajectory(format!(
                    "waypoint {i} is not a finite scalar pair"
                )));
            }
        }
        let mut b = OnTape {
            tape,
            points,
            beta: cfg.beta,
        };
        self.run(&mut b, points.len() - 1, t)
    }
}

/// Classical Boolean satisfaction, evaluated by direct recursion.
pub fn eval_bool(
    f: &Formula,
    bindings: &Bindings,
    tau: &Trajectory,
    t: usize,
) -> Result<bool, EvalError> {
    let horizon = tau.horizon();
    check_time(t, horizon)?;
    let rec = |g: &Formula, s: usize| eval_bool(g, bindings, tau, s);
    Ok(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Predicate(name) => {
            let p = bindings
                .get(name)
                .ok_or_else(|| EvalError::Unbound(name.clone()))?;
            p.value(tau.points()[t], t) > 0.0
        }
        Formula::Not(x) => !rec(x, t)?,
        Formula::And(l, r) => {
            let (a, b) = (rec(l, t)?, rec(r, t)?);
            a && b
        }
        Formula::Or(l, r) => {
            let (a, b) = (rec(l, t)?, rec(r, t)?);
            a || b
        }
        Formula::Implies(l, r) => {
            let (a, b) = (rec(l, t)?, rec(r, t)?);
            !a || b
        }
        Formula::Next(x) => {
            if t + 1 > horizon {
                return Err(EvalError::EmptyWindow {
                    t,
                    a: 1,
                    b: 1,
                    horizon,
                });
            }
            rec(x, t + 1)?
        }
        Formula::Eventually(i, x) => {
            let (lo, hi) = window(t, *i, horizon)?;
            let mut any = false;
            for s in lo..=hi {
                any |= rec(x, s)?;
            }
            any
        }
        Formula::Globally(i, x) => {
            let (lo, hi) = window(t, *i, horizon)?;
            let mut all = true;
            for s in lo..=hi {
                all &= rec(x, s)?;
            }
            all
        }
        Formula::Until(i, l, r) => {
            let (lo, hi) = window(t, *i, horizon)?;
            let mut any = false;
            for s in lo..=hi {
                let mut ok = rec(r, s)?;
                for u in t..=s {
                    ok &= rec(l, u)?;
                }
                any |= ok;
            }
            any
        }
    })
}

/// Hard robustness `ρ(τ, φ, t)`.
pub fn robustness(
    f: &Formula,
    bindings: &Bindings,
    tau: &Trajectory,
    t: usize,
) -> Result<f64, EvalError> {
    CompiledFormula::new(f, bindings)?.robustness(tau, t)
}

/// Smoothed robustness with log-sum-exp min / max at temperature `cfg.beta()`.
pub fn soft_robustness(
    f: &Formula,
    bindings: &Bindings,
    tau: &Trajectory,
    t: usize,
    cfg: SmoothingConfig,
) -> Result<f64, EvalError> {
    CompiledFormula::new(f, bindings)?.soft_robustness(tau, t, cfg)
}
