//! Exact planning on small grids and direct waypoint optimisation.
//!
//! The oracle unrolls the formula over absolute time into negation normal form. For a
//! threshold `c`, "some grid path has robustness ≥ c" is then a Boolean question about the
//! atoms `±μ(g_t) ≥ c`, answered by depth-first search with memoisation on
//! `(time, cell, residual formula)`. Binary search over the finitely many atom values
//! gives the exact maximum.

use std::collections::HashSet;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grad::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use crate::sdf::{OccupancyMask, SignedDistanceField, AVOID_MAP};
use crate::stl::{
    parse_spec, Bindings, CircleRegion, CompiledFormula, EvalError, Formula, Interval,
    SmoothingConfig, SpecError,
};

pub const MAX_ORACLE_GRID: usize = 12;
pub const MAX_ORACLE_HORIZON: usize = 12;
pub const MAX_ORACLE_REGIONS: usize = 3;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A small planning problem: task over named discs, start cell on the search grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleInstance {
    /// Task formula without the avoidance conjunct.
    pub formula: String,
    pub regions: Vec<(String, CircleRegion)>,
    /// `(ix, iy)` on the search grid.
    pub start: [usize; 2],
}

impl OracleInstance {
    pub fn full_formula(&self, horizon: usize) -> String {
        format!("({}) & G[0,{horizon}] {AVOID_MAP}", self.formula)
    }

    pub fn bindings(&self, field: &Arc<SignedDistanceField>) -> Bindings {
        let mut b = Bindings::new();
        for (n, r) in &self.regions {
            b.insert_region(n, r.center, r.radius);
        }
        b.insert(AVOID_MAP, field.avoid_predicate());
        b
    }

    pub fn compile(
        &self,
        field: &Arc<SignedDistanceField>,
        horizon: usize,
    ) -> Result<(Formula, CompiledFormula, Bindings), OracleError> {
        let b = self.bindings(field);
        let f = parse_spec(&self.full_formula(horizon), &b)?;
        let c = CompiledFormula::new(&f, &b)?;
        Ok((f, c, b))
    }
}

/// Cell centres of an `n × n` grid laid over `extent`.
pub fn cell_center(cell: [usize; 2], n: usize, extent: [f64; 2]) -> [f64; 2] {
    [
        (cell[0] as f64 + 0.5) * extent[0] / n as f64,
        (cell[1] as f64 + 0.5) * extent[1] / n as f64,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePlan {
    pub cells: Vec<[usize; 2]>,
    pub waypoints: Vec<[f64; 2]>,
    pub robustness: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Nnf {
    False,
    True,
    Atom { pred: usize, time: usize, neg: bool },
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
}

fn junction(parts: Vec<Nnf>, and: bool) -> Nnf {
    let (unit, zero) = if and {
        (Nnf::True, Nnf::False)
    } else {
        (Nnf::False, Nnf::True)
    };
    let mut out = Vec::with_capacity(parts.len());
    for p in parts {
        match p {
            p if p == unit => {}
            p if p == zero => return zero,
            Nnf::And(inner) if and => out.extend(inner),
            Nnf::Or(inner) if !and => out.extend(inner),
            p => out.push(p),
        }
    }
    out.sort();
    out.dedup();
    match out.len() {
        0 => unit,
        1 => out.pop().unwrap(),
        _ if and => Nnf::And(out),
        _ => Nnf::Or(out),
    }
}

struct Unroller<'a> {
    names: &'a [String],
    horizon: usize,
}

impl Unroller<'_> {
    fn window(&self, t: usize, i: Interval) -> Result<(usize, usize), EvalError> {
        let lo = t + i.start();
        if lo > self.horizon {
            return Err(EvalError::EmptyWindow {
                t,
                a: i.start(),
                b: i.end(),
                horizon: self.horizon,
            });
        }
        Ok((lo, (t + i.end()).min(self.horizon)))
    }

    /// `f` at time `t`, negated when `neg`.
    fn unroll(&self, f: &Formula, t: usize, neg: bool) -> Result<Nnf, EvalError> {
        // Under negation conjunction and disjunction swap.
        let all = |v| junction(v, !neg);
        let any = |v| junction(v, neg);
        Ok(match f {
            Formula::True => junction(vec![], !neg),
            Formula::False => junction(vec![], neg),
            Formula::Predicate(name) => Nnf::Atom {
                pred: self
                    .names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| EvalError::Unbound(name.clone()))?,
                time: t,
                neg,
            },
            Formula::Not(x) => self.unroll(x, t, !neg)?,
            Formula::And(l, r) => all(vec![self.unroll(l, t, neg)?, self.unroll(r, t, neg)?]),
            Formula::Or(l, r) => any(vec![self.unroll(l, t, neg)?, self.unroll(r, t, neg)?]),
            Formula::Implies(l, r) => any(vec![self.unroll(l, t, !neg)?, self.unroll(r, t, neg)?]),
            Formula::Next(x) => {
                if t + 1 > self.horizon {
                    return Err(EvalError::EmptyWindow {
                        t,
                        a: 1,
                        b: 1,
                        horizon: self.horizon,
                    });
                }
                self.unroll(x, t + 1, neg)?
            }
            Formula::Eventually(i, x) => {
                let (lo, hi) = self.window(t, *i)?;
                any((lo..=hi)
                    .map(|s| self.unroll(x, s, neg))
                    .collect::<Result<_, _>>()?)
            }
            Formula::Globally(i, x) => {
                let (lo, hi) = self.window(t, *i)?;
                all((lo..=hi)
                    .map(|s| self.unroll(x, s, neg))
                    .collect::<Result<_, _>>()?)
            }
            Formula::Until(i, l, r) => {
                let (lo, hi) = self.window(t, *i)?;
                let mut branches = Vec::with_capacity(hi - lo + 1);
                for s in lo..=hi {
                    let mut parts = vec![self.unroll(r, s, neg)?];
                    for u in t..=s {
                        parts.push(self.unroll(l, u, neg)?);
                    }
                    branches.push(all(parts));
                }
                any(branches)
            }
        })
    }
}

/// Replaces atoms at `time` by their truth values.
fn substitute(f: &Nnf, time: usize, truth: &impl Fn(usize, bool) -> bool) -> Nnf {
    match f {
        Nnf::Atom { pred, time: s, neg } if *s == time => {
            if truth(*pred, *neg) {
                Nnf::True
            } else {
                Nnf::False
            }
        }
        Nnf::And(v) => junction(v.iter().map(|g| substitute(g, time, truth)).collect(), true),
        Nnf::Or(v) => junction(
            v.iter().map(|g| substitute(g, time, truth)).collect(),
            false,
        ),
        other => other.clone(),
    }
}

struct Search {
    root: Nnf,
    /// `values[pred][time][cell]`.
    values: Vec<Vec<Vec<f64>>>,
    n: usize,
    horizon: usize,
    start: usize,
    failed: HashSet<(usize, usize, Nnf)>,
    threshold: f64,
}

impl Search {
    fn step(&self, f: &Nnf, t: usize, cell: usize) -> Nnf {
        substitute(f, t, &|p, neg| {
            let v = self.values[p][t][cell];
            (if neg { -v } else { v }) >= self.threshold
        })
    }

    fn neighbours(&self, cell: usize) -> impl Iterator<Item = usize> + use<'_> {
        let n = self.n as i64;
        let (x, y) = ((cell % self.n) as i64, (cell / self.n) as i64);
        (-1..=1)
            .flat_map(move |dy| (-1..=1).map(move |dx| (x + dx, y + dy)))
            .filter(move |(a, b)| (0..n).contains(a) && (0..n).contains(b))
            .map(move |(a, b)| (b * n + a) as usize)
    }

    fn dfs(&mut self, t: usize, cell: usize, residual: Nnf, path: &mut Vec<usize>) -> bool {
        if residual == Nnf::False {
            return false;
        }
        if t == self.horizon {
            return residual == Nnf::True;
        }
        let next: Vec<usize> = self.neighbours(cell).collect();
        for c in next {
            let r = self.step(&residual, t + 1, c);
            if r == Nnf::False {
                continue;
            }
            let key = (t + 1, c, r);
            if self.failed.contains(&key) {
                continue;
            }
            path.push(c);
            if self.dfs(t + 1, c, key.2.clone(), path) {
                return true;
            }
            path.pop();
            self.failed.insert(key);
        }
        false
    }

    /// A path with robustness at least `c`, if any.
    fn feasible(&mut self, c: f64) -> Option<Vec<usize>> {
        self.threshold = c;
        self.failed.clear();
        let root = self.step(&self.root.clone(), 0, self.start);
        let mut path = vec![self.start];
        self.dfs(0, self.start, root, &mut path).then_some(path)
    }
}

/// Grid path maximising hard robustness among all `T`-step king-move paths from the
/// start cell, or `None` when no path has positive robustness.
pub fn oracle_plan(
    inst: &OracleInstance,
    mask: &OccupancyMask,
    grid: usize,
    horizon: usize,
) -> Result<Option<OraclePlan>, OracleError> {
    if grid == 0 || grid > MAX_ORACLE_GRID {
        return Err(OracleError::TooLarge(format!(
            "grid {grid} (1..={MAX_ORACLE_GRID})"
        )));
    }
    if horizon == 0 || horizon > MAX_ORACLE_HORIZON {
        return Err(OracleError::TooLarge(format!(
            "horizon {horizon} (1..={MAX_ORACLE_HORIZON})"
        )));
    }
    if inst.regions.len() > MAX_ORACLE_REGIONS {
        return Err(OracleError::TooLarge(format!(
            "{} regions (at most {MAX_ORACLE_REGIONS})",
            inst.regions.len()
        )));
    }
    if inst.start[0] >= grid || inst.start[1] >= grid {
        return Err(OracleError::TooLarge(format!(
            "start cell {:?} outside the grid",
            inst.start
        )));
    }
    let field = Arc::new(SignedDistanceField::new(mask.clone()));
    let (formula, compiled, bindings) = inst.compile(&field, horizon)?;
    let names: Vec<String> = formula.predicates().into_iter().map(String::from).collect();
    let root = Unroller {
        names: &names,
        horizon,
    }
    .unroll(&formula, 0, false)?;
    let ext = mask.extent();
    let centers: Vec<[f64; 2]> = (0..grid * grid)
        .map(|c| cell_center([c % grid, c / grid], grid, ext))
        .collect();
    let mut values = Vec::with_capacity(names.len());
    let mut candidates = Vec::new();
    for name in &names {
        let p = bindings
            .get(name)
            .ok_or_else(|| EvalError::Unbound(name.clone()))?;
        let per_t: Vec<Vec<f64>> = (0..=horizon)
            .map(|t| centers.iter().map(|g| p.value(*g, t)).collect())
            .collect();
        for v in per_t.iter().flatten() {
            candidates.extend([*v, -*v]);
        }
        values.push(per_t);
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut s = Search {
        root,
        values,
        n: grid,
        horizon,
        start: inst.start[1] * grid + inst.start[0],
        failed: HashSet::new(),
        threshold: 0.0,
    };
    // Only thresholds above zero matter.
    let first_pos = candidates.partition_point(|c| *c <= 0.0);
    if first_pos == candidates.len() {
        return Ok(None);
    }
    let Some(mut best) = s.feasible(candidates[first_pos]) else {
        return Ok(None);
    };
    let (mut lo, mut hi) = (first_pos, candidates.len());
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        match s.feasible(candidates[mid]) {
            Some(p) => {
                lo = mid;
                best = p;
            }
            None => hi = mid,
        }
    }
    let cells: Vec<[usize; 2]> = best.iter().map(|c| [c % grid, c / grid]).collect();
    let waypoints: Vec<[f64; 2]> = best.iter().map(|c| centers[*c]).collect();
    let robustness = compiled.robustness_points(&waypoints, 0)?;
    Ok(Some(OraclePlan {
        cells,
        waypoints,
        robustness,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaypointOptConfig {
    /// Total gradient steps over all restarts.
    pub steps: usize,
    /// The budget is split evenly; restarts after the first draw `u ~ N(0, init_std²)`.
    pub restarts: usize,
    pub init_std: f64,
    /// Steps without a new best hard robustness before `u` is jittered by `N(0, jitter²)`.
    pub patience: usize,
    pub jitter: f64,
    pub seed: u64,
    pub lr: f64,
    pub beta: f64,
    /// Temperature reached at the end of each restart; raised geometrically from `beta`.
    pub beta_final: f64,
    /// Per-axis step bound as a multiple of the grid pitch.
    pub step_scale: f64,
}

impl Default for WaypointOptConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            restarts: 4,
            init_std: 1.0,
            patience: 50,
            jitter: 0.1,
            seed: 0,
            lr: 0.05,
            beta: 10.0,
            beta_final: 100.0,
            step_scale: 1.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointOptResult {
    pub waypoints: Vec<[f64; 2]>,
    pub robustness: f64,
    /// Gradient steps taken before the hard robustness turned positive, or the budget.
    pub steps: usize,
}

/// Gradient ascent on the smoothed robustness over free waypoints
/// `g_t = g_{t−1} + max_step·tanh(u_t)`, stopping once the hard robustness is positive.
pub fn optimize_waypoints(
    spec: &CompiledFormula,
    start: [f64; 2],
    horizon: usize,
    max_step: f64,
    cfg: &WaypointOptConfig,
) -> Result<WaypointOptResult, EvalError> {
    let t = horizon;
    SmoothingConfig::new(cfg.beta)?;
    SmoothingConfig::new(cfg.beta_final)?;
    let restarts = cfg.restarts.max(1);
    let per = cfg.steps / restarts;
    let growth = (cfg.beta_final / cfg.beta).powf(1.0 / per.max(1) as f64);
    let cumsum = Array2::from_shape_fn((2 * t, 2 * t), |(k, c)| {
        f64::from(((k < t) == (c < t) && k % t <= c % t) as u8)
    });
    let points_of = |u: &Tensor| {
        let d = u.mapv(|v| v.tanh() * max_step).dot(&cumsum);
        let mut pts = vec![start];
        for k in 0..t {
            pts.push([start[0] + d[[0, k]], start[1] + d[[0, t + k]]]);
        }
        pts
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let adam_cfg = AdamConfig::with_lr(cfg.lr);
    let mut best = (f64::NEG_INFINITY, vec![start; t + 1]);
    let mut used = 0;
    for r in 0..restarts {
        let mut u = if r == 0 {
            Tensor::zeros((1, 2 * t))
        } else {
            Tensor::from_shape_fn((1, 2 * t), |_| {
                cfg.init_std * rng.sample::<f64, _>(StandardNormal)
            })
        };
        let mut adam = AdamState::zeros_like(std::slice::from_ref(&u));
        let (mut local_best, mut since) = (f64::NEG_INFINITY, 0);
        let budget = if r + 1 == restarts {
            cfg.steps - used
        } else {
            per
        };
        for step in 0..=budget {
            let pts = points_of(&u);
            let rho = spec.robustness_points(&pts, 0)?;
            if rho > best.0 {
                best = (rho, pts);
            }
            if rho > local_best {
                (local_best, since) = (rho, 0);
            } else {
                since += 1;
            }
            if rho > 0.0 {
                return Ok(WaypointOptResult {
                    waypoints: best.1,
                    robustness: best.0,
                    steps: used + step,
                });
            }
            if step == budget {
                break;
            }
            let tape = Tape::new();
            let uv = tape.leaf(u.clone());
            let offsets = (uv.tanh() * max_step).matmul(tape.leaf(cumsum.clone()));
            let mut vars = vec![[tape.scalar(start[0]), tape.scalar(start[1])]];
            for k in 0..t {
                vars.push([
                    offsets.index(0, k) + start[0],
                    offsets.index(0, t + k) + start[1],
                ]);
            }
            let smooth = SmoothingConfig::new(cfg.beta * growth.powi(step as i32))?;
            let phi = spec.soft_robustness_tape(&tape, &vars, 0, smooth)?;
            let g = tape.backward(-phi).map_err(EvalError::Tape)?.wrt(uv);
            if !g.iter().all(|v| v.is_finite()) {
                break;
            }
            adam_step(&mut [&mut u], &[g], &mut adam, &adam_cfg).map_err(EvalError::Tape)?;
            if since >= cfg.patience {
                u.mapv_inplace(|v| v + cfg.jitter * rng.sample::<f64, _>(StandardNormal));
                since = 0;
            }
        }
        used += budget;
    }
    Ok(WaypointOptResult {
        waypoints: best.1,
        robustness: best.0,
        steps: cfg.steps,
    })
}

/// A random small instance on a `2 m` square: 1 to 3 rectangular blocks, 1 to 3 discs
/// and a reach / sequence / avoid template, with grid 10 and horizon 10.
pub fn random_instance(seed: u64) -> (OracleInstance, OccupancyMask) {
    const EXT: f64 = 2.0;
    const RES: usize = 48;
    const GRID: usize = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks: Vec<[f64; 4]> = (0..rng.random_range(1..=3))
        .map(|_| {
            let (w, h) = (rng.random_range(0.2..0.7), rng.random_range(0.2..0.7));
            let (x, y) = (
                rng.random_range(0.0..EXT - w),
                rng.random_range(0.0..EXT - h),
            );
            [x, y, x + w, y + h]
        })
        .collect();
    let pix = EXT / RES as f64;
    let mask = OccupancyMask::from_fn(RES, RES, [EXT; 2], |i, j| {
        let (x, y) = ((i as f64 + 0.5) * pix, (j as f64 + 0.5) * pix);
        blocks
            .iter()
            .any(|b| x >= b[0] && x <= b[2] && y >= b[1] && y <= b[3])
    })
    .expect("mask dimensions");
    let names = ["A", "B", "C"];
    let k = rng.random_range(1..=3);
    let regions: Vec<(String, CircleRegion)> = names[..k]
        .iter()
        .map(|n| {
            let r = rng.random_range(0.2..0.3);
            let c = [rng.random_range(r..EXT - r), rng.random_range(r..EXT - r)];
            (n.to_string(), CircleRegion::new(c, r))
        })
        .collect();
    let t = GRID;
    let formula = match (k, rng.random_range(0..3)) {
        (1, _) => format!("F[0,{t}] A"),
        (2, 0) => format!("F[0,{t}] A & F[0,{t}] B"),
        (2, 1) => format!("F[0,5] A & F[5,{t}] B"),
        (2, _) => format!("F[0,{t}] A & G[0,{t}] !B"),
        (_, 0) => format!("F[0,{t}] A & F[0,{t}] B & F[0,{t}] C"),
        (_, 1) => format!("F[0,{t}] (A | B) & F[0,{t}] C"),
        _ => format!("F[0,{t}] A & F[0,{t}] B & G[0,{t}] !C"),
    };
    let start = [rng.random_range(0..GRID), rng.random_range(0..GRID)];
    (
        OracleInstance {
            formula,
            regions,
            start,
        },
        mask,
    )
}

/// Oracle and optimiser verdicts on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub oracle: Option<f64>,
    pub optimiser: f64,
    pub steps: usize,
}

/// Runs both planners on `inst` with grid `grid` and horizon `horizon`; the optimiser's
/// step bound is `cfg.step_scale` grid pitches.
pub fn compare_with_oracle(
    inst: &OracleInstance,
    mask: &OccupancyMask,
    grid: usize,
    horizon: usize,
    cfg: &WaypointOptConfig,
) -> Result<OracleComparison, OracleError> {
    let oracle = oracle_plan(inst, mask, grid, horizon)?;
    let field = Arc::new(SignedDistanceField::new(mask.clone()));
    let (_, spec, _) = inst.compile(&field, horizon)?;
    let ext = mask.extent();
    let pitch = ext[0].max(ext[1]) / grid as f64;
    let start = cell_center(inst.start, grid, ext);
    let opt = optimize_waypoints(&spec, start, horizon, cfg.step_scale * pitch, cfg)?;
    Ok(OracleComparison {
        oracle: oracle.map(|p| p.robustness),
        optimiser: opt.robustness,
        steps: opt.steps,
    })
}

/// Brute-force maximum over every king-move path; exponential, for tests on tiny grids.
pub fn brute_force_best(
    inst: &OracleInstance,
    mask: &OccupancyMask,
    grid: usize,
    horizon: usize,
) -> Result<f64, OracleError> {
    let field = Arc::new(SignedDistanceField::new(mask.clone()));
    let (_, spec, _) = inst.compile(&field, horizon)?;
    let ext = mask.extent();
    let mut best = f64::NEG_INFINITY;
    let mut path = vec![inst.start];
    fn rec(
        path: &mut Vec<[usize; 2]>,
        grid: usize,
        horizon: usize,
        ext: [f64; 2],
        spec: &CompiledFormula,
        best: &mut f64,
    ) -> Result<(), EvalError> {
        if path.len() == horizon + 1 {
            let pts: Vec<[f64; 2]> = path.iter().map(|c| cell_center(*c, grid, ext)).collect();
            *best = best.max(spec.robustness_points(&pts, 0)?);
            return Ok(());
        }
        let [x, y] = *path.last().unwrap();
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (a, b) = (x as i64 + dx, y as i64 + dy);
                if a < 0 || b < 0 || a >= grid as i64 || b >= grid as i64 {
                    continue;
                }
                path.push([a as usize, b as usize]);
                rec(path, grid, horizon, ext, spec, best)?;
                path.pop();
            }
        }
        Ok(())
    }
    rec(&mut path, grid, horizon, ext, &spec, &mut best)?;
    Ok(best)
}
