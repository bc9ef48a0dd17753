//! Success rate and time-to-reach on held-out maps.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tasks::{TaskError, TaskSpec};
use crate::controller::Policy;
use crate::planner::{embed_grid, mode_path, track_paths, PlannerParams, TrackJob};
use crate::sim::{EnvConfig, MapError, MapPool, TransitionCounter, EVAL_SEED_OFFSET};
use crate::stl::CompiledFormula;

/// Episodes on maps the trainer never sees: map, start pose and compiled task per episode.
pub struct EvalSet {
    pub pool: MapPool,
    pub specs: Vec<CompiledFormula>,
    pub starts: Vec<[f64; 2]>,
    pub headings: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("robustness evaluation failed: {0}")]
    Robustness(#[from] crate::stl::EvalError),
}

/// First map seed of evaluation set `seed`.
pub fn eval_map_seed(seed: u64) -> u64 {
    EVAL_SEED_OFFSET + (seed << 20)
}

impl EvalSet {
    pub fn new(
        task: &TaskSpec,
        env: &EnvConfig,
        grid: usize,
        episodes: usize,
        seed: u64,
    ) -> Result<Self, EvalError> {
        let pool = MapPool::generate(
            env,
            &task.reserved(),
            eval_map_seed(seed),
            episodes.max(1),
            grid,
        )?;
        let specs = pool
            .entries()
            .iter()
            .map(|e| task.compile(&e.field))
            .collect::<Result<_, _>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(eval_map_seed(seed));
        let mut starts = Vec::with_capacity(episodes);
        let mut headings = Vec::with_capacity(episodes);
        for _ in 0..episodes {
            starts.push(crate::controller::sample_start(
                &task.start_region,
                &mut rng,
            ));
            headings.push(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        }
        Ok(Self {
            pool,
            specs,
            starts,
            headings,
        })
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub map_seed: u64,
    pub start: [f64; 2],
    pub waypoints: Vec<[f64; 2]>,
    pub robustness: f64,
    pub reached: bool,
    pub collisions: usize,
    pub steps: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub successes: usize,
    pub sr: f64,
    /// Mean time to reach over successful episodes, seconds.
    pub ttr: Option<f64>,
    pub episodes: Vec<EpisodeResult>,
}

impl EvalReport {
    pub fn from_episodes(episodes: Vec<EpisodeResult>, dt: f64) -> Self {
        let n = episodes.len();
        let succ: Vec<&EpisodeResult> = episodes.iter().filter(|e| e.success).collect();
        let successes = succ.len();
        let ttr = (successes > 0)
            .then(|| succ.iter().map(|e| e.steps as f64 * dt).sum::<f64>() / successes as f64);
        Self {
            n,
            successes,
            sr: if n == 0 {
                0.0
            } else {
                successes as f64 / n as f64
            },
            ttr,
            episodes,
        }
    }

    /// 95% Wilson score interval for the success rate.
    pub fn wilson95(&self) -> (f64, f64) {
        wilson_interval(self.successes, self.n, 1.959963984540054)
    }
}

pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Plans the mode path for every episode, tracks it and applies the success test:
/// positive hard robustness, no collisions and the final waypoint reached in budget.
pub fn evaluate(
    planner: &PlannerParams,
    controller: &dyn Policy,
    set: &EvalSet,
    env: &EnvConfig,
) -> Result<EvalReport, EvalError> {
    let n = set.len();
    let paths = (0..n)
        .map(|i| {
            let entry = set.pool.get(i % set.pool.len());
            mode_path(planner, set.starts[i], &embed_grid(&entry.grid, planner)).waypoints
        })
        .collect();
    evaluate_paths(paths, controller, set, env)
}

/// The success test on given paths, one per episode of `set`.
pub fn evaluate_paths(
    paths: Vec<Vec<[f64; 2]>>,
    controller: &dyn Policy,
    set: &EvalSet,
    env: &EnvConfig,
) -> Result<EvalReport, EvalError> {
    let n = set.len();
    assert_eq!(paths.len(), n, "one path per episode");
    let jobs: Vec<TrackJob> = paths
        .iter()
        .enumerate()
        .map(|(i, p)| TrackJob {
            field: Arc::clone(&set.pool.get(i % set.pool.len()).field),
            waypoints: p.clone(),
            theta0: set.headings[i],
        })
        .collect();
    let outcomes = track_paths(controller, &jobs, env, &TransitionCounter::new(), false);
    let mut episodes = Vec::with_capacity(n);
    for (i, (p, out)) in paths.into_iter().zip(outcomes).enumerate() {
        let k = i % set.pool.len();
        let robustness = set.specs[k].robustness_points(&p, 0)?;
        episodes.push(EpisodeResult {
            map_seed: set.pool.get(k).map.seed,
            start: set.starts[i],
            success: robustness > 0.0 && out.collisions == 0 && out.reached,
            robustness,
            reached: out.reached,
            collisions: out.collisions,
            steps: out.steps,
            waypoints: p,
        });
    }
    Ok(EvalReport::from_episodes(episodes, env.dt))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_matches_reference_values() {
        // 80 / 100 at z = 1.96: (0.7111, 0.8666).
        let (lo, hi) = wilson_interval(80, 100, 1.959963984540054);
        assert!(
            (lo - 0.7111).abs() < 1e-4 && (hi - 0.8666).abs() < 1e-4,
            "{lo} {hi}"
        );
        let (lo, hi) = wilson_interval(0, 10, 1.959963984540054);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.2775).abs() < 1e-4);
    }

    #[test]
    fn ttr_counts_successes_only() {
        let ep = |steps, success| EpisodeResult {
            map_seed: 0,
            start: [0.0, 0.0],
            waypoints: vec![],
            robustness: 1.0,
            reached: success,
            collisions: 0,
            steps,
            success,
        };
        let r = EvalReport::from_episodes(vec![ep(100, true), ep(300, true), ep(500, false)], 0.1);
        assert_eq!(r.successes, 2);
        assert!((r.sr - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.ttr.unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(EvalReport::from_episodes(vec![ep(5, false)], 0.1).ttr, None);
    }
}
