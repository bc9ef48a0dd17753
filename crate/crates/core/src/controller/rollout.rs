//! Training goals and lockstep experience collection.

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use super::{feature_dim, features_into, scale_action, ControllerConfig, ControllerParams};
use crate::controller::RolloutBuffer;
use crate::grad::Tensor;
use crate::planner::{embed_grid, sample_path, PlannerParams};
use crate::sdf::SignedDistanceField;
use crate::sim::{
    control_reward, observe, step, EnvConfig, MapPool, Observation, RobotState, TransitionCounter,
};
use crate::stl::CircleRegion;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("no admissible start/goal pair after {tries} tries")]
    RetriesExhausted { tries: usize },
}

/// One goal-reaching episode.
#[derive(Debug, Clone)]
pub struct EpisodeSpec {
    pub field: Arc<SignedDistanceField>,
    pub start: RobotState,
    pub goal: [f64; 2],
    pub budget: usize,
}

#[derive(Debug, Clone)]
pub enum GoalMode {
    /// Hops between consecutive waypoints of paths drawn from the planner.
    Planner {
        params: Arc<PlannerParams>,
        start_region: CircleRegion,
    },
    /// Start and goal drawn uniformly over free space.
    Uniform,
}

/// Produces training episodes for the controller.
#[derive(Debug, Clone)]
pub struct GoalSampler {
    pub mode: GoalMode,
    pub pool: Arc<MapPool>,
    pub env: EnvConfig,
    pub start_noise: f64,
    pub clearance: f64,
    pub retries: usize,
}

fn uniform_in_disc<R: Rng>(c: [f64; 2], r: f64, rng: &mut R) -> [f64; 2] {
    let rho = r * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    [c[0] + rho * a.cos(), c[1] + rho * a.sin()]
}

/// A point drawn uniformly from `region`.
pub fn sample_start<R: Rng>(region: &CircleRegion, rng: &mut R) -> [f64; 2] {
    uniform_in_disc(region.center, region.radius, rng)
}

impl GoalSampler {
    pub fn new(mode: GoalMode, pool: Arc<MapPool>, env: EnvConfig, cfg: &ControllerConfig) -> Self {
        Self {
            mode,
            pool,
            env,
            start_noise: cfg.start_noise,
            clearance: cfg.clearance,
            retries: cfg.sample_retries,
        }
    }

    /// Replaces the planner snapshot used in planner mode.
    pub fn set_planner(&mut self, params: Arc<PlannerParams>) {
        if let GoalMode::Planner { params: p, .. } = &mut self.mode {
            *p = params;
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<EpisodeSpec, SampleError> {
        for _ in 0..self.retries {
            let entry = self.pool.pick(rng);
            let field = &entry.field;
            let (start, goal) = match &self.mode {
                GoalMode::Uniform => {
                    let ext = self.env.extent;
                    let mut p = || [rng.random_range(0.0..ext[0]), rng.random_range(0.0..ext[1])];
                    (p(), p())
                }
                GoalMode::Planner {
                    params,
                    start_region,
                } => {
                    let x0 = sample_start(start_region, rng);
                    let e = embed_grid(&entry.grid, params);
                    let path = sample_path(params, x0, &e, rng);
                    let k = rng.random_range(0..path.waypoints.len() - 1);
                    let s = uniform_in_disc(path.waypoints[k], self.start_noise, rng);
                    (s, path.waypoints[k + 1])
                }
            };
            if field.sdf(start) <= self.clearance || field.sdf(goal) <= self.clearance {
                continue;
            }
            let d = (goal[0] - start[0]).hypot(goal[1] - start[1]);
            let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            return Ok(EpisodeSpec {
                field: Arc::clone(field),
                start: RobotState::new(start[0], start[1], theta),
                goal,
                budget: self.env.hop_budget(d),
            });
        }
        Err(SampleError::RetriesExhausted {
            tries: self.retries,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct RolloutStats {
    pub episodes: usize,
    pub successes: usize,
    pub collisions: usize,
    pub mean_episode_reward: f64,
}

struct Worker {
    spec: EpisodeSpec,
    state: RobotState,
    obs: Observation,
    steps: usize,
    reward: f64,
    buffer: RolloutBuffer,
}

impl Worker {
    fn start(spec: EpisodeSpec, env: &EnvConfig, f: usize, keep: Option<RolloutBuffer>) -> Self {
        let obs = observe(&spec.start, &spec.field, env);
        Self {
            state: spec.start,
            obs,
            spec,
            steps: 0,
            reward: 0.0,
            buffer: keep.unwrap_or_else(|| RolloutBuffer::new(f)),
        }
    }
}

/// Gathers about `cfg.rollout_steps` transitions from `cfg.parallel_envs` robots stepped
/// in lockstep, each restarted from `sampler` when its episode ends. Every step is added
/// to `counter`. The returned buffer is finished.
pub fn collect_rollout<R: Rng>(
    params: &ControllerParams,
    sampler: &GoalSampler,
    cfg: &ControllerConfig,
    rng: &mut R,
    counter: &TransitionCounter,
) -> Result<(RolloutBuffer, RolloutStats), SampleError> {
    let env = &sampler.env;
    let f = feature_dim(env);
    let n_env = cfg.parallel_envs.min(cfg.rollout_steps).max(1);
    let per_env = cfg.rollout_steps.div_ceil(n_env);
    let mut workers = Vec::with_capacity(n_env);
    for _ in 0..n_env {
        workers.push(Worker::start(sampler.sample(rng)?, env, f, None));
    }
    let mut stats = RolloutStats::default();
    let mut reward_sum = 0.0;
    let mut row = Vec::with_capacity(f);
    for t in 0..per_env {
        let mut flat = Vec::with_capacity(n_env * f);
        for w in &workers {
            features_into(&w.obs, w.spec.goal, env, &mut flat);
        }
        let feats = Tensor::from_shape_vec((n_env, f), flat).expect("feature rows");
        let samples = params.act(&feats, rng);
        let last_step = t + 1 == per_env;
        let mut finished = Vec::new();
        let mut next_rows: Vec<Option<Vec<f64>>> = vec![None; n_env];
        for (i, (w, s)) in workers.iter_mut().zip(&samples).enumerate() {
            let action = scale_action(s.raw, env);
            let (next, obs, collided) = step(&w.state, action, &w.spec.field, env);
            counter.add(1);
            let progress = control_reward(&w.obs, &obs, w.spec.goal);
            let reward =
                cfg.reward_scale * (progress - if collided { cfg.collision_penalty } else { 0.0 });
            w.steps += 1;
            w.reward += reward;
            let reached =
                (obs.x - w.spec.goal[0]).hypot(obs.y - w.spec.goal[1]) < env.goal_tolerance;
            let timeout = w.steps >= w.spec.budget;
            stats.collisions += collided as usize;
            let end = reached || timeout || last_step;
            if end && !reached {
                row.clear();
                features_into(&obs, w.spec.goal, env, &mut row);
                next_rows[i] = Some(row.clone());
            }
            w.buffer.push(
                &feats.row(i).to_vec(),
                s.raw,
                s.log_prob,
                s.value,
                reward,
                reached,
                end,
                0.0,
            );
            w.state = next;
            w.obs = obs;
            if reached || timeout {
                stats.episodes += 1;
                stats.successes += reached as usize;
                reward_sum += w.reward;
                finished.push(i);
            }
        }
        let boot: Vec<usize> = (0..n_env).filter(|i| next_rows[*i].is_some()).collect();
        if !boot.is_empty() {
            let flat: Vec<f64> = boot
                .iter()
                .flat_map(|i| next_rows[*i].clone().unwrap())
                .collect();
            let vals = params.values(&Tensor::from_shape_vec((boot.len(), f), flat).expect("rows"));
            for (i, v) in boot.iter().zip(vals) {
                *workers[*i].buffer.next_values.last_mut().unwrap() = v;
            }
        }
        if !last_step {
            for i in finished {
                let keep = std::mem::take(&mut workers[i].buffer);
                workers[i] = Worker::start(sampler.sample(rng)?, env, f, Some(keep));
            }
        }
    }
    let mut out = RolloutBuffer::new(f);
    for mut w in workers {
        w.buffer.finish(cfg.gamma, cfg.gae_lambda);
        out.extend(&w.buffer);
    }
    if stats.episodes > 0 {
        stats.mean_episode_reward = reward_sum / stats.episodes as f64;
    }
    Ok((out, stats))
}
