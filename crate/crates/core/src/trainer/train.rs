//! Alternating controller / planner training.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{Method, RunConfig};
use super::eval::{evaluate, EvalError, EvalSet};
use super::tasks::{TaskError, TaskSpec};
use crate::controller::{
    collect_rollout, ppo_update, sample_start, ControllerConfig, ControllerParams, GoalMode,
    GoalSampler, SampleError,
};
use crate::grad::{
    adam_step, clip_grad_norm, read_container, write_container, AdamConfig, AdamState, Container,
    ContainerError, GradError, Tape, Tensor,
};
use crate::planner::{
    dscrl_loss, embed_grid, rm_reward, rs_loss, sample_path, score_function_loss, track_paths,
    EmaBaseline, LagrangeState, PlanReturn, PlannerBatch, PlannerParams, TrackJob,
};
use crate::sim::{MapError, MapPool, TransitionCounter};
use crate::stl::{CompiledFormula, SmoothingConfig, Trajectory};

/// Seed offset of the probe evaluation set.
const PROBE_EVAL_SEED: u64 = 1 << 19;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("robustness evaluation failed: {0}")]
    Robustness(#[from] crate::stl::EvalError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Checkpoint(#[from] ContainerError),
    #[error("checkpoint state: {0}")]
    State(String),
    #[error("non-finite {what} in round {round}")]
    NonFinite { what: String, round: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One line of `metrics.csv`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    /// `controller`, `planner` or `probe`.
    pub phase: String,
    pub transitions: u64,
    pub planner_updates: usize,
    pub lambda: f64,
    pub beta: f64,
    pub mean_robustness: f64,
    pub satisfied_fraction: f64,
    pub mean_plan_return: f64,
    pub controller_success: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub probe_sr: f64,
    pub probe_ttr: Option<f64>,
}

impl MetricsRow {
    pub const HEADER: &'static str = "round,phase,transitions,planner_updates,lambda,beta,mean_robustness,satisfied_fraction,mean_plan_return,controller_success,policy_loss,value_loss,probe_sr,probe_ttr";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.round,
            self.phase,
            self.transitions,
            self.planner_updates,
            self.lambda,
            self.beta,
            self.mean_robustness,
            self.satisfied_fraction,
            self.mean_plan_return,
            self.controller_success,
            self.policy_loss,
            self.value_loss,
            self.probe_sr,
            self.probe_ttr.map(|v| v.to_string()).unwrap_or_default()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub round: usize,
    pub transitions: u64,
    pub sr: f64,
    pub ttr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<MetricsRow>,
    pub probes: Vec<ProbeRecord>,
    /// Transitions at the first probe judged converged.
    pub converged_at: Option<u64>,
    /// Transitions at the first probe with SR at or above the threshold.
    pub threshold_at: Option<u64>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(MetricsRow::HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainerState {
    round: usize,
    transitions: u64,
    lagrange: LagrangeState,
    return_baseline: EmaBaseline,
    shaped_baseline: EmaBaseline,
    adam_planner_step: u64,
    adam_controller_step: u64,
    log: TrainLog,
}

/// Everything alternating training mutates.
pub struct Trainer {
    pub cfg: RunConfig,
    pub task: TaskSpec,
    pub planner: PlannerParams,
    pub controller: ControllerParams,
    planner_adam: AdamState,
    controller_adam: AdamState,
    pub lagrange: LagrangeState,
    return_baseline: EmaBaseline,
    shaped_baseline: EmaBaseline,
    pub counter: TransitionCounter,
    pool: Arc<MapPool>,
    specs: Vec<CompiledFormula>,
    probe: Option<EvalSet>,
    pub round: usize,
    pub log: TrainLog,
}

fn round_rng(seed: u64, round: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(round as u64 + 1);
    r
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl Trainer {
    /// Fresh parameters and training maps for `cfg`.
    pub fn new(cfg: RunConfig) -> Result<Self, TrainError> {
        let task = TaskSpec::library(cfg.task, cfg.planner.horizon);
        let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
        let planner = PlannerParams::new(&cfg.planner, cfg.env.extent, &mut init);
        let controller = ControllerParams::new(&cfg.env, &cfg.controller, &mut init);
        let pool = MapPool::generate(
            &cfg.env,
            &task.reserved(),
            cfg.seed << 20,
            cfg.schedule.map_pool_size,
            cfg.planner.grid,
        )?;
        let specs = pool
            .entries()
            .iter()
            .map(|e| task.compile(&e.field))
            .collect::<Result<_, _>>()?;
        let probe = if cfg.schedule.probe_every_rounds > 0 {
            Some(EvalSet::new(
                &task,
                &cfg.env,
                cfg.planner.grid,
                cfg.schedule.probe_episodes,
                PROBE_EVAL_SEED + cfg.seed,
            )?)
        } else {
            None
        };
        Ok(Self {
            planner_adam: AdamState::zeros_like(
                &planner.params().into_iter().cloned().collect::<Vec<_>>(),
            ),
            controller_adam: controller.adam_state(),
            lagrange: LagrangeState::new(&cfg.planner),
            return_baseline: EmaBaseline::new(cfg.planner.baseline_decay),
            shaped_baseline: EmaBaseline::new(cfg.planner.baseline_decay),
            counter: TransitionCounter::new(),
            pool: Arc::new(pool),
            specs,
            probe,
            round: 0,
            log: TrainLog::default(),
            task,
            planner,
            controller,
            cfg,
        })
    }

    pub fn transitions(&self) -> u64 {
        self.counter.get()
    }

    fn budget_left(&self) -> bool {
        self.counter.get() < self.cfg.schedule.budget
    }

    fn finished(&self) -> bool {
        let s = &self.cfg.schedule;
        !self.budget_left()
            || (s.max_rounds > 0 && self.round >= s.max_rounds)
            || (s.stop_on_convergence && self.log.converged_at.is_some())
            || (s.stop_at_threshold && self.log.threshold_at.is_some())
    }

    /// Runs rounds until the budget or a stopping rule ends training, calling
    /// `after_round` after each.
    pub fn train(
        &mut self,
        mut after_round: impl FnMut(&Trainer) -> Result<(), TrainError>,
    ) -> Result<(), TrainError> {
        while !self.finished() {
            self.round()?;
            after_round(self)?;
        }
        Ok(())
    }

    /// One controller phase, one planner phase and possibly a probe.
    pub fn round(&mut self) -> Result<(), TrainError> {
        let mut rng = round_rng(self.cfg.seed, self.round);
        self.controller_phase(&mut rng)?;
        self.planner_phase(&mut rng)?;
        let every = self.cfg.schedule.probe_every_rounds;
        if every > 0 && (self.round + 1) % every == 0 {
            self.run_probe()?;
        }
        self.round += 1;
        Ok(())
    }

    fn controller_phase(&mut self, rng: &mut ChaCha8Rng) -> Result<(), TrainError> {
        let mode = if self.cfg.unaligned {
            GoalMode::Uniform
        } else {
            GoalMode::Planner {
                params: Arc::new(self.planner.clone()),
                start_region: self.task.start_region,
            }
        };
        let sampler = GoalSampler::new(
            mode,
            Arc::clone(&self.pool),
            self.cfg.env.clone(),
            &self.cfg.controller,
        );
        let phase_end = self.counter.get() + self.cfg.schedule.controller_transitions_per_phase;
        while self.budget_left() && self.counter.get() < phase_end {
            let left =
                (phase_end - self.counter.get()).min(self.cfg.schedule.budget - self.counter.get());
            let cc = ControllerConfig {
                rollout_steps: (self.cfg.controller.rollout_steps as u64).min(left) as usize,
                ..self.cfg.controller.clone()
            };
            let (buffer, stats) =
                collect_rollout(&self.controller, &sampler, &cc, rng, &self.counter)?;
            let ppo = ppo_update(
                &mut self.controller,
                &mut self.controller_adam,
                &buffer,
                &cc,
                rng,
            )?;
            if !(ppo.policy_loss.is_finite() && ppo.value_loss.is_finite()) {
                return Err(TrainError::NonFinite {
                    what: "controller loss".into(),
                    round: self.round,
                });
            }
            self.log.rows.push(MetricsRow {
                round: self.round,
                phase: "controller".into(),
                transitions: self.counter.get(),
                planner_updates: self.lagrange.updates,
                lambda: self.lagrange.lambda,
                controller_success: if stats.episodes == 0 {
                    0.0
                } else {
                    stats.successes as f64 / stats.episodes as f64
                },
                policy_loss: ppo.policy_loss,
                value_loss: ppo.value_loss,
                ..MetricsRow::default()
            });
        }
        Ok(())
    }

    fn planner_phase(&mut self, rng: &mut ChaCha8Rng) -> Result<(), TrainError> {
        for _ in 0..self.cfg.schedule.planner_updates_per_phase {
            if !self.budget_left() {
                break;
            }
            self.planner_update(rng)?;
        }
        Ok(())
    }

    /// One planner gradient step under the configured objective.
    pub fn planner_update(&mut self, rng: &mut ChaCha8Rng) -> Result<(), TrainError> {
        let pc = self.cfg.planner.clone();
        let env = &self.cfg.env;
        let mut batch = PlannerBatch {
            grids: Vec::with_capacity(pc.batch),
            starts: Vec::with_capacity(pc.batch),
            raw: Vec::with_capacity(pc.batch),
            advantages: Vec::new(),
        };
        let mut maps = Vec::with_capacity(pc.batch);
        let mut paths = Vec::with_capacity(pc.batch);
        for _ in 0..pc.batch {
            let k = rng.random_range(0..self.pool.len());
            let entry = self.pool.get(k);
            let x0 = sample_start(&self.task.start_region, rng);
            let p = sample_path(
                &self.planner,
                x0,
                &embed_grid(&entry.grid, &self.planner),
                rng,
            );
            batch.grids.push(entry.grid.clone());
            batch.starts.push(x0);
            batch.raw.push(p.raw);
            maps.push(k);
            paths.push(p.waypoints);
        }

        let tracked = if self.cfg.unaligned {
            0
        } else {
            pc.return_batch
        };
        let mut returns = Vec::with_capacity(tracked);
        if tracked > 0 {
            let jobs: Vec<TrackJob> = (0..tracked)
                .map(|i| TrackJob {
                    field: Arc::clone(&self.pool.get(maps[i]).field),
                    waypoints: paths[i].clone(),
                    theta0: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                })
                .collect();
            let outcomes = track_paths(&self.controller, &jobs, env, &self.counter, false);
            returns = outcomes
                .into_iter()
                .map(|o| PlanReturn::from_outcome(o, env).normalised)
                .collect();
            let b = self.return_baseline.value.unwrap_or_else(|| mean(&returns));
            batch.advantages = returns.iter().map(|r| r - b).collect();
            self.return_baseline.update(&returns);
        }

        let specs: Vec<&CompiledFormula> = maps.iter().map(|k| &self.specs[*k]).collect();
        let beta = pc.beta_at(self.lagrange.updates);
        let lambda = self.lagrange.lambda;
        let method = if self.cfg.unaligned {
            Method::Dscrl
        } else {
            self.cfg.method
        };
        let tape = Tape::new();
        let parts = match method {
            Method::Dscrl => dscrl_loss(&tape, &self.planner, &batch, &specs, lambda, beta)?,
            Method::Rs => {
                let smooth = SmoothingConfig::new(beta)?;
                let mut phis = Vec::with_capacity(paths.len());
                for (p, s) in paths.iter().zip(&specs) {
                    phis.push(s.soft_robustness(&Trajectory::new(p.clone())?, 0, smooth)?);
                }
                let b = self.shaped_baseline.value.unwrap_or_else(|| mean(&phis));
                let parts = rs_loss(&tape, &self.planner, &batch, &specs, lambda, beta, b)?;
                self.shaped_baseline.update(&phis);
                parts
            }
            Method::Rm => {
                let milestones = self.task.milestone_regions();
                let diag = env.extent[0].hypot(env.extent[1]);
                let w = self.cfg.schedule.rm_avoid_weight;
                let rewards: Vec<f64> = paths
                    .iter()
                    .zip(&maps)
                    .map(|(p, k)| {
                        let field = &self.pool.get(*k).field;
                        let clearance = p
                            .iter()
                            .map(|g| field.sdf(*g))
                            .fold(f64::INFINITY, f64::min);
                        rm_reward(p, &milestones, diag) + w * clearance.min(0.0)
                    })
                    .collect();
                let b = self.shaped_baseline.value.unwrap_or_else(|| mean(&rewards));
                let shaped: Vec<f64> = rewards.iter().map(|r| lambda * (r - b)).collect();
                self.shaped_baseline.update(&rewards);
                score_function_loss(&tape, &self.planner, &batch, &shaped)
            }
        };
        let loss = parts.loss.item();
        if !loss.is_finite() {
            return Err(TrainError::NonFinite {
                what: "planner loss".into(),
                round: self.round,
            });
        }
        let grads = tape.backward(parts.loss)?;
        let mut g: Vec<Tensor> = parts.params.iter().map(|v| grads.wrt(*v)).collect();
        clip_grad_norm(&mut g, pc.max_grad_norm);
        adam_step(
            &mut self.planner.params_mut(),
            &g,
            &mut self.planner_adam,
            &AdamConfig::with_lr(pc.lr),
        )?;
        self.planner
            .log_std
            .mapv_inplace(|v| v.clamp(pc.min_log_std, pc.max_log_std));

        let mut hard = Vec::with_capacity(paths.len());
        for (p, s) in paths.iter().zip(&specs) {
            hard.push(s.robustness_points(p, 0)?);
        }
        let mean_rho = mean(&hard);
        self.lagrange.update(mean_rho, &pc);
        self.log.rows.push(MetricsRow {
            round: self.round,
            phase: "planner".into(),
            transitions: self.counter.get(),
            planner_updates: self.lagrange.updates,
            lambda: self.lagrange.lambda,
            beta,
            mean_robustness: mean_rho,
            satisfied_fraction: hard.iter().filter(|r| **r > 0.0).count() as f64
                / hard.len() as f64,
            mean_plan_return: mean(&returns),
            ..MetricsRow::default()
        });
        Ok(())
    }

    /// Evaluates on the probe set and updates convergence bookkeeping.
    pub fn run_probe(&mut self) -> Result<Option<ProbeRecord>, TrainError> {
        let Some(set) = &self.probe else {
            return Ok(None);
        };
        let report = evaluate(&self.planner, &self.controller, set, &self.cfg.env)?;
        let rec = ProbeRecord {
            round: self.round,
            transitions: self.counter.get(),
            sr: report.sr,
            ttr: report.ttr,
        };
        let s = &self.cfg.schedule;
        self.log.probes.push(rec);
        let n = self.log.probes.len();
        if self.log.converged_at.is_none() && n > s.convergence_window {
            let earlier = self.log.probes[n - 1 - s.convergence_window].sr;
            if (rec.sr - earlier).abs() <= s.convergence_tolerance {
                self.log.converged_at = Some(rec.transitions);
            }
        }
        if self.log.threshold_at.is_none() && rec.sr >= s.threshold_sr {
            self.log.threshold_at = Some(rec.transitions);
        }
        self.log.rows.push(MetricsRow {
            round: self.round,
            phase: "probe".into(),
            transitions: rec.transitions,
            planner_updates: self.lagrange.updates,
            lambda: self.lagrange.lambda,
            probe_sr: rec.sr,
            probe_ttr: rec.ttr,
            ..MetricsRow::default()
        });
        log::info!(
            "round {} transitions {} probe SR {:.3} TtR {:?} lambda {:.3}",
            self.round,
            rec.transitions,
            rec.sr,
            rec.ttr,
            self.lagrange.lambda
        );
        Ok(Some(rec))
    }

    /// Parameters, optimiser moments and bookkeeping in one container.
    pub fn checkpoint(&self) -> Container {
        let mut c = Container::default();
        self.planner.save_into(&mut c);
        self.controller.save_into(&mut c);
        for (prefix, st) in [
            ("adam.planner", &self.planner_adam),
            ("adam.controller", &self.controller_adam),
        ] {
            for (i, (m, v)) in st.m.iter().zip(&st.v).enumerate() {
                c.push(format!("{prefix}.m.{i}"), m);
                c.push(format!("{prefix}.v.{i}"), v);
            }
        }
        let state = TrainerState {
            round: self.round,
            transitions: self.counter.get(),
            lagrange: self.lagrange,
            return_baseline: self.return_baseline,
            shaped_baseline: self.shaped_baseline,
            adam_planner_step: self.planner_adam.step,
            adam_controller_step: self.controller_adam.step,
            log: self.log.clone(),
        };
        c.meta = serde_json::json!({
            "config": self.cfg,
            "state": state,
        });
        c
    }

    /// Restores a checkpoint written by [`Trainer::checkpoint`] for the same config.
    pub fn restore(&mut self, c: &Container) -> Result<(), TrainError> {
        self.planner.load_from(c)?;
        self.controller.load_from(c)?;
        for (prefix, st) in [
            ("adam.planner", &mut self.planner_adam),
            ("adam.controller", &mut self.controller_adam),
        ] {
            for i in 0..st.m.len() {
                let shape = st.m[i].dim();
                st.m[i] = c.take_shaped(&format!("{prefix}.m.{i}"), shape)?;
                st.v[i] = c.take_shaped(&format!("{prefix}.v.{i}"), shape)?;
            }
        }
        let state: TrainerState = serde_json::from_value(c.meta["state"].clone())
            .map_err(|e| TrainError::State(e.to_string()))?;
        self.round = state.round;
        self.counter = TransitionCounter::new();
        self.counter.add(state.transitions);
        self.lagrange = state.lagrange;
        self.return_baseline = state.return_baseline;
        self.shaped_baseline = state.shaped_baseline;
        self.planner_adam.step = state.adam_planner_step;
        self.controller_adam.step = state.adam_controller_step;
        self.log = state.log;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let mut bytes = Vec::new();
        write_container(&mut bytes, &self.checkpoint())?;
        crate::io::atomic_write(path, &bytes)?;
        Ok(())
    }

    pub fn load(&mut self, path: &Path) -> Result<(), TrainError> {
        let c = read_container(std::fs::File::open(path)?)?;
        self.restore(&c)
    }
}

/// Reads the run config stored in a checkpoint.
pub fn checkpoint_config(c: &Container) -> Result<RunConfig, TrainError> {
    serde_json::from_value(c.meta["config"].clone()).map_err(|e| TrainError::State(e.to_string()))
}
