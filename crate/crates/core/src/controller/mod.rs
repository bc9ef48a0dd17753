//! Goal-conditioned low-level controller trained with PPO.

mod buffer;
mod rollout;

pub use buffer::{discounted_returns, gae, RolloutBuffer};
pub use rollout::{
    collect_rollout, sample_start, EpisodeSpec, GoalMode, GoalSampler, RolloutStats, SampleError,
};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::grad::{
    adam_step, clip_grad_norm, gaussian_logpdf, AdamConfig, AdamState, Container, ContainerError,
    GradError, Tape, Tensor,
};
use crate::nn::{Activation, Mlp};
use crate::sim::{Action, EnvConfig, Observation};

/// Distance scale of the squashed goal-range feature.
const RANGE_SCALE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub min_log_std: f64,
    pub max_log_std: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub lr: f64,
    pub max_grad_norm: f64,
    /// Transitions gathered per PPO update.
    pub rollout_steps: usize,
    /// Environments stepped in lockstep while collecting.
    pub parallel_envs: usize,
    /// Multiplier on the progress reward.
    pub reward_scale: f64,
    /// Subtracted (before scaling) on every blocked move.
    pub collision_penalty: f64,
    /// Radius of the noise disc around a sampled hop start.
    pub start_noise: f64,
    /// Minimum clearance of sampled starts and goals.
    pub clearance: f64,
    pub sample_retries: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            init_log_std: -0.5,
            min_log_std: -3.0,
            max_log_std: 0.5,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatches: 4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            lr: 3e-4,
            max_grad_norm: 0.5,
            rollout_steps: 4096,
            parallel_envs: 16,
            reward_scale: 10.0,
            collision_penalty: 0.05,
            start_noise: 0.1,
            clearance: 0.05,
            sample_retries: 1000,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err("controller.hidden needs positive layer sizes".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err("controller.gamma and controller.gae_lambda must be in [0, 1]".into());
        }
        if self.epochs == 0 || self.minibatches == 0 || self.parallel_envs == 0 {
            return Err("controller.epochs, minibatches and parallel_envs must be positive".into());
        }
        if self.rollout_steps < self.minibatches {
            return Err("controller.rollout_steps must cover every minibatch".into());
        }
        if !(self.lr > 0.0 && self.clip > 0.0) {
            return Err("controller.lr and controller.clip must be positive".into());
        }
        Ok(())
    }
}

/// Dimension of the controller input for `env`.
pub fn feature_dim(env: &EnvConfig) -> usize {
    env.obs_dim() + 3
}

/// Normalised pose, ranges and goal encoding.
pub fn features_into(obs: &Observation, goal: [f64; 2], env: &EnvConfig, out: &mut Vec<f64>) {
    out.push(obs.x / env.extent[0]);
    out.push(obs.y / env.extent[1]);
    out.push(obs.sin_theta);
    out.push(obs.cos_theta);
    out.extend(obs.rays.iter().map(|r| r / env.ray_range));
    let (dx, dy) = (goal[0] - obs.x, goal[1] - obs.y);
    let range = dx.hypot(dy);
    let bearing = dy.atan2(dx) - obs.heading();
    out.push(range / (range + RANGE_SCALE));
    out.push(bearing.sin());
    out.push(bearing.cos());
}

pub fn features(obs: &Observation, goal: [f64; 2], env: &EnvConfig) -> Vec<f64> {
    let mut v = Vec::with_capacity(feature_dim(env));
    features_into(obs, goal, env, &mut v);
    v
}

fn feature_matrix(obs: &[&Observation], goals: &[[f64; 2]], env: &EnvConfig) -> Tensor {
    let mut flat = Vec::with_capacity(obs.len() * feature_dim(env));
    for (o, g) in obs.iter().zip(goals) {
        features_into(o, *g, env, &mut flat);
    }
    Array2::from_shape_vec((obs.len(), feature_dim(env)), flat).expect("feature rows")
}

/// Maps a normalised action in `[-1, 1]²` (clipped) to velocity commands.
pub fn scale_action(raw: [f64; 2], env: &EnvConfig) -> Action {
    Action::new(
        raw[0].clamp(-1.0, 1.0) * env.v_max,
        raw[1].clamp(-1.0, 1.0) * env.omega_max,
    )
}

/// Anything that can drive a batch of robots toward goals.
pub trait Policy: Sync {
    fn actions(&self, obs: &[&Observation], goals: &[[f64; 2]], env: &EnvConfig) -> Vec<Action>;
}

/// Turn toward the goal and drive when roughly facing it; ignores obstacles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PursuitPolicy {
    pub turn_gain: f64,
}

impl Default for PursuitPolicy {
    fn default() -> Self {
        Self { turn_gain: 4.0 }
    }
}

impl Policy for PursuitPolicy {
    fn actions(&self, obs: &[&Observation], goals: &[[f64; 2]], env: &EnvConfig) -> Vec<Action> {
        obs.iter()
            .zip(goals)
            .map(|(o, g)| {
                let (dx, dy) = (g[0] - o.x, g[1] - o.y);
                let err = crate::sim::wrap_angle(dy.atan2(dx) - o.heading());
                let range = dx.hypot(dy);
                let v = (env.v_max * err.cos().max(0.0)).min(range / env.dt);
                Action::new(v, self.turn_gain * err).clipped(env)
            })
            .collect()
    }
}

/// Gaussian policy and value networks over [`features`].
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    pub policy: Mlp,
    pub value: Mlp,
    /// `1 × 2` log standard deviation of the normalised action.
    pub log_std: Tensor,
}

/// One stochastic action with the quantities PPO stores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActSample {
    pub raw: [f64; 2],
    pub log_prob: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub skipped: bool,
}

impl ControllerParams {
    pub fn new<R: Rng>(env: &EnvConfig, cfg: &ControllerConfig, rng: &mut R) -> Self {
        let mut sizes = vec![feature_dim(env)];
        sizes.extend(&cfg.hidden);
        let mut ps = sizes.clone();
        ps.push(2);
        sizes.push(1);
        Self {
            policy: Mlp::new(&ps, Activation::Tanh, 0.01, rng),
            value: Mlp::new(&sizes, Activation::Tanh, 1.0, rng),
            log_std: Array2::from_elem((1, 2), cfg.init_log_std),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut v = self.policy.params();
        v.extend(self.value.params());
        v.push(&self.log_std);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.policy.params_mut();
        v.extend(self.value.params_mut());
        v.push(&mut self.log_std);
        v
    }

    pub fn adam_state(&self) -> AdamState {
        AdamState::zeros_like(&self.params().into_iter().cloned().collect::<Vec<_>>())
    }

    /// Samples one action per feature row.
    pub fn act<R: Rng>(&self, feats: &Tensor, rng: &mut R) -> Vec<ActSample> {
        let mean = self.policy.forward(feats);
        let value = self.value.forward(feats);
        let sigma = [self.log_std[[0, 0]].exp(), self.log_std[[0, 1]].exp()];
        (0..feats.nrows())
            .map(|i| {
                let mut raw = [0.0; 2];
                let mut log_prob = 0.0;
                for k in 0..2 {
                    let m = mean[[i, k]];
                    raw[k] = m + sigma[k] * rng.sample::<f64, _>(StandardNormal);
                    log_prob += gaussian_logpdf(raw[k], m, sigma[k]);
                }
                ActSample {
                    raw,
                    log_prob,
                    value: value[[i, 0]],
                }
            })
            .collect()
    }

    pub fn values(&self, feats: &Tensor) -> Vec<f64> {
        self.value.forward(feats).column(0).to_vec()
    }

    pub fn save_into(&self, c: &mut Container) {
        self.policy.save_into("controller.policy", c);
        self.value.save_into("controller.value", c);
        c.push("controller.log_std", &self.log_std);
    }

    pub fn load_from(&mut self, c: &Container) -> Result<(), ContainerError> {
        self.policy.load_from("controller.policy", c)?;
        self.value.load_from("controller.value", c)?;
        self.log_std = c.take_shaped("controller.log_std", (1, 2))?;
        Ok(())
    }
}

impl Policy for ControllerParams {
    /// Deterministic mean actions.
    fn actions(&self, obs: &[&Observation], goals: &[[f64; 2]], env: &EnvConfig) -> Vec<Action> {
        if obs.is_empty() {
            return Vec::new();
        }
        let mean = self.policy.forward(&feature_matrix(obs, goals, env));
        (0..obs.len())
            .map(|i| scale_action([mean[[i, 0]], mean[[i, 1]]], env))
            .collect()
    }
}

/// Clipped-surrogate PPO over a finished buffer. A buffer whose feature rows are all
/// identical carries no learning signal and is skipped.
pub fn ppo_update<R: Rng>(
    params: &mut ControllerParams,
    adam: &mut AdamState,
    buffer: &RolloutBuffer,
    cfg: &ControllerConfig,
    rng: &mut R,
) -> Result<PpoStats, GradError> {
    let n = buffer.len();
    let f = buffer.feature_dim;
    if n == 0 || buffer.is_degenerate() {
        log::warn!("skipping PPO update on a degenerate buffer of {n} transitions");
        return Ok(PpoStats {
            skipped: true,
            ..PpoStats::default()
        });
    }
    let adv = buffer.normalised_advantages();
    let feats = Array2::from_shape_vec((n, f), buffer.features.clone()).expect("buffer features");
    let mut order: Vec<usize> = (0..n).collect();
    let per = n.div_ceil(cfg.minibatches);
    let adam_cfg = AdamConfig::with_lr(cfg.lr);
    let mut stats = PpoStats::default();
    let mut batches = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(per) {
            let m = chunk.len();
            let x = Array2::from_shape_fn((m, f), |(i, j)| feats[[chunk[i], j]]);
            let a = Array2::from_shape_fn((m, 2), |(i, k)| buffer.actions[chunk[i]][k]);
            let old = Array2::from_shape_fn((m, 1), |(i, _)| buffer.log_probs[chunk[i]]);
            let ad = Array2::from_shape_fn((m, 1), |(i, _)| adv[chunk[i]]);
            let tgt = Array2::from_shape_fn((m, 1), |(i, _)| buffer.value_targets[chunk[i]]);

            let tape = Tape::new();
            let pol = params.policy.bind(&tape);
            let val = params.value.bind(&tape);
            let log_std = tape.leaf(params.log_std.clone());
            let x = tape.leaf(x);
            let mean = pol.forward(x);
            let logp = tape
                .try_gaussian_logpdf(tape.leaf(a), mean, log_std.exp())?
                .sum_cols();
            let ratio = (logp - tape.leaf(old.clone())).exp();
            let ad = tape.leaf(ad);
            let surrogate = (ratio * ad).minimum(ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * ad);
            let policy_loss = -surrogate.mean();
            let value_loss = (val.forward(x) - tape.leaf(tgt)).square().mean();
            let entropy = log_std.sum() + (1.0 + (2.0 * std::f64::consts::PI).ln());
            let loss = policy_loss + value_loss * cfg.value_coef - entropy * cfg.entropy_coef;

            let grads = tape.backward(loss)?;
            let mut vars = pol.vars();
            vars.extend(val.vars());
            vars.push(log_std);
            let mut g: Vec<Tensor> = vars.iter().map(|v| grads.wrt(*v)).collect();
            clip_grad_norm(&mut g, cfg.max_grad_norm);
            adam_step(&mut params.params_mut(), &g, adam, &adam_cfg)?;
            params
                .log_std
                .mapv_inplace(|v| v.clamp(cfg.min_log_std, cfg.max_log_std));

            let r = ratio.value();
            let lp = logp.value();
            stats.policy_loss += policy_loss.item();
            stats.value_loss += value_loss.item();
            stats.entropy += entropy.item();
            stats.approx_kl += (&old - &lp).mean().unwrap_or(0.0);
            stats.clip_fraction +=
                r.iter().filter(|v| (**v - 1.0).abs() > cfg.clip).count() as f64 / m as f64;
            batches += 1.0;
        }
    }
    stats.policy_loss /= batches;
    stats.value_loss /= batches;
    stats.entropy /= batches;
    stats.approx_kl /= batches;
    stats.clip_fraction /= batches;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs_at(x: f64, y: f64, theta: f64) -> Observation {
        Observation {
            x,
            y,
            sin_theta: theta.sin(),
            cos_theta: theta.cos(),
            rays: vec![1.0; 36],
        }
    }

    #[test]
    fn features_have_the_documented_layout() {
        let env = EnvConfig::default();
        assert_eq!(feature_dim(&env), 43);
        let v = features(&obs_at(1.21, 0.605, 0.0), [1.71, 0.605], &env);
        assert_eq!(v.len(), 43);
        assert!((v[0] - 0.5).abs() < 1e-12 && (v[1] - 0.25).abs() < 1e-12);
        assert_eq!(v[4], 1.0);
        // Goal straight ahead at 0.5 m.
        assert!((v[40] - 0.5).abs() < 1e-12);
        assert!(v[41].abs() < 1e-12 && (v[42] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn actions_are_clipped_to_limits() {
        let env = EnvConfig::default();
        let a = scale_action([3.0, -7.0], &env);
        assert_eq!(a, Action::new(env.v_max, -env.omega_max));
    }

    #[test]
    fn pursuit_turns_toward_the_goal() {
        let env = EnvConfig::default();
        let o = obs_at(1.0, 1.0, 0.0);
        let a = PursuitPolicy::default().actions(&[&o], &[[1.0, 2.0]], &env)[0];
        assert!(a.omega > 0.0 && a.v.abs() < 1e-9);
        let a = PursuitPolicy::default().actions(&[&o], &[[2.0, 1.0]], &env)[0];
        assert!((a.v - env.v_max).abs() < 1e-12 && a.omega.abs() < 1e-12);
    }

    #[test]
    fn sampled_log_probs_match_the_density() {
        let env = EnvConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ControllerParams::new(&env, &ControllerConfig::default(), &mut rng);
        let o = obs_at(0.5, 0.5, 1.0);
        let x = feature_matrix(&[&o], &[[1.0, 1.0]], &env);
        let mean = p.policy.forward(&x);
        for s in p.act(&x, &mut rng) {
            let sig = p.log_std[[0, 0]].exp();
            let lp = gaussian_logpdf(s.raw[0], mean[[0, 0]], sig)
                + gaussian_logpdf(s.raw[1], mean[[0, 1]], p.log_std[[0, 1]].exp());
            assert!((lp - s.log_prob).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let env = EnvConfig::default();
        let cfg = ControllerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ControllerParams::new(&env, &cfg, &mut rng);
        let mut q = ControllerParams::new(&env, &cfg, &mut rng);
        let mut c = Container::default();
        p.save_into(&mut c);
        q.load_from(&c).unwrap();
        assert_eq!(p, q);
    }
}
