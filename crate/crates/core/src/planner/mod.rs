//! Stochastic waypoint planner: map encoder, deviation decoder, tanh-squashed
//! Gaussian sampling, training losses and path tracking.

mod loss;
mod tracking;

pub use loss::{
    dscrl_loss, rm_reward, rs_loss, score_function_loss, update_lambda, EmaBaseline, LagrangeState,
    LossParts, PlannerBatch,
};
pub use tracking::{plan_return, track_paths, PlanReturn, TrackJob, TrackOutcome};

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::grad::{gaussian_logpdf, Container, ContainerError, Tape, Tensor, Var};
use crate::nn::{Activation, BoundMlp, Mlp};
use crate::sdf::OccupancyMask;

/// Jacobian regulariser inside `log(1 − tanh(u)² + ε)`.
pub const TANH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Number of waypoints after the start, `T`.
    pub horizon: usize,
    /// Largest per-axis deviation between consecutive waypoints, meters.
    pub max_step: f64,
    /// Side of the occupancy grid fed to the encoder.
    pub grid: usize,
    pub encoder_hidden: usize,
    pub embed_dim: usize,
    pub decoder_hidden: Vec<usize>,
    pub init_log_std: f64,
    pub min_log_std: f64,
    pub max_log_std: f64,
    /// Scale of the decoder's output-layer initialisation.
    pub out_init_scale: f64,
    pub beta: f64,
    pub beta_growth: f64,
    pub beta_every: usize,
    pub beta_max: f64,
    pub lambda0: f64,
    pub lambda_lr: f64,
    pub margin: f64,
    pub lambda_bounds: [f64; 2],
    /// Paths per update for the specification term.
    pub batch: usize,
    /// Paths per update that are tracked by the controller for the return term.
    pub return_batch: usize,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub baseline_decay: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            max_step: 0.3,
            grid: 32,
            encoder_hidden: 256,
            embed_dim: 64,
            decoder_hidden: vec![256, 256, 256],
            init_log_std: 0.5f64.ln(),
            min_log_std: 0.05f64.ln(),
            max_log_std: 0.0,
            out_init_scale: 0.1,
            beta: 10.0,
            beta_growth: 2.0,
            beta_every: 200,
            beta_max: 160.0,
            lambda0: 1.0,
            lambda_lr: 0.05,
            margin: 0.05,
            lambda_bounds: [0.0, 100.0],
            batch: 32,
            return_batch: 32,
            lr: 3e-4,
            max_grad_norm: 10.0,
            baseline_decay: 0.99,
        }
    }
}

impl PlannerConfig {
    /// Smoothing temperature after `updates` planner updates.
    pub fn beta_at(&self, updates: usize) -> f64 {
        let doublings = if self.beta_every == 0 {
            0
        } else {
            updates / self.beta_every
        };
        (self.beta * self.beta_growth.powi(doublings.min(64) as i32)).min(self.beta_max)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.horizon == 0 || self.grid == 0 || self.embed_dim == 0 || self.encoder_hidden == 0 {
            return Err("planner sizes must be positive".into());
        }
        if !(self.max_step > 0.0 && self.beta > 0.0 && self.lr > 0.0) {
            return Err("planner.max_step, planner.beta and planner.lr must be positive".into());
        }
        if self.batch == 0 || self.return_batch == 0 || self.return_batch > self.batch {
            return Err("planner.return_batch must be in 1..=planner.batch".into());
        }
        if !(self.lambda_bounds[0] >= 0.0 && self.lambda_bounds[0] <= self.lambda_bounds[1]) {
            return Err("planner.lambda_bounds must satisfy 0 <= min <= max".into());
        }
        if !(self.min_log_std <= self.init_log_std && self.init_log_std <= self.max_log_std) {
            return Err("planner.init_log_std must lie within [min_log_std, max_log_std]".into());
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err("planner.baseline_decay must be in [0, 1)".into());
        }
        Ok(())
    }
}

/// Trainable planner parameters plus the shape information needed to use them.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerParams {
    pub encoder: Mlp,
    pub decoder: Mlp,
    /// `1 × 2T` log standard deviations; x deviations first, then y.
    pub log_std: Tensor,
    pub horizon: usize,
    pub max_step: f64,
    pub grid: usize,
    pub extent: [f64; 2],
}

/// Map embedding `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Tensor);

/// Sampled path with the raw pre-squash draws it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    pub waypoints: Vec<[f64; 2]>,
    /// `u₁ … u_T` laid out as `[x₁ … x_T, y₁ … y_T]`.
    pub raw: Vec<f64>,
    pub log_prob: f64,
}

impl PlannerParams {
    pub fn new<R: Rng>(cfg: &PlannerConfig, extent: [f64; 2], rng: &mut R) -> Self {
        let g2 = cfg.grid * cfg.grid;
        let encoder = Mlp::new(
            &[g2, cfg.encoder_hidden, cfg.embed_dim],
            Activation::Tanh,
            1.0,
            rng,
        );
        let mut sizes = vec![cfg.embed_dim + 2];
        sizes.extend(&cfg.decoder_hidden);
        sizes.push(2 * cfg.horizon);
        let decoder = Mlp::new(&sizes, Activation::Tanh, cfg.out_init_scale, rng);
        Self {
            encoder,
            decoder,
            log_std: Array2::from_elem((1, 2 * cfg.horizon), cfg.init_log_std),
            horizon: cfg.horizon,
            max_step: cfg.max_step,
            grid: cfg.grid,
            extent,
        }
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_std.iter().map(|v| v.exp()).collect()
    }

    /// Decoder input row `[E, x₀ normalised to [-0.5, 0.5]]`.
    fn decoder_input(&self, e: &Embedding, x0: [f64; 2]) -> Tensor {
        let mut row = e.0.clone().into_raw_vec_and_offset().0;
        row.extend(self.normalise_start(x0));
        Array2::from_shape_vec((1, row.len()), row).expect("decoder input")
    }

    pub(crate) fn normalise_start(&self, x0: [f64; 2]) -> [f64; 2] {
        [x0[0] / self.extent[0] - 0.5, x0[1] / self.extent[1] - 0.5]
    }

    /// Means `μ₁ … μ_T` of the raw draws.
    pub fn means(&self, e: &Embedding, x0: [f64; 2]) -> Vec<f64> {
        self.decoder
            .forward(&self.decoder_input(e, x0))
            .into_raw_vec_and_offset()
            .0
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut v = self.encoder.params();
        v.extend(self.decoder.params());
        v.push(&self.log_std);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.encoder.params_mut();
        v.extend(self.decoder.params_mut());
        v.push(&mut self.log_std);
        v
    }

    /// Records every parameter on `tape`, in [`PlannerParams::params`] order.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundPlanner<'t> {
        BoundPlanner {
            encoder: self.encoder.bind(tape),
            decoder: self.decoder.bind(tape),
            log_std: tape.leaf(self.log_std.clone()),
        }
    }

    pub fn save_into(&self, c: &mut Container) {
        self.encoder.save_into("planner.encoder", c);
        self.decoder.save_into("planner.decoder", c);
        c.push("planner.log_std", &self.log_std);
    }

    pub fn load_from(&mut self, c: &Container) -> Result<(), ContainerError> {
        self.encoder.load_from("planner.encoder", c)?;
        self.decoder.load_from("planner.decoder", c)?;
        self.log_std = c.take_shaped("planner.log_std", self.log_std.dim())?;
        Ok(())
    }
}

/// Planner parameters recorded on a tape.
pub struct BoundPlanner<'t> {
    pub encoder: BoundMlp<'t>,
    pub decoder: BoundMlp<'t>,
    pub log_std: Var<'t>,
}

impl<'t> BoundPlanner<'t> {
    pub fn vars(&self) -> Vec<Var<'t>> {
        let mut v = self.encoder.vars();
        v.extend(self.decoder.vars());
        v.push(self.log_std);
        v
    }
}

/// Downsamples `mask` to the planner grid and encodes it.
pub fn embed_map(mask: &OccupancyMask, params: &PlannerParams) -> Embedding {
    embed_grid(&mask.downsample(params.grid), params)
}

pub fn embed_grid(grid: &[f64], params: &PlannerParams) -> Embedding {
    let x = Array2::from_shape_vec((1, grid.len()), grid.to_vec()).expect("grid row");
    Embedding(params.encoder.forward(&x))
}

/// `g₀ = x₀`, `gₜ = gₜ₋₁ + tanh(uₜ)·Δg`.
pub fn integrate(x0: [f64; 2], raw: &[f64], max_step: f64) -> Vec<[f64; 2]> {
    let t = raw.len() / 2;
    let mut out = Vec::with_capacity(t + 1);
    let mut g = x0;
    out.push(g);
    for k in 0..t {
        g = [
            g[0] + raw[k].tanh() * max_step,
            g[1] + raw[t + k].tanh() * max_step,
        ];
        out.push(g);
    }
    out
}

/// Log-density of raw draws `raw` under the planner, including the tanh correction.
pub fn path_log_prob(means: &[f64], sigma: &[f64], raw: &[f64]) -> f64 {
    raw.iter()
        .zip(means)
        .zip(sigma)
        .map(|((u, m), s)| gaussian_logpdf(*u, *m, *s) - (1.0 - u.tanh().powi(2) + TANH_EPS).ln())
        .sum()
}

/// Draws `uₜ ~ N(μₜ, σ)` and integrates the squashed deviations from `x0`.
pub fn sample_path<R: Rng>(
    params: &PlannerParams,
    x0: [f64; 2],
    e: &Embedding,
    rng: &mut R,
) -> PlannedPath {
    let means = params.means(e, x0);
    let sigma = params.sigma();
    let raw: Vec<f64> = means
        .iter()
        .zip(&sigma)
        .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    PlannedPath {
        waypoints: integrate(x0, &raw, params.max_step),
        log_prob: path_log_prob(&means, &sigma, &raw),
        raw,
    }
}

/// The deterministic path through the means.
pub fn mode_path(params: &PlannerParams, x0: [f64; 2], e: &Embedding) -> PlannedPath {
    let means = params.means(e, x0);
    PlannedPath {
        waypoints: integrate(x0, &means, params.max_step),
        log_prob: path_log_prob(&means, &params.sigma(), &means),
        raw: means,
    }
}
