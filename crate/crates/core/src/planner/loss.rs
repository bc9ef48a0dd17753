//! Planner objectives on the tape, the multiplier update and return baselines.

use ndarray::Array2;

use super::{integrate, BoundPlanner, PlannerConfig, PlannerParams};
use crate::grad::{Tape, Tensor, Var};
use crate::stl::{CircleRegion, CompiledFormula, EvalError, SmoothingConfig};

/// Paths sampled earlier, replayed on a tape.
///
/// Every path gets the specification term; only the first `advantages.len()` paths were
/// tracked and receive the return term.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerBatch {
    /// Planner-grid obstacle fractions per path.
    pub grids: Vec<Vec<f64>>,
    pub starts: Vec<[f64; 2]>,
    /// Raw draws per path, `2T` each.
    pub raw: Vec<Vec<f64>>,
    /// `(r − b)` for the tracked paths.
    pub advantages: Vec<f64>,
}

impl PlannerBatch {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Waypoints of path `i`.
    pub fn waypoints(&self, i: usize, params: &PlannerParams) -> Vec<[f64; 2]> {
        integrate(self.starts[i], &self.raw[i], params.max_step)
    }
}

/// Loss plus the handles needed to read gradients off the tape.
pub struct LossParts<'t> {
    pub loss: Var<'t>,
    /// Parameter variables in [`PlannerParams::params`] order.
    pub params: Vec<Var<'t>>,
    /// Mean of the decoder, `B × 2T`.
    pub means: Var<'t>,
    /// Reparameterised waypoints per path; empty for score-function losses.
    pub waypoints: Vec<Vec<[Var<'t>; 2]>>,
    /// Smoothed robustness per path.
    pub soft_robustness: Vec<f64>,
}

struct Forward<'t> {
    bound: BoundPlanner<'t>,
    means: Var<'t>,
    sigma: Var<'t>,
}

fn matrix(rows: &[Vec<f64>]) -> Tensor {
    let c = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((rows.len(), c), |(i, j)| rows[i][j])
}

fn forward<'t>(tape: &'t Tape, params: &PlannerParams, batch: &PlannerBatch) -> Forward<'t> {
    assert!(!batch.is_empty(), "empty planner batch");
    let bound = params.bind(tape);
    let emb = bound.encoder.forward(tape.leaf(matrix(&batch.grids)));
    let starts: Vec<Vec<f64>> = batch
        .starts
        .iter()
        .map(|s| params.normalise_start(*s).to_vec())
        .collect();
    let means = bound
        .decoder
        .forward(emb.concat_cols(tape.leaf(matrix(&starts))));
    let sigma = bound.log_std.exp();
    Forward {
        bound,
        means,
        sigma,
    }
}

/// `Σⱼ log N(uⱼ; μⱼ, σⱼ)` per path as a `B × 1` column. The tanh correction does not
/// depend on the parameters once `u` is fixed, so it is left out.
fn log_probs<'t>(tape: &'t Tape, f: &Forward<'t>, batch: &PlannerBatch) -> Var<'t> {
    tape.try_gaussian_logpdf(tape.leaf(matrix(&batch.raw)), f.means, f.sigma)
        .expect("raw draws match the decoder output")
        .sum_cols()
}

/// Waypoints rebuilt from `u = μ + σ·ε`, with `ε` recovered from the stored draws and
/// held constant.
fn reparameterised_waypoints<'t>(
    tape: &'t Tape,
    f: &Forward<'t>,
    batch: &PlannerBatch,
    params: &PlannerParams,
) -> Vec<Vec<[Var<'t>; 2]>> {
    let b = batch.len();
    let t = params.horizon;
    let mu = f.means.value();
    let sig = f.sigma.value();
    let eps = Array2::from_shape_fn((b, 2 * t), |(i, j)| {
        (batch.raw[i][j] - mu[[i, j]]) / sig[[0, j]]
    });
    let spread = tape.leaf(Array2::ones((b, 1))).matmul(f.sigma);
    let u = f.means + spread * tape.leaf(eps);
    let d = u.tanh() * params.max_step;
    // Block upper-triangular ones turn per-step deviations into offsets from the start.
    let cumsum = Array2::from_shape_fn((2 * t, 2 * t), |(k, c)| {
        let same_axis = (k < t) == (c < t);
        if same_axis && k % t <= c % t {
            1.0
        } else {
            0.0
        }
    });
    let offsets = d.matmul(tape.leaf(cumsum));
    (0..b)
        .map(|i| {
            let [x0, y0] = batch.starts[i];
            let mut pts = Vec::with_capacity(t + 1);
            pts.push([tape.scalar(x0), tape.scalar(y0)]);
            for k in 0..t {
                pts.push([offsets.index(i, k) + x0, offsets.index(i, t + k) + y0]);
            }
            pts
        })
        .collect()
}

/// `Σᵢ log π(τᵢ)·Aᵢ / B` over the tracked paths.
fn return_term<'t>(tape: &'t Tape, logp: Var<'t>, batch: &PlannerBatch) -> Option<Var<'t>> {
    if batch.advantages.is_empty() {
        return None;
    }
    assert!(
        batch.advantages.len() <= batch.len(),
        "more advantages than paths"
    );
    // A batch mean like the robustness term; untracked paths carry no advantage.
    let b = batch.len() as f64;
    let w = Array2::from_shape_fn((batch.len(), 1), |(i, _)| {
        batch.advantages.get(i).map_or(0.0, |a| a / b)
    });
    Some((logp * tape.leaf(w)).sum())
}

/// Differentiable planner loss: `−(return term + λ·mean soft robustness)`, with the
/// robustness differentiated through the reparameterised waypoints.
pub fn dscrl_loss<'t>(
    tape: &'t Tape,
    params: &PlannerParams,
    batch: &PlannerBatch,
    specs: &[&CompiledFormula],
    lambda: f64,
    beta: f64,
) -> Result<LossParts<'t>, EvalError> {
    assert_eq!(specs.len(), batch.len(), "one specification per path");
    let cfg = SmoothingConfig::new(beta)?;
    let f = forward(tape, params, batch);
    let logp = log_probs(tape, &f, batch);
    let waypoints = reparameterised_waypoints(tape, &f, batch, params);
    let mut phis = Vec::with_capacity(batch.len());
    for (pts, spec) in waypoints.iter().zip(specs) {
        phis.push(spec.soft_robustness_tape(tape, pts, 0, cfg)?);
    }
    let soft_robustness = phis.iter().map(|v| v.item()).collect();
    let phi_mean = tape.try_stack(&phis).map_err(EvalError::Tape)?.mean();
    let mut objective = phi_mean * lambda;
    if let Some(pg) = return_term(tape, logp, batch) {
        objective = objective + pg;
    }
    Ok(LossParts {
        loss: -objective,
        params: f.bound.vars(),
        means: f.means,
        waypoints,
        soft_robustness,
    })
}

/// `−Σᵢ log π(τᵢ)·(Aᵢ + sᵢ)/B`: the return term plus a per-path shaped reward `sᵢ`
/// (already centred and weighted) treated as a constant.
pub fn score_function_loss<'t>(
    tape: &'t Tape,
    params: &PlannerParams,
    batch: &PlannerBatch,
    shaped: &[f64],
) -> LossParts<'t> {
    assert_eq!(shaped.len(), batch.len(), "one shaped reward per path");
    let f = forward(tape, params, batch);
    let logp = log_probs(tape, &f, batch);
    let b = batch.len() as f64;
    let w = Array2::from_shape_fn((batch.len(), 1), |(i, _)| shaped[i] / b);
    let mut objective = (logp * tape.leaf(w)).sum();
    if let Some(pg) = return_term(tape, logp, batch) {
        objective = objective + pg;
    }
    LossParts {
        loss: -objective,
        params: f.bound.vars(),
        means: f.means,
        waypoints: Vec::new(),
        soft_robustness: Vec::new(),
    }
}

/// Reward shaping: the smoothed robustness enters only as a score-function reward
/// `λ·(φᵢ − b_φ)`.
pub fn rs_loss<'t>(
    tape: &'t Tape,
    params: &PlannerParams,
    batch: &PlannerBatch,
    specs: &[&CompiledFormula],
    lambda: f64,
    beta: f64,
    phi_baseline: f64,
) -> Result<LossParts<'t>, EvalError> {
    assert_eq!(specs.len(), batch.len(), "one specification per path");
    let cfg = SmoothingConfig::new(beta)?;
    let mut phis = Vec::with_capacity(batch.len());
    for (i, spec) in specs.iter().enumerate() {
        let tau = crate::stl::Trajectory::new(batch.waypoints(i, params))?;
        phis.push(spec.soft_robustness(&tau, 0, cfg)?);
    }
    let shaped: Vec<f64> = phis.iter().map(|p| lambda * (p - phi_baseline)).collect();
    let mut parts = score_function_loss(tape, params, batch, &shaped);
    parts.soft_robustness = phis;
    Ok(parts)
}

/// Milestone reward: the number of regions visited in order, minus the normalised
/// distance from the path to the next unvisited one.
pub fn rm_reward(waypoints: &[[f64; 2]], milestones: &[CircleRegion], diag: f64) -> f64 {
    let mut k = 0;
    let mut closest = f64::INFINITY;
    for p in waypoints {
        while k < milestones.len() && milestones[k].contains(*p) {
            k += 1;
            closest = f64::INFINITY;
        }
        if let Some(m) = milestones.get(k) {
            closest = closest.min((p[0] - m.center[0]).hypot(p[1] - m.center[1]));
        }
    }
    if k == milestones.len() {
        k as f64
    } else {
        k as f64 - (closest / diag).min(1.0)
    }
}

/// Dual ascent on the multiplier: `λ ← clip(λ + η(δ − ρ̄))`.
pub fn update_lambda(lambda: f64, mean_robustness: f64, cfg: &PlannerConfig) -> f64 {
    (lambda + cfg.lambda_lr * (cfg.margin - mean_robustness))
        .clamp(cfg.lambda_bounds[0], cfg.lambda_bounds[1])
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LagrangeState {
    pub lambda: f64,
    pub updates: usize,
}

impl LagrangeState {
    pub fn new(cfg: &PlannerConfig) -> Self {
        Self {
            lambda: cfg
                .lambda0
                .clamp(cfg.lambda_bounds[0], cfg.lambda_bounds[1]),
            updates: 0,
        }
    }

    pub fn update(&mut self, mean_robustness: f64, cfg: &PlannerConfig) {
        self.lambda = update_lambda(self.lambda, mean_robustness, cfg);
        self.updates += 1;
    }
}

/// Exponential moving average, seeded by the first observation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EmaBaseline {
    pub value: Option<f64>,
    pub decay: f64,
}

impl EmaBaseline {
    pub fn new(decay: f64) -> Self {
        Self { value: None, decay }
    }

    pub fn get(&self) -> f64 {
        self.value.unwrap_or(0.0)
    }

    /// Folds in each sample in order.
    pub fn update(&mut self, samples: &[f64]) {
        for &r in samples {
            self.value = Some(match self.value {
                None => r,
                Some(b) => self.decay * b + (1.0 - self.decay) * r,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::small_config;
    use super::super::{embed_grid, sample_path};
    use super::*;
    use crate::stl::{parse_spec, Bindings, Trajectory};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> (CompiledFormula, Bindings) {
        let b = Bindings::new()
            .with(
                "A",
                std::sync::Arc::new(CircleRegion::new([1.5, 0.6], 0.25)),
            )
            .with(
                "B",
                std::sync::Arc::new(CircleRegion::new([1.2, 1.6], 0.25)),
            );
        let f = parse_spec("F[0,6] A & F[0,6] B", &b).unwrap();
        (CompiledFormula::new(&f, &b).unwrap(), b)
    }

    fn batch(params: &PlannerParams, n: usize, tracked: usize, seed: u64) -> PlannerBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = PlannerBatch {
            grids: Vec::new(),
            starts: Vec::new(),
            raw: Vec::new(),
            advantages: Vec::new(),
        };
        for i in 0..n {
            let grid: Vec<f64> = (0..64)
                .map(|k| ((k * 7 + i) % 5 == 0) as u8 as f64)
                .collect();
            let e = embed_grid(&grid, params);
            let x0 = [0.3 + 0.1 * i as f64, 0.4];
            let p = sample_path(params, x0, &e, &mut rng);
            out.grids.push(grid);
            out.starts.push(x0);
            out.raw.push(p.raw);
            if i < tracked {
                out.advantages.push(0.3 * i as f64 - 0.4);
            }
        }
        out
    }

    fn params(seed: u64) -> PlannerParams {
        PlannerParams::new(
            &small_config(),
            [2.42, 2.42],
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
    }

    #[test]
    fn reparameterised_waypoints_replay_the_samples() {
        let p = params(0);
        let b = batch(&p, 4, 0, 1);
        let (spec, _) = spec();
        let tape = Tape::new();
        let parts = dscrl_loss(&tape, &p, &b, &[&spec; 4], 1.0, 10.0).unwrap();
        for i in 0..4 {
            let expected = b.waypoints(i, &p);
            for (w, e) in parts.waypoints[i].iter().zip(&expected) {
                assert!((w[0].item() - e[0]).abs() < 1e-12 && (w[1].item() - e[1]).abs() < 1e-12);
            }
            let soft = spec
                .soft_robustness(
                    &Trajectory::new(expected).unwrap(),
                    0,
                    SmoothingConfig::new(10.0).unwrap(),
                )
                .unwrap();
            assert!((soft - parts.soft_robustness[i]).abs() < 1e-12);
        }
    }

    /// Loss recomputed off-tape with the noise `ε` held fixed.
    fn lambda_term_value(
        p: &PlannerParams,
        b: &PlannerBatch,
        eps: &[Vec<f64>],
        spec: &CompiledFormula,
    ) -> f64 {
        let cfg = SmoothingConfig::new(10.0).unwrap();
        let sig = p.sigma();
        let mut total = 0.0;
        for i in 0..b.len() {
            let e = embed_grid(&b.grids[i], p);
            let mu = p.means(&e, b.starts[i]);
            let raw: Vec<f64> = (0..mu.len()).map(|j| mu[j] + sig[j] * eps[i][j]).collect();
            let tau = Trajectory::new(integrate(b.starts[i], &raw, p.max_step)).unwrap();
            total += spec.soft_robustness(&tau, 0, cfg).unwrap();
        }
        -2.0 * total / b.len() as f64
    }

    #[test]
    fn lambda_term_gradient_matches_finite_differences() {
        let (spec, _) = spec();
        let p = params(3);
        let b = batch(&p, 3, 0, 4);
        let eps: Vec<Vec<f64>> = (0..b.len())
            .map(|i| {
                let e = embed_grid(&b.grids[i], &p);
                let mu = p.means(&e, b.starts[i]);
                let sig = p.sigma();
                (0..mu.len())
                    .map(|j| (b.raw[i][j] - mu[j]) / sig[j])
                    .collect()
            })
            .collect();
        let tape = Tape::new();
        let parts = dscrl_loss(&tape, &p, &b, &[&spec; 3], 2.0, 10.0).unwrap();
        let grads = tape.backward(parts.loss).unwrap();
        let analytic: Vec<Tensor> = parts.params.iter().map(|v| grads.wrt(*v)).collect();
        let h = 1e-6;
        let n_params = p.params().len();
        // The last decoder weight, the last decoder bias and the log std.
        for which in [n_params - 3, n_params - 2, n_params - 1] {
            let shape = p.params()[which].dim();
            for idx in [(0, 0), (shape.0 - 1, shape.1 - 1), (0, shape.1 / 2)] {
                let mut up = p.clone();
                up.params_mut()[which][idx] += h;
                let mut dn = p.clone();
                dn.params_mut()[which][idx] -= h;
                let fd = (lambda_term_value(&up, &b, &eps, &spec)
                    - lambda_term_value(&dn, &b, &eps, &spec))
                    / (2.0 * h);
                let a = analytic[which][idx];
                assert!(
                    (a - fd).abs() <= 1e-5 * fd.abs().max(1e-2),
                    "param {which} {idx:?}: {a} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn return_term_is_the_score_function() {
        let p = params(5);
        let b = batch(&p, 4, 2, 6);
        let tape = Tape::new();
        let parts = score_function_loss(&tape, &p, &b, &[0.0; 4]);
        let g_means = tape.backward(parts.loss).unwrap().wrt(parts.means);
        // d loss / d μ = −A_i/B·(u − μ)/σ² on the tracked paths, zero elsewhere.
        let mu = parts.means.value();
        let sig = p.sigma();
        for i in 0..4 {
            for j in 0..mu.ncols() {
                let expected = if i < 2 {
                    -b.advantages[i] / 4.0 * (b.raw[i][j] - mu[[i, j]]) / sig[j].powi(2)
                } else {
                    0.0
                };
                assert!((g_means[[i, j]] - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_signal_gives_zero_gradient() {
        let (spec, _) = spec();
        let p = params(7);
        let mut b = batch(&p, 3, 3, 8);
        b.advantages = vec![0.0; 3];
        // φ centred on itself: every shaped reward is zero.
        let tape = Tape::new();
        let probe = rs_loss(&tape, &p, &b, &[&spec; 3], 1.0, 10.0, 0.0).unwrap();
        let phi = probe.soft_robustness.clone();
        for i in 0..3 {
            let single = PlannerBatch {
                grids: vec![b.grids[i].clone()],
                starts: vec![b.starts[i]],
                raw: vec![b.raw[i].clone()],
                advantages: vec![0.0],
            };
            let tape = Tape::new();
            let parts = rs_loss(&tape, &p, &single, &[&spec], 1.0, 10.0, phi[i]).unwrap();
            let g = tape.backward(parts.loss).unwrap();
            for v in parts.params {
                assert!(g.wrt(v).iter().all(|x| *x == 0.0));
            }
        }
        // A single repeated sample with zero advantage and λ = 0.
        let rep = PlannerBatch {
            grids: vec![b.grids[0].clone(); 4],
            starts: vec![b.starts[0]; 4],
            raw: vec![b.raw[0].clone(); 4],
            advantages: vec![0.0; 4],
        };
        let tape = Tape::new();
        let parts = dscrl_loss(&tape, &p, &rep, &[&spec; 4], 0.0, 10.0).unwrap();
        let g = tape.backward(parts.loss).unwrap();
        for v in parts.params {
            assert!(g.wrt(v).iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn rm_reward_tiers() {
        let m = [
            CircleRegion::new([1.0, 0.0], 0.2),
            CircleRegion::new([2.0, 0.0], 0.2),
        ];
        let diag = 4.0;
        let none = rm_reward(&[[0.0, 0.0], [0.5, 0.0]], &m, diag);
        let first = rm_reward(&[[0.0, 0.0], [1.0, 0.0]], &m, diag);
        let both = rm_reward(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], &m, diag);
        assert!((none - (-0.5 / 4.0)).abs() < 1e-12);
        assert!(none < first && first < both);
        assert_eq!(both, 2.0);
        // Out of order does not count.
        assert!(rm_reward(&[[2.0, 0.0], [1.0, 0.0]], &m, diag) < 2.0);
    }

    #[test]
    fn lambda_moves_against_the_margin() {
        let cfg = PlannerConfig::default();
        assert!(update_lambda(1.0, -0.5, &cfg) > 1.0);
        assert!(update_lambda(1.0, 0.5, &cfg) < 1.0);
        assert_eq!(update_lambda(0.0, 10.0, &cfg), 0.0);
        assert_eq!(update_lambda(100.0, -10.0, &cfg), 100.0);
        assert!((update_lambda(1.0, 0.05, &cfg) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ema_baseline() {
        let mut b = EmaBaseline::new(0.5);
        b.update(&[2.0]);
        assert_eq!(b.get(), 2.0);
        b.update(&[0.0, 0.0]);
        assert_eq!(b.get(), 0.5);
    }
}
