//! Unicycle kinematics, ray casting and the goal-reaching reward.

use std::f64::consts::{PI, TAU};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::EnvConfig;
use crate::sdf::SignedDistanceField;

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t > PI {
        t - TAU
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub clock: usize,
}

impl RobotState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
            clock: 0,
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Linear and angular velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub v: f64,
    pub omega: f64,
}

impl Action {
    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn clipped(self, cfg: &EnvConfig) -> Self {
        Self {
            v: self.v.clamp(-cfg.v_max, cfg.v_max),
            omega: self.omega.clamp(-cfg.omega_max, cfg.omega_max),
        }
    }
}

/// Pose features plus range readings.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: f64,
    pub y: f64,
    pub sin_theta: f64,
    pub cos_theta: f64,
    pub rays: Vec<f64>,
}

impl Observation {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn heading(&self) -> f64 {
        self.sin_theta.atan2(self.cos_theta)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.x, self.y, self.sin_theta, self.cos_theta];
        v.extend_from_slice(&self.rays);
        v
    }
}

/// Distances along `k` evenly spaced bearings (bearing 0 straight ahead, counter-clockwise)
/// to the first obstacle or off-map sample, marching at a quarter pixel.
pub fn raycast(state: &RobotState, field: &SignedDistanceField, k: usize, range: f64) -> Vec<f64> {
    let pitch = 0.25 * field.transform().pitch();
    let steps = (range / pitch).ceil() as usize;
    (0..k)
        .map(|r| {
            let a = state.theta + TAU * r as f64 / k as f64;
            let (s, c) = a.sin_cos();
            for n in 1..=steps {
                let d = n as f64 * pitch;
                if d >= range {
                    break;
                }
                if field.is_blocked([state.x + d * c, state.y + d * s]) {
                    return d;
                }
            }
            range
        })
        .collect()
}

pub fn observe(state: &RobotState, field: &SignedDistanceField, cfg: &EnvConfig) -> Observation {
    Observation {
        x: state.x,
        y: state.y,
        sin_theta: state.theta.sin(),
        cos_theta: state.theta.cos(),
        rays: raycast(state, field, cfg.rays, cfg.ray_range),
    }
}

/// One explicit-Euler step. On collision the position is kept and the heading still turns.
pub fn step(
    state: &RobotState,
    action: Action,
    field: &SignedDistanceField,
    cfg: &EnvConfig,
) -> (RobotState, Observation, bool) {
    let a = action.clipped(cfg);
    let (s, c) = state.theta.sin_cos();
    let nx = state.x + a.v * c * cfg.dt;
    let ny = state.y + a.v * s * cfg.dt;
    let collided = field.sdf([nx, ny]) <= 0.0;
    let next = RobotState {
        x: if collided { state.x } else { nx },
        y: if collided { state.y } else { ny },
        theta: wrap_angle(state.theta + a.omega * cfg.dt),
        clock: state.clock + 1,
    };
    let obs = observe(&next, field, cfg);
    (next, obs, collided)
}

/// `‖g − pos(o)‖ − ‖g − pos(o')‖`: positive when the robot got closer to `g`.
pub fn control_reward(o: &Observation, o_next: &Observation, g: [f64; 2]) -> f64 {
    let d0 = (g[0] - o.x).hypot(g[1] - o.y);
    let d1 = (g[0] - o_next.x).hypot(g[1] - o_next.y);
    d0 - d1
}

/// Shared count of simulated transitions.
#[derive(Debug, Clone, Default)]
pub struct TransitionCounter(Arc<AtomicU64>);

impl TransitionCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// One simulated robot on a fixed map; every [`Env::step`] is counted.
#[derive(Debug, Clone)]
pub struct Env {
    field: Arc<SignedDistanceField>,
    cfg: EnvConfig,
    state: RobotState,
    counter: TransitionCounter,
}

impl Env {
    pub fn new(
        field: Arc<SignedDistanceField>,
        cfg: EnvConfig,
        counter: TransitionCounter,
    ) -> Self {
        Self {
            field,
            cfg,
            state: RobotState::new(0.0, 0.0, 0.0),
            counter,
        }
    }

    pub fn reset(&mut self, state: RobotState) -> Observation {
        self.state = state;
        observe(&self.state, &self.field, &self.cfg)
    }

    pub fn step(&mut self, action: Action) -> (Observation, bool) {
        let (next, obs, collided) = step(&self.state, action, &self.field, &self.cfg);
        self.state = next;
        self.counter.add(1);
        (obs, collided)
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn field(&self) -> &Arc<SignedDistanceField> {
        &self.field
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn counter(&self) -> &TransitionCounter {
        &self.counter
    }
}

/// One line of an episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub t: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub reward: f64,
    pub collided: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdf::OccupancyMask;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn open_field() -> SignedDistanceField {
        SignedDistanceField::new(OccupancyMask::empty(64, 64, [2.42, 2.42]).unwrap())
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn zero_action_keeps_state() {
        let f = open_field();
        let cfg = EnvConfig::default();
        let s = RobotState::new(1.0, 1.0, 0.3);
        let (n, _, collided) = step(&s, Action::new(0.0, 0.0), &f, &cfg);
        assert!(!collided);
        assert_eq!((n.x, n.y, n.theta), (s.x, s.y, s.theta));
        assert_eq!(n.clock, 1);
    }

    #[test]
    fn euler_step_and_clipping() {
        let f = open_field();
        let cfg = EnvConfig {
            v_max: 1.0,
            ..EnvConfig::default()
        };
        let (n, _, _) = step(
            &RobotState::new(1.0, 1.0, 0.0),
            Action::new(1.0, 0.0),
            &f,
            &cfg,
        );
        assert!((n.x - 1.1).abs() < 1e-12 && n.y == 1.0);
        let (n, _, _) = step(
            &RobotState::new(1.0, 1.0, 0.0),
            Action::new(5.0, 100.0),
            &f,
            &cfg,
        );
        assert!((n.x - 1.1).abs() < 1e-12);
        assert!((n.theta - cfg.omega_max * cfg.dt).abs() < 1e-12);
    }

    #[test]
    fn wall_collision_reverts_position() {
        // Obstacle columns from x = 1.0 m onwards.
        let m = OccupancyMask::from_fn(100, 100, [2.0, 2.0], |i, _| i >= 50).unwrap();
        let f = SignedDistanceField::new(m);
        let cfg = EnvConfig {
            v_max: 1.0,
            ..EnvConfig::default()
        };
        let s = RobotState::new(0.95, 1.0, 0.0);
        let (n, _, collided) = step(&s, Action::new(1.0, 0.5), &f, &cfg);
        assert!(collided);
        assert_eq!((n.x, n.y), (s.x, s.y));
        assert!((n.theta - 0.05).abs() < 1e-12);
        // Leaving the map is a collision too.
        let (_, _, off) = step(
            &RobotState::new(0.02, 1.0, PI),
            Action::new(1.0, 0.0),
            &f,
            &cfg,
        );
        assert!(off);
    }

    #[test]
    fn rays_in_open_field_and_at_a_wall() {
        let f = open_field();
        let r = raycast(&RobotState::new(1.21, 1.21, 0.0), &f, 36, 0.8);
        assert!(r.iter().all(|d| *d == 0.8));

        let m = OccupancyMask::from_fn(200, 200, [4.0, 4.0], |i, _| i >= 150).unwrap();
        let f = SignedDistanceField::new(m);
        // Wall face at x = 3.0; robot at x = 2.0.
        let r = raycast(&RobotState::new(2.0, 2.0, 0.0), &f, 4, 2.0);
        let half_pitch = 0.5 * 4.0 / 200.0;
        assert!((r[0] - 1.0).abs() <= half_pitch + 1e-12, "{}", r[0]);
        assert_eq!(r[2], 2.0);
    }

    #[test]
    fn symmetric_scene_gives_cyclic_shift() {
        // A square ring of obstacles centred on the map.
        let n = 64;
        let m = OccupancyMask::from_fn(n, n, [2.0, 2.0], |i, j| {
            let (di, dj) = ((2 * i + 1) as i64 - n as i64, (2 * j + 1) as i64 - n as i64);
            let d = di.abs().max(dj.abs());
            (30..=34).contains(&d)
                || (di.abs() < 6 && dj.abs() > 12 && dj.abs() < 20)
                || (dj.abs() < 6 && di.abs() > 12 && di.abs() < 20)
        })
        .unwrap();
        let f = SignedDistanceField::new(m);
        let k = 36;
        let quarter = k / 4;
        let base = raycast(&RobotState::new(1.0, 1.0, 0.1), &f, k, 1.5);
        let turned = raycast(&RobotState::new(1.0, 1.0, 0.1 + PI / 2.0), &f, k, 1.5);
        let pitch = 0.25 * 2.0 / n as f64;
        for i in 0..k {
            assert!((turned[i] - base[(i + quarter) % k]).abs() <= pitch + 1e-12);
        }
    }

    #[test]
    fn rays_never_understate_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = OccupancyMask::from_fn(64, 64, [2.42, 2.42], |_, _| rng.random_bool(0.05)).unwrap();
        let f = SignedDistanceField::new(m);
        let range = 1.0;
        for _ in 0..200 {
            let s = RobotState::new(
                rng.random_range(0.1..2.3),
                rng.random_range(0.1..2.3),
                rng.random_range(-PI..PI),
            );
            if f.is_blocked(s.position()) {
                continue;
            }
            let rays = raycast(&s, &f, 36, range);
            let fine = 0.25 * f.transform().pitch() / 16.0;
            for (k, d) in rays.iter().enumerate() {
                assert!(*d <= range);
                let a = s.theta + TAU * k as f64 / 36.0;
                // First blocked point by a much finer march.
                let mut truth = range;
                let mut x = fine;
                while x < range {
                    if f.is_blocked([s.x + x * a.cos(), s.y + x * a.sin()]) {
                        truth = x;
                        break;
                    }
                    x += fine;
                }
                assert!(*d >= truth - 0.25 * f.transform().pitch() - 1e-9);
            }
        }
    }

    #[test]
    fn reward_cases_and_telescoping() {
        let f = open_field();
        let cfg = EnvConfig::default();
        let g = [2.0, 1.0];
        let s = RobotState::new(1.0, 1.0, 0.0);
        let o = observe(&s, &f, &cfg);
        let (_, o1, _) = step(&s, Action::new(0.22, 0.0), &f, &cfg);
        assert!((control_reward(&o, &o1, g) - 0.022).abs() < 1e-12);
        assert_eq!(control_reward(&o, &o, g), 0.0);
        // Circling the goal at a fixed radius.
        let on_circle = |a: f64| Observation {
            x: g[0] + 0.5 * a.cos(),
            y: g[1] + 0.5 * a.sin(),
            sin_theta: 0.0,
            cos_theta: 1.0,
            rays: vec![],
        };
        assert!(control_reward(&on_circle(0.1), &on_circle(0.7), g).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut state = s;
        let mut obs = o.clone();
        let mut total = 0.0;
        for _ in 0..100 {
            let a = Action::new(rng.random_range(-0.22..0.22), rng.random_range(-2.0..2.0));
            let (n, no, _) = step(&state, a, &f, &cfg);
            total += control_reward(&obs, &no, g);
            state = n;
            obs = no;
        }
        let expected = (g[0] - o.x).hypot(g[1] - o.y) - (g[0] - obs.x).hypot(g[1] - obs.y);
        assert!((total - expected).abs() < 1e-12);
    }

    #[test]
    fn env_counts_and_is_deterministic() {
        let f = Arc::new(open_field());
        let counter = TransitionCounter::new();
        let run = |c: &TransitionCounter| {
            let mut env = Env::new(f.clone(), EnvConfig::default(), c.clone());
            env.reset(RobotState::new(1.0, 1.0, 0.0));
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let mut trace = Vec::new();
            for _ in 0..50 {
                let a = Action::new(rng.random_range(-0.3..0.3), rng.random_range(-3.0..3.0));
                env.step(a);
                trace.push(*env.state());
            }
            trace
        };
        let a = run(&counter);
        let b = run(&counter);
        assert_eq!(a, b);
        assert_eq!(counter.get(), 100);
    }
}
