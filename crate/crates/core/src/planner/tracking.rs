//! Following planned waypoints with a controller.

use std::sync::Arc;

use rayon::prelude::*;

use crate::controller::Policy;
use crate::sdf::SignedDistanceField;
use crate::sim::{observe, step, EnvConfig, Observation, RobotState, TransitionCounter};

/// A path to follow on a given map; the robot starts on the first waypoint.
#[derive(Debug, Clone)]
pub struct TrackJob {
    pub field: Arc<SignedDistanceField>,
    pub waypoints: Vec<[f64; 2]>,
    pub theta0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutcome {
    /// Steps taken, counting up to the step that reached the final waypoint.
    pub steps: usize,
    /// The final waypoint was reached within the episode budget.
    pub reached: bool,
    pub collisions: usize,
    /// Robot states from the start, when recorded.
    pub trace: Vec<RobotState>,
}

/// Return of a tracked path.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanReturn {
    /// `−steps` on arrival, `−max_episode_steps` otherwise.
    pub r_h: f64,
    /// `r_h / max_episode_steps`, in `[-1, 0]`.
    pub normalised: f64,
    pub outcome: TrackOutcome,
}

impl PlanReturn {
    pub fn from_outcome(outcome: TrackOutcome, env: &EnvConfig) -> Self {
        let max = env.max_episode_steps as f64;
        let r_h = if outcome.reached {
            -(outcome.steps as f64)
        } else {
            -max
        };
        Self {
            r_h,
            normalised: r_h / max,
            outcome,
        }
    }
}

struct Tracker {
    state: RobotState,
    obs: Observation,
    target: usize,
    hop_steps: usize,
    hop_budget: usize,
    done: bool,
    out: TrackOutcome,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Tracker {
    /// Moves the target past reached waypoints and expired hops.
    fn advance(&mut self, wps: &[[f64; 2]], env: &EnvConfig) {
        let last = wps.len() - 1;
        loop {
            let pos = self.state.position();
            if dist(pos, wps[self.target]) < env.goal_tolerance {
                if self.target == last {
                    self.out.reached = true;
                    self.done = true;
                    return;
                }
                self.set_target(self.target + 1, wps, env);
                continue;
            }
            if self.hop_steps >= self.hop_budget && self.target < last {
                self.set_target(self.target + 1, wps, env);
                continue;
            }
            break;
        }
        if self.out.steps >= env.max_episode_steps {
            self.done = true;
        }
    }

    fn set_target(&mut self, k: usize, wps: &[[f64; 2]], env: &EnvConfig) {
        self.target = k;
        self.hop_steps = 0;
        self.hop_budget = env.hop_budget(dist(self.state.position(), wps[k]));
    }
}

/// Drives one robot per job through its waypoints in lockstep, querying `policy` in
/// batches. The target moves on when the robot is within the goal tolerance, or when
/// the current hop's step budget runs out (except for the final waypoint).
pub fn track_paths(
    policy: &dyn Policy,
    jobs: &[TrackJob],
    env: &EnvConfig,
    counter: &TransitionCounter,
    record: bool,
) -> Vec<TrackOutcome> {
    let mut trackers: Vec<Tracker> = jobs
        .iter()
        .map(|j| {
            assert!(!j.waypoints.is_empty(), "a tracked path needs waypoints");
            let s = RobotState::new(j.waypoints[0][0], j.waypoints[0][1], j.theta0);
            let mut t = Tracker {
                obs: observe(&s, &j.field, env),
                state: s,
                target: 0,
                hop_steps: 0,
                hop_budget: 0,
                done: false,
                out: TrackOutcome {
                    steps: 0,
                    reached: false,
                    collisions: 0,
                    trace: if record { vec![s] } else { Vec::new() },
                },
            };
            t.set_target(0, &j.waypoints, env);
            t.advance(&j.waypoints, env);
            t
        })
        .collect();
    loop {
        let active: Vec<usize> = (0..jobs.len()).filter(|i| !trackers[*i].done).collect();
        if active.is_empty() {
            break;
        }
        let obs: Vec<&Observation> = active.iter().map(|i| &trackers[*i].obs).collect();
        let goals: Vec<[f64; 2]> = active
            .iter()
            .map(|i| jobs[*i].waypoints[trackers[*i].target])
            .collect();
        let actions = policy.actions(&obs, &goals, env);
        let stepped: Vec<_> = active
            .par_iter()
            .zip(actions)
            .map(|(i, a)| step(&trackers[*i].state, a, &jobs[*i].field, env))
            .collect();
        counter.add(stepped.len() as u64);
        for (i, (next, obs, collided)) in active.into_iter().zip(stepped) {
            let t = &mut trackers[i];
            t.state = next;
            t.obs = obs;
            t.hop_steps += 1;
            t.out.steps += 1;
            t.out.collisions += collided as usize;
            if record {
                t.out.trace.push(next);
            }
            t.advance(&jobs[i].waypoints, env);
        }
    }
    trackers.into_iter().map(|t| t.out).collect()
}

/// Tracks a single path and converts the outcome into the planner's return.
pub fn plan_return(
    waypoints: &[[f64; 2]],
    policy: &dyn Policy,
    field: &Arc<SignedDistanceField>,
    env: &EnvConfig,
    theta0: f64,
    counter: &TransitionCounter,
) -> PlanReturn {
    let job = TrackJob {
        field: Arc::clone(field),
        waypoints: waypoints.to_vec(),
        theta0,
    };
    let out = track_paths(policy, &[job], env, counter, false).remove(0);
    PlanReturn::from_outcome(out, env)
}
