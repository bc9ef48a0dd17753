//! Differential-drive robot among raster obstacles with ray-cast range sensing.

mod dynamics;
mod mapgen;
mod pool;

pub use dynamics::{
    control_reward, observe, raycast, step, wrap_angle, Action, Env, EpisodeRecord, Observation,
    RobotState, TransitionCounter,
};
pub use mapgen::{generate_map, GeneratedMap, MapError, Rect};
pub use pool::{MapEntry, MapPool, EVAL_SEED_OFFSET};

use serde::{Deserialize, Serialize};

/// World, robot and map-generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Integration step in seconds.
    pub dt: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub rays: usize,
    pub ray_range: f64,
    /// Distance at which a goal counts as reached.
    pub goal_tolerance: f64,
    /// Step budget for tracking a whole planned path.
    pub max_episode_steps: usize,
    /// A single hop may take this many times its kinematic lower bound.
    pub hop_budget_factor: f64,
    /// Floor on a hop's step budget, leaving time to turn on the spot.
    pub min_hop_steps: usize,
    /// World size `[m, n]` in meters.
    pub extent: [f64; 2],
    /// Raster resolution of generated maps (pixels per side).
    pub resolution: usize,
    pub obstacle_count: usize,
    /// Side lengths of generated rectangles, meters.
    pub obstacle_size: [f64; 2],
    /// Clearance kept between generated obstacles and reserved discs.
    pub reserve_margin: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            v_max: 0.22,
            omega_max: 2.84,
            rays: 36,
            ray_range: 1.0,
            goal_tolerance: 0.1,
            max_episode_steps: 500,
            hop_budget_factor: 3.0,
            min_hop_steps: 20,
            extent: [2.42, 2.42],
            resolution: 64,
            obstacle_count: 5,
            obstacle_size: [0.15, 0.4],
            reserve_margin: 0.1,
            seed: 0,
        }
    }
}

impl EnvConfig {
    /// Dimension of an observation vector.
    pub fn obs_dim(&self) -> usize {
        4 + self.rays
    }

    /// Fewest steps needed to cover `distance` meters at full speed.
    pub fn kinematic_steps(&self, distance: f64) -> f64 {
        distance / (self.v_max * self.dt)
    }

    /// Step budget for driving `distance` meters to a single goal.
    pub fn hop_budget(&self, distance: f64) -> usize {
        let b = (self.hop_budget_factor * self.kinematic_steps(distance)).ceil();
        (b as usize)
            .max(self.min_hop_steps)
            .min(self.max_episode_steps)
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("dt", self.dt),
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
            ("ray_range", self.ray_range),
            ("goal_tolerance", self.goal_tolerance),
            ("extent[0]", self.extent[0]),
            ("extent[1]", self.extent[1]),
            ("obstacle_size[0]", self.obstacle_size[0]),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("env.{name} must be positive, got {v}"));
            }
        }
        if self.rays == 0 || self.resolution == 0 || self.max_episode_steps == 0 {
            return Err(
                "env.rays, env.resolution and env.max_episode_steps must be positive".into(),
            );
        }
        if !(self.hop_budget_factor >= 1.0) {
            return Err("env.hop_budget_factor must be at least 1".into());
        }
        if self.obstacle_size[1] < self.obstacle_size[0] {
            return Err("env.obstacle_size must be [min, max]".into());
        }
        if !(self.reserve_margin >= 0.0) {
            return Err("env.reserve_margin must be non-negative".into());
        }
        Ok(())
    }
}
