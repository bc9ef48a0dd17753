//! Signal temporal logic specifications with differentiable robustness, signed
//! distance map predicates, and co-trained path planning / goal-conditioned
//! control policies for a 2D differential-drive robot.
//!
//! Module map:
//!
//! - [`grad`]: reverse-mode autodiff tape, Adam, checkpoint container
//! - [`stl`]: formula parser and Boolean / robust / smoothed semantics
//! - [`sdf`]: occupancy masks, outline KD-tree, signed distance field
//! - [`sim`]: unicycle world with ray-cast observations
//! - [`planner`]: stochastic waypoint planner and its training losses
//! - [`controller`]: goal-conditioned PPO controller
//! - [`trainer`]: alternating training, evaluation, oracles, latency
//! - [`io`]: atomic file output

pub mod controller;
pub mod grad;
pub mod io;
pub mod nn;
pub mod planner;
pub mod sdf;
pub mod sim;
pub mod stl;
pub mod trainer;
