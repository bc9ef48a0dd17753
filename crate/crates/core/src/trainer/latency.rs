//! Wall-clock cost of planning on a fresh map.

use std::hint::black_box;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::planner::{embed_map, sample_path, PlannerParams};
use crate::sdf::OccupancyMask;
use crate::sim::{generate_map, EnvConfig, MapError};

/// Seconds per call of `embed_map` followed by `sample_path`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub n: usize,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
    pub mean: f64,
}

/// Nearest-rank percentile of sorted `v`.
fn percentile(v: &[f64], q: f64) -> f64 {
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

impl LatencyStats {
    pub fn from_samples(mut v: Vec<f64>) -> Self {
        assert!(!v.is_empty(), "no latency samples");
        v.sort_by(f64::total_cmp);
        Self {
            n: v.len(),
            p50: percentile(&v, 0.5),
            p95: percentile(&v, 0.95),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

/// Times `n` plans, cycling through `masks`, from the middle of each map. One untimed
/// call warms caches first.
pub fn measure_plan_latency(
    planner: &PlannerParams,
    masks: &[OccupancyMask],
    n: usize,
) -> LatencyStats {
    assert!(
        !masks.is_empty() && n > 0,
        "latency needs masks and samples"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let plan = |m: &OccupancyMask, rng: &mut ChaCha8Rng| {
        let x0 = [m.extent()[0] / 2.0, m.extent()[1] / 2.0];
        let e = embed_map(m, planner);
        black_box(sample_path(planner, x0, &e, rng));
    };
    plan(&masks[0], &mut rng);
    let samples = (0..n)
        .map(|k| {
            let t0 = Instant::now();
            plan(&masks[k % masks.len()], &mut rng);
            t0.elapsed().as_secs_f64()
        })
        .collect();
    LatencyStats::from_samples(samples)
}

/// `count` generated masks with `obstacles` rectangles each.
pub fn latency_masks(
    env: &EnvConfig,
    obstacles: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<OccupancyMask>, MapError> {
    let cfg = EnvConfig {
        obstacle_count: obstacles,
        ..env.clone()
    };
    (0..count as u64)
        .map(|k| Ok(generate_map(&cfg, seed + k, &[])?.mask().clone()))
        .collect()
}
