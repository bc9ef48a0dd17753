//! Pre-generated maps with their distance fields and planner grids.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use super::{generate_map, EnvConfig, GeneratedMap, MapError};
use crate::sdf::SignedDistanceField;
use crate::stl::CircleRegion;

/// Evaluation maps are drawn from seeds at or above this offset; training maps below it.
pub const EVAL_SEED_OFFSET: u64 = 1 << 40;

#[derive(Debug, Clone)]
pub struct MapEntry {
    pub map: GeneratedMap,
    pub field: Arc<SignedDistanceField>,
    /// Obstacle fractions on the planner grid, row-major from the bottom row.
    pub grid: Vec<f64>,
}

impl MapEntry {
    pub fn new(map: GeneratedMap, grid: usize) -> Self {
        let mask = map.mask().clone();
        Self {
            grid: mask.downsample(grid),
            field: Arc::new(SignedDistanceField::new(mask)),
            map,
        }
    }
}

/// A fixed set of maps sampled uniformly.
#[derive(Debug, Clone)]
pub struct MapPool {
    entries: Vec<Arc<MapEntry>>,
}

impl MapPool {
    /// Generates one map per seed in `first..first + count`.
    pub fn generate(
        cfg: &EnvConfig,
        reserved: &[CircleRegion],
        first: u64,
        count: usize,
        grid: usize,
    ) -> Result<Self, MapError> {
        if count == 0 {
            return Err(MapError::Config("a map pool needs at least one map".into()));
        }
        let entries = (0..count as u64)
            .into_par_iter()
            .map(|k| {
                generate_map(cfg, first + k, reserved).map(|m| Arc::new(MapEntry::new(m, grid)))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }

    pub fn from_entries(entries: Vec<Arc<MapEntry>>) -> Self {
        assert!(!entries.is_empty(), "a map pool needs at least one map");
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> &Arc<MapEntry> {
        &self.entries[i]
    }

    pub fn entries(&self) -> &[Arc<MapEntry>] {
        &self.entries
    }

    pub fn pick<R: Rng>(&self, rng: &mut R) -> &Arc<MapEntry> {
        &self.entries[rng.random_range(0..self.entries.len())]
    }
}
