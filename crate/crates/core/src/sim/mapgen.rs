//! Random rectangular-obstacle maps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::EnvConfig;
use crate::sdf::{OccupancyMask, WorldTransform};
use crate::stl::CircleRegion;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("could not place obstacle {index} clear of the reserved regions after {tries} tries")]
    Placement { index: usize, tries: usize },
    #[error("invalid map configuration: {0}")]
    Config(String),
}

/// Axis-aligned rectangle in world meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        let dx = (self.x0 - p[0]).max(0.0).max(p[0] - self.x1);
        let dy = (self.y0 - p[1]).max(0.0).max(p[1] - self.y1);
        dx.hypot(dy)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// A generated map with the rectangles it was rasterised from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedMap {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub extent: [f64; 2],
    pub obstacles: Vec<Rect>,
    #[serde(skip)]
    pub mask: Option<OccupancyMask>,
}

impl GeneratedMap {
    pub fn mask(&self) -> &OccupancyMask {
        self.mask
            .as_ref()
            .expect("generated maps carry their raster")
    }

    /// Rebuilds the raster from the rectangle list.
    pub fn rasterize(&mut self) -> Result<(), MapError> {
        let t = WorldTransform::from_extent(self.width, self.height, self.extent);
        let rects = &self.obstacles;
        let mask = OccupancyMask::from_fn(self.width, self.height, self.extent, |i, j| {
            let c = t.to_world(i as i64, j as i64);
            rects.iter().any(|r| r.contains(c))
        })
        .map_err(|e| MapError::Config(e.to_string()))?;
        self.mask = Some(mask);
        Ok(())
    }
}

const PLACEMENT_TRIES: usize = 1000;

/// Places `cfg.obstacle_count` rectangles uniformly at random, keeping every disc
/// in `reserved` (grown by `cfg.reserve_margin`) free. Reproducible per `seed`.
pub fn generate_map(
    cfg: &EnvConfig,
    seed: u64,
    reserved: &[CircleRegion],
) -> Result<GeneratedMap, MapError> {
    cfg.validate().map_err(MapError::Config)?;
    let [lo, hi] = cfg.obstacle_size;
    if hi > cfg.extent[0] || hi > cfg.extent[1] {
        return Err(MapError::Config("obstacles larger than the world".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obstacles = Vec::with_capacity(cfg.obstacle_count);
    for index in 0..cfg.obstacle_count {
        let mut placed = None;
        for _ in 0..PLACEMENT_TRIES {
            let w = rng.random_range(lo..=hi);
            let h = rng.random_range(lo..=hi);
            let x0 = rng.random_range(0.0..=cfg.extent[0] - w);
            let y0 = rng.random_range(0.0..=cfg.extent[1] - h);
            let r = Rect {
                x0,
                y0,
                x1: x0 + w,
                y1: y0 + h,
            };
            let clear = reserved
                .iter()
                .all(|c| r.distance_to(c.center) > c.radius + cfg.reserve_margin);
            if clear {
                placed = Some(r);
                break;
            }
        }
        obstacles.push(placed.ok_or(MapError::Placement {
            index,
            tries: PLACEMENT_TRIES,
        })?);
    }
    let mut map = GeneratedMap {
        seed,
        width: cfg.resolution,
        height: cfg.resolution,
        extent: cfg.extent,
        obstacles,
        mask: None,
    };
    map.rasterize()?;
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdf::SignedDistanceField;

    #[test]
    fn zero_obstacles_is_empty() {
        let cfg = EnvConfig {
            obstacle_count: 0,
            ..EnvConfig::default()
        };
        let m = generate_map(&cfg, 1, &[]).unwrap();
        assert_eq!(m.mask().obstacle_count(), 0);
    }

    #[test]
    fn same_seed_same_map() {
        let cfg = EnvConfig::default();
        assert_eq!(
            generate_map(&cfg, 9, &[]).unwrap(),
            generate_map(&cfg, 9, &[]).unwrap()
        );
        assert_ne!(
            generate_map(&cfg, 9, &[]).unwrap().obstacles,
            generate_map(&cfg, 10, &[]).unwrap().obstacles
        );
    }

    #[test]
    fn ten_obstacles_cover_less_than_half() {
        let cfg = EnvConfig {
            obstacle_count: 10,
            ..EnvConfig::default()
        };
        for seed in 0..50 {
            let m = generate_map(&cfg, seed, &[]).unwrap();
            assert_eq!(m.obstacles.len(), 10);
            assert!(m.mask().obstacle_fraction() < 0.5);
        }
    }

    #[test]
    fn reserved_discs_stay_free() {
        let cfg = EnvConfig {
            obstacle_count: 12,
            ..EnvConfig::default()
        };
        let reserved = [
            CircleRegion::new([0.4, 0.4], 0.2),
            CircleRegion::new([1.8, 1.7], 0.25),
        ];
        for seed in 0..30 {
            let m = generate_map(&cfg, seed, &reserved).unwrap();
            let f = SignedDistanceField::new(m.mask().clone());
            for c in &reserved {
                for k in 0..16 {
                    let a = k as f64 * std::f64::consts::TAU / 16.0;
                    let p = [
                        c.center[0] + c.radius * a.cos(),
                        c.center[1] + c.radius * a.sin(),
                    ];
                    assert!(f.sdf(p) > 0.0);
                }
            }
        }
    }

    #[test]
    fn impossible_placement_is_an_error() {
        let cfg = EnvConfig::default();
        let everything = [CircleRegion::new([1.21, 1.21], 3.0)];
        assert!(matches!(
            generate_map(&cfg, 0, &everything),
            Err(MapError::Placement { index: 0, .. })
        ));
    }

    #[test]
    fn sidecar_roundtrip_rebuilds_raster() {
        let cfg = EnvConfig::default();
        let m = generate_map(&cfg, 4, &[]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let mut back: GeneratedMap = serde_json::from_str(&json).unwrap();
        back.rasterize().unwrap();
        assert_eq!(back, m);
    }
}
