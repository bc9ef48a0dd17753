//! Occupancy masks, the nearest-outline index and the signed distance field.

mod field;
mod kdtree;
mod mask;
mod transform;

pub use field::{AvoidMap, SignedDistanceField, AVOID_MAP};
pub use kdtree::{brute_force_nearest, dist2, KdTree};
pub use mask::{MaskError, OccupancyMask};
pub use transform::WorldTransform;
