//! Signed distance to the obstacle outline and the `avoid_map` predicate.

use std::sync::Arc;

use super::kdtree::{brute_force_nearest, dist2, KdTree};
use super::mask::OccupancyMask;
use super::transform::WorldTransform;
use crate::stl::Predicate;

/// Name under which [`SignedDistanceField::avoid_predicate`] is bound.
pub const AVOID_MAP: &str = "avoid_map";

/// Nearest-outline index over a mask, answering signed distance queries in meters.
#[derive(Debug, Clone)]
pub struct SignedDistanceField {
    mask: OccupancyMask,
    transform: WorldTransform,
    outline: Vec<(usize, usize)>,
    index: KdTree,
}

impl SignedDistanceField {
    /// Uses the transform implied by the mask's world extent.
    pub fn new(mask: OccupancyMask) -> Self {
        let t = WorldTransform::from_extent(mask.width(), mask.height(), mask.extent());
        Self::with_transform(mask, t)
    }

    pub fn with_transform(mask: OccupancyMask, transform: WorldTransform) -> Self {
        let outline = mask.outline();
        let world = outline
            .iter()
            .map(|&(i, j)| transform.to_world(i as i64, j as i64))
            .collect();
        Self {
            index: KdTree::build(world),
            mask,
            transform,
            outline,
        }
    }

    pub fn mask(&self) -> &OccupancyMask {
        &self.mask
    }

    pub fn transform(&self) -> &WorldTransform {
        &self.transform
    }

    /// Outline pixels, in the order their world points are stored in the index.
    pub fn outline(&self) -> &[(usize, usize)] {
        &self.outline
    }

    /// World coordinates of the outline pixel centres.
    pub fn outline_points(&self) -> &[[f64; 2]] {
        self.index.points()
    }

    /// Whether `g` falls on an obstacle pixel or outside the image.
    pub fn is_blocked(&self, g: [f64; 2]) -> bool {
        let (i, j) = self.transform.to_pixel(g);
        self.mask.is_obstacle(i, j)
    }

    fn signed(&self, g: [f64; 2], nearest: Option<(usize, f64)>) -> f64 {
        let blocked = self.is_blocked(g);
        match nearest {
            None if blocked => f64::NEG_INFINITY,
            None => f64::INFINITY,
            Some((_, d2)) if d2 == 0.0 => 0.0,
            Some((_, d2)) if blocked => -d2.sqrt(),
            Some((_, d2)) => d2.sqrt(),
        }
    }

    /// Signed distance in meters: negative on obstacle pixels or off the map.
    ///
    /// With no obstacles the field is `+∞` on the map and `−∞` off it.
    pub fn sdf(&self, g: [f64; 2]) -> f64 {
        self.signed(g, self.index.nearest(g))
    }

    /// The same quantity computed by scanning every outline point.
    pub fn sdf_brute_force(&self, g: [f64; 2]) -> f64 {
        self.signed(g, brute_force_nearest(self.index.points(), g))
    }

    /// World position of a nearest outline point.
    pub fn nearest_outline(&self, g: [f64; 2]) -> Option<[f64; 2]> {
        self.index.nearest(g).map(|(k, _)| self.index.points()[k])
    }

    /// `sign · (g − p*) / ‖g − p*‖`; zero at the outline itself or with no obstacles.
    pub fn sdf_grad(&self, g: [f64; 2]) -> [f64; 2] {
        self.sdf_with_grad(g).1
    }

    pub fn sdf_with_grad(&self, g: [f64; 2]) -> (f64, [f64; 2]) {
        let nearest = self.index.nearest(g);
        let value = self.signed(g, nearest);
        let Some((k, d2)) = nearest else {
            return (value, [0.0, 0.0]);
        };
        if d2 == 0.0 {
            return (value, [0.0, 0.0]);
        }
        let p = self.index.points()[k];
        let d = d2.sqrt();
        let sign = if value < 0.0 { -1.0 } else { 1.0 };
        (value, [sign * (g[0] - p[0]) / d, sign * (g[1] - p[1]) / d])
    }

    /// Predicate evaluating the field at each waypoint.
    pub fn avoid_predicate(self: &Arc<Self>) -> Arc<dyn Predicate> {
        Arc::new(AvoidMap {
            field: Arc::clone(self),
        })
    }

    /// Smallest distance between `g` and any outline point, by exhaustive scan.
    pub fn brute_force_clearance(&self, g: [f64; 2]) -> Option<f64> {
        self.index
            .points()
            .iter()
            .map(|p| dist2(*p, g))
            .min_by(f64::total_cmp)
            .map(f64::sqrt)
    }
}

/// Obstacle avoidance predicate: the signed distance at the waypoint.
#[derive(Debug, Clone)]
pub struct AvoidMap {
    field: Arc<SignedDistanceField>,
}

impl Predicate for AvoidMap {
    fn value(&self, p: [f64; 2], _t: usize) -> f64 {
        self.field.sdf(p)
    }

    fn gradient(&self, p: [f64; 2], _t: usize) -> Option<[f64; 2]> {
        Some(self.field.sdf_grad(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{parse_spec, robustness, Bindings, Trajectory};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_pixel() -> SignedDistanceField {
        let m = OccupancyMask::from_fn(5, 5, [5.0, 5.0], |i, j| (i, j) == (2, 2)).unwrap();
        SignedDistanceField::with_transform(m, WorldTransform::identity())
    }

    #[test]
    fn single_pixel_examples() {
        let f = single_pixel();
        assert_eq!(f.outline(), &[(2, 2)]);
        assert_eq!(f.sdf([0.0, 2.0]), 2.0);
        assert_eq!(f.sdf_grad([0.0, 2.0]), [-1.0, 0.0]);
        assert_eq!(f.sdf([2.0, 2.0]), 0.0);
        assert_eq!(f.sdf_grad([2.0, 2.0]), [0.0, 0.0]);
        // Off the map is negative.
        assert!(f.sdf([-3.0, 2.0]) < 0.0);
    }

    #[test]
    fn inside_a_block_gradient_points_to_the_outline() {
        let m = OccupancyMask::from_fn(9, 9, [9.0, 9.0], |i, j| {
            (1..=7).contains(&i) && (1..=7).contains(&j)
        })
        .unwrap();
        let f = SignedDistanceField::with_transform(m, WorldTransform::identity());
        let (v, g) = f.sdf_with_grad([4.0, 2.2]);
        assert!((v + 1.2).abs() < 1e-12);
        // Moving along the gradient increases the field, i.e. toward the free border.
        assert!(g[1] < 0.0 && g[0].abs() < 1e-12);
    }

    #[test]
    fn empty_mask_sentinels() {
        let f = SignedDistanceField::new(OccupancyMask::empty(8, 8, [1.0, 1.0]).unwrap());
        assert_eq!(f.sdf([0.5, 0.5]), f64::INFINITY);
        assert_eq!(f.sdf([1.5, 0.5]), f64::NEG_INFINITY);
        assert_eq!(f.sdf_grad([0.5, 0.5]), [0.0, 0.0]);
    }

    fn random_field(seed: u64) -> SignedDistanceField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = OccupancyMask::from_fn(64, 64, [2.42, 2.42], |_, _| rng.random_bool(0.2)).unwrap();
        SignedDistanceField::new(m)
    }

    #[test]
    fn matches_brute_force_on_random_points() {
        let f = random_field(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let g = [rng.random_range(-0.2..2.6), rng.random_range(-0.2..2.6)];
            assert_eq!(f.sdf(g), f.sdf_brute_force(g));
            let sign_neg = f.sdf(g) < 0.0;
            if f.sdf(g) != 0.0 {
                assert_eq!(sign_neg, f.is_blocked(g));
            }
        }
    }

    #[test]
    fn gradient_is_unit_and_matches_directional_differences() {
        let f = random_field(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-7;
        let mut checked = 0;
        while checked < 300 {
            let g = [rng.random_range(0.0..2.42), rng.random_range(0.0..2.42)];
            let (v, grad) = f.sdf_with_grad(g);
            if v == 0.0 {
                continue;
            }
            assert!((grad[0].hypot(grad[1]) - 1.0).abs() < 1e-12);
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let u = [a.cos(), a.sin()];
            let up = [g[0] + h * u[0], g[1] + h * u[1]];
            let dn = [g[0] - h * u[0], g[1] - h * u[1]];
            // Only where the nearest point and the sign are locally constant.
            if f.nearest_outline(up) != f.nearest_outline(dn)
                || f.is_blocked(up) != f.is_blocked(dn)
                || f.nearest_outline(up) != f.nearest_outline(g)
            {
                continue;
            }
            let fd = (f.sdf(up) - f.sdf(dn)) / (2.0 * h);
            assert!((fd - (grad[0] * u[0] + grad[1] * u[1])).abs() < 1e-3);
            checked += 1;
        }
    }

    #[test]
    fn avoid_predicate_is_min_clearance() {
        let f = Arc::new(random_field(6));
        let b = Bindings::new().with(AVOID_MAP, f.avoid_predicate());
        let spec = parse_spec("G[0,20] avoid_map", &b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut saw_neg = false;
        for _ in 0..50 {
            let pts: Vec<[f64; 2]> = (0..8)
                .map(|_| [rng.random_range(0.0..2.42), rng.random_range(0.0..2.42)])
                .collect();
            let r = robustness(&spec, &b, &Trajectory::new(pts.clone()).unwrap(), 0).unwrap();
            let oracle = pts
                .iter()
                .map(|p| f.sdf_brute_force(*p))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(r, oracle);
            saw_neg |= r < 0.0;
        }
        assert!(saw_neg);
    }
}
