use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stlplan::sdf::{OccupancyMask, SignedDistanceField};

const EXTENT: [f64; 2] = [2.42, 1.8];

fn random_mask(seed: u64, w: usize, h: usize, fill: f64) -> OccupancyMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    OccupancyMask::from_fn(w, h, EXTENT, |_, _| rng.random_bool(fill)).unwrap()
}

fn mask() -> impl Strategy<Value = OccupancyMask> {
    (any::<u64>(), 4usize..40, 4usize..40, 0.02..0.5f64)
        .prop_map(|(s, w, h, p)| random_mask(s, w, h, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_matches_brute_force_everywhere(m in mask(), pts in prop::collection::vec((-0.2..2.6f64, -0.2..2.0f64), 50)) {
        let field = SignedDistanceField::new(m);
        for (x, y) in pts {
            let (fast, slow) = (field.sdf([x, y]), field.sdf_brute_force([x, y]));
            prop_assert!((fast - slow).abs() <= 1e-12 || fast == slow, "({x}, {y}): {fast} vs {slow}");
        }
    }

    #[test]
    fn sign_marks_obstacle_cells(m in mask(), pts in prop::collection::vec((0.0..2.42f64, 0.0..1.8f64), 50)) {
        let field = SignedDistanceField::new(m);
        for (x, y) in pts {
            let d = field.sdf([x, y]);
            prop_assert_eq!(d <= 0.0, field.is_blocked([x, y]), "({}, {}): {}", x, y, d);
        }
    }

    #[test]
    fn cell_centres_take_their_pixel_sign(m in mask()) {
        let field = SignedDistanceField::new(m.clone());
        let t = field.transform().clone();
        for j in 0..m.height() {
            for i in 0..m.width() {
                let d = field.sdf(t.to_world(i as i64, j as i64));
                prop_assert_eq!(d <= 0.0, m.get(i, j));
            }
        }
    }

    #[test]
    fn png_round_trip_is_lossless(m in mask()) {
        let back = OccupancyMask::decode(&m.to_png(), EXTENT).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn downsampled_occupancy_is_a_fraction(m in mask(), g in 1usize..20) {
        let grid = m.downsample(g);
        prop_assert_eq!(grid.len(), g * g);
        prop_assert!(grid.iter().all(|v| (0.0..=1.0).contains(v)));
        if m.obstacle_count() == 0 {
            prop_assert!(grid.iter().all(|v| *v == 0.0));
        }
    }
}

#[test]
fn empty_and_full_masks() {
    let empty = SignedDistanceField::new(OccupancyMask::empty(8, 8, EXTENT).unwrap());
    assert!(empty.sdf([1.0, 1.0]) > 0.0);
    let full = SignedDistanceField::new(OccupancyMask::from_fn(8, 8, EXTENT, |_, _| true).unwrap());
    assert!(full.sdf([1.0, 1.0]) <= 0.0);
}
