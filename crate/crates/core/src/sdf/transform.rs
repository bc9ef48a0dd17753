//! Pixel index ↔ world meter mapping.

/// Affine map `world = offset + scale · pixel`, applied per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldTransform {
    pub scale: [f64; 2],
    pub offset: [f64; 2],
}

impl WorldTransform {
    /// One meter per pixel, pixel `(i, j)` at `(i, j)`.
    pub fn identity() -> Self {
        Self {
            scale: [1.0, 1.0],
            offset: [0.0, 0.0],
        }
    }

    /// Maps a `width × height` raster onto `[0, m] × [0, n]` with pixel centres as sample points.
    pub fn from_extent(width: usize, height: usize, extent: [f64; 2]) -> Self {
        let scale = [extent[0] / width as f64, extent[1] / height as f64];
        Self {
            scale,
            offset: [0.5 * scale[0], 0.5 * scale[1]],
        }
    }

    /// Pixel centre in world coordinates.
    pub fn to_world(&self, i: i64, j: i64) -> [f64; 2] {
        [
            self.offset[0] + self.scale[0] * i as f64,
            self.offset[1] + self.scale[1] * j as f64,
        ]
    }

    /// Index of the pixel whose centre is nearest to `g`.
    pub fn to_pixel(&self, g: [f64; 2]) -> (i64, i64) {
        let fi = ((g[0] - self.offset[0]) / self.scale[0] + 0.5).floor();
        let fj = ((g[1] - self.offset[1]) / self.scale[1] + 0.5).floor();
        (saturate(fi), saturate(fj))
    }

    /// Pixel pitch along the finer axis.
    pub fn pitch(&self) -> f64 {
        self.scale[0].min(self.scale[1])
    }
}

fn saturate(v: f64) -> i64 {
    if v.is_nan() {
        i64::MIN
    } else {
        v.clamp(i64::MIN as f64, i64::MAX as f64) as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pixel_roundtrip() {
        let t = WorldTransform::from_extent(64, 48, [2.42, 1.8]);
        for i in 0..64 {
            for j in 0..48 {
                assert_eq!(t.to_pixel(t.to_world(i, j)), (i, j));
            }
        }
        assert_eq!(t.to_world(0, 0), [2.42 / 128.0, 1.8 / 96.0]);
    }

    proptest! {
        #[test]
        fn world_roundtrip_within_half_pitch(x in 0.0..2.42f64, y in 0.0..2.42f64) {
            let t = WorldTransform::from_extent(64, 64, [2.42, 2.42]);
            let (i, j) = t.to_pixel([x, y]);
            let back = t.to_world(i, j);
            let half = 0.5 * t.scale[0] * (1.0 + 1e-12);
            prop_assert!((back[0] - x).abs() <= half && (back[1] - y).abs() <= half);
        }
    }
}
