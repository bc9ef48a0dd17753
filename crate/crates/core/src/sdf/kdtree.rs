//! Static 2D KD-tree with exact nearest-neighbour queries.

/// Squared Euclidean distance; shared by the tree and brute-force scans so both
/// produce bitwise-identical values.
#[inline]
pub fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

#[derive(Debug, Clone)]
struct KdNode {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Balanced KD-tree over a fixed point set.
#[derive(Debug, Clone, Default)]
pub struct KdTree {
    points: Vec<[f64; 2]>,
    nodes: Vec<KdNode>,
    root: Option<usize>,
}

impl KdTree {
    pub fn build(points: Vec<[f64; 2]>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut tree = Self {
            points,
            nodes: Vec::with_capacity(order.len()),
            root: None,
        };
        tree.root = tree.build_rec(&mut order, 0);
        tree
    }

    fn build_rec(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % 2;
        let mid = idx.len() / 2;
        let pts = &self.points;
        idx.select_nth_unstable_by(mid, |a, b| pts[*a][axis].total_cmp(&pts[*b][axis]));
        let point = idx[mid];
        let (lo, rest) = idx.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build_rec(lo, depth + 1);
        let right = self.build_rec(hi, depth + 1);
        self.nodes.push(KdNode {
            point,
            axis,
            left,
            right,
        });
        Some(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Index and squared distance of a nearest stored point.
    pub fn nearest(&self, q: [f64; 2]) -> Option<(usize, f64)> {
        let root = self.root?;
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(root, q, &mut best);
        Some(best)
    }

    fn search(&self, id: usize, q: [f64; 2], best: &mut (usize, f64)) {
        let node = &self.nodes[id];
        let p = self.points[node.point];
        let d = dist2(p, q);
        if d < best.1 || (d == best.1 && node.point < best.0) {
            *best = (node.point, d);
        }
        let delta = q[node.axis] - p[node.axis];
        let (near, far) = if delta < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if let Some(n) = near {
            self.search(n, q, best);
        }
        if let Some(f) = far {
            if delta * delta <= best.1 {
                self.search(f, q, best);
            }
        }
    }
}

/// Exhaustive nearest-point scan used as an oracle.
pub fn brute_force_nearest(points: &[[f64; 2]], q: [f64; 2]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = dist2(*p, q);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}
