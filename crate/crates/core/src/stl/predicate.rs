//! Atomic predicates over 2D waypoints and the name → predicate table.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Real-valued predicate `(waypoint, time) → robustness`, positive where it holds.
pub trait Predicate: Send + Sync {
    fn value(&self, p: [f64; 2], t: usize) -> f64;

    /// Gradient of [`Predicate::value`] with respect to the waypoint; `None` where undefined.
    fn gradient(&self, p: [f64; 2], t: usize) -> Option<[f64; 2]>;

    fn is_differentiable(&self) -> bool {
        true
    }
}

/// Disc of radius `radius` around `center`; robustness `r − ‖p − c‖`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CircleRegion {
    pub center: [f64; 2],
    pub radius: f64,
}

impl CircleRegion {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.value(p, 0) > 0.0
    }
}

impl Predicate for CircleRegion {
    fn value(&self, p: [f64; 2], _t: usize) -> f64 {
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        self.radius - dx.hypot(dy)
    }

    fn gradient(&self, p: [f64; 2], _t: usize) -> Option<[f64; 2]> {
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        let d = dx.hypot(dy);
        // The cone tip has no gradient; any subgradient of norm ≤ 1 works, pick zero.
        if d == 0.0 {
            return Some([0.0, 0.0]);
        }
        Some([-dx / d, -dy / d])
    }
}

/// Half-plane `a · p − b > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPredicate {
    pub a: [f64; 2],
    pub b: f64,
}

impl LinearPredicate {
    pub fn new(a: [f64; 2], b: f64) -> Self {
        Self { a, b }
    }

    /// `x > c`
    pub fn x_greater(c: f64) -> Self {
        Self::new([1.0, 0.0], c)
    }

    /// `y > c`
    pub fn y_greater(c: f64) -> Self {
        Self::new([0.0, 1.0], c)
    }
}

impl Predicate for LinearPredicate {
    fn value(&self, p: [f64; 2], _t: usize) -> f64 {
        self.a[0] * p[0] + self.a[1] * p[1] - self.b
    }

    fn gradient(&self, _p: [f64; 2], _t: usize) -> Option<[f64; 2]> {
        Some(self.a)
    }
}

/// Host-supplied table resolving predicate identifiers.
#[derive(Clone, Default)]
pub struct Bindings {
    table: BTreeMap<String, Arc<dyn Predicate>>,
}

impl fmt::Debug for Bindings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.table.keys()).finish()
    }
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, predicate: Arc<dyn Predicate>) {
        self.table.insert(name.into(), predicate);
    }

    pub fn insert_region(&mut self, name: impl Into<String>, center: [f64; 2], radius: f64) {
        self.insert(name, Arc::new(CircleRegion::new(center, radius)));
    }

    pub fn with(mut self, name: impl Into<String>, predicate: Arc<dyn Predicate>) -> Self {
        self.insert(name, predicate);
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.table.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn Predicate>> {
        self.table.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(String::as_str)
    }
}
