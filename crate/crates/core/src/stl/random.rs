//! Random formula generation for property checks and benchmarks.

use rand::Rng;

use super::ast::{Formula, Interval};

/// Controls the size and vocabulary of [`random_formula`].
#[derive(Debug, Clone)]
pub struct FormulaShape {
    pub max_depth: usize,
    pub predicates: Vec<String>,
    pub max_start: usize,
    pub max_width: usize,
    /// Whether `true` / `false` leaves may appear.
    pub literals: bool,
}

impl Default for FormulaShape {
    fn default() -> Self {
        Self {
            max_depth: 4,
            predicates: ["a", "b", "c", "d"].map(String::from).to_vec(),
            max_start: 2,
            max_width: 3,
            literals: true,
        }
    }
}

fn interval<R: Rng>(rng: &mut R, shape: &FormulaShape) -> Interval {
    let a = rng.random_range(0..=shape.max_start);
    let w = rng.random_range(0..=shape.max_width);
    Interval::new(a, a + w).expect("a <= a + w")
}

fn leaf<R: Rng>(rng: &mut R, shape: &FormulaShape) -> Formula {
    if shape.literals && rng.random_bool(0.1) {
        return if rng.random_bool(0.5) {
            Formula::True
        } else {
            Formula::False
        };
    }
    let i = rng.random_range(0..shape.predicates.len());
    Formula::pred(shape.predicates[i].clone())
}

/// Draws a formula of depth at most `shape.max_depth` over `shape.predicates`.
pub fn random_formula<R: Rng>(rng: &mut R, shape: &FormulaShape) -> Formula {
    fn go<R: Rng>(rng: &mut R, shape: &FormulaShape, depth: usize) -> Formula {
        if depth == 0 || rng.random_bool(0.25) {
            return leaf(rng, shape);
        }
        let d = depth - 1;
        match rng.random_range(0..8) {
            0 => Formula::not(go(rng, shape, d)),
            1 => Formula::next(go(rng, shape, d)),
            2 => Formula::eventually(interval(rng, shape), go(rng, shape, d)),
            3 => Formula::globally(interval(rng, shape), go(rng, shape, d)),
            4 => Formula::and(go(rng, shape, d), go(rng, shape, d)),
            5 => Formula::or(go(rng, shape, d), go(rng, shape, d)),
            6 => Formula::implies(go(rng, shape, d), go(rng, shape, d)),
            _ => Formula::until(interval(rng, shape), go(rng, shape, d), go(rng, shape, d)),
        }
    }
    go(rng, shape, shape.max_depth)
}
