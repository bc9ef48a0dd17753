use std::fmt;

use serde::{Deserialize, Serialize};

/// Discrete time window `[a, b]`, relative to the evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    a: usize,
    b: usize,
}

impl Interval {
    /// Returns `None` when `a > b`.
    pub fn new(a: usize, b: usize) -> Option<Self> {
        (a <= b).then_some(Self { a, b })
    }

    pub fn start(&self) -> usize {
        self.a
    }

    pub fn end(&self) -> usize {
        self.b
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.a, self.b)
    }
}

/// STL abstract syntax tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Predicate(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Globally(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn pred(name: impl Into<String>) -> Self {
        Formula::Predicate(name.into())
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(l: Formula, r: Formula) -> Self {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Formula, r: Formula) -> Self {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: Formula, r: Formula) -> Self {
        Formula::Implies(Box::new(l), Box::new(r))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    pub fn eventually(i: Interval, f: Formula) -> Self {
        Formula::Eventually(i, Box::new(f))
    }

    pub fn globally(i: Interval, f: Formula) -> Self {
        Formula::Globally(i, Box::new(f))
    }

    pub fn until(i: Interval, l: Formula, r: Formula) -> Self {
        Formula::Until(i, Box::new(l), Box::new(r))
    }

    /// Left-nested conjunction of `parts`; `True` when empty.
    pub fn conjunction(parts: impl IntoIterator<Item = Formula>) -> Self {
        parts
            .into_iter()
            .reduce(Formula::and)
            .unwrap_or(Formula::True)
    }

    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::True | Formula::False | Formula::Predicate(_) => vec![],
            Formula::Not(f)
            | Formula::Next(f)
            | Formula::Eventually(_, f)
            | Formula::Globally(_, f) => {
                vec![f]
            }
            Formula::And(l, r)
            | Formula::Or(l, r)
            | Formula::Implies(l, r)
            | Formula::Until(_, l, r) => {
                vec![l, r]
            }
        }
    }

    /// Predicate names in left-to-right order of first appearance.
    pub fn predicates(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_predicates(&mut out);
        out
    }

    fn collect_predicates<'a>(&'a self, out: &mut Vec<&'a str>) {
        if let Formula::Predicate(name) = self {
            if !out.contains(&name.as_str()) {
                out.push(name);
            }
        }
        for c in self.children() {
            c.collect_predicates(out);
        }
    }

    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    /// Number of future steps the formula looks ahead of its evaluation time.
    pub fn horizon(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Predicate(_) => 0,
            Formula::Not(f) => f.horizon(),
            Formula::Next(f) => 1 + f.horizon(),
            Formula::Eventually(i, f) | Formula::Globally(i, f) => i.end() + f.horizon(),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
                l.horizon().max(r.horizon())
            }
            Formula::Until(i, l, r) => i.end() + l.horizon().max(r.horizon()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Implies(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            Formula::Until(..) => 4,
            Formula::Not(_)
            | Formula::Next(_)
            | Formula::Eventually(..)
            | Formula::Globally(..) => 5,
            Formula::True | Formula::False | Formula::Predicate(_) => 6,
        }
    }

    fn write_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let wrap = self.precedence() < min;
        if wrap {
            f.write_str("(")?;
        }
        match self {
            Formula::True => f.write_str("true")?,
            Formula::False => f.write_str("false")?,
            Formula::Predicate(name) => f.write_str(name)?,
            Formula::Not(x) => {
                f.write_str("!")?;
                x.write_prec(f, 5)?;
            }
            Formula::Next(x) => {
                f.write_str("X ")?;
                x.write_prec(f, 5)?;
            }
            Formula::Eventually(i, x) => {
                write!(f, "F{i} ")?;
                x.write_prec(f, 5)?;
            }
            Formula::Globally(i, x) => {
                write!(f, "G{i} ")?;
                x.write_prec(f, 5)?;
            }
            Formula::Until(i, l, r) => {
                l.write_prec(f, 5)?;
                write!(f, " U{i} ")?;
                r.write_prec(f, 5)?;
            }
            Formula::And(l, r) => {
                l.write_prec(f, 3)?;
                f.write_str(" & ")?;
                r.write_prec(f, 4)?;
            }
            Formula::Or(l, r) => {
                l.write_prec(f, 2)?;
                f.write_str(" | ")?;
                r.write_prec(f, 3)?;
            }
            Formula::Implies(l, r) => {
                l.write_prec(f, 2)?;
                f.write_str(" -> ")?;
                r.write_prec(f, 1)?;
            }
        }
        if wrap {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Prints in the surface syntax accepted by [`parse_formula`](super::parse_formula),
/// with the minimum parentheses needed to re-parse to the same tree.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}
