//! Tape-based reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every value on the tape is a 2-D matrix; scalars are `1 × 1`. Operations are
//! appended in evaluation order, so parents always precede children and a single
//! reverse sweep visits every node after all of its consumers.
//!
//! ```
//! use stlplan::grad::Tape;
//!
//! let tape = Tape::new();
//! let x = tape.scalar(3.0);
//! let y = x * x;
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.scalar(x), 6.0);
//! ```

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use ndarray::{s, Array2, Axis, Zip};

use super::GradError;

/// Dense matrix value stored on the tape.
pub type Tensor = Array2<f64>;

/// Shape of a tensor as `(rows, cols)`.
pub type Shape = (usize, usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Neg(usize),
    Exp(usize),
    Log(usize),
    Tanh(usize),
    Sqrt(usize),
    Relu(usize),
    MatMul(usize, usize),
    Sum(usize),
    SumCols(usize),
    LogSumExp(usize),
    GaussianLogPdf {
        x: usize,
        mu: usize,
        sigma: usize,
    },
    Index(usize, usize, usize),
    Stack(Vec<usize>),
    ConcatCols(usize, usize),
    Minimum(usize, usize),
    Clamp(usize, f64, f64),
    Custom {
        inputs: Vec<usize>,
        partials: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only record of primitive operations.
///
/// A tape is single-threaded (`!Sync`); build one per thread.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

/// Handle to a value recorded on a [`Tape`].
///
/// The arithmetic operators and the infallible methods panic on shape or domain
/// errors; use the `try_*` methods on [`Tape`] to get a [`GradError`] instead.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("idx", &self.idx)
            .field("shape", &self.shape())
            .finish()
    }
}

fn shape_of(t: &Tensor) -> Shape {
    let d = t.dim();
    (d.0, d.1)
}

fn scalar_tensor(v: f64) -> Tensor {
    Array2::from_elem((1, 1), v)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self,
            idx: nodes.len() - 1,
        }
    }

    /// Records an input leaf.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.leaf(scalar_tensor(value))
    }

    /// Records a column vector leaf.
    pub fn column(&self, values: &[f64]) -> Var<'_> {
        self.leaf(Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column"))
    }

    fn value_of(&self, idx: usize) -> Tensor {
        self.nodes.borrow()[idx].value.clone()
    }

    fn with_values<R>(&self, f: impl FnOnce(&[Node]) -> R) -> R {
        f(&self.nodes.borrow())
    }

    fn same_shape(&self, op: &'static str, a: Var<'_>, b: Var<'_>) -> Result<(), GradError> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa != sb {
            return Err(GradError::ShapeMismatch {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    fn elementwise<'t>(
        &'t self,
        op_name: &'static str,
        a: Var<'t>,
        b: Var<'t>,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>, GradError> {
        self.same_shape(op_name, a, b)?;
        let value = self.with_values(|n| {
            let mut out = n[a.idx].value.clone();
            Zip::from(&mut out)
                .and(&n[b.idx].value)
                .for_each(|o, &y| *o = f(*o, y));
            out
        });
        Ok(self.push(value, op))
    }

    pub fn try_add<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>, GradError> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a.idx, b.idx))
    }

    pub fn try_sub<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>, GradError> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a.idx, b.idx))
    }

    pub fn try_mul<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>, GradError> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a.idx, b.idx))
    }

    pub fn try_div<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>, GradError> {
        self.same_shape("div", a, b)?;
        if let Some(&z) = b.value().iter().find(|v| **v == 0.0) {
            return Err(GradError::Domain {
                op: "div",
                value: z,
            });
        }
        self.elementwise("div", a, b, |x, y| x / y, Op::Div(a.idx, b.idx))
    }

    /// `a + row`, broadcasting a `1 × n` row over every row of `a`.
    pub fn try_add_row<'t>(&'t self, a: Var<'t>, row: Var<'t>) -> Result<Var<'t>, GradError> {
        let (sa, sr) = (a.shape(), row.shape());
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(GradError::ShapeMismatch {
                op: "add_row",
                left: sa,
                right: sr,
            });
        }
        let value = self.with_values(|n| &n[a.idx].value + &n[row.idx].value);
        Ok(self.push(value, Op::AddRow(a.idx, row.idx)))
    }

    pub fn scale<'t>(&'t self, a: Var<'t>, k: f64) -> Var<'t> {
        let value = self.with_values(|n| &n[a.idx].value * k);
        self.push(value, Op::Scale(a.idx, k))
    }

    /// `a + c` for a constant `c`.
    pub fn offset<'t>(&'t self, a: Var<'t>, c: f64) -> Var<'t> {
        let value = self.with_values(|n| &n[a.idx].value + c);
        self.push(value, Op::Offset(a.idx))
    }

    fn unary<'t>(&'t self, a: Var<'t>, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        let value = self.with_values(|n| n[a.idx].value.mapv(f));
        self.push(value, op)
    }

    pub fn neg<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        self.unary(a, |x| -x, Op::Neg(a.idx))
    }

    pub fn exp<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        self.unary(a, f64::exp, Op::Exp(a.idx))
    }

    pub fn try_log<'t>(&'t self, a: Var<'t>) -> Result<Var<'t>, GradError> {
        if let Some(&bad) = a.value().iter().find(|v| !(**v > 0.0)) {
            return Err(GradError::Domain {
                op: "log",
                value: bad,
            });
        }
        Ok(self.unary(a, f64::ln, Op::Log(a.idx)))
    }

    pub fn tanh<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        self.unary(a, f64::tanh, Op::Tanh(a.idx))
    }

    pub fn try_sqrt<'t>(&'t self, a: Var<'t>) -> Result<Var<'t>, GradError> {
        if let Some(&bad) = a.value().iter().find(|v| !(**v > 0.0)) {
            return Err(GradError::Domain {
                op: "sqrt",
                value: bad,
            });
        }
        Ok(self.unary(a, f64::sqrt, Op::Sqrt(a.idx)))
    }

    pub fn relu<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        self.unary(a, |x| x.max(0.0), Op::Relu(a.idx))
    }

    pub fn try_matmul<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>, GradError> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa.1 != sb.0 {
            return Err(GradError::ShapeMismatch {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let value = self.with_values(|n| n[a.idx].value.dot(&n[b.idx].value));
        Ok(self.push(value, Op::MatMul(a.idx, b.idx)))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        let value = self.with_values(|n| scalar_tensor(n[a.idx].value.sum()));
        self.push(value, Op::Sum(a.idx))
    }

    pub fn mean<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        let (r, c) = a.shape();
        let total = self.sum(a);
        self.scale(total, 1.0 / (r * c).max(1) as f64)
    }

    /// Row sums: `r × c → r × 1`.
    pub fn sum_cols<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        let value = self.with_values(|n| n[a.idx].value.sum_axis(Axis(1)).insert_axis(Axis(1)));
        self.push(value, Op::SumCols(a.idx))
    }

    /// `log Σ exp(aᵢ)` over all elements, computed with a max shift.
    ///
    /// Infinite entries are handled exactly: any `+∞` makes the result `+∞`, and an
    /// all-`−∞` input yields `−∞`.
    pub fn try_logsumexp<'t>(&'t self, a: Var<'t>) -> Result<Var<'t>, GradError> {
        let value = self.with_values(|n| logsumexp_value(&n[a.idx].value));
        if value.is_nan() || a.shape().0 * a.shape().1 == 0 {
            return Err(GradError::Domain {
                op: "logsumexp",
                value,
            });
        }
        Ok(self.push(scalar_tensor(value), Op::LogSumExp(a.idx)))
    }

    /// Elementwise Normal log-density of `x` under mean `mu` and standard deviation `sigma`.
    ///
    /// `x` and `mu` share a shape; `sigma` either matches it or is a `1 × n` row
    /// broadcast over rows.
    pub fn try_gaussian_logpdf<'t>(
        &'t self,
        x: Var<'t>,
        mu: Var<'t>,
        sigma: Var<'t>,
    ) -> Result<Var<'t>, GradError> {
        self.same_shape("gaussian_logpdf", x, mu)?;
        let (sx, ss) = (x.shape(), sigma.shape());
        if !(ss == sx || (ss.0 == 1 && ss.1 == sx.1)) {
            return Err(GradError::ShapeMismatch {
                op: "gaussian_logpdf",
                left: sx,
                right: ss,
            });
        }
        if let Some(&bad) = sigma.value().iter().find(|v| !(**v > 0.0)) {
            return Err(GradError::Domain {
                op: "gaussian_logpdf",
                value: bad,
            });
        }
        let value = self.with_values(|n| {
            let (xv, mv, sv) = (&n[x.idx].value, &n[mu.idx].value, &n[sigma.idx].value);
            let mut out = Array2::zeros(sx);
            for ((i, j), o) in out.indexed_iter_mut() {
                let s = if ss.0 == 1 { sv[[0, j]] } else { sv[[i, j]] };
                *o = gaussian_logpdf(xv[[i, j]], mv[[i, j]], s);
            }
            out
        });
        Ok(self.push(
            value,
            Op::GaussianLogPdf {
                x: x.idx,
                mu: mu.idx,
                sigma: sigma.idx,
            },
        ))
    }

    /// Element `(r, c)` of `a` as a scalar.
    pub fn try_index<'t>(&'t self, a: Var<'t>, r: usize, c: usize) -> Result<Var<'t>, GradError> {
        let shape = a.shape();
        if r >= shape.0 || c >= shape.1 {
            return Err(GradError::ShapeMismatch {
                op: "index",
                left: shape,
                right: (r, c),
            });
        }
        let value = self.with_values(|n| scalar_tensor(n[a.idx].value[[r, c]]));
        Ok(self.push(value, Op::Index(a.idx, r, c)))
    }

    /// Stacks scalars into an `n × 1` column.
    pub fn try_stack<'t>(&'t self, items: &[Var<'t>]) -> Result<Var<'t>, GradError> {
        if items.is_empty() {
            return Err(GradError::Empty { op: "stack" });
        }
        if let Some(bad) = items.iter().find(|v| v.shape() != (1, 1)) {
            return Err(GradError::ShapeMismatch {
                op: "stack",
                left: bad.shape(),
                right: (1, 1),
            });
        }
        let value = self.with_values(|n| {
            Array2::from_shape_fn((items.len(), 1), |(i, _)| n[items[i].idx].value[[0, 0]])
        });
        Ok(self.push(value, Op::Stack(items.iter().map(|v| v.idx).collect())))
    }

    /// `[a | b]`: column-wise concatenation of two matrices with equal row counts.
    pub fn try_concat_cols<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>, GradError> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa.0 != sb.0 {
            return Err(GradError::ShapeMismatch {
                op: "concat_cols",
                left: sa,
                right: sb,
            });
        }
        let value = self.with_values(|n| {
            ndarray::concatenate(Axis(1), &[n[a.idx].value.view(), n[b.idx].value.view()])
                .expect("concat")
        });
        Ok(self.push(value, Op::ConcatCols(a.idx, b.idx)))
    }

    pub fn try_minimum<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>, GradError> {
        self.elementwise("minimum", a, b, f64::min, Op::Minimum(a.idx, b.idx))
    }

    /// Elementwise clamp to `[lo, hi]`; gradient passes only where the input is inside.
    pub fn clamp<'t>(&'t self, a: Var<'t>, lo: f64, hi: f64) -> Var<'t> {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a.idx, lo, hi))
    }

    /// Records a scalar function of scalar inputs whose value and partial derivatives
    /// were computed outside the tape.
    pub fn try_custom<'t>(
        &'t self,
        inputs: &[Var<'t>],
        value: f64,
        partials: &[f64],
    ) -> Result<Var<'t>, GradError> {
        if inputs.len() != partials.len() {
            return Err(GradError::ShapeMismatch {
                op: "custom",
                left: (inputs.len(), 1),
                right: (partials.len(), 1),
            });
        }
        if let Some(bad) = inputs.iter().find(|v| v.shape() != (1, 1)) {
            return Err(GradError::ShapeMismatch {
                op: "custom",
                left: bad.shape(),
                right: (1, 1),
            });
        }
        Ok(self.push(
            scalar_tensor(value),
            Op::Custom {
                inputs: inputs.iter().map(|v| v.idx).collect(),
                partials: partials.to_vec(),
            },
        ))
    }

    /// Reverse sweep from a scalar output.
    ///
    /// Every node reachable from `output` receives `d output / d node`; all other
    /// nodes report an exact zero gradient.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients, GradError> {
        let nodes = self.nodes.borrow();
        let shape = shape_of(&nodes[output.idx].value);
        if shape != (1, 1) {
            return Err(GradError::NonScalarOutput { shape });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.idx + 1];
        grads[output.idx] = Some(scalar_tensor(1.0));

        for idx in (0..=output.idx).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &nodes[idx];
            propagate(&nodes, node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let shapes = nodes.iter().map(|n| shape_of(&n.value)).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], idx: usize, shape: Shape, f: impl FnOnce(&mut Tensor)) {
    let slot = grads[idx].get_or_insert_with(|| Array2::zeros(shape));
    f(slot);
}

fn propagate(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let shape = |i: usize| shape_of(&nodes[i].value);
    let out = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(grads, *a, shape(*a), |s| *s += g);
            accumulate(grads, *b, shape(*b), |s| *s += g);
        }
        Op::Sub(a, b) => {
            accumulate(grads, *a, shape(*a), |s| *s += g);
            accumulate(grads, *b, shape(*b), |s| *s -= g);
        }
        Op::Mul(a, b) => {
            let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
            accumulate(grads, *a, shape(*a), |s| {
                Zip::from(s)
                    .and(g)
                    .and(vb)
                    .for_each(|s, &g, &y| *s += g * y)
            });
            accumulate(grads, *b, shape(*b), |s| {
                Zip::from(s)
                    .and(g)
                    .and(va)
                    .for_each(|s, &g, &x| *s += g * x)
            });
        }
        Op::Div(a, b) => {
            let vb = &nodes[*b].value;
            accumulate(grads, *a, shape(*a), |s| {
                Zip::from(s)
                    .and(g)
                    .and(vb)
                    .for_each(|s, &g, &y| *s += g / y)
            });
            accumulate(grads, *b, shape(*b), |s| {
                Zip::from(s)
                    .and(g)
                    .and(vb)
                    .and(out)
                    .for_each(|s, &g, &y, &q| *s -= g * q / y)
            });
        }
        Op::AddRow(a, row) => {
            accumulate(grads, *a, shape(*a), |s| *s += g);
            let summed = g.sum_axis(Axis(0)).insert_axis(Axis(0));
            accumulate(grads, *row, shape(*row), |s| *s += &summed);
        }
        Op::Scale(a, k) => accumulate(grads, *a, shape(*a), |s| s.scaled_add(*k, g)),
        Op::Offset(a) => accumulate(grads, *a, shape(*a), |s| *s += g),
        Op::Neg(a) => accumulate(grads, *a, shape(*a), |s| *s -= g),
        Op::Exp(a) => accumulate(grads, *a, shape(*a), |s| {
            Zip::from(s)
                .and(g)
                .and(out)
                .for_each(|s, &g, &e| *s += g * e)
        }),
        Op::Log(a) => {
            let va = &nodes[*a].value;
            accumulate(grads, *a, shape(*a), |s| {
                Zip::from(s)
                    .and(g)
                    .and(va)
                    .for_each(|s, &g, &x| *s += g / x)
            })
        }
        Op::Tanh(a) => accumulate(grads, *a, shape(*a), |s| {
            Zip::from(s)
                .and(g)
                .and(out)
                .for_each(|s, &g, &t| *s += g * (1.0 - t * t))
        }),
        Op::Sqrt(a) => accumulate(grads, *a, shape(*a), |s| {
            Zip::from(s)
                .and(g)
                .and(out)
                .for_each(|s, &g, &r| *s += g * 0.5 / r)
        }),
        Op::Relu(a) => accumulate(grads, *a, shape(*a), |s| {
            Zip::from(s).and(g).and(out).for_each(|s, &g, &r| {
                if r > 0.0 {
                    *s += g
                }
            })
        }),
        Op::MatMul(a, b) => {
            let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
            let ga = g.dot(&vb.t());
            let gb = va.t().dot(g);
            accumulate(grads, *a, shape(*a), |s| *s += &ga);
            accumulate(grads, *b, shape(*b), |s| *s += &gb);
        }
        Op::Sum(a) => {
            let gs = g[[0, 0]];
            accumulate(grads, *a, shape(*a), |s| *s += gs);
        }
        Op::SumCols(a) => accumulate(grads, *a, shape(*a), |s| *s += &g.view()),
        Op::LogSumExp(a) => {
            let va = &nodes[*a].value;
            let gs = g[[0, 0]];
            let weights = softmax_weights(va, out[[0, 0]]);
            accumulate(grads, *a, shape(*a), |s| s.scaled_add(gs, &weights));
        }
        Op::GaussianLogPdf { x, mu, sigma } => {
            let (vx, vm, vs) = (&nodes[*x].value, &nodes[*mu].value, &nodes[*sigma].value);
            let broadcast = vs.nrows() == 1 && vx.nrows() != 1;
            let mut gx = Array2::zeros(vx.dim());
            let mut gsig = Array2::zeros(vs.dim());
            for ((i, j), gv) in g.indexed_iter() {
                let sd = if broadcast { vs[[0, j]] } else { vs[[i, j]] };
                let z = (vx[[i, j]] - vm[[i, j]]) / sd;
                gx[[i, j]] = -gv * z / sd;
                let dsig = gv * (z * z - 1.0) / sd;
                if broadcast {
                    gsig[[0, j]] += dsig;
                } else {
                    gsig[[i, j]] += dsig;
                }
            }
            accumulate(grads, *x, shape(*x), |s| *s += &gx);
            accumulate(grads, *mu, shape(*mu), |s| *s -= &gx);
            accumulate(grads, *sigma, shape(*sigma), |s| *s += &gsig);
        }
        Op::Index(a, r, c) => {
            let gs = g[[0, 0]];
            accumulate(grads, *a, shape(*a), |s| s[[*r, *c]] += gs);
        }
        Op::Stack(items) => {
            for (i, item) in items.iter().enumerate() {
                let gs = g[[i, 0]];
                accumulate(grads, *item, (1, 1), |s| s[[0, 0]] += gs);
            }
        }
        Op::ConcatCols(a, b) => {
            let ca = shape(*a).1;
            accumulate(grads, *a, shape(*a), |s| *s += &g.slice(s![.., ..ca]));
            accumulate(grads, *b, shape(*b), |s| *s += &g.slice(s![.., ca..]));
        }
        Op::Minimum(a, b) => {
            let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
            // Ties route the gradient to the left operand.
            accumulate(grads, *a, shape(*a), |s| {
                Zip::from(s)
                    .and(g)
                    .and(va)
                    .and(vb)
                    .for_each(|s, &g, &x, &y| {
                        if x <= y {
                            *s += g
                        }
                    })
            });
            accumulate(grads, *b, shape(*b), |s| {
                Zip::from(s)
                    .and(g)
                    .and(va)
                    .and(vb)
                    .for_each(|s, &g, &x, &y| {
                        if y < x {
                            *s += g
                        }
                    })
            });
        }
        Op::Clamp(a, lo, hi) => {
            let va = &nodes[*a].value;
            accumulate(grads, *a, shape(*a), |s| {
                Zip::from(s).and(g).and(va).for_each(|s, &g, &x| {
                    if x >= *lo && x <= *hi {
                        *s += g
                    }
                })
            });
        }
        Op::Custom { inputs, partials } => {
            let gs = g[[0, 0]];
            for (input, p) in inputs.iter().zip(partials) {
                accumulate(grads, *input, (1, 1), |s| s[[0, 0]] += gs * p);
            }
        }
    }
}

fn logsumexp_value(values: &Tensor) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax_weights(values: &Tensor, lse: f64) -> Tensor {
    if lse == f64::INFINITY {
        let n = values.iter().filter(|v| **v == f64::INFINITY).count() as f64;
        return values.mapv(|v| if v == f64::INFINITY { 1.0 / n } else { 0.0 });
    }
    if lse == f64::NEG_INFINITY {
        return Array2::zeros(values.dim());
    }
    values.mapv(|v| (v - lse).exp())
}

/// Normal log-density `log N(x; mu, sigma)`.
pub fn gaussian_logpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

/// Result of a reverse sweep, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Shape>,
}

impl Gradients {
    /// `d output / d var`; exact zeros when `var` does not influence the output.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        match self.grads.get(var.idx).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Array2::zeros(self.shapes[var.idx]),
        }
    }

    pub fn scalar(&self, var: Var<'_>) -> f64 {
        self.wrt(var)[[0, 0]]
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> Shape {
        self.tape.with_values(|n| shape_of(&n[self.idx].value))
    }

    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.idx)
    }

    /// Value of a `1 × 1` variable.
    pub fn item(&self) -> f64 {
        self.tape.with_values(|n| n[self.idx].value[[0, 0]])
    }

    pub fn matmul(self, rhs: Var<'t>) -> Var<'t> {
        must(self.tape.try_matmul(self, rhs))
    }

    pub fn add_row(self, row: Var<'t>) -> Var<'t> {
        must(self.tape.try_add_row(self, row))
    }

    pub fn exp(self) -> Var<'t> {
        self.tape.exp(self)
    }

    pub fn ln(self) -> Var<'t> {
        must(self.tape.try_log(self))
    }

    pub fn tanh(self) -> Var<'t> {
        self.tape.tanh(self)
    }

    pub fn sqrt(self) -> Var<'t> {
        must(self.tape.try_sqrt(self))
    }

    pub fn relu(self) -> Var<'t> {
        self.tape.relu(self)
    }

    pub fn sum(self) -> Var<'t> {
        self.tape.sum(self)
    }

    pub fn mean(self) -> Var<'t> {
        self.tape.mean(self)
    }

    pub fn sum_cols(self) -> Var<'t> {
        self.tape.sum_cols(self)
    }

    pub fn logsumexp(self) -> Var<'t> {
        must(self.tape.try_logsumexp(self))
    }

    pub fn index(self, r: usize, c: usize) -> Var<'t> {
        must(self.tape.try_index(self, r, c))
    }

    pub fn concat_cols(self, rhs: Var<'t>) -> Var<'t> {
        must(self.tape.try_concat_cols(self, rhs))
    }

    pub fn minimum(self, rhs: Var<'t>) -> Var<'t> {
        must(self.tape.try_minimum(self, rhs))
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.tape.clamp(self, lo, hi)
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }
}

fn must<T>(r: Result<T, GradError>) -> T {
    r.unwrap_or_else(|e| panic!("{e}"))
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self::Output {
        must(self.tape.try_add(self, rhs))
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self::Output {
        must(self.tape.try_sub(self, rhs))
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self::Output {
        must(self.tape.try_mul(self, rhs))
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self::Output {
        must(self.tape.try_div(self, rhs))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self::Output {
        self.tape.neg(self)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self::Output {
        self.tape.offset(self, rhs)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self::Output {
        self.tape.offset(self, -rhs)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self::Output {
        self.tape.scale(self, rhs)
    }
}
