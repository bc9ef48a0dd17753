//! Fully connected networks usable both on and off the gradient tape.

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grad::{Container, ContainerError, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    fn apply_var(self, x: Var<'_>) -> Var<'_> {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.relu(),
        }
    }
}

/// Multi-layer perceptron with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
    pub activation: Activation,
}

impl Mlp {
    /// Uniform Glorot initialisation; the output layer is scaled by `out_scale`.
    pub fn new<R: Rng>(
        sizes: &[usize],
        activation: Activation,
        out_scale: f64,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for (l, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let mut limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            if l == layers - 1 {
                limit *= out_scale;
            }
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| {
                rng.random_range(-limit..=limit)
            }));
            biases.push(Array2::zeros((1, fan_out)));
        }
        Self {
            weights,
            biases,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map_or(0, |w| w.ncols())
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let last = self.weights.len() - 1;
        let mut h = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.dot(w);
            h += &b.row(0).insert_axis(Axis(0));
            if l < last {
                h.mapv_inplace(|v| self.activation.apply(v));
            }
        }
        h
    }

    /// Records the parameters on `tape` as leaves.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundMlp<'t> {
        BoundMlp {
            weights: self.weights.iter().map(|w| tape.leaf(w.clone())).collect(),
            biases: self.biases.iter().map(|b| tape.leaf(b.clone())).collect(),
            activation: self.activation,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn save_into(&self, prefix: &str, c: &mut Container) {
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            c.push(format!("{prefix}.{l}.w"), w);
            c.push(format!("{prefix}.{l}.b"), b);
        }
    }

    /// Loads weights with the same layout as `self` from `c`.
    pub fn load_from(&mut self, prefix: &str, c: &Container) -> Result<(), ContainerError> {
        for l in 0..self.weights.len() {
            self.weights[l] = c.take_shaped(&format!("{prefix}.{l}.w"), self.weights[l].dim())?;
            self.biases[l] = c.take_shaped(&format!("{prefix}.{l}.b"), self.biases[l].dim())?;
        }
        Ok(())
    }
}

/// An [`Mlp`] whose parameters live on a tape.
#[derive(Debug, Clone)]
pub struct BoundMlp<'t> {
    weights: Vec<Var<'t>>,
    biases: Vec<Var<'t>>,
    activation: Activation,
}

impl<'t> BoundMlp<'t> {
    pub fn forward(&self, x: Var<'t>) -> Var<'t> {
        let last = self.weights.len() - 1;
        let mut h = x;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.matmul(*w).add_row(*b);
            if l < last {
                h = self.activation.apply_var(h);
            }
        }
        h
    }

    /// Parameter variables in the same order as [`Mlp::params`].
    pub fn vars(&self) -> Vec<Var<'t>> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [*w, *b])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn loss_of(mlp: &Mlp, x: &Tensor) -> f64 {
        mlp.forward(x).mapv(|v| v * v).sum()
    }

    #[test]
    fn tape_and_plain_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::new(&[4, 8, 8, 3], Activation::Tanh, 1.0, &mut rng);
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
        let tape = Tape::new();
        let bound = mlp.bind(&tape);
        let y = bound.forward(tape.leaf(x.clone()));
        assert_eq!(y.value(), mlp.forward(&x));
    }

    // Central differences on every parameter of a random 3-layer network.
    #[test]
    fn three_layer_gradients_match_finite_differences() {
        for (seed, act) in [(1u64, Activation::Tanh), (2, Activation::Relu)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mlp = Mlp::new(&[3, 6, 5, 2], act, 1.0, &mut rng);
            let x = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
            let tape = Tape::new();
            let bound = mlp.bind(&tape);
            let y = bound.forward(tape.leaf(x.clone()));
            let loss = (y * y).sum();
            let grads = tape.backward(loss).unwrap();
            let analytic: Vec<Tensor> = bound.vars().iter().map(|v| grads.wrt(*v)).collect();

            let h = 1e-5;
            let mut worst: f64 = 0.0;
            for p in 0..analytic.len() {
                let dim = analytic[p].dim();
                for i in 0..dim.0 {
                    for j in 0..dim.1 {
                        let orig = mlp.params()[p][[i, j]];
                        mlp.params_mut()[p][[i, j]] = orig + h;
                        let up = loss_of(&mlp, &x);
                        mlp.params_mut()[p][[i, j]] = orig - h;
                        let down = loss_of(&mlp, &x);
                        mlp.params_mut()[p][[i, j]] = orig;
                        let fd = (up - down) / (2.0 * h);
                        let a = analytic[p][[i, j]];
                        let rel = (a - fd).abs() / fd.abs().max(1e-3);
                        worst = worst.max(rel);
                    }
                }
            }
            assert!(worst < 1e-4, "{act:?}: worst relative error {worst}");
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Mlp::new(&[2, 4, 1], Activation::Tanh, 0.1, &mut rng);
        let mut b = Mlp::new(&[2, 4, 1], Activation::Tanh, 0.1, &mut rng);
        assert_ne!(a, b);
        let mut c = Container::default();
        a.save_into("net", &mut c);
        b.load_from("net", &c).unwrap();
        assert_eq!(a, b);
    }
}
