use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::stream::RandomStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
        }
    }
}

/// One affine layer, `z = x W + b` for a row vector `x`; `weight` is `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vector,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

/// Fully connected network: tanh on hidden layers, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
    activation: Activation,
    generation: u64,
}

/// Activations recorded by a forward pass, tied to the parameter generation
/// that produced them.
#[derive(Clone, Debug)]
pub struct MlpCache {
    generation: u64,
    activations: Vec<Matrix>,
}

impl MlpCache {
    pub fn output(&self) -> &Matrix {
        self.activations
            .last()
            .expect("at least the input is cached")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

impl MlpGrads {
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }
}

impl MlpParams {
    /// Weights and biases uniform in ±1/√fan_in.
    pub fn new_uniform(sizes: &[usize], stream: &mut RandomStream) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let mut draw = || (2.0 * stream.uniform() - 1.0) * bound;
                let mut weight = Matrix::zeros(w[0], w[1]);
                for r in 0..w[0] {
                    for c in 0..w[1] {
                        weight[(r, c)] = draw();
                    }
                }
                let bias = Vector::from_fn(w[1], |_, _| draw());
                Layer { weight, bias }
            })
            .collect();
        Ok(MlpParams {
            layers,
            activation: Activation::Tanh,
            generation: 0,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        Ok(MlpParams {
            layers: sizes
                .windows(2)
                .map(|w| Layer {
                    weight: Matrix::zeros(w[0], w[1]),
                    bias: Vector::zeros(w[1]),
                })
                .collect(),
            activation: Activation::Tanh,
            generation: 0,
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("an MLP needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::InputShape {
                    expected: format!("{} inputs", w[0].outputs()),
                    got: format!("{} inputs", w[1].inputs()),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(Error::InputShape {
                    expected: format!("bias of length {}", l.outputs()),
                    got: format!("bias of length {}", l.bias.len()),
                });
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("MLP parameters".into()));
            }
        }
        Ok(MlpParams {
            layers,
            activation: Activation::Tanh,
            generation: 0,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs()];
        s.extend(self.layers.iter().map(|l| l.outputs()));
        s
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().expect("nonempty").outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    /// Mutable parameter tensors; bumps the generation so older caches go stale.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.inputs(), l.outputs()),
                    bias: Vector::zeros(l.outputs()),
                })
                .collect(),
        }
    }

    /// Forward pass on a single input vector.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        let x = Matrix::from_row_slice(1, input.len(), input);
        let (y, cache) = self.forward_batch(&x)?;
        Ok((y.iter().cloned().collect(), cache))
    }

    /// Forward pass on a batch; rows are samples.
    pub fn forward_batch(&self, input: &Matrix) -> Result<(Matrix, MlpCache)> {
        if input.ncols() != self.input_size() {
            return Err(Error::InputShape {
                expected: format!("{} inputs", self.input_size()),
                got: format!("{} inputs", input.ncols()),
            });
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations.last().expect("nonempty") * &layer.weight;
            for mut row in z.row_iter_mut() {
                row += layer.bias.transpose();
            }
            if i < last {
                z.apply(|v| *v = v.tanh());
            }
            activations.push(z);
        }
        let out = activations.last().expect("nonempty").clone();
        Ok((
            out,
            MlpCache {
                generation: self.generation,
                activations,
            },
        ))
    }

    /// Reverse pass: parameter gradients (summed over the batch) and the
    /// gradient with respect to the input batch.
    pub fn backward(&self, cache: &MlpCache, output_grad: &Matrix) -> Result<(MlpGrads, Matrix)> {
        if cache.generation != self.generation {
            return Err(Error::StaleCache {
                cached: cache.generation,
                current: self.generation,
            });
        }
        if output_grad.shape() != cache.output().shape() {
            return Err(Error::InputShape {
                expected: format!("{:?}", cache.output().shape()),
                got: format!("{:?}", output_grad.shape()),
            });
        }
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = output_grad.clone();
        for i in (0..self.layers.len()).rev() {
            if i < last {
                let a = &cache.activations[i + 1];
                g.zip_apply(a, |gv, av| *gv *= 1.0 - av * av);
            }
            let prev = &cache.activations[i];
            let weight = prev.tr_mul(&g);
            let bias = Vector::from_iterator(g.ncols(), g.column_iter().map(|c| c.sum()));
            g = &g * self.layers[i].weight.transpose();
            grads.push(Layer { weight, bias });
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, g))
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InputShape {
            expected: "at least two positive layer sizes".into(),
            got: format!("{sizes:?}"),
        });
    }
    Ok(())
}
