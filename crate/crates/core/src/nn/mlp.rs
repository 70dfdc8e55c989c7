//! MLPs with ReLU hidden activations, a linear output layer, and explicit
//! forward caches for reverse-mode differentiation.

use super::tensor::Tensor2;
use super::NnError;
use rand::Rng;

/// Layer widths of an MLP, input first. ReLU between hidden layers, linear
/// output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self, NnError> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(NnError::InvalidSpec {
                widths: widths.clone(),
            });
        }
        Ok(MlpSpec { widths })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("spec has >= 2 widths")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// in × out.
    pub weight: Tensor2,
    /// 1 × out.
    pub bias: Tensor2,
}

/// Parameters of one MLP. Shared use (the same parameters evaluated on
/// several inputs) accumulates gradients across calls.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    spec: MlpSpec,
    pub layers: Vec<DenseLayer>,
}

/// Activations recorded by a forward pass: `activations[0]` is the input,
/// `activations[i]` the post-activation output of layer `i` (the last entry
/// is the network output). ReLU masks are recovered from the sign of the
/// cached post-activations.
#[derive(Debug, Clone)]
pub struct MlpCache {
    widths: Vec<usize>,
    pub activations: Vec<Tensor2>,
}

impl MlpCache {
    pub fn output(&self) -> &Tensor2 {
        self.activations.last().expect("cache has activations")
    }

    pub fn input(&self) -> &Tensor2 {
        &self.activations[0]
    }
}

/// He-uniform fan-in initialization: weights in ±√(6/fan_in), biases zero.
pub fn init_mlp<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> MlpParams {
    let mut layers = Vec::with_capacity(spec.num_layers());
    for w in spec.widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / fan_in as f64).sqrt();
        let mut weight = Tensor2::zeros(fan_in, fan_out);
        for v in weight.data_mut() {
            *v = rng.gen_range(-bound..=bound);
        }
        layers.push(DenseLayer {
            weight,
            bias: Tensor2::zeros(1, fan_out),
        });
    }
    MlpParams {
        spec: spec.clone(),
        layers,
    }
}

/// Seed-keyed variant of [`init_mlp`]; identical seeds give bit-identical
/// parameters.
pub fn init_params(spec: &MlpSpec, seed: u64) -> MlpParams {
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    init_mlp(spec, &mut rng)
}

impl MlpParams {
    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn zeroed(spec: &MlpSpec) -> MlpParams {
        let layers = spec
            .widths
            .windows(2)
            .map(|w| DenseLayer {
                weight: Tensor2::zeros(w[0], w[1]),
                bias: Tensor2::zeros(1, w[1]),
            })
            .collect();
        MlpParams {
            spec: spec.clone(),
            layers,
        }
    }

    pub fn forward(&self, input: &Tensor2) -> Result<(Tensor2, MlpCache), NnError> {
        if input.cols() != self.spec.input_width() {
            return Err(NnError::ShapeMismatch {
                context: "mlp_forward input",
                expected: (input.rows(), self.spec.input_width()),
                got: input.shape(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].matmul(&layer.weight)?;
            z.add_row_broadcast(&layer.bias)?;
            let a = if i < last { z.relu() } else { z };
            a.check_finite("mlp_forward")?;
            activations.push(a);
        }
        let output = activations.last().expect("at least one layer").clone();
        Ok((
            output,
            MlpCache {
                widths: self.spec.widths.clone(),
                activations,
            },
        ))
    }

    /// Backpropagates `upstream` (shape = output) through the cached pass,
    /// accumulating parameter gradients in place and returning the gradient
    /// with respect to the input.
    pub fn backward(&mut self, cache: &MlpCache, upstream: &Tensor2) -> Result<Tensor2, NnError> {
        if cache.widths != self.spec.widths {
            return Err(NnError::StaleCache);
        }
        if upstream.shape() != cache.output().shape() {
            return Err(NnError::ShapeMismatch {
                context: "mlp_backward upstream",
                expected: cache.output().shape(),
                got: upstream.shape(),
            });
        }
        let last = self.layers.len() - 1;
        let mut grad = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            // Output layer is linear; hidden layers gate by ReLU activity.
            if i < last {
                grad = Tensor2::relu_backward(&cache.activations[i + 1], &grad);
            }
            let input = &cache.activations[i];
            let w_grad = input.matmul_transpose_self(&grad)?;
            let b_grad = grad.sum_rows();
            let layer = &mut self.layers[i];
            layer.weight.accumulate_grad(&w_grad);
            layer.bias.accumulate_grad(&b_grad);
            grad = grad.matmul_transpose_other(&layer.weight)?;
        }
        Ok(grad)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.data().len())
            .sum()
    }

    pub fn visit_tensors<'a>(&'a self, out: &mut Vec<&'a Tensor2>) {
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
    }

    pub fn visit_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor2>) {
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
    }

    pub fn zero_grads(&mut self) {
        for l in &mut self.layers {
            l.weight.ensure_grad();
            l.weight.zero_grad();
            l.bias.ensure_grad();
            l.bias.zero_grad();
        }
    }
}
