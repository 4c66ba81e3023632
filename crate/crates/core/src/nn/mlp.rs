use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::NnError;

/// Fully connected network: `tanh` after every hidden layer, affine output.
///
/// Parameters live in one flat vector, layer by layer, each layer storing its
/// row-major `out x in` weight matrix followed by its bias vector. Gradients
/// and optimizer moments use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[l + 1]` is layer `l`'s output.
    activations: Vec<Vec<f64>>,
    scratch: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Serialized form: nested row-major weight arrays, one entry per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpRecord {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(NnError::Shape(format!("invalid layer sizes {layer_sizes:?}")));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; param_count(layer_sizes)],
        })
    }

    /// Orthogonal weights scaled by `hidden_gain` (hidden layers) and
    /// `output_gain` (last layer), zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut net = Self::zeros(layer_sizes)?;
        let n_layers = net.num_layers();
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let gain = if l + 1 == n_layers { output_gain } else { hidden_gain };
            let w = orthogonal_matrix(fan_out, fan_in, rng);
            for (dst, src) in net.params[offset..offset + fan_out * fan_in].iter_mut().zip(w) {
                *dst = gain * src;
            }
            offset += fan_out * fan_in + fan_out;
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn zero_grads(&self) -> Vec<f64> {
        vec![0.0; self.params.len()]
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::Shape(format!(
                "input length {} but network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut cache = ForwardCache::default();
        self.forward_cached(input, &mut cache)?;
        Ok(cache.activations.pop().unwrap_or_default())
    }

    /// Forward pass keeping every layer's activation in `cache`.
    pub fn forward_cached(&self, input: &[f64], cache: &mut ForwardCache) -> Result<(), NnError> {
        self.check_input(input)?;
        let n_layers = self.num_layers();
        cache.activations.resize_with(n_layers + 1, Vec::new);
        cache.activations[0].clear();
        cache.activations[0].extend_from_slice(input);
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (w, rest) = self.params[offset..].split_at(fan_out * fan_in);
            let b = &rest[..fan_out];
            let (before, after) = cache.activations.split_at_mut(l + 1);
            let x = &before[l];
            let y = &mut after[0];
            y.clear();
            y.extend(w.chunks_exact(fan_in).zip(b).map(|(row, bias)| {
                row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias
            }));
            if l + 1 < n_layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            offset += fan_out * fan_in + fan_out;
        }
        Ok(())
    }

    /// Reverse pass for the scalar `output · output_grad`.
    ///
    /// Parameter gradients are accumulated (added) into `grads`; the gradient
    /// with respect to the input is returned.
    pub fn backward(
        &self,
        cache: &mut ForwardCache,
        output_grad: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>, NnError> {
        let n_layers = self.num_layers();
        if cache.activations.len() != n_layers + 1 {
            return Err(NnError::Shape("backward called without a forward pass".into()));
        }
        if output_grad.len() != self.output_dim() || grads.len() != self.params.len() {
            return Err(NnError::Shape("gradient buffer shape mismatch".into()));
        }
        let mut delta = output_grad.to_vec();
        let mut offset = self.params.len();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            offset -= fan_out * fan_in + fan_out;
            let w = &self.params[offset..offset + fan_out * fan_in];
            let x = &cache.activations[l];
            let (gw, gb) = grads[offset..offset + fan_out * fan_in + fan_out].split_at_mut(fan_out * fan_in);
            for ((grow, gbias), d) in gw.chunks_exact_mut(fan_in).zip(gb.iter_mut()).zip(&delta) {
                *gbias += d;
                if *d != 0.0 {
                    grow.iter_mut().zip(x).for_each(|(g, xi)| *g += d * xi);
                }
            }
            let back = &mut cache.scratch;
            back.clear();
            back.resize(fan_in, 0.0);
            for (row, d) in w.chunks_exact(fan_in).zip(&delta) {
                if *d != 0.0 {
                    back.iter_mut().zip(row).for_each(|(acc, wij)| *acc += d * wij);
                }
            }
            if l > 0 {
                // x holds tanh outputs of the previous layer.
                back.iter_mut().zip(x).for_each(|(g, a)| *g *= 1.0 - a * a);
            }
            std::mem::swap(&mut delta, back);
        }
        Ok(delta)
    }

    pub fn to_record(&self) -> MlpRecord {
        let mut weights = Vec::with_capacity(self.num_layers());
        let mut biases = Vec::with_capacity(self.num_layers());
        let mut offset = 0;
        for l in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.params[offset..offset + fan_out * fan_in];
            weights.push(w.chunks_exact(fan_in).map(<[f64]>::to_vec).collect());
            offset += fan_out * fan_in;
            biases.push(self.params[offset..offset + fan_out].to_vec());
            offset += fan_out;
        }
        MlpRecord {
            layer_sizes: self.layer_sizes.clone(),
            weights,
            biases,
        }
    }

    pub fn from_record(record: &MlpRecord) -> Result<Self, NnError> {
        let mut net = Self::zeros(&record.layer_sizes)?;
        let n_layers = net.num_layers();
        if record.weights.len() != n_layers || record.biases.len() != n_layers {
            return Err(NnError::Shape("record layer count mismatch".into()));
        }
        let mut params = Vec::with_capacity(net.params.len());
        for l in 0..n_layers {
            let (fan_in, fan_out) = (record.layer_sizes[l], record.layer_sizes[l + 1]);
            let w = &record.weights[l];
            if w.len() != fan_out || w.iter().any(|row| row.len() != fan_in) {
                return Err(NnError::Shape(format!("layer {l} weight shape mismatch")));
            }
            if record.biases[l].len() != fan_out {
                return Err(NnError::Shape(format!("layer {l} bias shape mismatch")));
            }
            w.iter().for_each(|row| params.extend_from_slice(row));
            params.extend_from_slice(&record.biases[l]);
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite);
        }
        net.params = params;
        Ok(net)
    }
}

/// `rows x cols` row-major matrix with orthonormal rows (if `rows <= cols`)
/// or orthonormal columns, via Gram-Schmidt on Gaussian vectors.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (count, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        for u in &basis {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for (i, vec) in basis.iter().enumerate() {
        for (j, &val) in vec.iter().enumerate() {
            if rows <= cols {
                out[i * cols + j] = val;
            } else {
                out[j * cols + i] = val;
            }
        }
    }
    out
}
