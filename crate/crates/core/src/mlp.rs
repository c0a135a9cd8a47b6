//! Fully connected feed-forward networks with ReLU hidden layers, a softmax
//! output and negative log-likelihood training.
//!
//! Optimization is mini-batch SGD where each parameter's step is scaled by
//! an RMS-prop running average of its squared gradient and then fed through
//! a Nesterov momentum update (see [`optimizer_step`]).

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::{Reader, Writer};
use crate::{Error, Result};

/// Hidden widths of a per-speaker 2-class network.
pub const SUBNN_HIDDEN: [usize; 2] = [50, 50];
/// Hidden widths of the multi-class network.
pub const MULTICLASS_HIDDEN: [usize; 2] = [1200, 1200];
/// Posteriors are floored here before taking a log in [`nll_loss`].
pub const POSTERIOR_FLOOR: f64 = 1e-30;

/// Layer sizes `[input, hidden.., outputs]`.
pub fn layer_dims(input: usize, hidden: &[usize], outputs: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(outputs))
        .collect()
}

/// One affine map. `weights` is `fan_in × fan_out`, so a batch of row
/// vectors maps as `x · W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    dims: Vec<usize>,
    layers: Vec<Layer>,
}

impl MlpNetwork {
    /// Scaled-uniform initialization: weights in `±sqrt(6 / (fan_in + fan_out))`,
    /// zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        check_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || {
                        rng.random_range(-limit..limit)
                    }),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(MlpNetwork {
            dims: dims.to_vec(),
            layers,
        })
    }

    /// All-zero parameters.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(MlpNetwork {
            dims: dims.to_vec(),
            layers,
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::invalid("network has no layers"))?;
        let mut dims = vec![first.weights.nrows()];
        for l in &layers {
            if l.weights.nrows() != *dims.last().unwrap() || l.bias.len() != l.weights.ncols() {
                return Err(Error::invalid("layer shapes do not chain"));
            }
            dims.push(l.weights.ncols());
        }
        check_dims(&dims)?;
        Ok(MlpNetwork { dims, layers })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::invalid(format!(
                "input of dimension {cols} fed to a network expecting {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Output-layer logits for a batch (one row per example).
    pub fn logits(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(inputs.ncols())?;
        let mut a = inputs.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            a = a.dot(&l.weights) + &l.bias;
            if i < last {
                a.mapv_inplace(relu);
            }
        }
        Ok(a)
    }

    /// Forward pass keeping every layer's activations for [`backward`].
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        self.check_input(inputs.ncols())?;
        let mut activations = Vec::with_capacity(self.layers.len());
        activations.push(inputs.to_owned());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&l.weights) + &l.bias;
            if i < last {
                z.mapv_inplace(relu);
                activations.push(z);
            } else {
                softmax_rows(&mut z);
                return Ok(ForwardCache {
                    activations,
                    posteriors: z,
                });
            }
        }
        unreachable!("networks have at least one layer")
    }

    /// Class posteriors for a single input vector.
    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<(Array1<f64>, ForwardCache)> {
        let batch = x.insert_axis(Axis(0));
        let cache = self.forward_batch(batch)?;
        Ok((cache.posteriors.row(0).to_owned(), cache))
    }

    /// Log-softmax of the logits, computed without going through
    /// probabilities so tiny posteriors keep their precision.
    pub fn log_posteriors(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut z = self.logits(inputs)?;
        for mut row in z.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        Ok(z)
    }

    /// Model file: magic `OSIDMLP1`, the number of layer sizes and the sizes
    /// themselves (u32 LE), then per layer the `fan_in × fan_out` weights
    /// row-major followed by the biases, all f64 LE.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MLP_MAGIC);
        w.u32(self.dims.len() as u32);
        for &d in &self.dims {
            w.u32(d as u32);
        }
        for l in &self.layers {
            w.f64s(l.weights.iter());
            w.f64s(l.bias.iter());
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, MLP_MAGIC)?;
        let count = r.u32()? as usize;
        if count > 64 {
            return Err(Error::Format(format!("{count} layer sizes")));
        }
        let dims = (0..count)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        check_dims(&dims).map_err(|e| Error::Format(e.to_string()))?;
        let mut layers = Vec::with_capacity(count - 1);
        for w in dims.windows(2) {
            let weights = Array2::from_shape_vec((w[0], w[1]), r.f64s(w[0] * w[1])?)
                .map_err(|e| Error::Format(e.to_string()))?;
            let bias = Array1::from(r.f64s(w[1])?);
            layers.push(Layer { weights, bias });
        }
        r.finish()?;
        Ok(MlpNetwork { dims, layers })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_bytes()).map_err(|e| Error::from(e).at(path.as_ref()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
        Self::from_bytes(&bytes).map_err(|e| e.at(path))
    }
}

const MLP_MAGIC: &[u8; 8] = b"OSIDMLP1";

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::invalid(
            "a network needs an input and an output size",
        ));
    }
    if dims.contains(&0) {
        return Err(Error::invalid("layer sizes must be positive"));
    }
    if *dims.last().unwrap() < 2 {
        return Err(Error::invalid("softmax output needs at least two classes"));
    }
    Ok(())
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Activations recorded by a forward pass: the input batch, each hidden
/// layer's ReLU output, and the softmax posteriors.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
    pub posteriors: Array2<f64>,
}

/// `-ln p[label]`, with `p` floored at [`POSTERIOR_FLOOR`].
pub fn nll_loss(posteriors: ArrayView1<'_, f64>, label: usize) -> Result<f64> {
    let p = posteriors.get(label).ok_or_else(|| {
        Error::invalid(format!(
            "label {label} outside {} classes",
            posteriors.len()
        ))
    })?;
    Ok(-p.max(POSTERIOR_FLOOR).ln())
}

/// Mean of [`nll_loss`] over a batch.
pub fn batch_nll_loss(posteriors: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    if posteriors.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::invalid("posterior rows and labels differ in count"));
    }
    let mut total = 0.0;
    for (row, &y) in posteriors.rows().into_iter().zip(labels) {
        total += nll_loss(row, y)?;
    }
    Ok(total / labels.len() as f64)
}

/// Parameter-shaped buffers: gradients, momentum, squared-gradient averages.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Gradients {
            weights: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.dim()))
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.len()))
                .collect(),
        }
    }

    fn matches(&self, net: &MlpNetwork) -> bool {
        self.weights.len() == net.layers.len()
            && net
                .layers
                .iter()
                .zip(&self.weights)
                .zip(&self.biases)
                .all(|((l, w), b)| l.weights.dim() == w.dim() && l.bias.len() == b.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
    }
}

/// Exact gradient of the mean batch NLL with respect to every parameter.
///
/// The softmax and NLL are differentiated together, so the output-layer
/// error is simply `posteriors - onehot(label)`.
pub fn backward(net: &MlpNetwork, labels: &[usize], cache: &ForwardCache) -> Result<Gradients> {
    let batch = cache.posteriors.nrows();
    let stale = cache.activations.len() != net.layers.len()
        || cache.posteriors.ncols() != net.output_dim()
        || cache
            .activations
            .iter()
            .zip(&net.dims)
            .any(|(a, &d)| a.ncols() != d || a.nrows() != batch);
    if stale {
        return Err(Error::invalid(
            "forward cache does not belong to this network",
        ));
    }
    if labels.len() != batch || batch == 0 {
        return Err(Error::invalid(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= net.output_dim()) {
        return Err(Error::invalid(format!(
            "label {y} outside {} classes",
            net.output_dim()
        )));
    }

    let scale = 1.0 / batch as f64;
    let mut delta = cache.posteriors.clone();
    for (mut row, &y) in delta.rows_mut().into_iter().zip(labels) {
        row[y] -= 1.0;
    }
    delta.mapv_inplace(|v| v * scale);

    let n = net.layers.len();
    let mut weights = vec![Array2::zeros((0, 0)); n];
    let mut biases = vec![Array1::zeros(0); n];
    for l in (0..n).rev() {
        let input = &cache.activations[l];
        weights[l] = input.t().dot(&delta);
        biases[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut prev = delta.dot(&net.layers[l].weights.t());
            Zip::from(&mut prev).and(input).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = prev;
        }
    }
    Ok(Gradients { weights, biases })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Global learning rate.
    pub eta: f64,
    /// Nesterov momentum coefficient.
    pub mu: f64,
    /// RMS-prop decay of the squared-gradient average.
    pub alpha: f64,
    /// Added to the RMS denominator.
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            eta: 1e-4,
            mu: 0.95,
            alpha: 0.99,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub velocity: Gradients,
    pub rms_accum: Gradients,
}

impl OptimizerState {
    pub fn new(net: &MlpNetwork, config: OptimizerConfig) -> Self {
        OptimizerState {
            config,
            velocity: Gradients::zeros_like(net),
            rms_accum: Gradients::zeros_like(net),
        }
    }
}

/// One update of every parameter `p` with gradient `g`:
///
/// ```text
/// r <- alpha r + (1 - alpha) g^2
/// s  = eta / (sqrt(r) + epsilon)
/// v <- mu v - s g
/// p <- p + mu v - s g
/// ```
///
/// This is the Nesterov update written on the look-ahead parameters, with
/// the plain gradient step replaced by its RMS-normalized version.
pub fn optimizer_step(
    net: &mut MlpNetwork,
    grads: &Gradients,
    state: &mut OptimizerState,
) -> Result<()> {
    if !grads.matches(net) || !state.velocity.matches(net) || !state.rms_accum.matches(net) {
        return Err(Error::invalid(
            "gradient or optimizer buffers do not match the network",
        ));
    }
    let OptimizerConfig {
        eta,
        mu,
        alpha,
        epsilon,
    } = state.config;
    let update = |p: &mut f64, &g: &f64, v: &mut f64, r: &mut f64| {
        *r = alpha * *r + (1.0 - alpha) * g * g;
        let step = eta / (r.sqrt() + epsilon);
        *v = mu * *v - step * g;
        *p += mu * *v - step * g;
    };
    for (l, layer) in net.layers.iter_mut().enumerate() {
        Zip::from(&mut layer.weights)
            .and(&grads.weights[l])
            .and(&mut state.velocity.weights[l])
            .and(&mut state.rms_accum.weights[l])
            .for_each(update);
        Zip::from(&mut layer.bias)
            .and(&grads.biases[l])
            .and(&mut state.velocity.biases[l])
            .and(&mut state.rms_accum.biases[l])
            .for_each(update);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl TrainConfig {
    /// Per-speaker 2-class networks: 5 epochs of 800-frame batches.
    pub fn subnn() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 800,
            seed: 0,
            shuffle: true,
        }
    }

    /// The multi-class network: 20 epochs of 15000-frame batches.
    pub fn multiclass() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 15000,
            seed: 0,
            shuffle: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        Ok(())
    }
}

/// Mini-batch training. Returns the mean training loss of each epoch,
/// measured on each batch just before its update.
pub fn train(
    net: &mut MlpNetwork,
    inputs: ArrayView2<'_, f64>,
    labels: &[usize],
    cfg: &TrainConfig,
    state: &mut OptimizerState,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if labels.len() != n {
        return Err(Error::invalid(format!(
            "{} labels for {n} examples",
            labels.len()
        )));
    }
    net.check_input(inputs.ncols())?;
    if let Some(&y) = labels.iter().find(|&&y| y >= net.output_dim()) {
        return Err(Error::invalid(format!(
            "label {y} outside {} classes",
            net.output_dim()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = inputs.select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let cache = net.forward_batch(x.view())?;
            total += batch_nll_loss(cache.posteriors.view(), &y)? * chunk.len() as f64;
            let grads = backward(net, &y, &cache)?;
            optimizer_step(net, &grads, state)?;
        }
        trace.push(total / n as f64);
    }
    Ok(trace)
}
