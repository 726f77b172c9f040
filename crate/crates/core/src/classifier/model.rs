use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Standard deviation of the output-layer weights at initialization. Kept
/// small so a fresh model scores close to 1/2 on every input.
pub const OUTPUT_INIT_STD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
        }
    }
}

/// First/second moment accumulators, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AdamState {
    m_w: Vec<DMatrix<f64>>,
    v_w: Vec<DMatrix<f64>>,
    m_b: Vec<DVector<f64>>,
    v_b: Vec<DVector<f64>>,
    step: u64,
}

impl AdamState {
    fn zeros(weights: &[DMatrix<f64>]) -> Self {
        let m_w: Vec<_> = weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect();
        let m_b: Vec<_> = weights.iter().map(|w| DVector::zeros(w.nrows())).collect();
        Self {
            v_w: m_w.clone(),
            v_b: m_b.clone(),
            m_w,
            m_b,
            step: 0,
        }
    }
}

/// Gradients of the loss, laid out like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Gradients {
    /// Weights then biases, layer by layer, weights in column-major order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Fully connected network with ReLU hidden layers and a single logistic
/// output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    sizes: Vec<usize>,
    /// `weights[l]` maps layer `l` (columns) to layer `l + 1` (rows).
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    pub(crate) adam: AdamState,
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::param("layers", "need at least an input and an output layer"));
    }
    if sizes.contains(&0) {
        return Err(Error::param("layers", "layer sizes must be positive"));
    }
    if sizes.last() != Some(&1) {
        return Err(Error::param("layers", "output layer must have one unit"));
    }
    Ok(())
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Binary cross-entropy of a logit against a label.
pub(crate) fn logit_cross_entropy(z: f64, label: bool) -> f64 {
    if label {
        softplus(-z)
    } else {
        softplus(z)
    }
}

/// Pre-activations and activations of every layer for a batch laid out as
/// columns.
pub(crate) struct ForwardPass {
    pub(crate) activations: Vec<DMatrix<f64>>,
    pub(crate) pre: Vec<DMatrix<f64>>,
}

impl ForwardPass {
    pub(crate) fn logits(&self) -> &DMatrix<f64> {
        self.pre.last().expect("at least one layer")
    }
}

impl MlpModel {
    /// He-initialized hidden layers and a small-variance output layer; biases
    /// start at zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        check_sizes(sizes)?;
        let last = sizes.len() - 2;
        let weights = sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let std = if l == last {
                    OUTPUT_INIT_STD
                } else {
                    (2.0 / w[0] as f64).sqrt()
                };
                let normal = Normal::new(0.0, std).expect("positive std");
                DMatrix::from_fn(w[1], w[0], |_, _| normal.sample(rng))
            })
            .collect();
        Ok(Self::from_parts(sizes, weights, None))
    }

    /// All weights and biases zero.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        let weights = sizes.windows(2).map(|w| DMatrix::zeros(w[1], w[0])).collect();
        Ok(Self::from_parts(sizes, weights, None))
    }

    fn from_parts(sizes: &[usize], weights: Vec<DMatrix<f64>>, biases: Option<Vec<DVector<f64>>>) -> Self {
        let biases = biases.unwrap_or_else(|| weights.iter().map(|w| DVector::zeros(w.nrows())).collect());
        Self {
            sizes: sizes.to_vec(),
            adam: AdamState::zeros(&weights),
            weights,
            biases,
        }
    }

    /// Builds a model from explicit parameters, checking shapes and
    /// finiteness. The optimizer state starts fresh.
    pub fn from_parameters(weights: Vec<DMatrix<f64>>, biases: Vec<DVector<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::param("parameters", "need one bias vector per weight matrix"));
        }
        let mut sizes = vec![weights[0].ncols()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.ncols() != *sizes.last().expect("non-empty") || b.len() != w.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: *sizes.last().expect("non-empty"),
                    actual: w.ncols(),
                });
            }
            sizes.push(w.nrows());
        }
        check_sizes(&sizes)?;
        let model = Self::from_parts(&sizes, weights, Some(biases));
        if !model.is_finite() {
            return Err(Error::param("parameters", "must be finite"));
        }
        Ok(model)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.biases
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn forward_batch(&self, inputs: DMatrix<f64>) -> ForwardPass {
        let n = self.weights.len();
        let mut activations = Vec::with_capacity(n + 1);
        let mut pre = Vec::with_capacity(n);
        activations.push(inputs);
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * activations.last().expect("input layer");
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l + 1 < n {
                activations.push(z.map(|x| x.max(0.0)));
            } else {
                activations.push(z.map(sigmoid));
            }
            pre.push(z);
        }
        ForwardPass { activations, pre }
    }

    fn check_input(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.input_size() {
            return Err(Error::DimensionMismatch {
                expected: self.input_size(),
                actual: features.len(),
            });
        }
        Ok(())
    }

    /// Output logit for one feature vector.
    pub fn logit(&self, features: &[f64]) -> Result<f64> {
        self.check_input(features)?;
        let x = DMatrix::from_column_slice(features.len(), 1, features);
        Ok(self.forward_batch(x).logits()[(0, 0)])
    }

    /// Probability that `features` come from a legitimate user.
    pub fn forward(&self, features: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(features)?))
    }

    /// Column-stacks feature vectors, checking their length.
    pub(crate) fn batch_matrix<'a, I>(&self, rows: I) -> Result<DMatrix<f64>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut data = Vec::new();
        let mut cols = 0;
        for f in rows {
            self.check_input(f)?;
            data.extend_from_slice(f);
            cols += 1;
        }
        Ok(DMatrix::from_vec(self.input_size(), cols, data))
    }

    /// Mean cross-entropy and its gradient over a batch.
    pub fn loss_and_gradients(&self, inputs: &[&[f64]], labels: &[bool]) -> Result<(f64, Gradients)> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::LengthMismatch {
                what: "labels",
                expected: inputs.len(),
                actual: labels.len(),
            });
        }
        let pass = self.forward_batch(self.batch_matrix(inputs.iter().copied())?);
        let count = inputs.len() as f64;
        let logits = pass.logits();
        let loss = labels
            .iter()
            .enumerate()
            .map(|(j, y)| logit_cross_entropy(logits[(0, j)], *y))
            .sum::<f64>()
            / count;

        let out = pass.activations.last().expect("output layer");
        let mut delta = DMatrix::from_fn(1, labels.len(), |_, j| (out[(0, j)] - f64::from(u8::from(labels[j]))) / count);
        let n = self.weights.len();
        let mut weights = vec![DMatrix::zeros(0, 0); n];
        let mut biases = vec![DVector::zeros(0); n];
        for l in (0..n).rev() {
            weights[l] = &delta * pass.activations[l].transpose();
            biases[l] = delta.column_sum();
            if l > 0 {
                let back = self.weights[l].transpose() * &delta;
                delta = back.zip_map(&pass.pre[l - 1], |g, z| if z > 0.0 { g } else { 0.0 });
            }
        }
        Ok((loss, Gradients { weights, biases }))
    }

    /// One Adam update with the given gradients.
    pub fn adam_step(&mut self, grads: &Gradients, config: &AdamConfig) {
        let s = &mut self.adam;
        s.step += 1;
        let t = s.step as i32;
        let c1 = 1.0 - config.beta1.powi(t);
        let c2 = 1.0 - config.beta2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        };
        for l in 0..self.weights.len() {
            for (((p, m), v), g) in self.weights[l]
                .iter_mut()
                .zip(s.m_w[l].iter_mut())
                .zip(s.v_w[l].iter_mut())
                .zip(grads.weights[l].iter())
            {
                update(p, m, v, *g);
            }
            for (((p, m), v), g) in self.biases[l]
                .iter_mut()
                .zip(s.m_b[l].iter_mut())
                .zip(s.v_b[l].iter_mut())
                .zip(grads.biases[l].iter())
            {
                update(p, m, v, *g);
            }
        }
    }

    /// Parameter `k` in the order of [`Gradients::flatten`].
    pub(crate) fn parameter_mut(&mut self, mut k: usize) -> &mut f64 {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            if k < w.len() {
                return &mut w.as_mut_slice()[k];
            }
            k -= w.len();
            if k < b.len() {
                return &mut b.as_mut_slice()[k];
            }
            k -= b.len();
        }
        panic!("parameter index out of range")
    }

    pub fn adam_steps_taken(&self) -> u64 {
        self.adam.step
    }

    /// ReLU on/off pattern of every hidden unit for one input.
    pub(crate) fn relu_mask(&self, features: &[f64]) -> Vec<bool> {
        let x = DMatrix::from_column_slice(features.len(), 1, features);
        let pass = self.forward_batch(x);
        let hidden = &pass.pre[..pass.pre.len() - 1];
        hidden.iter().flat_map(|z| z.iter().map(|v| *v > 0.0).collect::<Vec<_>>()).collect()
    }
}
