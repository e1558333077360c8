//! Multi-layer perceptrons with exact reverse- and forward-mode derivatives.
//!
//! Parameters are addressed either per layer or through a flat view with the
//! layout `[W₀ (row-major), b₀, W₁, b₁, ...]`, which is what optimizers and
//! the trust-region solver operate on.

use rand::Rng;

use super::{DenseMatrix, NumError};

/// Slope of the negative half of [`Activation::LeakyRelu`].
pub const LEAKY_SLOPE: f64 = 0.01;

/// Lower/upper clamp applied to sigmoid outputs so that logs stay finite.
pub const SIGMOID_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    LeakyRelu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
        }
    }

    /// Derivative expressed through the pre-activation `x`.
    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky-relu",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            "leaky-relu" => Some(Activation::LeakyRelu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputTransform {
    Identity,
    /// Logistic sigmoid clamped to `[SIGMOID_EPS, 1 - SIGMOID_EPS]`.
    Sigmoid,
}

impl OutputTransform {
    pub fn tag(self) -> &'static str {
        match self {
            OutputTransform::Identity => "identity",
            OutputTransform::Sigmoid => "sigmoid",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "identity" => Some(OutputTransform::Identity),
            "sigmoid" => Some(OutputTransform::Sigmoid),
            _ => None,
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn clamped_sigmoid(z: f64) -> (f64, bool) {
    let s = sigmoid(z);
    if s < SIGMOID_EPS {
        (SIGMOID_EPS, true)
    } else if s > 1.0 - SIGMOID_EPS {
        (1.0 - SIGMOID_EPS, true)
    } else {
        (s, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out_dim x in_dim`
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn param_count(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }
}

/// Affine layers joined by hidden activations, with an output transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    activations: Vec<Activation>,
    output: OutputTransform,
}

/// Record of a forward pass, sufficient for exact backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (the network input first).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    /// Which outputs were clamped by the sigmoid transform.
    clamped: Vec<bool>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn input(&self) -> &[f64] {
        &self.inputs[0]
    }

    /// Pre-transform output of the final layer.
    pub fn logits(&self) -> &[f64] {
        self.pre.last().expect("network has at least one layer")
    }
}

/// How parameters are initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitScale {
    pub hidden_gain: f64,
    pub output_gain: f64,
}

impl Default for InitScale {
    fn default() -> Self {
        Self {
            hidden_gain: 1.0,
            output_gain: 1.0,
        }
    }
}

impl Mlp {
    /// Builds a network from layers; `activations` has one tag per hidden layer.
    pub fn from_layers(
        layers: Vec<Layer>,
        activations: Vec<Activation>,
        output: OutputTransform,
    ) -> Result<Self, NumError> {
        if layers.is_empty() {
            return Err(NumError::Shape("network needs at least one layer".into()));
        }
        if activations.len() != layers.len() - 1 {
            return Err(NumError::Shape(format!(
                "{} layers need {} hidden activations, got {}",
                layers.len(),
                layers.len() - 1,
                activations.len()
            )));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NumError::Shape(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(NumError::Shape(format!(
                    "layer {k} bias has {} entries, expected {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
        }
        Ok(Self {
            layers,
            activations,
            output,
        })
    }

    /// All-zero network with the given layer widths `[in, h1, ..., out]`.
    pub fn zeros(
        dims: &[usize],
        hidden: Activation,
        output: OutputTransform,
    ) -> Result<Self, NumError> {
        if dims.len() < 2 {
            return Err(NumError::Shape("need at least input and output dims".into()));
        }
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weight: DenseMatrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Self::from_layers(layers, vec![hidden; dims.len() - 2], output)
    }

    /// Scaled-uniform initialization: weights `U(-a, a)` with
    /// `a = gain * sqrt(3 / fan_in)`, zero biases.
    pub fn random<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: OutputTransform,
        scale: InitScale,
        rng: &mut R,
    ) -> Result<Self, NumError> {
        let mut net = Self::zeros(dims, hidden, output)?;
        let n = net.layers.len();
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let gain = if k + 1 == n {
                scale.output_gain
            } else {
                scale.hidden_gain
            };
            let bound = gain * (3.0 / layer.in_dim() as f64).sqrt();
            for w in layer.weight.data_mut() {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn output_transform(&self) -> OutputTransform {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    /// Layer widths `[in, h1, ..., out]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.data());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<(), NumError> {
        if flat.len() != self.param_count() {
            return Err(NumError::Shape(format!(
                "flat parameter vector has {} entries, network has {}",
                flat.len(),
                self.param_count()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NonFinite("parameter vector".into()));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.weight.data().len();
            layer
                .weight
                .data_mut()
                .copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache, NumError> {
        if input.len() != self.input_dim() {
            return Err(NumError::Shape(format!(
                "network expects input of dim {}, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut current = input.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.bias.clone();
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += super::dot(layer.weight.row(r), &current);
            }
            let next = if k + 1 < n {
                let act = self.activations[k];
                z.iter().map(|&v| act.apply(v)).collect()
            } else {
                Vec::new()
            };
            inputs.push(std::mem::replace(&mut current, next));
            pre.push(z);
        }
        let logits = pre.last().unwrap();
        let (output, clamped) = match self.output {
            OutputTransform::Identity => (logits.clone(), vec![false; logits.len()]),
            OutputTransform::Sigmoid => logits.iter().map(|&z| clamped_sigmoid(z)).unzip(),
        };
        Ok(ForwardCache {
            inputs,
            pre,
            clamped,
            output,
        })
    }

    /// Convenience wrapper returning only the output.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, NumError> {
        Ok(self.forward(input)?.output)
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<(), NumError> {
        let ok = cache.pre.len() == self.layers.len()
            && cache
                .pre
                .iter()
                .zip(&self.layers)
                .all(|(z, l)| z.len() == l.out_dim())
            && cache
                .inputs
                .iter()
                .zip(&self.layers)
                .all(|(x, l)| x.len() == l.in_dim());
        if ok {
            Ok(())
        } else {
            Err(NumError::Shape(format!(
                "forward cache does not match network dims {:?}",
                self.dims()
            )))
        }
    }

    /// Backpropagates `output_grad` (∂L/∂output), **adding** parameter
    /// gradients into `param_grads` (flat layout) and returning ∂L/∂input.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        param_grads: &mut [f64],
    ) -> Result<Vec<f64>, NumError> {
        self.check_cache(cache)?;
        if output_grad.len() != self.output_dim() {
            return Err(NumError::Shape(format!(
                "output grad has dim {}, network outputs {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        if param_grads.len() != self.param_count() {
            return Err(NumError::Shape(format!(
                "gradient buffer has {} entries, network has {}",
                param_grads.len(),
                self.param_count()
            )));
        }
        // ∂L/∂z for the last layer.
        let mut delta: Vec<f64> = match self.output {
            OutputTransform::Identity => output_grad.to_vec(),
            OutputTransform::Sigmoid => output_grad
                .iter()
                .zip(&cache.output)
                .zip(&cache.clamped)
                .map(|((&g, &s), &c)| if c { 0.0 } else { g * s * (1.0 - s) })
                .collect(),
        };
        let mut offset = self.param_count();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let x = &cache.inputs[k];
            let nb = layer.bias.len();
            let nw = layer.weight.data().len();
            offset -= nb + nw;
            let (wgrad, bgrad) = param_grads[offset..offset + nw + nb].split_at_mut(nw);
            let in_dim = layer.in_dim();
            for (r, &d) in delta.iter().enumerate() {
                bgrad[r] += d;
                if d != 0.0 {
                    let row = &mut wgrad[r * in_dim..(r + 1) * in_dim];
                    for (w, &xi) in row.iter_mut().zip(x) {
                        *w += d * xi;
                    }
                }
            }
            let mut dx = vec![0.0; in_dim];
            layer.weight.matvec_transposed_into(&delta, &mut dx);
            if k > 0 {
                let act = self.activations[k - 1];
                for (g, &z) in dx.iter_mut().zip(&cache.pre[k - 1]) {
                    *g *= act.derivative(z);
                }
            }
            delta = dx;
        }
        Ok(delta)
    }

    /// Returns `(param_grads, input_grad)` for the given output gradient.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), NumError> {
        let mut grads = vec![0.0; self.param_count()];
        let input_grad = self.backward_accumulate(cache, output_grad, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Forward-mode directional derivative of the output with respect to the
    /// parameters along `direction` (flat layout), at the cached point.
    pub fn jvp(&self, cache: &ForwardCache, direction: &[f64]) -> Result<Vec<f64>, NumError> {
        self.check_cache(cache)?;
        if direction.len() != self.param_count() {
            return Err(NumError::Shape(format!(
                "direction has {} entries, network has {}",
                direction.len(),
                self.param_count()
            )));
        }
        let n = self.layers.len();
        let mut offset = 0;
        // Tangent of the current layer input.
        let mut dx = vec![0.0; self.input_dim()];
        for (k, layer) in self.layers.iter().enumerate() {
            let x = &cache.inputs[k];
            let in_dim = layer.in_dim();
            let nw = layer.weight.data().len();
            let dw = &direction[offset..offset + nw];
            let db = &direction[offset + nw..offset + nw + layer.bias.len()];
            offset += nw + layer.bias.len();
            let mut dz = db.to_vec();
            for (r, dzr) in dz.iter_mut().enumerate() {
                *dzr += super::dot(&dw[r * in_dim..(r + 1) * in_dim], x)
                    + super::dot(layer.weight.row(r), &dx);
            }
            if k + 1 < n {
                let act = self.activations[k];
                for (t, &z) in dz.iter_mut().zip(&cache.pre[k]) {
                    *t *= act.derivative(z);
                }
            } else if self.output == OutputTransform::Sigmoid {
                for ((t, &s), &c) in dz.iter_mut().zip(&cache.output).zip(&cache.clamped) {
                    *t = if c { 0.0 } else { *t * s * (1.0 - s) };
                }
            }
            dx = dz;
        }
        Ok(dx)
    }
}
