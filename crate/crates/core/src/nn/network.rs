//! Sequential network of conv / pool / flatten / dense layers ending in a softmax.

use super::gradcheck::Differentiable;
use super::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_pre_activation, maxpool2_backward,
    maxpool2_forward, Activation, LayerParams,
};
use super::loss::{cross_entropy_loss, one_hot_index, softmax};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d { params: LayerParams, activation: Activation },
    MaxPool2,
    Flatten,
    Dense { params: LayerParams, activation: Activation },
}

impl Layer {
    fn params(&self) -> Option<&LayerParams> {
        match self {
            Layer::Conv2d { params, .. } | Layer::Dense { params, .. } => Some(params),
            _ => None,
        }
    }

    fn params_mut(&mut self) -> Option<&mut LayerParams> {
        match self {
            Layer::Conv2d { params, .. } | Layer::Dense { params, .. } => Some(params),
            _ => None,
        }
    }

    fn forward(&self, input: &Tensor) -> Result<(Tensor, Option<Vec<usize>>)> {
        match self {
            Layer::Conv2d { params, activation } => {
                let mut out = conv2d_forward(input, params)?;
                activation.apply(out.data_mut());
                Ok((out, None))
            }
            Layer::MaxPool2 => {
                let (out, argmax) = maxpool2_forward(input)?;
                Ok((out, Some(argmax)))
            }
            Layer::Flatten => Ok((input.clone().reshape(&[input.len()])?, None)),
            Layer::Dense { params, activation } => {
                if input.shape().len() != 1 {
                    return Err(Error::ShapeMismatch(format!(
                        "dense layer needs a flat input, got {:?}",
                        input.shape()
                    )));
                }
                let mut out = dense_pre_activation(input, params)?;
                activation.apply(out.data_mut());
                Ok((out, None))
            }
        }
    }
}

/// Activations of one sample: `acts[i]` is the input of layer `i`, the last
/// entry holds the logits.
#[derive(Debug, Clone)]
struct Trace {
    acts: Vec<Tensor>,
    argmax: Vec<Option<Vec<usize>>>,
}

#[derive(Debug, Clone)]
struct BatchCache {
    traces: Vec<Trace>,
    probs: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    cache: Option<BatchCache>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }
}

impl Network {
    /// Validates the layer chain by propagating a zero input through it.
    pub fn new(input_shape: &[usize], layers: Vec<Layer>) -> Result<Self> {
        let net = Self { input_shape: input_shape.to_vec(), layers, cache: None };
        let out = net.logits(&Tensor::zeros(input_shape))?;
        if out.shape().len() != 1 {
            return Err(Error::ShapeMismatch(format!("network must end in a flat layer, got {:?}", out.shape())));
        }
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Weight and bias of every parametrized layer, in layer order.
    pub fn parameters(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .flat_map(|p| [&p.weight, &p.bias])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .filter_map(Layer::params_mut)
            .flat_map(|p| [&mut p.weight, &mut p.bias])
            .collect()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "network expects input {:?}, got {:?}",
                self.input_shape,
                input.shape()
            )));
        }
        Ok(())
    }

    fn trace(&self, input: &Tensor) -> Result<Trace> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut argmax = Vec::with_capacity(self.layers.len());
        acts.push(input.clone());
        for layer in &self.layers {
            let (out, am) = layer.forward(acts.last().expect("non-empty"))?;
            acts.push(out);
            argmax.push(am);
        }
        Ok(Trace { acts, argmax })
    }

    pub fn logits(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?.0;
        }
        Ok(x)
    }

    pub fn predict_proba(&self, input: &Tensor) -> Result<Tensor> {
        Ok(softmax(&self.logits(input)?))
    }

    fn zero_grads(&self) -> Vec<LayerParams> {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(|p| LayerParams { weight: Tensor::zeros(p.weight.shape()), bias: Tensor::zeros(p.bias.shape()) })
            .collect()
    }

    /// Backpropagates `grad_logits` through one trace, accumulating into `grads`.
    fn backprop(&self, trace: &Trace, grad_logits: Tensor, grads: &mut [LayerParams]) -> Result<()> {
        let mut g = grad_logits;
        let mut slot = grads.len();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.acts[i];
            let output = &trace.acts[i + 1];
            let first = i == 0;
            g = match layer {
                Layer::Conv2d { params, activation } | Layer::Dense { params, activation } => {
                    slot -= 1;
                    // ReLU output is zero exactly where its input was non-positive
                    activation.backprop(output.data(), g.data_mut());
                    let gin = if matches!(layer, Layer::Conv2d { .. }) {
                        conv2d_backward(input, params, &g, &mut grads[slot], !first)?
                    } else {
                        dense_backward(input, params, &g, &mut grads[slot], !first)?
                    };
                    match gin {
                        Some(t) => t,
                        None => break,
                    }
                }
                Layer::MaxPool2 => {
                    let argmax = trace.argmax[i].as_ref().expect("pool layers record argmax");
                    maxpool2_backward(&g, argmax, input.shape())?
                }
                Layer::Flatten => g.reshape(input.shape())?,
            };
        }
        Ok(())
    }

    fn flatten_grads(grads: Vec<LayerParams>) -> Vec<Tensor> {
        grads.into_iter().flat_map(|p| [p.weight, p.bias]).collect()
    }

    fn check_batch(inputs: usize, targets: usize, weights: Option<&[f64]>) -> Result<()> {
        if inputs == 0 || inputs != targets || weights.is_some_and(|w| w.len() != inputs) {
            return Err(Error::ShapeMismatch(format!("batch of {} inputs with {} targets", inputs, targets)));
        }
        Ok(())
    }

    /// Forward pass over a batch, caching activations for [`Network::backward`].
    /// Returns the class probabilities.
    pub fn forward_batch(&mut self, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
        let traces = inputs.iter().map(|x| self.trace(x)).collect::<Result<Vec<_>>>()?;
        let probs: Vec<Tensor> = traces.iter().map(|t| softmax(t.acts.last().expect("logits"))).collect();
        self.cache = Some(BatchCache { traces, probs: probs.clone() });
        Ok(probs)
    }

    /// Mean (optionally sample-weighted) cross-entropy of the cached batch and
    /// its gradient with respect to every parameter. Consumes the cache.
    pub fn backward(&mut self, targets: &[Tensor], weights: Option<&[f64]>) -> Result<(f64, Vec<Tensor>)> {
        let cache = self.cache.take().ok_or(Error::NoForwardCache)?;
        Self::check_batch(cache.traces.len(), targets.len(), weights)?;
        let n = targets.len() as f64;
        let mut grads = self.zero_grads();
        let mut loss = 0.0;
        for (i, (trace, probs)) in cache.traces.iter().zip(&cache.probs).enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            let (l, g) = sample_loss_grad(probs, &targets[i], w / n)?;
            loss += w * l;
            self.backprop(trace, g, &mut grads)?;
        }
        Ok((loss / n, Self::flatten_grads(grads)))
    }

    /// Same result as `forward_batch` + `backward`, without holding every trace.
    pub fn loss_and_gradients(
        &self,
        inputs: &[Tensor],
        targets: &[Tensor],
        weights: Option<&[f64]>,
    ) -> Result<(f64, Vec<Tensor>)> {
        Self::check_batch(inputs.len(), targets.len(), weights)?;
        let n = inputs.len() as f64;
        let mut grads = self.zero_grads();
        let mut loss = 0.0;
        for (i, (x, t)) in inputs.iter().zip(targets).enumerate() {
            let trace = self.trace(x)?;
            let probs = softmax(trace.acts.last().expect("logits"));
            let w = weights.map_or(1.0, |w| w[i]);
            let (l, g) = sample_loss_grad(&probs, t, w / n)?;
            loss += w * l;
            self.backprop(&trace, g, &mut grads)?;
        }
        Ok((loss / n, Self::flatten_grads(grads)))
    }

    pub fn loss(&self, inputs: &[Tensor], targets: &[Tensor], weights: Option<&[f64]>) -> Result<f64> {
        Self::check_batch(inputs.len(), targets.len(), weights)?;
        let mut loss = 0.0;
        for (i, (x, t)) in inputs.iter().zip(targets).enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            loss += w * cross_entropy_loss(&self.predict_proba(x)?, t)?;
        }
        Ok(loss / inputs.len() as f64)
    }
}

/// Gradient of `-log softmax(z)[y]` with respect to the logits `z`.
pub fn logit_gradient(probs: &Tensor, target: &Tensor) -> Result<Tensor> {
    probs.check_same_shape(target)?;
    one_hot_index(target)?;
    let g = probs.data().iter().zip(target.data()).map(|(p, y)| p - y).collect();
    Tensor::from_vec(probs.shape(), g)
}

fn sample_loss_grad(probs: &Tensor, target: &Tensor, scale: f64) -> Result<(f64, Tensor)> {
    let loss = cross_entropy_loss(probs, target)?;
    let mut g = logit_gradient(probs, target)?;
    g.scale(scale);
    Ok((loss, g))
}

/// Mean cross-entropy of a network over a fixed batch, for gradient checking.
pub struct NetworkObjective {
    pub network: Network,
    pub inputs: Vec<Tensor>,
    pub targets: Vec<Tensor>,
}

impl Differentiable for NetworkObjective {
    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.network.parameters_mut()
    }

    fn loss(&mut self) -> Result<f64> {
        self.network.loss(&self.inputs, &self.targets, None)
    }

    fn gradients(&mut self) -> Result<Vec<Tensor>> {
        self.network.forward_batch(&self.inputs)?;
        Ok(self.network.backward(&self.targets, None)?.1)
    }
}
