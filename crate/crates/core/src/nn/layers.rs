//! Convolution, max-pooling and dense layers with their analytic backward passes.
//!
//! Feature maps are laid out `H x W x C` (channel fastest). Convolution kernels
//! are `k x k x C_in x C_out`, dense weights are `in x out`.

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn apply(self, values: &mut [f64]) {
        if self == Activation::Relu {
            values.iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v = 0.0
                }
            });
        }
    }

    /// Multiplies `grad` by the activation derivative evaluated at `pre`.
    pub fn backprop(self, pre: &[f64], grad: &mut [f64]) {
        if self == Activation::Relu {
            for (g, &p) in grad.iter_mut().zip(pre) {
                if p <= 0.0 {
                    *g = 0.0;
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "identity" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Weights and biases of a single layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LayerParams {
    /// Glorot-uniform weights in `[-s, s]`, `s = sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        weight_shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut weight = Tensor::zeros(weight_shape);
        for w in weight.data_mut() {
            *w = rng.random_range(-limit..=limit);
        }
        let bias = Tensor::zeros(&[*weight_shape.last().unwrap_or(&0)]);
        Self { weight, bias }
    }

    /// Conv kernel `k x k x in x out`.
    pub fn conv<R: Rng + ?Sized>(k: usize, c_in: usize, c_out: usize, rng: &mut R) -> Self {
        Self::glorot(&[k, k, c_in, c_out], k * k * c_in, k * k * c_out, rng)
    }

    pub fn dense<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        Self::glorot(&[n_in, n_out], n_in, n_out, rng)
    }
}

fn conv_geometry(input: &Tensor, params: &LayerParams) -> Result<(usize, usize, usize, usize, usize)> {
    let ishape = input.shape();
    let wshape = params.weight.shape();
    if ishape.len() != 3 || wshape.len() != 4 {
        return Err(Error::ShapeMismatch(format!(
            "conv expects HxWxC input and kxkxCinxCout kernel, got {:?} and {:?}",
            ishape, wshape
        )));
    }
    let (h, w, c_in) = (ishape[0], ishape[1], ishape[2]);
    let (k, k2, wc_in, c_out) = (wshape[0], wshape[1], wshape[2], wshape[3]);
    if k != k2 || k % 2 == 0 {
        return Err(Error::ShapeMismatch(format!("kernel must be square and odd-sided, got {}x{}", k, k2)));
    }
    if wc_in != c_in {
        return Err(Error::ShapeMismatch(format!("input has {} channels, kernel expects {}", c_in, wc_in)));
    }
    if params.bias.shape() != [c_out] {
        return Err(Error::ShapeMismatch(format!("bias {:?} for {} output channels", params.bias.shape(), c_out)));
    }
    Ok((h, w, c_in, k, c_out))
}

/// SAME-padded stride-1 cross-correlation plus per-channel bias (no activation).
pub fn conv2d_forward(input: &Tensor, params: &LayerParams) -> Result<Tensor> {
    let (h, w, c_in, k, c_out) = conv_geometry(input, params)?;
    let pad = (k / 2) as isize;
    let x = input.data();
    let kernel = params.weight.data();
    let bias = params.bias.data();
    let mut out = vec![0.0; h * w * c_out];
    for y in 0..h {
        for xo in 0..w {
            let o = &mut out[(y * w + xo) * c_out..][..c_out];
            o.copy_from_slice(bias);
            for ky in 0..k {
                let iy = y as isize + ky as isize - pad;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = xo as isize + kx as isize - pad;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let pixel = &x[(iy as usize * w + ix as usize) * c_in..][..c_in];
                    let kbase = (ky * k + kx) * c_in * c_out;
                    for (ci, &v) in pixel.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let row = &kernel[kbase + ci * c_out..][..c_out];
                        for (acc, &wv) in o.iter_mut().zip(row) {
                            *acc += v * wv;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[h, w, c_out], out)
}

/// Backward pass of [`conv2d_forward`]. Accumulates into `grads` and returns the
/// input gradient when `want_input_grad` is set.
pub fn conv2d_backward(
    input: &Tensor,
    params: &LayerParams,
    grad_out: &Tensor,
    grads: &mut LayerParams,
    want_input_grad: bool,
) -> Result<Option<Tensor>> {
    let (h, w, c_in, k, c_out) = conv_geometry(input, params)?;
    if grad_out.shape() != [h, w, c_out] {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient {:?}, expected {:?}",
            grad_out.shape(),
            [h, w, c_out]
        )));
    }
    let pad = (k / 2) as isize;
    let x = input.data();
    let g = grad_out.data();
    let kernel = params.weight.data();
    let mut grad_in = if want_input_grad { vec![0.0; h * w * c_in] } else { Vec::new() };
    {
        let gb = grads.bias.data_mut();
        for pos in 0..h * w {
            for (b, &gv) in gb.iter_mut().zip(&g[pos * c_out..][..c_out]) {
                *b += gv;
            }
        }
    }
    let gw = grads.weight.data_mut();
    for y in 0..h {
        for xo in 0..w {
            let go = &g[(y * w + xo) * c_out..][..c_out];
            for ky in 0..k {
                let iy = y as isize + ky as isize - pad;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = xo as isize + kx as isize - pad;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let in_base = (iy as usize * w + ix as usize) * c_in;
                    let kbase = (ky * k + kx) * c_in * c_out;
                    for ci in 0..c_in {
                        let v = x[in_base + ci];
                        let off = kbase + ci * c_out;
                        if v != 0.0 {
                            for (gwv, &gv) in gw[off..off + c_out].iter_mut().zip(go) {
                                *gwv += v * gv;
                            }
                        }
                        if want_input_grad {
                            let dot: f64 = kernel[off..off + c_out].iter().zip(go).map(|(a, b)| a * b).sum();
                            grad_in[in_base + ci] += dot;
                        }
                    }
                }
            }
        }
    }
    if want_input_grad {
        Ok(Some(Tensor::from_vec(&[h, w, c_in], grad_in)?))
    } else {
        Ok(None)
    }
}

/// 2x2 stride-2 max-pooling. Returns the pooled tensor and, per output value,
/// the flat input index of the maximum (first in row-major order on ties).
pub fn maxpool2_forward(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let shape = input.shape();
    if shape.len() != 3 {
        return Err(Error::ShapeMismatch(format!("max-pool expects HxWxC, got {:?}", shape)));
    }
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddDimension { height: h, width: w });
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = vec![0.0; oh * ow * c];
    let mut argmax = vec![0usize; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best_idx = ((2 * oy) * w + 2 * ox) * c + ch;
                let mut best = x[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                    if x[idx] > best {
                        best = x[idx];
                        best_idx = idx;
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok((Tensor::from_vec(&[oh, ow, c], out)?, argmax))
}

/// Routes each upstream gradient to the input position that won the max.
pub fn maxpool2_backward(grad_out: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::ShapeMismatch("max-pool gradient/argmax length differ".into()));
    }
    let mut grad_in = Tensor::zeros(input_shape);
    let gi = grad_in.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        gi[idx] += g;
    }
    Ok(grad_in)
}

fn dense_geometry(input: &Tensor, params: &LayerParams) -> Result<(usize, usize)> {
    let wshape = params.weight.shape();
    if wshape.len() != 2 || input.len() != wshape[0] || params.bias.shape() != [wshape[1]] {
        return Err(Error::ShapeMismatch(format!(
            "dense layer {:?} (bias {:?}) cannot take input of length {}",
            wshape,
            params.bias.shape(),
            input.len()
        )));
    }
    Ok((wshape[0], wshape[1]))
}

/// `W^T x + b` followed by `activation`.
pub fn dense_forward(input: &Tensor, params: &LayerParams, activation: Activation) -> Result<Tensor> {
    let mut out = dense_pre_activation(input, params)?;
    activation.apply(out.data_mut());
    Ok(out)
}

pub(crate) fn dense_pre_activation(input: &Tensor, params: &LayerParams) -> Result<Tensor> {
    let (n_in, n_out) = dense_geometry(input, params)?;
    let w = params.weight.data();
    let mut out = params.bias.data().to_vec();
    for (i, &xi) in input.data().iter().enumerate().take(n_in) {
        if xi == 0.0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
            *o += xi * wv;
        }
    }
    Tensor::from_vec(&[n_out], out)
}

/// Backward pass of the affine part of a dense layer; `grad_out` is taken with
/// respect to the pre-activation.
pub fn dense_backward(
    input: &Tensor,
    params: &LayerParams,
    grad_out: &Tensor,
    grads: &mut LayerParams,
    want_input_grad: bool,
) -> Result<Option<Tensor>> {
    let (n_in, n_out) = dense_geometry(input, params)?;
    if grad_out.len() != n_out {
        return Err(Error::ShapeMismatch(format!("upstream gradient length {} != {}", grad_out.len(), n_out)));
    }
    let g = grad_out.data();
    for (b, &gv) in grads.bias.data_mut().iter_mut().zip(g) {
        *b += gv;
    }
    let gw = grads.weight.data_mut();
    for (i, &xi) in input.data().iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (gwv, &gv) in gw[i * n_out..(i + 1) * n_out].iter_mut().zip(g) {
            *gwv += xi * gv;
        }
    }
    if !want_input_grad {
        return Ok(None);
    }
    let w = params.weight.data();
    let grad_in: Vec<f64> = (0..n_in)
        .map(|i| w[i * n_out..(i + 1) * n_out].iter().zip(g).map(|(a, b)| a * b).sum())
        .collect();
    Ok(Some(Tensor::from_vec(input.shape(), grad_in)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(weight: Tensor, bias: Tensor) -> LayerParams {
        LayerParams { weight, bias }
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let input = Tensor::from_vec(&[3, 4, 1], (0..12).map(|v| v as f64 * 0.5 - 2.0).collect()).unwrap();
        let p = params(Tensor::filled(&[1, 1, 1, 1], 1.0), Tensor::zeros(&[1]));
        assert_eq!(conv2d_forward(&input, &p).unwrap(), input);
    }

    #[test]
    fn zero_kernel_gives_zero_output() {
        let input = Tensor::filled(&[5, 5, 2], 3.0);
        let p = params(Tensor::zeros(&[3, 3, 2, 4]), Tensor::zeros(&[4]));
        let out = conv2d_forward(&input, &p).unwrap();
        assert_eq!(out.shape(), &[5, 5, 4]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_rejects_even_kernel_and_channel_mismatch() {
        let input = Tensor::zeros(&[4, 4, 1]);
        let even = params(Tensor::zeros(&[2, 2, 1, 1]), Tensor::zeros(&[1]));
        assert!(matches!(conv2d_forward(&input, &even), Err(Error::ShapeMismatch(_))));
        let wrong_c = params(Tensor::zeros(&[3, 3, 2, 1]), Tensor::zeros(&[1]));
        assert!(matches!(conv2d_forward(&input, &wrong_c), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn maxpool_picks_block_maxima() {
        let data: Vec<f64> = (1..=16).map(|v| v as f64).collect();
        let input = Tensor::from_vec(&[4, 4, 1], data).unwrap();
        let (out, _) = maxpool2_forward(&input).unwrap();
        assert_eq!(out.data(), &[6.0, 8.0, 14.0, 16.0]);
    }

    #[test]
    fn maxpool_constant_and_shape() {
        let (out, argmax) = maxpool2_forward(&Tensor::filled(&[32, 32, 3], 0.7)).unwrap();
        assert_eq!(out.shape(), &[16, 16, 3]);
        assert!(out.data().iter().all(|&v| v == 0.7));
        // ties resolve to the top-left element of each block
        assert_eq!(argmax[0], 0);
        assert_eq!(argmax[3], 2 * 3);
    }

    #[test]
    fn maxpool_odd_dimension_rejected() {
        assert!(matches!(
            maxpool2_forward(&Tensor::zeros(&[5, 4, 1])),
            Err(Error::OddDimension { height: 5, width: 4 })
        ));
    }

    #[test]
    fn maxpool_backward_routes_to_one_position() {
        let input = Tensor::from_vec(&[2, 2, 1], vec![0.1, 0.9, 0.3, 0.2]).unwrap();
        let (_, argmax) = maxpool2_forward(&input).unwrap();
        let g = maxpool2_backward(&Tensor::filled(&[1, 1, 1], 2.5), &argmax, &[2, 2, 1]).unwrap();
        assert_eq!(g.data(), &[0.0, 2.5, 0.0, 0.0]);
    }

    #[test]
    fn dense_identity_and_bias_only() {
        let x = Tensor::from_vec(&[3], vec![1.0, -2.0, 3.5]).unwrap();
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let id = params(eye, Tensor::zeros(&[3]));
        assert_eq!(dense_forward(&x, &id, Activation::Identity).unwrap(), x);

        let b = Tensor::from_vec(&[2], vec![0.25, -4.0]).unwrap();
        let bias_only = params(Tensor::zeros(&[3, 2]), b.clone());
        assert_eq!(dense_forward(&x, &bias_only, Activation::Identity).unwrap(), b);
        let relu = dense_forward(&x, &bias_only, Activation::Relu).unwrap();
        assert_eq!(relu.data(), &[0.25, 0.0]);
    }

    #[test]
    fn dense_shape_mismatch() {
        let p = params(Tensor::zeros(&[4, 2]), Tensor::zeros(&[2]));
        assert!(matches!(
            dense_forward(&Tensor::zeros(&[3]), &p, Activation::Identity),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
