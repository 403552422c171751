//! Neural layer primitives: affine, batch normalization, activations,
//! dropout. Each training-mode forward returns whatever cache its exact
//! analytic backward needs; gradients are hand-derived, not traced.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Normalized-feature epsilon. The source material is silent; this is the
/// conventional constant and is part of the file-format contract.
pub const BN_EPSILON: f64 = 1e-5;
/// Exponential-moving-average momentum for the running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

/// Inputs below this saturate, keeping sigmoid outputs strictly positive
/// (exp underflows to 0 near -745, which would round the output to exactly 0).
const SIGMOID_CLAMP: f64 = -700.0;

/// Numerically stable sigmoid: never exponentiates a positive argument, and
/// saturates deep-negative inputs so the result stays in (0, 1) exclusive.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.max(SIGMOID_CLAMP).exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    if slope < 0.0 {
        return Err(Error::InvalidArg(format!("leaky_relu slope {slope} < 0")));
    }
    Ok(x.map(|v| if v > 0.0 { v } else { slope * v }))
}

/// Gradient of relu given its input; defined as 0 at exactly 0.
pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    grad_out.zip_map(input, |g, x| if x > 0.0 { g } else { 0.0 })
}

pub fn leaky_relu_backward(grad_out: &Tensor, input: &Tensor, slope: f64) -> Result<Tensor> {
    grad_out.zip_map(input, |g, x| if x > 0.0 { g } else { slope * g })
}

/// Fully connected layer: `y = x W + b` with `W` of shape (in x out).
#[derive(Debug, Clone)]
pub struct AffineLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl AffineLayer {
    /// Xavier-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut RngStream) -> AffineLayer {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.uniform(-limit, limit))
            .collect();
        AffineLayer {
            weight: Tensor::from_vec(&[fan_in, fan_out], data).expect("sized above"),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.dim(0)
    }

    pub fn fan_out(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.matmul(&self.weight)?.add_row_broadcast(&self.bias)?;
        y.ensure_finite("affine forward")?;
        Ok(y)
    }

    /// Returns (grad_x, grad_weight, grad_bias) for `y = x W + b`.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let grad_w = x.transpose2()?.matmul(grad_out)?;
        let grad_b = grad_out.col_sums()?;
        let grad_x = grad_out.matmul(&self.weight.transpose2()?)?;
        Ok((grad_x, grad_w, grad_b))
    }
}

/// Learnable scale/shift plus running statistics for one normalized axis.
#[derive(Debug, Clone)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNormState {
    pub fn new(features: usize) -> BatchNormState {
        BatchNormState {
            gamma: Tensor::filled(&[features], 1.0),
            beta: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], 1.0),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.dim(0)
    }
}

/// Cache from a train-mode batch-norm forward, sufficient for the exact
/// backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Train-mode forward: normalize by batch mean/variance (biased, over the
/// row axis), update running statistics by EMA, return the backward cache.
pub fn batchnorm_forward_train(
    x: &Tensor,
    state: &mut BatchNormState,
) -> Result<(Tensor, BatchNormCache)> {
    let f = state.features();
    if x.rank() != 2 || x.dim(1) != f {
        return Err(Error::Shape(format!(
            "batchnorm over {f} features got input {:?}",
            x.shape()
        )));
    }
    let n = x.dim(0);
    if n < 2 {
        return Err(Error::InvalidArg(format!(
            "batchnorm train mode needs a batch of >= 2 rows, got {n}"
        )));
    }

    let mut mean = vec![0.0; f];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; f];
    for i in 0..n {
        for j in 0..f {
            let d = x.at2(i, j) - mean[j];
            var[j] += d * d;
        }
    }
    for v in &mut var {
        *v /= n as f64;
    }

    let mut inv_std = vec![0.0; f];
    for j in 0..f {
        let denom = var[j] + state.epsilon;
        if denom <= 0.0 {
            return Err(Error::Numerical(format!(
                "batchnorm variance {} not positive after epsilon guard",
                denom
            )));
        }
        inv_std[j] = 1.0 / denom.sqrt();
    }

    let mut x_hat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    for i in 0..n {
        for j in 0..f {
            let xh = (x.at2(i, j) - mean[j]) * inv_std[j];
            x_hat.set2(i, j, xh);
            y.set2(i, j, state.gamma.data()[j] * xh + state.beta.data()[j]);
        }
    }
    y.ensure_finite("batchnorm forward")?;

    let m = state.momentum;
    for j in 0..f {
        let rm = state.running_mean.data()[j];
        let rv = state.running_var.data()[j];
        state.running_mean.data_mut()[j] = (1.0 - m) * rm + m * mean[j];
        state.running_var.data_mut()[j] = (1.0 - m) * rv + m * var[j];
    }

    Ok((y, BatchNormCache { x_hat, inv_std }))
}

/// Eval-mode forward: normalize by the running statistics. No cache.
pub fn batchnorm_forward_eval(x: &Tensor, state: &BatchNormState) -> Result<Tensor> {
    let f = state.features();
    if x.rank() != 2 || x.dim(1) != f {
        return Err(Error::Shape(format!(
            "batchnorm over {f} features got input {:?}",
            x.shape()
        )));
    }
    let mut y = Tensor::zeros(x.shape());
    for i in 0..x.dim(0) {
        for j in 0..f {
            let inv = 1.0 / (state.running_var.data()[j] + state.epsilon).sqrt();
            let xh = (x.at2(i, j) - state.running_mean.data()[j]) * inv;
            y.set2(i, j, state.gamma.data()[j] * xh + state.beta.data()[j]);
        }
    }
    y.ensure_finite("batchnorm eval forward")?;
    Ok(y)
}

/// Exact gradients of the train-mode forward:
/// returns (grad_x, grad_gamma, grad_beta).
pub fn batchnorm_backward(
    grad_out: &Tensor,
    cache: &BatchNormCache,
    state: &BatchNormState,
) -> Result<(Tensor, Tensor, Tensor)> {
    if grad_out.shape() != cache.x_hat.shape() {
        return Err(Error::Shape(format!(
            "batchnorm backward: grad {:?} vs cache {:?}",
            grad_out.shape(),
            cache.x_hat.shape()
        )));
    }
    let (n, f) = (grad_out.dim(0), grad_out.dim(1));

    let mut grad_gamma = vec![0.0; f];
    let mut grad_beta = vec![0.0; f];
    // Per-feature sums of dxhat and dxhat * xhat, in ascending row order.
    let mut sum_dxhat = vec![0.0; f];
    let mut sum_dxhat_xhat = vec![0.0; f];
    for i in 0..n {
        for j in 0..f {
            let g = grad_out.at2(i, j);
            let xh = cache.x_hat.at2(i, j);
            grad_gamma[j] += g * xh;
            grad_beta[j] += g;
            let dxh = g * state.gamma.data()[j];
            sum_dxhat[j] += dxh;
            sum_dxhat_xhat[j] += dxh * xh;
        }
    }

    let mut grad_x = Tensor::zeros(grad_out.shape());
    let nf = n as f64;
    for i in 0..n {
        for j in 0..f {
            let dxh = grad_out.at2(i, j) * state.gamma.data()[j];
            let xh = cache.x_hat.at2(i, j);
            let dx = (cache.inv_std[j] / nf)
                * (nf * dxh - sum_dxhat[j] - xh * sum_dxhat_xhat[j]);
            grad_x.set2(i, j, dx);
        }
    }

    Ok((
        grad_x,
        Tensor::from_vec(&[f], grad_gamma)?,
        Tensor::from_vec(&[f], grad_beta)?,
    ))
}

/// Inverted dropout. In train mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); eval mode is the identity.
/// The returned mask already contains the survivor scale, so the backward
/// pass is an elementwise product with it. One uniform draw per element, in
/// row-major order.
pub fn dropout(
    x: &Tensor,
    rate: f64,
    rng: &mut RngStream,
    mode: Mode,
) -> Result<(Tensor, Tensor)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArg(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    if mode == Mode::Eval {
        return Ok((x.clone(), Tensor::filled(x.shape(), 1.0)));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mut mask = Tensor::zeros(x.shape());
    for m in mask.data_mut() {
        *m = if rng.next_f64() >= rate { keep_scale } else { 0.0 };
    }
    Ok((x.mul_elem(&mask)?, mask))
}
