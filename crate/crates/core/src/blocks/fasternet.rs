//! FasterNet block: `x + PW2(act(PW1(pconv(x))))` with 1x1 pointwise convs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::pconv::{pconv_backward, pconv_forward, PConvSpec};
use crate::error::{config, Result};
use crate::ops::{activation, activation_backward, conv2d_backward, conv2d_forward, Activation, ConvSpec};
use crate::params::Parameters;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FasterNetBlockSpec {
    pub channels: usize,
    pub pconv: PConvSpec,
    pub expansion: f64,
    pub activation: Activation,
}

impl FasterNetBlockSpec {
    pub fn new(channels: usize, pconv: PConvSpec) -> Self {
        FasterNetBlockSpec {
            channels,
            pconv,
            expansion: 2.0,
            activation: Activation::Mish,
        }
    }

    pub fn hidden(&self) -> usize {
        (self.expansion * self.channels as f64).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.pconv.validate()?;
        if self.pconv.channels != self.channels {
            return config(format!(
                "fasternet block has {} channels but its pconv has {}",
                self.channels, self.pconv.channels
            ));
        }
        if !(self.expansion > 0.0) || self.hidden() == 0 {
            return config(format!("fasternet expansion {} must be > 0", self.expansion));
        }
        Ok(())
    }

    pub fn pw1(&self) -> ConvSpec {
        ConvSpec::same(self.channels, self.hidden(), 1)
    }

    pub fn pw2(&self) -> ConvSpec {
        ConvSpec::same(self.hidden(), self.channels, 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FasterNetParams {
    pub pconv: Tensor,
    pub pw1_weight: Tensor,
    pub pw1_bias: Vec<f64>,
    pub pw2_weight: Tensor,
    pub pw2_bias: Vec<f64>,
}

impl FasterNetParams {
    pub fn zeros(spec: &FasterNetBlockSpec) -> Self {
        FasterNetParams {
            pconv: Tensor::zeros(spec.pconv.weight_shape()),
            pw1_weight: Tensor::zeros(spec.pw1().weight_shape()),
            pw1_bias: vec![0.0; spec.hidden()],
            pw2_weight: Tensor::zeros(spec.pw2().weight_shape()),
            pw2_bias: vec![0.0; spec.channels],
        }
    }

    /// He-uniform weights, zero biases. `residual_scale` damps the last
    /// projection so stacked blocks start close to identity.
    pub fn init<R: Rng>(spec: &FasterNetBlockSpec, rng: &mut R, residual_scale: f64) -> Self {
        let mut p = Self::zeros(spec);
        he_uniform(&mut p.pconv, rng, 1.0);
        he_uniform(&mut p.pw1_weight, rng, 1.0);
        he_uniform(&mut p.pw2_weight, rng, residual_scale);
        p
    }
}

/// Uniform in `±scale * sqrt(6 / fan_in)` where fan_in = in_channels * k * k.
pub fn he_uniform<R: Rng>(w: &mut Tensor, rng: &mut R, scale: f64) {
    let [_, ci, kh, kw] = w.shape();
    let bound = scale * (6.0 / (ci * kh * kw).max(1) as f64).sqrt();
    for x in w.data_mut() {
        *x = rng.random_range(-bound..bound);
    }
}

impl Parameters for FasterNetParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("pconv.weight", self.pconv.data());
        f("pw1.weight", self.pw1_weight.data());
        f("pw1.bias", &self.pw1_bias);
        f("pw2.weight", self.pw2_weight.data());
        f("pw2.bias", &self.pw2_bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("pconv.weight", self.pconv.data_mut());
        f("pw1.weight", self.pw1_weight.data_mut());
        f("pw1.bias", &mut self.pw1_bias);
        f("pw2.weight", self.pw2_weight.data_mut());
        f("pw2.bias", &mut self.pw2_bias);
    }
}

/// Intermediates kept for the backward pass.
#[derive(Clone, Debug)]
pub struct FasterNetCache {
    partial: Tensor,
    hidden_pre: Tensor,
    hidden_act: Tensor,
}

pub fn fasternet_block_forward_cached(
    input: &Tensor,
    params: &FasterNetParams,
    spec: &FasterNetBlockSpec,
) -> Result<(Tensor, FasterNetCache)> {
    spec.validate()?;
    let partial = pconv_forward(input, &params.pconv, &spec.pconv)?;
    let hidden_pre = conv2d_forward(&partial, &params.pw1_weight, &params.pw1_bias, &spec.pw1())?;
    let hidden_act = activation(&hidden_pre, spec.activation)?;
    let proj = conv2d_forward(&hidden_act, &params.pw2_weight, &params.pw2_bias, &spec.pw2())?;
    let out = input.add(&proj)?.checked_output("fasternet_block_forward")?;
    Ok((
        out,
        FasterNetCache {
            partial,
            hidden_pre,
            hidden_act,
        },
    ))
}

pub fn fasternet_block_forward(input: &Tensor, params: &FasterNetParams, spec: &FasterNetBlockSpec) -> Result<Tensor> {
    fasternet_block_forward_cached(input, params, spec).map(|(out, _)| out)
}

pub fn fasternet_block_backward(
    input: &Tensor,
    params: &FasterNetParams,
    spec: &FasterNetBlockSpec,
    cache: &FasterNetCache,
    upstream: &Tensor,
) -> Result<(Tensor, FasterNetParams)> {
    upstream.expect_shape(input.shape(), "fasternet upstream")?;
    let g2 = conv2d_backward(&cache.hidden_act, &params.pw2_weight, &spec.pw2(), upstream)?;
    let g_pre = activation_backward(&cache.hidden_pre, spec.activation, &g2.input)?;
    let g1 = conv2d_backward(&cache.partial, &params.pw1_weight, &spec.pw1(), &g_pre)?;
    let (g_x, g_pconv) = pconv_backward(input, &params.pconv, &spec.pconv, &g1.input)?;
    let g_in = g_x.add(upstream)?;
    Ok((
        g_in,
        FasterNetParams {
            pconv: g_pconv,
            pw1_weight: g1.weights,
            pw1_bias: g1.bias,
            pw2_weight: g2.weights,
            pw2_bias: g2.bias,
        },
    ))
}
