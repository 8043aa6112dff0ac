//! Partial convolution: a regular convolution over the first `c_p` channels,
//! the remaining `c - c_p` channels copied through untouched.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::ops::{conv2d_backward, conv2d_forward, ConvSpec};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PConvSpec {
    pub channels: usize,
    pub conv_channels: usize,
    pub kernel: usize,
}

impl PConvSpec {
    pub fn new(channels: usize, conv_channels: usize, kernel: usize) -> Result<Self> {
        let spec = PConvSpec {
            channels,
            conv_channels,
            kernel,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `c_p = round(c * fraction)` clamped to `[1, c]`.
    pub fn with_fraction(channels: usize, fraction: f64, kernel: usize) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return config(format!("c_p fraction {fraction} must be in (0, 1]"));
        }
        let cp = ((channels as f64 * fraction).round() as usize).clamp(1, channels.max(1));
        Self::new(channels, cp, kernel)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.conv_channels == 0 {
            return config("pconv channel counts must be >= 1");
        }
        if self.conv_channels > self.channels {
            return config(format!(
                "pconv c_p = {} exceeds c = {}",
                self.conv_channels, self.channels
            ));
        }
        if self.kernel % 2 == 0 {
            return config(format!("pconv kernel {} must be odd", self.kernel));
        }
        Ok(())
    }

    pub fn untouched(&self) -> usize {
        self.channels - self.conv_channels
    }

    pub fn conv_spec(&self) -> ConvSpec {
        ConvSpec::same(self.conv_channels, self.conv_channels, self.kernel)
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        self.conv_spec().weight_shape()
    }
}

fn check(input: &Tensor, spec: &PConvSpec) -> Result<()> {
    spec.validate()?;
    if input.c() != spec.channels {
        return config(format!(
            "pconv input has {} channels, spec expects {}",
            input.c(),
            spec.channels
        ));
    }
    Ok(())
}

pub fn pconv_forward(input: &Tensor, weights: &Tensor, spec: &PConvSpec) -> Result<Tensor> {
    check(input, spec)?;
    let cp = spec.conv_channels;
    let head = input.narrow_channels(0, cp)?;
    let zero_bias = vec![0.0; cp];
    let conv = conv2d_forward(&head, weights, &zero_bias, &spec.conv_spec())?;
    let mut out = input.clone();
    for b in 0..input.n() {
        for ch in 0..cp {
            out.plane_mut(b, ch).copy_from_slice(conv.plane(b, ch));
        }
    }
    Ok(out)
}

/// Returns `(grad_input, grad_weights)`.
pub fn pconv_backward(input: &Tensor, weights: &Tensor, spec: &PConvSpec, upstream: &Tensor) -> Result<(Tensor, Tensor)> {
    check(input, spec)?;
    upstream.expect_shape(input.shape(), "pconv upstream")?;
    let cp = spec.conv_channels;
    let head = input.narrow_channels(0, cp)?;
    let up_head = upstream.narrow_channels(0, cp)?;
    let g = conv2d_backward(&head, weights, &spec.conv_spec(), &up_head)?;
    let mut g_in = upstream.clone();
    for b in 0..input.n() {
        for ch in 0..cp {
            g_in.plane_mut(b, ch).copy_from_slice(g.input.plane(b, ch));
        }
    }
    Ok((g_in, g.weights))
}
