//! CBAM attention: channel gates from the global-average-pooled descriptor,
//! spatial gates from per-position channel max/mean.
//!
//! Two readings of the channel MLP are supported:
//!
//! * [`ChannelMlp::Prose`]: `M_c = σ(W2 · relu(W1 · gap + b1) + b2)` with
//!   `W1: c → hidden`, `W2: hidden → c`.
//! * [`ChannelMlp::Literal`]: `v1 = relu(W1·gap + b1)`, `v2 = relu(W2·gap + b2)`,
//!   `M_c = σ(W1·v1 + b1 + W2·v2 + b2)` with both matrices `c × c`.
//!
//! and two compositions:
//!
//! * [`Composition::Sequential`]: `F' = M_c(F) ⊙ F`, `out = M_s(F') ⊙ F'`.
//! * [`Composition::Literal`]: `out = (M_c(F) ⊙ F) ⊙ (M_s(F) ⊙ F)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::ops::{
    conv2d_backward, conv2d_forward, sigmoid, spatial_stats, spatial_stats_backward, ConvSpec, Matrix,
};
use crate::params::Parameters;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Composition {
    Sequential,
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMlp {
    Prose,
    Literal,
}

impl std::str::FromStr for Composition {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sequential" => Ok(Composition::Sequential),
            "literal" => Ok(Composition::Literal),
            _ => Err(format!("unknown composition {s:?} (sequential|literal)")),
        }
    }
}

impl std::str::FromStr for ChannelMlp {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "prose" => Ok(ChannelMlp::Prose),
            "literal" => Ok(ChannelMlp::Literal),
            _ => Err(format!("unknown channel mlp {s:?} (prose|literal)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CbamSpec {
    pub channels: usize,
    pub reduction: usize,
    pub spatial_kernel: usize,
    pub composition: Composition,
    pub channel_mlp: ChannelMlp,
}

impl CbamSpec {
    pub fn new(channels: usize) -> Self {
        CbamSpec {
            channels,
            reduction: 4,
            spatial_kernel: 1,
            composition: Composition::Sequential,
            channel_mlp: ChannelMlp::Prose,
        }
    }

    /// Width of `W1`'s output.
    pub fn hidden(&self) -> usize {
        match self.channel_mlp {
            ChannelMlp::Prose => (self.channels / self.reduction.max(1)).max(1),
            ChannelMlp::Literal => self.channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.reduction == 0 {
            return config("cbam channels and reduction must be >= 1");
        }
        if self.spatial_kernel % 2 == 0 {
            return config(format!(
                "cbam spatial kernel {} must be odd",
                self.spatial_kernel
            ));
        }
        Ok(())
    }

    pub fn spatial_conv(&self) -> ConvSpec {
        ConvSpec::same(2, 1, self.spatial_kernel)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelAttentionParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl ChannelAttentionParams {
    pub fn zeros(spec: &CbamSpec) -> Self {
        let (c, hid) = (spec.channels, spec.hidden());
        let w2 = match spec.channel_mlp {
            ChannelMlp::Prose => Matrix::zeros(c, hid),
            ChannelMlp::Literal => Matrix::zeros(c, c),
        };
        ChannelAttentionParams {
            w1: Matrix::zeros(hid, c),
            b1: vec![0.0; hid],
            w2,
            b2: vec![0.0; c],
        }
    }

    fn check(&self, spec: &CbamSpec) -> Result<()> {
        let z = Self::zeros(spec);
        if (self.w1.rows, self.w1.cols) != (z.w1.rows, z.w1.cols)
            || (self.w2.rows, self.w2.cols) != (z.w2.rows, z.w2.cols)
            || self.b1.len() != z.b1.len()
            || self.b2.len() != z.b2.len()
        {
            return config(format!(
                "channel attention params W1 {}x{}, W2 {}x{} do not fit spec (c={}, hidden={}, {:?})",
                self.w1.rows,
                self.w1.cols,
                self.w2.rows,
                self.w2.cols,
                spec.channels,
                spec.hidden(),
                spec.channel_mlp
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialAttentionParams {
    /// Shape `(1, 2, k, k)`.
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

impl SpatialAttentionParams {
    pub fn zeros(spec: &CbamSpec) -> Self {
        SpatialAttentionParams {
            weight: Tensor::zeros(spec.spatial_conv().weight_shape()),
            bias: vec![0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CbamParams {
    pub channel: ChannelAttentionParams,
    pub spatial: SpatialAttentionParams,
}

impl CbamParams {
    pub fn zeros(spec: &CbamSpec) -> Self {
        CbamParams {
            channel: ChannelAttentionParams::zeros(spec),
            spatial: SpatialAttentionParams::zeros(spec),
        }
    }

    pub fn init<R: Rng>(spec: &CbamSpec, rng: &mut R) -> Self {
        let mut p = Self::zeros(spec);
        for m in [&mut p.channel.w1, &mut p.channel.w2] {
            let bound = (6.0 / m.cols as f64).sqrt();
            for x in m.data.iter_mut() {
                *x = rng.random_range(-bound..bound);
            }
        }
        let bound = (6.0 / (2 * spec.spatial_kernel * spec.spatial_kernel) as f64).sqrt();
        for x in p.spatial.weight.data_mut() {
            *x = rng.random_range(-bound..bound);
        }
        p
    }
}

impl Parameters for ChannelAttentionParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("w1", &self.w1.data);
        f("b1", &self.b1);
        f("w2", &self.w2.data);
        f("b2", &self.b2);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("w1", &mut self.w1.data);
        f("b1", &mut self.b1);
        f("w2", &mut self.w2.data);
        f("b2", &mut self.b2);
    }
}

impl Parameters for SpatialAttentionParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("conv.weight", self.weight.data());
        f("conv.bias", &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("conv.weight", self.weight.data_mut());
        f("conv.bias", &mut self.bias);
    }
}

impl Parameters for CbamParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.channel.visit(&mut |n, xs| f(&format!("channel.{n}"), xs));
        self.spatial.visit(&mut |n, xs| f(&format!("spatial.{n}"), xs));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.channel.visit_mut(&mut |n, xs| f(&format!("channel.{n}"), xs));
        self.spatial.visit_mut(&mut |n, xs| f(&format!("spatial.{n}"), xs));
    }
}

fn check_input(input: &Tensor, spec: &CbamSpec) -> Result<()> {
    spec.validate()?;
    if input.c() != spec.channels {
        return config(format!(
            "cbam input has {} channels, spec expects {}",
            input.c(),
            spec.channels
        ));
    }
    if input.h() * input.w() == 0 {
        return config("cbam input has empty spatial extent");
    }
    Ok(())
}

/// Per-sample intermediates of the channel MLP.
struct ChannelTrace {
    gap: Vec<f64>,
    pre1: Vec<f64>,
    act1: Vec<f64>,
    pre2: Vec<f64>,
    act2: Vec<f64>,
    gate: Vec<f64>,
}

fn add_into(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

fn relu_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

fn channel_trace(input: &Tensor, b: usize, p: &ChannelAttentionParams, spec: &CbamSpec) -> ChannelTrace {
    let c = spec.channels;
    let hw = (input.h() * input.w()) as f64;
    let gap: Vec<f64> = (0..c)
        .map(|ch| input.plane(b, ch).iter().sum::<f64>() / hw)
        .collect();
    let mut pre1 = p.w1.matvec(&gap);
    add_into(&mut pre1, &p.b1);
    let act1 = relu_vec(&pre1);
    match spec.channel_mlp {
        ChannelMlp::Prose => {
            let mut z = p.w2.matvec(&act1);
            add_into(&mut z, &p.b2);
            let gate = z.iter().map(|&x| sigmoid(x)).collect();
            ChannelTrace {
                gap,
                pre1,
                act1,
                pre2: Vec::new(),
                act2: Vec::new(),
                gate,
            }
        }
        ChannelMlp::Literal => {
            let mut pre2 = p.w2.matvec(&gap);
            add_into(&mut pre2, &p.b2);
            let act2 = relu_vec(&pre2);
            let mut z = p.w1.matvec(&act1);
            add_into(&mut z, &p.b1);
            add_into(&mut z, &p.w2.matvec(&act2));
            add_into(&mut z, &p.b2);
            let gate = z.iter().map(|&x| sigmoid(x)).collect();
            ChannelTrace {
                gap,
                pre1,
                act1,
                pre2,
                act2,
                gate,
            }
        }
    }
}

/// Returns `(M_c, F_c)` with `M_c` of shape `(n, c, 1, 1)`.
pub fn channel_attention(input: &Tensor, params: &ChannelAttentionParams, spec: &CbamSpec) -> Result<(Tensor, Tensor)> {
    check_input(input, spec)?;
    params.check(spec)?;
    let [n, c, _, _] = input.shape();
    let mut gates = Vec::with_capacity(n * c);
    let mut out = input.clone();
    for b in 0..n {
        let tr = channel_trace(input, b, params, spec);
        for (ch, &g) in tr.gate.iter().enumerate() {
            out.plane_mut(b, ch).iter_mut().for_each(|x| *x *= g);
        }
        gates.extend(tr.gate);
    }
    Ok((
        Tensor::raw([n, c, 1, 1], gates).checked_output("channel_attention")?,
        out.checked_output("channel_attention")?,
    ))
}

/// Gradients of `<upstream, F_c>` with respect to the input and all four parameters.
pub fn channel_attention_backward(
    input: &Tensor,
    params: &ChannelAttentionParams,
    spec: &CbamSpec,
    upstream: &Tensor,
) -> Result<(Tensor, ChannelAttentionParams)> {
    check_input(input, spec)?;
    params.check(spec)?;
    upstream.expect_shape(input.shape(), "channel attention upstream")?;
    let [n, c, h, w] = input.shape();
    let hw = (h * w) as f64;
    let mut g_in = Tensor::zeros(input.shape());
    let mut gp = ChannelAttentionParams::zeros(spec);
    for b in 0..n {
        let tr = channel_trace(input, b, params, spec);
        // dL/dgate and the direct F path
        let mut d_gate = vec![0.0; c];
        for ch in 0..c {
            let (u, x) = (upstream.plane(b, ch), input.plane(b, ch));
            d_gate[ch] = u.iter().zip(x).map(|(a, b)| a * b).sum();
            let g = tr.gate[ch];
            for (gi, &ui) in g_in.plane_mut(b, ch).iter_mut().zip(u) {
                *gi = ui * g;
            }
        }
        let dz: Vec<f64> = d_gate
            .iter()
            .zip(&tr.gate)
            .map(|(d, s)| d * s * (1.0 - s))
            .collect();
        let mut d_gap;
        match spec.channel_mlp {
            ChannelMlp::Prose => {
                gp.w2.add_outer(&dz, &tr.act1);
                add_into(&mut gp.b2, &dz);
                let d_act1 = params.w2.matvec_t(&dz);
                let d_pre1: Vec<f64> = d_act1
                    .iter()
                    .zip(&tr.pre1)
                    .map(|(d, &p)| if p > 0.0 { *d } else { 0.0 })
                    .collect();
                gp.w1.add_outer(&d_pre1, &tr.gap);
                add_into(&mut gp.b1, &d_pre1);
                d_gap = params.w1.matvec_t(&d_pre1);
            }
            ChannelMlp::Literal => {
                // z = W1 v1 + b1 + W2 v2 + b2
                gp.w1.add_outer(&dz, &tr.act1);
                add_into(&mut gp.b1, &dz);
                gp.w2.add_outer(&dz, &tr.act2);
                add_into(&mut gp.b2, &dz);
                let d_act1 = params.w1.matvec_t(&dz);
                let d_act2 = params.w2.matvec_t(&dz);
                let mask = |d: &[f64], pre: &[f64]| -> Vec<f64> {
                    d.iter()
                        .zip(pre)
                        .map(|(d, &p)| if p > 0.0 { *d } else { 0.0 })
                        .collect()
                };
                let d_pre1 = mask(&d_act1, &tr.pre1);
                let d_pre2 = mask(&d_act2, &tr.pre2);
                gp.w1.add_outer(&d_pre1, &tr.gap);
                add_into(&mut gp.b1, &d_pre1);
                gp.w2.add_outer(&d_pre2, &tr.gap);
                add_into(&mut gp.b2, &d_pre2);
                d_gap = params.w1.matvec_t(&d_pre1);
                add_into(&mut d_gap, &params.w2.matvec_t(&d_pre2));
            }
        }
        for ch in 0..c {
            let add = d_gap[ch] / hw;
            g_in.plane_mut(b, ch).iter_mut().for_each(|x| *x += add);
        }
    }
    Ok((g_in, gp))
}

fn spatial_logits(input: &Tensor, params: &SpatialAttentionParams, spec: &CbamSpec) -> Result<(Tensor, Tensor)> {
    let stats = spatial_stats(input)?;
    let logits = conv2d_forward(&stats, &params.weight, &params.bias, &spec.spatial_conv())?;
    Ok((stats, logits))
}

/// Returns `(M_s, F_s)` with `M_s` of shape `(n, 1, h, w)`.
pub fn spatial_attention(input: &Tensor, params: &SpatialAttentionParams, spec: &CbamSpec) -> Result<(Tensor, Tensor)> {
    check_input(input, spec)?;
    let (_, logits) = spatial_logits(input, params, spec)?;
    let gate = logits.map(sigmoid);
    let mut out = input.clone();
    for b in 0..input.n() {
        let g = gate.plane(b, 0);
        for ch in 0..input.c() {
            for (x, &gv) in out.plane_mut(b, ch).iter_mut().zip(g) {
                *x *= gv;
            }
        }
    }
    Ok((
        gate.checked_output("spatial_attention")?,
        out.checked_output("spatial_attention")?,
    ))
}

pub fn spatial_attention_backward(
    input: &Tensor,
    params: &SpatialAttentionParams,
    spec: &CbamSpec,
    upstream: &Tensor,
) -> Result<(Tensor, SpatialAttentionParams)> {
    check_input(input, spec)?;
    upstream.expect_shape(input.shape(), "spatial attention upstream")?;
    let [n, c, h, w] = input.shape();
    let (stats, logits) = spatial_logits(input, params, spec)?;
    let gate = logits.map(sigmoid);
    let mut g_in = Tensor::zeros(input.shape());
    let mut d_logits = Tensor::zeros([n, 1, h, w]);
    for b in 0..n {
        let g = gate.plane(b, 0).to_vec();
        let mut d_gate = vec![0.0; h * w];
        for ch in 0..c {
            let (u, x) = (upstream.plane(b, ch), input.plane(b, ch));
            for i in 0..h * w {
                d_gate[i] += u[i] * x[i];
            }
            for (i, gi) in g_in.plane_mut(b, ch).iter_mut().enumerate() {
                *gi = u[i] * g[i];
            }
        }
        for (i, d) in d_logits.plane_mut(b, 0).iter_mut().enumerate() {
            *d = d_gate[i] * g[i] * (1.0 - g[i]);
        }
    }
    let gc = conv2d_backward(&stats, &params.weight, &spec.spatial_conv(), &d_logits)?;
    let g_stats = spatial_stats_backward(input, &gc.input)?;
    g_in.add_assign(&g_stats)?;
    Ok((
        g_in,
        SpatialAttentionParams {
            weight: gc.weights,
            bias: gc.bias,
        },
    ))
}

pub fn cbam_forward(input: &Tensor, params: &CbamParams, spec: &CbamSpec) -> Result<Tensor> {
    let (_, fc) = channel_attention(input, &params.channel, spec)?;
    match spec.composition {
        Composition::Sequential => Ok(spatial_attention(&fc, &params.spatial, spec)?.1),
        Composition::Literal => {
            let (_, fs) = spatial_attention(input, &params.spatial, spec)?;
            fc.mul(&fs)?.checked_output("cbam_forward")
        }
    }
}

pub fn cbam_backward(input: &Tensor, params: &CbamParams, spec: &CbamSpec, upstream: &Tensor) -> Result<(Tensor, CbamParams)> {
    let (_, fc) = channel_attention(input, &params.channel, spec)?;
    match spec.composition {
        Composition::Sequential => {
            let (g_fc, g_sp) = spatial_attention_backward(&fc, &params.spatial, spec, upstream)?;
            let (g_in, g_ch) = channel_attention_backward(input, &params.channel, spec, &g_fc)?;
            Ok((
                g_in,
                CbamParams {
                    channel: g_ch,
                    spatial: g_sp,
                },
            ))
        }
        Composition::Literal => {
            let (_, fs) = spatial_attention(input, &params.spatial, spec)?;
            let g_fc = upstream.mul(&fs)?;
            let g_fs = upstream.mul(&fc)?;
            let (mut g_in, g_ch) = channel_attention_backward(input, &params.channel, spec, &g_fc)?;
            let (g_in2, g_sp) = spatial_attention_backward(input, &params.spatial, spec, &g_fs)?;
            g_in.add_assign(&g_in2)?;
            Ok((
                g_in,
                CbamParams {
                    channel: g_ch,
                    spatial: g_sp,
                },
            ))
        }
    }
}
