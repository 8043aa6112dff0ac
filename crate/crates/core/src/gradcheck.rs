//! Central-difference checks for every hand-written backward pass.
//!
//! Each suite draws a random small configuration, inputs and an upstream
//! gradient `U`, then compares the analytic gradient of `<U, f(x)>` with
//! `(g(x + h) - g(x - h)) / 2h` for every input and parameter scalar.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{
    cbam_backward, cbam_forward, channel_attention, channel_attention_backward, fasternet_block_backward,
    fasternet_block_forward, fasternet_block_forward_cached, pconv_backward, pconv_forward, spatial_attention,
    spatial_attention_backward, CbamParams, CbamSpec, ChannelMlp, Composition, FasterNetBlockSpec, FasterNetParams,
    PConvSpec,
};
use crate::error::{config, Error, Result};
use crate::losses::{
    ciou_loss_with_grad, detection_loss, detection_loss_with_grad, iou, iou_loss_with_grad, wiou_loss_with_grad,
    BBox, BoxGrad, BoxLossKind, LossWeights, Target, EPS,
};
use crate::ops::{
    activation, activation_backward, conv2d_backward, conv2d_forward, fully_connected, fully_connected_backward,
    global_pool, global_pool_backward, spatial_stats, spatial_stats_backward, spp, spp_backward, Activation, ConvSpec,
    Matrix, PoolKind,
};
use crate::params::Parameters;
use crate::postprocess::GridDecodeSpec;
use crate::tensor::Tensor;

/// Maximum accepted relative error.
pub const TOLERANCE: f64 = 1e-4;
/// Central-difference step.
pub const STEP: f64 = 1e-5;
/// Denominator floor so near-zero gradients are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;
pub const DEFAULT_CASES: usize = 100;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Largest [`rel_error`] between `analytic` and central differences of `f` at `x`.
pub fn max_fd_error(x: &[f64], analytic: &[f64], f: &dyn Fn(&[f64]) -> Result<f64>) -> Result<f64> {
    if x.len() != analytic.len() {
        return config(format!("{} analytic entries for {} inputs", analytic.len(), x.len()));
    }
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + STEP;
        let up = f(&probe)?;
        probe[i] = x[i] - STEP;
        let down = f(&probe)?;
        probe[i] = x[i];
        worst = worst.max(rel_error(analytic[i], (up - down) / (2.0 * STEP)));
    }
    Ok(worst)
}

type CaseFn = fn(&mut ChaCha8Rng, f64) -> Result<f64>;

pub struct GradSuite {
    pub name: &'static str,
    case: CaseFn,
}

pub const SUITES: &[GradSuite] = &[
    GradSuite { name: "conv2d", case: conv2d_case },
    GradSuite { name: "fully_connected", case: fc_case },
    GradSuite { name: "relu", case: relu_case },
    GradSuite { name: "sigmoid", case: sigmoid_case },
    GradSuite { name: "mish", case: mish_case },
    GradSuite { name: "global_avg_pool", case: gap_case },
    GradSuite { name: "global_max_pool", case: gmp_case },
    GradSuite { name: "spatial_stats", case: spatial_stats_case },
    GradSuite { name: "spp", case: spp_case },
    GradSuite { name: "pconv", case: pconv_case },
    GradSuite { name: "fasternet_block", case: fasternet_case },
    GradSuite { name: "channel_attention_prose", case: channel_prose_case },
    GradSuite { name: "channel_attention_literal", case: channel_literal_case },
    GradSuite { name: "spatial_attention", case: spatial_case },
    GradSuite { name: "cbam_sequential", case: cbam_sequential_case },
    GradSuite { name: "cbam_literal", case: cbam_literal_case },
    GradSuite { name: "iou_loss", case: iou_case },
    GradSuite { name: "ciou_loss", case: ciou_case },
    GradSuite { name: "wiou_loss", case: wiou_case },
    GradSuite { name: "detection_loss", case: detection_case },
];

pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|s| s.name).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckOptions {
    /// Glob over suite names; `None` runs everything.
    pub filter: Option<String>,
    pub cases: usize,
    pub seed: u64,
    /// Scales the analytic gradient of the named suite by `1 + 1e-2`.
    /// Exists so callers can confirm a broken backward pass is caught.
    pub perturb: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            filter: None,
            cases: DEFAULT_CASES,
            seed: 0,
            perturb: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckRow {
    pub op: String,
    pub cases: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Suites whose names match `filter`. No match is an error listing valid names.
pub fn select(filter: Option<&str>) -> Result<Vec<&'static GradSuite>> {
    let Some(filter) = filter else {
        return Ok(SUITES.iter().collect());
    };
    let pattern = glob::Pattern::new(filter).map_err(|e| Error::Config(format!("bad filter {filter:?}: {e}")))?;
    let chosen: Vec<_> = SUITES.iter().filter(|s| pattern.matches(s.name)).collect();
    if chosen.is_empty() {
        return config(format!(
            "filter {filter:?} matches no operator; valid names: {}",
            suite_names().join(", ")
        ));
    }
    Ok(chosen)
}

pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<Vec<GradcheckRow>> {
    if let Some(p) = &opts.perturb {
        if !SUITES.iter().any(|s| s.name == p) {
            return config(format!("cannot perturb unknown operator {p:?}"));
        }
    }
    let mut rows = Vec::new();
    for suite in select(opts.filter.as_deref())? {
        let scale = if opts.perturb.as_deref() == Some(suite.name) { 1.0 + 1e-2 } else { 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ name_hash(suite.name));
        let mut worst: f64 = 0.0;
        for _ in 0..opts.cases {
            let e = (suite.case)(&mut rng, scale)?;
            worst = if e.is_nan() || worst.is_nan() { f64::NAN } else { worst.max(e) };
        }
        rows.push(GradcheckRow {
            op: suite.name.to_string(),
            cases: opts.cases,
            max_rel_error: worst,
            passed: worst < TOLERANCE,
        });
    }
    Ok(rows)
}

pub fn rows_to_table(rows: &[GradcheckRow]) -> String {
    let mut s = format!("{:<28} {:>6} {:>14}  status\n", "op", "cases", "max_rel_err");
    for r in rows {
        s.push_str(&format!(
            "{:<28} {:>6} {:>14.3e}  {}\n",
            r.op,
            r.cases,
            r.max_rel_error,
            if r.passed { "ok" } else { "FAIL" }
        ));
    }
    s
}

fn name_hash(name: &str) -> u64 {
    crate::train::fnv1a64(&[name.as_bytes()])
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn randomize<P: Parameters>(p: &mut P, rng: &mut ChaCha8Rng, lo: f64, hi: f64) {
    p.visit_mut(&mut |_, xs| xs.iter_mut().for_each(|x| *x = rng.random_range(lo..hi)));
}

fn scaled(mut v: Vec<f64>, s: f64) -> Vec<f64> {
    v.iter_mut().for_each(|x| *x *= s);
    v
}

fn cat(parts: &[&[f64]]) -> Vec<f64> {
    parts.concat()
}

/// Checks an operator of one input tensor plus a parameter set.
fn check_block<P: Parameters + Clone>(
    input: &Tensor,
    params: &P,
    grad_in: &Tensor,
    grads: &P,
    scale: f64,
    forward: &dyn Fn(&Tensor, &P) -> Result<Tensor>,
    upstream: &Tensor,
) -> Result<f64> {
    let n = input.len();
    let x = cat(&[input.data(), &params.flatten()]);
    let analytic = scaled(cat(&[grad_in.data(), &grads.flatten()]), scale);
    max_fd_error(&x, &analytic, &|v| {
        let t = Tensor::from_vec(input.shape(), v[..n].to_vec())?;
        let mut p = params.clone();
        p.assign_flat(&v[n..]);
        forward(&t, &p)?.dot(upstream)
    })
}

fn conv2d_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let kernel = rng.random_range(1..=3);
    let spec = ConvSpec {
        in_channels: rng.random_range(1..=3),
        out_channels: rng.random_range(1..=3),
        kernel,
        stride: rng.random_range(1..=2),
        padding: rng.random_range(0..kernel),
    };
    let (h, w) = (rng.random_range(kernel..kernel + 4), rng.random_range(kernel..kernel + 4));
    let batch = rng.random_range(1..=2);
    let input = rand_tensor(rng, [batch, spec.in_channels, h, w], -1.0, 1.0);
    let weights = rand_tensor(rng, spec.weight_shape(), -1.0, 1.0);
    let bias = rand_vec(rng, spec.out_channels, -1.0, 1.0);
    let out = conv2d_forward(&input, &weights, &bias, &spec)?;
    let u = rand_tensor(rng, out.shape(), -1.0, 1.0);
    let g = conv2d_backward(&input, &weights, &spec, &u)?;
    let (ni, nw) = (input.len(), weights.len());
    let x = cat(&[input.data(), weights.data(), &bias]);
    let analytic = scaled(cat(&[g.input.data(), g.weights.data(), &g.bias]), scale);
    max_fd_error(&x, &analytic, &|v| {
        let i = Tensor::from_vec(input.shape(), v[..ni].to_vec())?;
        let w = Tensor::from_vec(weights.shape(), v[ni..ni + nw].to_vec())?;
        conv2d_forward(&i, &w, &v[ni + nw..], &spec)?.dot(&u)
    })
}

fn fc_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let (ni, no) = (rng.random_range(1..=6), rng.random_range(1..=6));
    let input = rand_vec(rng, ni, -1.0, 1.0);
    let w = Matrix::from_vec(no, ni, rand_vec(rng, ni * no, -1.0, 1.0))?;
    let b = rand_vec(rng, no, -1.0, 1.0);
    let u = rand_vec(rng, no, -1.0, 1.0);
    let g = fully_connected_backward(&input, &w, &u)?;
    let x = cat(&[&input, &w.data, &b]);
    let analytic = scaled(cat(&[&g.input, &g.weights.data, &g.bias]), scale);
    max_fd_error(&x, &analytic, &|v| {
        let m = Matrix::from_vec(no, ni, v[ni..ni + ni * no].to_vec())?;
        let y = fully_connected(&v[..ni], &m, &v[ni + ni * no..])?;
        Ok(y.iter().zip(&u).map(|(a, b)| a * b).sum())
    })
}

fn elementwise_case(rng: &mut ChaCha8Rng, scale: f64, kind: Activation) -> Result<f64> {
    let shape = [1, rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=4)];
    let mut input = rand_tensor(rng, shape, -4.0, 4.0);
    // keep clear of the ReLU kink
    input.data_mut().iter_mut().for_each(|x| {
        if x.abs() < 1e-3 {
            *x = 0.5;
        }
    });
    let u = rand_tensor(rng, shape, -1.0, 1.0);
    let g = activation_backward(&input, kind, &u)?;
    max_fd_error(input.data(), &scaled(g.into_vec(), scale), &|v| {
        activation(&Tensor::from_vec(shape, v.to_vec())?, kind)?.dot(&u)
    })
}

fn relu_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    elementwise_case(rng, scale, Activation::Relu)
}

fn sigmoid_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    elementwise_case(rng, scale, Activation::Sigmoid)
}

fn mish_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    elementwise_case(rng, scale, Activation::Mish)
}

fn unary_case(
    rng: &mut ChaCha8Rng,
    scale: f64,
    forward: &dyn Fn(&Tensor) -> Result<Tensor>,
    backward: &dyn Fn(&Tensor, &Tensor) -> Result<Tensor>,
) -> Result<f64> {
    let shape = [
        rng.random_range(1..=2),
        rng.random_range(1..=3),
        rng.random_range(1..=5),
        rng.random_range(1..=5),
    ];
    let input = rand_tensor(rng, shape, -2.0, 2.0);
    let out = forward(&input)?;
    let u = rand_tensor(rng, out.shape(), -1.0, 1.0);
    let g = backward(&input, &u)?;
    max_fd_error(input.data(), &scaled(g.into_vec(), scale), &|v| {
        forward(&Tensor::from_vec(shape, v.to_vec())?)?.dot(&u)
    })
}

fn gap_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    unary_case(
        rng,
        scale,
        &|x| global_pool(x, PoolKind::Avg),
        &|x, u| global_pool_backward(x, PoolKind::Avg, u),
    )
}

fn gmp_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    unary_case(
        rng,
        scale,
        &|x| global_pool(x, PoolKind::Max),
        &|x, u| global_pool_backward(x, PoolKind::Max, u),
    )
}

fn spatial_stats_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    unary_case(rng, scale, &spatial_stats, &spatial_stats_backward)
}

fn spp_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let all = [1, 3, 5];
    let count = rng.random_range(1..=2);
    let windows: Vec<usize> = (0..count).map(|_| all[rng.random_range(0..all.len())]).collect();
    unary_case(rng, scale, &|x| spp(x, &windows), &|x, u| spp_backward(x, &windows, u))
}

fn pconv_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let c = rng.random_range(1..=4);
    let spec = PConvSpec::new(c, rng.random_range(1..=c), [1, 3][rng.random_range(0..2)])?;
    let shape = [rng.random_range(1..=2), c, rng.random_range(2..=5), rng.random_range(2..=5)];
    let input = rand_tensor(rng, shape, -1.0, 1.0);
    let weights = rand_tensor(rng, spec.weight_shape(), -1.0, 1.0);
    let u = rand_tensor(rng, shape, -1.0, 1.0);
    let (gi, gw) = pconv_backward(&input, &weights, &spec, &u)?;
    let ni = input.len();
    let x = cat(&[input.data(), weights.data()]);
    let analytic = scaled(cat(&[gi.data(), gw.data()]), scale);
    max_fd_error(&x, &analytic, &|v| {
        let i = Tensor::from_vec(shape, v[..ni].to_vec())?;
        let w = Tensor::from_vec(spec.weight_shape(), v[ni..].to_vec())?;
        pconv_forward(&i, &w, &spec)?.dot(&u)
    })
}

fn fasternet_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let c = rng.random_range(1..=4);
    let pconv = PConvSpec::new(c, rng.random_range(1..=c), [1, 3][rng.random_range(0..2)])?;
    let spec = FasterNetBlockSpec {
        expansion: [1.0, 1.5, 2.0][rng.random_range(0..3)],
        activation: [Activation::Mish, Activation::Sigmoid][rng.random_range(0..2)],
        ..FasterNetBlockSpec::new(c, pconv)
    };
    let shape = [1, c, rng.random_range(2..=4), rng.random_range(2..=4)];
    let input = rand_tensor(rng, shape, -1.0, 1.0);
    let mut params = FasterNetParams::zeros(&spec);
    randomize(&mut params, rng, -1.0, 1.0);
    let u = rand_tensor(rng, shape, -1.0, 1.0);
    let (_, cache) = fasternet_block_forward_cached(&input, &params, &spec)?;
    let (gi, gp) = fasternet_block_backward(&input, &params, &spec, &cache, &u)?;
    check_block(&input, &params, &gi, &gp, scale, &|x, p| fasternet_block_forward(x, p, &spec), &u)
}

fn random_cbam_spec(rng: &mut ChaCha8Rng, mlp: ChannelMlp, composition: Composition) -> CbamSpec {
    CbamSpec {
        channels: rng.random_range(1..=6),
        reduction: rng.random_range(1..=4),
        spatial_kernel: [1, 3][rng.random_range(0..2)],
        composition,
        channel_mlp: mlp,
    }
}

fn cbam_input(rng: &mut ChaCha8Rng, spec: &CbamSpec) -> Tensor {
    let shape = [rng.random_range(1..=2), spec.channels, rng.random_range(1..=4), rng.random_range(1..=4)];
    rand_tensor(rng, shape, -2.0, 2.0)
}

fn channel_case(rng: &mut ChaCha8Rng, scale: f64, mlp: ChannelMlp) -> Result<f64> {
    let spec = random_cbam_spec(rng, mlp, Composition::Sequential);
    let input = cbam_input(rng, &spec);
    let mut params = CbamParams::zeros(&spec).channel;
    randomize(&mut params, rng, -1.0, 1.0);
    let u = rand_tensor(rng, input.shape(), -1.0, 1.0);
    let (gi, gp) = channel_attention_backward(&input, &params, &spec, &u)?;
    check_block(&input, &params, &gi, &gp, scale, &|x, p| Ok(channel_attention(x, p, &spec)?.1), &u)
}

fn channel_prose_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    channel_case(rng, scale, ChannelMlp::Prose)
}

fn channel_literal_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    channel_case(rng, scale, ChannelMlp::Literal)
}

fn spatial_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let spec = random_cbam_spec(rng, ChannelMlp::Prose, Composition::Sequential);
    let input = cbam_input(rng, &spec);
    let mut params = CbamParams::zeros(&spec).spatial;
    randomize(&mut params, rng, -1.0, 1.0);
    let u = rand_tensor(rng, input.shape(), -1.0, 1.0);
    let (gi, gp) = spatial_attention_backward(&input, &params, &spec, &u)?;
    check_block(&input, &params, &gi, &gp, scale, &|x, p| Ok(spatial_attention(x, p, &spec)?.1), &u)
}

fn cbam_case(rng: &mut ChaCha8Rng, scale: f64, composition: Composition) -> Result<f64> {
    let mlp = [ChannelMlp::Prose, ChannelMlp::Literal][rng.random_range(0..2)];
    let spec = random_cbam_spec(rng, mlp, composition);
    let input = cbam_input(rng, &spec);
    let mut params = CbamParams::zeros(&spec);
    randomize(&mut params, rng, -1.0, 1.0);
    let u = rand_tensor(rng, input.shape(), -1.0, 1.0);
    let (gi, gp) = cbam_backward(&input, &params, &spec, &u)?;
    check_block(&input, &params, &gi, &gp, scale, &|x, p| cbam_forward(x, p, &spec), &u)
}

fn cbam_sequential_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    cbam_case(rng, scale, Composition::Sequential)
}

fn cbam_literal_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    cbam_case(rng, scale, Composition::Literal)
}

/// A ground-truth box and an overlapping prediction near it.
fn box_pair(rng: &mut ChaCha8Rng) -> Result<(BBox, BBox)> {
    let gt = BBox::from_center(
        rng.random_range(5.0..20.0),
        rng.random_range(5.0..20.0),
        rng.random_range(2.0..10.0),
        rng.random_range(2.0..10.0),
    )?;
    let (cx, cy) = gt.center();
    let pred = BBox::from_center(
        cx + rng.random_range(-3.0..3.0),
        cy + rng.random_range(-3.0..3.0),
        gt.width() * rng.random_range(0.5..1.8),
        gt.height() * rng.random_range(0.5..1.8),
    )?;
    Ok((pred, gt))
}

fn box_check(
    pred: &BBox,
    analytic: BoxGrad,
    scale: f64,
    f: &dyn Fn(&BBox) -> f64,
) -> Result<f64> {
    let x = [pred.x1, pred.y1, pred.x2, pred.y2];
    max_fd_error(&x, &scaled(analytic.to_vec(), scale), &|v| {
        Ok(f(&BBox::new(v[0], v[1], v[2], v[3])?))
    })
}

fn iou_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let (pred, gt) = box_pair(rng)?;
    let (_, g) = iou_loss_with_grad(&pred, &gt);
    box_check(&pred, g, scale, &|p| 1.0 - iou(p, &gt))
}

fn ciou_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let (pred, gt) = box_pair(rng)?;
    let (_, g) = ciou_loss_with_grad(&pred, &gt);
    box_check(&pred, g, scale, &|p| ciou_loss_with_grad(p, &gt).0)
}

/// Squared diagonal of the box enclosing both arguments.
fn enclosing_diag2(a: &BBox, b: &BBox) -> f64 {
    let cw = a.x2.max(b.x2) - a.x1.min(b.x1);
    let ch = a.y2.max(b.y2) - a.y1.min(b.y1);
    cw * cw + ch * ch
}

/// The normalizer is frozen at the evaluation point, matching the
/// gradient convention of the loss.
fn wiou_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let (pred, gt) = box_pair(rng)?;
    let (_, g) = wiou_loss_with_grad(&pred, &gt);
    let d0 = enclosing_diag2(&pred, &gt) + EPS;
    let (gx, gy) = gt.center();
    box_check(&pred, g, scale, &|p| {
        let (px, py) = p.center();
        let rho2 = (px - gx).powi(2) + (py - gy).powi(2);
        (rho2 / d0).exp() * (1.0 - iou(p, &gt))
    })
}

fn detection_case(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    let spec = GridDecodeSpec::new(2, 2, 8.0, 2);
    let variant = [BoxLossKind::Iou, BoxLossKind::Ciou][rng.random_range(0..2)];
    let mut cells = vec![(0, 0), (0, 1), (1, 0), (1, 1)];
    let count = rng.random_range(0..=2);
    let mut targets = Vec::new();
    for _ in 0..count {
        let (r, c) = cells.swap_remove(rng.random_range(0..cells.len()));
        let cx = c as f64 * 8.0 + rng.random_range(2.0..6.0);
        let cy = r as f64 * 8.0 + rng.random_range(2.0..6.0);
        let w = rng.random_range(2.0..(2.0 * cx.min(16.0 - cx)).min(10.0));
        let h = rng.random_range(2.0..(2.0 * cy.min(16.0 - cy)).min(10.0));
        targets.push(Target::new(BBox::from_center(cx, cy, w, h)?, rng.random_range(0..2), 16.0, 16.0)?);
    }
    let pred = rand_tensor(rng, [1, spec.channels(), 2, 2], -1.5, 1.5);
    let weights = LossWeights::default();
    let targets = vec![targets];
    let (_, g) = detection_loss_with_grad(&pred, &targets, &spec, variant, &weights)?;
    max_fd_error(pred.data(), &scaled(g.into_vec(), scale), &|v| {
        let p = Tensor::from_vec(pred.shape(), v.to_vec())?;
        Ok(detection_loss(&p, &targets, &spec, variant, &weights)?.total)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_filter_lists_names() {
        let err = select(Some("nope*")).err().unwrap().to_string();
        assert!(err.contains("conv2d") && err.contains("wiou_loss"), "{err}");
    }

    #[test]
    fn glob_selects_families() {
        let names: Vec<_> = select(Some("cbam_*")).unwrap().iter().map(|s| s.name).collect();
        assert_eq!(names, vec!["cbam_sequential", "cbam_literal"]);
    }

    #[test]
    fn perturbation_is_caught() {
        let rows = run_gradcheck(&GradcheckOptions {
            filter: Some("conv2d".into()),
            cases: 3,
            seed: 1,
            perturb: Some("conv2d".into()),
        })
        .unwrap();
        assert!(!rows[0].passed);
    }
}
