//! The toy detector: strided conv stem, FasterNet blocks, SPP, CBAM and a
//! 1x1 head producing one prediction per stride-8 grid cell.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{
    cbam_backward, cbam_forward, fasternet_block_backward, fasternet_block_forward_cached, he_uniform, CbamParams,
    CbamSpec, ChannelMlp, Composition, FasterNetBlockSpec, FasterNetCache, FasterNetParams, PConvSpec,
};
use crate::cost::{LayerSpec, NetSpec};
use crate::error::{config, Error, Result};
use crate::ops::{
    activation, activation_backward, conv2d_backward, conv2d_forward, spp, spp_backward, Activation, ConvSpec, Matrix,
};
use crate::params::Parameters;
use crate::postprocess::{decode, nms, Detection, GridDecodeSpec};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyNetConfig {
    pub image_size: usize,
    pub in_channels: usize,
    /// One stride-2 3x3 conv per entry.
    pub stem_channels: Vec<usize>,
    pub blocks: usize,
    pub cp_fraction: f64,
    pub pconv_kernel: usize,
    pub expansion: f64,
    pub activation: Activation,
    pub spp_windows: Vec<usize>,
    pub cbam_reduction: usize,
    pub cbam_spatial_kernel: usize,
    pub cbam_composition: Composition,
    pub cbam_channel_mlp: ChannelMlp,
    pub num_classes: usize,
}

impl Default for ToyNetConfig {
    fn default() -> Self {
        ToyNetConfig {
            image_size: 64,
            in_channels: 3,
            stem_channels: vec![16, 32, 32],
            blocks: 2,
            cp_fraction: 0.25,
            pconv_kernel: 3,
            expansion: 2.0,
            activation: Activation::Mish,
            spp_windows: vec![3, 5],
            cbam_reduction: 4,
            cbam_spatial_kernel: 1,
            cbam_composition: Composition::Sequential,
            cbam_channel_mlp: ChannelMlp::Prose,
            num_classes: 3,
        }
    }
}

impl ToyNetConfig {
    pub fn stride(&self) -> usize {
        1 << self.stem_channels.len()
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.stride()
    }

    pub fn width(&self) -> usize {
        *self.stem_channels.last().unwrap_or(&self.in_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stem_channels.is_empty() || self.stem_channels.contains(&0) || self.in_channels == 0 {
            return config("toy net needs a non-empty stem with non-zero channels");
        }
        if self.image_size == 0 || self.image_size % self.stride() != 0 {
            return config(format!(
                "image size {} must be a positive multiple of the stride {}",
                self.image_size,
                self.stride()
            ));
        }
        if self.num_classes == 0 {
            return config("toy net needs at least one class");
        }
        self.block_spec()?.validate()?;
        self.cbam_spec().validate()?;
        if self.spp_windows.iter().any(|k| k % 2 == 0) {
            return config("spp windows must be odd");
        }
        Ok(())
    }

    pub fn stem_spec(&self, i: usize) -> ConvSpec {
        let ci = if i == 0 { self.in_channels } else { self.stem_channels[i - 1] };
        ConvSpec {
            in_channels: ci,
            out_channels: self.stem_channels[i],
            kernel: 3,
            stride: 2,
            padding: 1,
        }
    }

    pub fn block_spec(&self) -> Result<FasterNetBlockSpec> {
        let c = self.width();
        Ok(FasterNetBlockSpec {
            channels: c,
            pconv: PConvSpec::with_fraction(c, self.cp_fraction, self.pconv_kernel)?,
            expansion: self.expansion,
            activation: self.activation,
        })
    }

    pub fn spp_channels(&self) -> usize {
        self.width() * (1 + self.spp_windows.len())
    }

    pub fn cbam_spec(&self) -> CbamSpec {
        CbamSpec {
            channels: self.spp_channels(),
            reduction: self.cbam_reduction,
            spatial_kernel: self.cbam_spatial_kernel,
            composition: self.cbam_composition,
            channel_mlp: self.cbam_channel_mlp,
        }
    }

    pub fn head_spec(&self) -> ConvSpec {
        ConvSpec::same(self.spp_channels(), 5 + self.num_classes, 1)
    }

    pub fn decode_spec(&self) -> GridDecodeSpec {
        GridDecodeSpec::new(self.grid(), self.grid(), self.stride() as f64, self.num_classes)
    }

    /// The same network as a cost-model description.
    pub fn net_spec(&self) -> NetSpec {
        let mut layers = Vec::new();
        for (i, &co) in self.stem_channels.iter().enumerate() {
            layers.push(LayerSpec::Conv {
                name: format!("stem{i}"),
                out_channels: co,
                kernel: 3,
                stride: 2,
                padding: 1,
                bias: true,
                activation: Some(self.activation),
            });
        }
        for i in 0..self.blocks {
            layers.push(LayerSpec::Fasternet {
                name: format!("block{i}"),
                kernel: self.pconv_kernel,
                expansion: self.expansion,
                activation: self.activation,
            });
        }
        layers.push(LayerSpec::Spp {
            name: "spp".into(),
            windows: self.spp_windows.clone(),
        });
        layers.push(LayerSpec::Cbam {
            name: "cbam".into(),
            reduction: self.cbam_reduction,
            spatial_kernel: self.cbam_spatial_kernel,
            composition: self.cbam_composition,
            channel_mlp: self.cbam_channel_mlp,
        });
        layers.push(LayerSpec::Conv {
            name: "head".into(),
            out_channels: 5 + self.num_classes,
            kernel: 1,
            stride: 1,
            padding: 0,
            bias: true,
            activation: None,
        });
        NetSpec {
            input: (self.in_channels, self.image_size, self.image_size),
            cp_fraction: self.cp_fraction,
            layers,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(spec: &ConvSpec) -> Self {
        ConvLayer {
            weight: Tensor::zeros(spec.weight_shape()),
            bias: vec![0.0; spec.out_channels],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyNet {
    pub config: ToyNetConfig,
    pub stem: Vec<ConvLayer>,
    pub blocks: Vec<FasterNetParams>,
    pub cbam: CbamParams,
    pub head: ConvLayer,
}

/// Prior probability that a cell holds an object; sets the initial objectness bias.
const OBJECT_PRIOR: f64 = 0.04;

impl ToyNet {
    pub fn zeros(config: &ToyNetConfig) -> Result<Self> {
        config.validate()?;
        let block = config.block_spec()?;
        Ok(ToyNet {
            config: config.clone(),
            stem: (0..config.stem_channels.len())
                .map(|i| ConvLayer::zeros(&config.stem_spec(i)))
                .collect(),
            blocks: (0..config.blocks).map(|_| FasterNetParams::zeros(&block)).collect(),
            cbam: CbamParams::zeros(&config.cbam_spec()),
            head: ConvLayer::zeros(&config.head_spec()),
        })
    }

    pub fn init(config: &ToyNetConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::zeros(config)?;
        let block = config.block_spec()?;
        for layer in &mut net.stem {
            he_uniform(&mut layer.weight, &mut rng, 1.0);
        }
        for b in &mut net.blocks {
            *b = FasterNetParams::init(&block, &mut rng, 0.5);
        }
        net.cbam = CbamParams::init(&config.cbam_spec(), &mut rng);
        he_uniform(&mut net.head.weight, &mut rng, 0.1);
        net.head.bias[4] = (OBJECT_PRIOR / (1.0 - OBJECT_PRIOR)).ln();
        Ok(net)
    }

    /// Names of trainable arrays belonging to the backbone (stem and blocks).
    pub fn is_backbone(name: &str) -> bool {
        name.starts_with("stem") || name.starts_with("block")
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, ToyNetCache)> {
        let cfg = &self.config;
        input.expect_shape(
            [input.n(), cfg.in_channels, cfg.image_size, cfg.image_size],
            "toy net input",
        )?;
        let mut x = input.clone();
        let mut stem_in = Vec::new();
        let mut stem_pre = Vec::new();
        for (i, layer) in self.stem.iter().enumerate() {
            let pre = conv2d_forward(&x, &layer.weight, &layer.bias, &cfg.stem_spec(i))?;
            let out = activation(&pre, cfg.activation)?;
            stem_in.push(x);
            stem_pre.push(pre);
            x = out;
        }
        let block = cfg.block_spec()?;
        let mut block_in = Vec::new();
        let mut block_cache = Vec::new();
        for p in &self.blocks {
            let (out, cache) = fasternet_block_forward_cached(&x, p, &block)?;
            block_in.push(x);
            block_cache.push(cache);
            x = out;
        }
        let spp_in = x;
        let cbam_in = spp(&spp_in, &cfg.spp_windows)?;
        let head_in = cbam_forward(&cbam_in, &self.cbam, &cfg.cbam_spec())?;
        let out = conv2d_forward(&head_in, &self.head.weight, &self.head.bias, &cfg.head_spec())?;
        Ok((
            out,
            ToyNetCache {
                stem_in,
                stem_pre,
                block_in,
                block_cache,
                spp_in,
                cbam_in,
                head_in,
            },
        ))
    }

    /// Gradients for every parameter. With `through_backbone = false` the
    /// backbone is skipped and its gradients are left at zero.
    pub fn backward(&self, cache: &ToyNetCache, upstream: &Tensor, through_backbone: bool) -> Result<ToyNet> {
        let cfg = &self.config;
        let mut grads = ToyNet::zeros(cfg)?;
        let gh = conv2d_backward(&cache.head_in, &self.head.weight, &cfg.head_spec(), upstream)?;
        grads.head = ConvLayer {
            weight: gh.weights,
            bias: gh.bias,
        };
        let (g_cbam_in, g_cbam) = cbam_backward(&cache.cbam_in, &self.cbam, &cfg.cbam_spec(), &gh.input)?;
        grads.cbam = g_cbam;
        if !through_backbone {
            return Ok(grads);
        }
        let mut g = spp_backward(&cache.spp_in, &cfg.spp_windows, &g_cbam_in)?;
        let block = cfg.block_spec()?;
        for i in (0..self.blocks.len()).rev() {
            let (gi, gp) =
                fasternet_block_backward(&cache.block_in[i], &self.blocks[i], &block, &cache.block_cache[i], &g)?;
            grads.blocks[i] = gp;
            g = gi;
        }
        for i in (0..self.stem.len()).rev() {
            let g_pre = activation_backward(&cache.stem_pre[i], cfg.activation, &g)?;
            let gs = conv2d_backward(&cache.stem_in[i], &self.stem[i].weight, &cfg.stem_spec(i), &g_pre)?;
            grads.stem[i] = ConvLayer {
                weight: gs.weights,
                bias: gs.bias,
            };
            g = gs.input;
        }
        Ok(grads)
    }

    /// Decoded, class-aware-NMS'd detections for each image of the batch.
    pub fn detect(&self, images: &Tensor, spec: &GridDecodeSpec, nms_iou: f64) -> Result<Vec<Vec<Detection>>> {
        let (head, _) = self.forward(images)?;
        (0..head.n())
            .map(|b| {
                let one = batch_item(&head, b)?;
                Ok(nms(&decode(&one, spec)?, nms_iou))
            })
            .collect()
    }

    /// Tensors grouped per cost-model layer, in cost-model row order.
    pub fn layer_tensors(&self) -> Vec<(String, Vec<Tensor>)> {
        let vec_t = |v: &[f64]| Tensor::raw([1, 1, 1, v.len()], v.to_vec());
        let mat_t = |m: &Matrix| Tensor::raw([1, 1, m.rows, m.cols], m.data.clone());
        let mut out = Vec::new();
        for (i, l) in self.stem.iter().enumerate() {
            out.push((format!("stem{i}"), vec![l.weight.clone(), vec_t(&l.bias)]));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.pconv"), vec![b.pconv.clone()]));
            out.push((format!("block{i}.pw1"), vec![b.pw1_weight.clone(), vec_t(&b.pw1_bias)]));
            out.push((format!("block{i}.pw2"), vec![b.pw2_weight.clone(), vec_t(&b.pw2_bias)]));
        }
        out.push(("spp".into(), vec![]));
        let c = &self.cbam.channel;
        out.push((
            "cbam".into(),
            vec![
                mat_t(&c.w1),
                vec_t(&c.b1),
                mat_t(&c.w2),
                vec_t(&c.b2),
                self.cbam.spatial.weight.clone(),
                vec_t(&self.cbam.spatial.bias),
            ],
        ));
        out.push(("head".into(), vec![self.head.weight.clone(), vec_t(&self.head.bias)]));
        out
    }

    /// Inverse of [`ToyNet::layer_tensors`]; every name and shape must match.
    pub fn from_layer_tensors(config: &ToyNetConfig, layers: &[(String, Vec<Tensor>)]) -> Result<ToyNet> {
        let mut net = ToyNet::zeros(config)?;
        let expected = net.layer_tensors();
        if expected.len() != layers.len() {
            return Err(Error::Invalid(format!(
                "weights hold {} layers, net expects {}",
                layers.len(),
                expected.len()
            )));
        }
        for ((want_name, want), (name, got)) in expected.iter().zip(layers) {
            if want_name != name || want.len() != got.len() {
                return Err(Error::Invalid(format!(
                    "layer {name:?} with {} tensors where {want_name:?} with {} was expected",
                    got.len(),
                    want.len()
                )));
            }
            for (w, g) in want.iter().zip(got) {
                if w.shape() != g.shape() {
                    return Err(Error::Invalid(format!(
                        "layer {name:?}: tensor shape {:?}, expected {:?}",
                        g.shape(),
                        w.shape()
                    )));
                }
            }
        }
        let mut flat = Vec::with_capacity(net.num_params());
        for (_, ts) in layers {
            for t in ts {
                flat.extend_from_slice(t.data());
            }
        }
        net.assign_flat(&flat);
        Ok(net)
    }
}

/// Activations kept from the forward pass.
#[derive(Clone, Debug)]
pub struct ToyNetCache {
    stem_in: Vec<Tensor>,
    stem_pre: Vec<Tensor>,
    block_in: Vec<Tensor>,
    block_cache: Vec<FasterNetCache>,
    spp_in: Tensor,
    cbam_in: Tensor,
    head_in: Tensor,
}

impl Parameters for ToyNet {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, l) in self.stem.iter().enumerate() {
            f(&format!("stem{i}.weight"), l.weight.data());
            f(&format!("stem{i}.bias"), &l.bias);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&mut |n, xs| f(&format!("block{i}.{n}"), xs));
        }
        self.cbam.visit(&mut |n, xs| f(&format!("cbam.{n}"), xs));
        f("head.weight", self.head.weight.data());
        f("head.bias", &self.head.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, l) in self.stem.iter_mut().enumerate() {
            f(&format!("stem{i}.weight"), l.weight.data_mut());
            f(&format!("stem{i}.bias"), &mut l.bias);
        }
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&mut |n, xs| f(&format!("block{i}.{n}"), xs));
        }
        self.cbam.visit_mut(&mut |n, xs| f(&format!("cbam.{n}"), xs));
        f("head.weight", self.head.weight.data_mut());
        f("head.bias", &mut self.head.bias);
    }
}

/// Copies item `b` of a batch into a batch-of-one tensor.
pub fn batch_item(t: &Tensor, b: usize) -> Result<Tensor> {
    let [n, c, h, w] = t.shape();
    if b >= n {
        return config(format!("batch index {b} out of range for batch of {n}"));
    }
    let per = c * h * w;
    Ok(Tensor::raw([1, c, h, w], t.data()[b * per..(b + 1) * per].to_vec()))
}

/// Stacks equally shaped tensors along the batch axis.
pub fn stack_batch(items: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = items.first() else {
        return config("cannot stack an empty batch");
    };
    let [_, c, h, w] = first.shape();
    let mut data = Vec::new();
    let mut n = 0;
    for t in items {
        let [tn, tc, th, tw] = t.shape();
        if (tc, th, tw) != (c, h, w) {
            return config(format!("cannot stack {:?} with {:?}", t.shape(), first.shape()));
        }
        data.extend_from_slice(t.data());
        n += tn;
    }
    Ok(Tensor::raw([n, c, h, w], data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::model_cost;

    #[test]
    fn shapes_and_cost_rows_agree() {
        let cfg = ToyNetConfig::default();
        let net = ToyNet::init(&cfg, 1).unwrap();
        let x = Tensor::full([2, 3, 64, 64], 0.3);
        let (out, _) = net.forward(&x).unwrap();
        assert_eq!(out.shape(), [2, 8, 8, 8]);
        let report = model_cost(&cfg.net_spec(), 8).unwrap();
        assert_eq!(report.layers.len(), net.layer_tensors().len());
        assert_eq!(report.totals.params as usize, net.num_params());
    }

    #[test]
    fn layer_tensors_round_trip() {
        let cfg = ToyNetConfig::default();
        let net = ToyNet::init(&cfg, 3).unwrap();
        let back = ToyNet::from_layer_tensors(&cfg, &net.layer_tensors()).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn head_only_backward_leaves_backbone_zero() {
        let cfg = ToyNetConfig::default();
        let net = ToyNet::init(&cfg, 2).unwrap();
        let x = Tensor::full([1, 3, 64, 64], 0.2);
        let (out, cache) = net.forward(&x).unwrap();
        let g = net.backward(&cache, &Tensor::full(out.shape(), 0.01), false).unwrap();
        let mut backbone_sum = 0.0;
        g.visit(&mut |n, xs| {
            if ToyNet::is_backbone(n) {
                backbone_sum += xs.iter().map(|v| v.abs()).sum::<f64>();
            }
        });
        assert_eq!(backbone_sum, 0.0);
    }
}
