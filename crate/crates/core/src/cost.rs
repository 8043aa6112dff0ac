//! Analytical cost accounting: parameters, multiply-accumulates and memory
//! accesses per layer.
//!
//! Memory accesses count elements, not bytes. For a convolution the feature
//! term is one read of every input element plus one write of every output
//! element; for a square, shape-preserving layer that is `h·w·2c`. The exact
//! figure adds one read of every weight, `k²·c_in·c_out`. Partial convolution
//! only touches its `c_p` channels: `h·w·2c_p + k²·c_p²` exact,
//! `h·w·2c_p` approximate.
//!
//! | layer     | params                      | macs                       |
//! |-----------|-----------------------------|----------------------------|
//! | conv      | k²·c_in·c_out (+ c_out)     | h_out·w_out·k²·c_in·c_out  |
//! | pconv     | k²·c_p²                     | h·w·k²·c_p²                |
//! | spp       | 0                           | 0 (comparisons only)       |
//! | cbam      | channel MLP + 2k² + 1       | MLP + h·w·2k² + gating     |

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::blocks::{CbamSpec, ChannelMlp, Composition, FasterNetBlockSpec, PConvSpec};
use crate::error::{Error, Result};
use crate::ops::{conv_out_size, Activation};

pub use crate::ops::conv_out_size as out_size;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub params: u64,
    pub macs: u64,
    pub mem_access_exact: u64,
    pub mem_access_approx: u64,
}

impl LayerCost {
    fn zero(name: &str) -> Self {
        LayerCost {
            name: name.to_string(),
            params: 0,
            macs: 0,
            mem_access_exact: 0,
            mem_access_approx: 0,
        }
    }

    fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }
}

/// General convolution geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub h: usize,
    pub w: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub bias: bool,
}

impl ConvGeometry {
    pub fn cost(&self) -> Result<LayerCost> {
        let ho = conv_out_size(self.h, self.kernel, self.padding, self.stride)? as u64;
        let wo = conv_out_size(self.w, self.kernel, self.padding, self.stride)? as u64;
        let (h, w, ci, co, k2) = (
            self.h as u64,
            self.w as u64,
            self.c_in as u64,
            self.c_out as u64,
            (self.kernel * self.kernel) as u64,
        );
        let weights = k2 * ci * co;
        let features = h * w * ci + ho * wo * co;
        Ok(LayerCost {
            name: String::new(),
            params: weights + if self.bias { co } else { 0 },
            macs: ho * wo * weights,
            mem_access_exact: features + weights,
            mem_access_approx: features,
        })
    }
}

/// Stride-1, shape-preserving convolution with bias.
pub fn conv_cost(h: usize, w: usize, c_in: usize, c_out: usize, k: usize) -> LayerCost {
    ConvGeometry {
        h,
        w,
        c_in,
        c_out,
        kernel: k,
        stride: 1,
        padding: k.saturating_sub(1) / 2,
        bias: true,
    }
    .cost()
    .expect("same-padded convolution always has a valid output size")
}

pub fn pconv_cost(h: usize, w: usize, c: usize, c_p: usize, k: usize) -> LayerCost {
    debug_assert!(c_p >= 1 && c_p <= c);
    let (hw, cp, k2) = ((h * w) as u64, c_p as u64, (k * k) as u64);
    LayerCost {
        name: String::new(),
        params: k2 * cp * cp,
        macs: hw * k2 * cp * cp,
        mem_access_exact: hw * 2 * cp + k2 * cp * cp,
        mem_access_approx: hw * 2 * cp,
    }
}

pub fn spp_cost(h: usize, w: usize, c: usize, windows: usize) -> LayerCost {
    let hwc = (h * w * c) as u64;
    let mem = hwc + hwc * (1 + windows as u64);
    LayerCost {
        name: String::new(),
        params: 0,
        macs: 0,
        mem_access_exact: mem,
        mem_access_approx: mem,
    }
}

pub fn cbam_cost(h: usize, w: usize, spec: &CbamSpec) -> LayerCost {
    let (hw, c, hid, k2) = (
        (h * w) as u64,
        spec.channels as u64,
        spec.hidden() as u64,
        (spec.spatial_kernel * spec.spatial_kernel) as u64,
    );
    let (mlp_params, mlp_macs) = match spec.channel_mlp {
        ChannelMlp::Prose => (2 * c * hid + hid + c, 2 * c * hid),
        ChannelMlp::Literal => (2 * c * c + 2 * c, 4 * c * c),
    };
    let gating = match spec.composition {
        Composition::Sequential => 2 * hw * c,
        Composition::Literal => 3 * hw * c,
    };
    let params = mlp_params + 2 * k2 + 1;
    let features = 2 * hw * c;
    LayerCost {
        name: String::new(),
        params,
        macs: mlp_macs + hw * 2 * k2 + gating,
        mem_access_exact: features + params,
        mem_access_approx: features,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv {
        name: String,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        activation: Option<Activation>,
    },
    /// Stand-alone partial convolution; `c_p` from the net's fraction.
    Pconv { name: String, kernel: usize },
    /// PConv plus two pointwise convs with a residual; `c_p` from the net's fraction.
    Fasternet {
        name: String,
        kernel: usize,
        expansion: f64,
        activation: Activation,
    },
    Spp { name: String, windows: Vec<usize> },
    Cbam {
        name: String,
        reduction: usize,
        spatial_kernel: usize,
        composition: Composition,
        channel_mlp: ChannelMlp,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &str {
        match self {
            LayerSpec::Conv { name, .. }
            | LayerSpec::Pconv { name, .. }
            | LayerSpec::Fasternet { name, .. }
            | LayerSpec::Spp { name, .. }
            | LayerSpec::Cbam { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    /// `(channels, height, width)`.
    pub input: (usize, usize, usize),
    /// Fraction of channels convolved by partial convolutions (1.0 = full conv twin).
    pub cp_fraction: f64,
    pub layers: Vec<LayerSpec>,
}

/// One cost row with the shape that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedLayer {
    pub cost: LayerCost,
    pub input: (usize, usize, usize),
    pub output: (usize, usize, usize),
}

impl NetSpec {
    pub fn with_cp_fraction(&self, cp_fraction: f64) -> NetSpec {
        NetSpec {
            cp_fraction,
            ..self.clone()
        }
    }

    /// Expands composite layers (FasterNet → pconv, pw1, pw2) and propagates
    /// shapes. Errors name the offending layer.
    pub fn resolve(&self) -> Result<Vec<ResolvedLayer>> {
        let (mut c, mut h, mut w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config(format!("net input {:?} has a zero dimension", self.input)));
        }
        let mut rows = Vec::new();
        let wrap = |name: &str, e: Error| Error::Config(format!("layer {name:?}: {e}"));
        for layer in &self.layers {
            let name = layer.name();
            match layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    bias,
                    ..
                } => {
                    let g = ConvGeometry {
                        h,
                        w,
                        c_in: c,
                        c_out: *out_channels,
                        kernel: *kernel,
                        stride: *stride,
                        padding: *padding,
                        bias: *bias,
                    };
                    if *out_channels == 0 || *kernel == 0 || *stride == 0 {
                        return Err(wrap(name, Error::Config("zero channels, kernel or stride".into())));
                    }
                    let cost = g.cost().map_err(|e| wrap(name, e))?;
                    let ho = conv_out_size(h, *kernel, *padding, *stride).map_err(|e| wrap(name, e))?;
                    let wo = conv_out_size(w, *kernel, *padding, *stride).map_err(|e| wrap(name, e))?;
                    rows.push(ResolvedLayer {
                        cost: cost.named(name),
                        input: (c, h, w),
                        output: (*out_channels, ho, wo),
                    });
                    (c, h, w) = (*out_channels, ho, wo);
                }
                LayerSpec::Pconv { kernel, .. } => {
                    let p = PConvSpec::with_fraction(c, self.cp_fraction, *kernel).map_err(|e| wrap(name, e))?;
                    rows.push(ResolvedLayer {
                        cost: pconv_cost(h, w, c, p.conv_channels, *kernel).named(name),
                        input: (c, h, w),
                        output: (c, h, w),
                    });
                }
                LayerSpec::Fasternet {
                    kernel,
                    expansion,
                    activation,
                    ..
                } => {
                    let p = PConvSpec::with_fraction(c, self.cp_fraction, *kernel).map_err(|e| wrap(name, e))?;
                    let spec = FasterNetBlockSpec {
                        channels: c,
                        pconv: p,
                        expansion: *expansion,
                        activation: *activation,
                    };
                    spec.validate().map_err(|e| wrap(name, e))?;
                    let hid = spec.hidden();
                    let pw = |ci, co| ConvGeometry {
                        h,
                        w,
                        c_in: ci,
                        c_out: co,
                        kernel: 1,
                        stride: 1,
                        padding: 0,
                        bias: true,
                    };
                    let shape = (c, h, w);
                    rows.push(ResolvedLayer {
                        cost: pconv_cost(h, w, c, p.conv_channels, *kernel).named(&format!("{name}.pconv")),
                        input: shape,
                        output: shape,
                    });
                    rows.push(ResolvedLayer {
                        cost: pw(c, hid).cost()?.named(&format!("{name}.pw1")),
                        input: shape,
                        output: (hid, h, w),
                    });
                    rows.push(ResolvedLayer {
                        cost: pw(hid, c).cost()?.named(&format!("{name}.pw2")),
                        input: (hid, h, w),
                        output: shape,
                    });
                }
                LayerSpec::Spp { windows, .. } => {
                    if let Some(bad) = windows.iter().find(|&&k| k % 2 == 0) {
                        return Err(wrap(name, Error::Config(format!("spp window {bad} must be odd"))));
                    }
                    let out_c = c * (1 + windows.len());
                    rows.push(ResolvedLayer {
                        cost: spp_cost(h, w, c, windows.len()).named(name),
                        input: (c, h, w),
                        output: (out_c, h, w),
                    });
                    c = out_c;
                }
                LayerSpec::Cbam {
                    reduction,
                    spatial_kernel,
                    composition,
                    channel_mlp,
                    ..
                } => {
                    let spec = CbamSpec {
                        channels: c,
                        reduction: *reduction,
                        spatial_kernel: *spatial_kernel,
                        composition: *composition,
                        channel_mlp: *channel_mlp,
                    };
                    spec.validate().map_err(|e| wrap(name, e))?;
                    rows.push(ResolvedLayer {
                        cost: cbam_cost(h, w, &spec).named(name),
                        input: (c, h, w),
                        output: (c, h, w),
                    });
                }
            }
        }
        Ok(rows)
    }

    /// Parses the flat `key = value` net description.
    ///
    /// ```text
    /// input = 3x64x64
    /// cp_fraction = 0.25
    /// layer = conv stem out=16 k=3 s=2 p=1
    /// layer = fasternet block0 k=3 expansion=2 act=mish
    /// layer = spp spp windows=3,5
    /// layer = cbam attn reduction=4 spatial_kernel=1 mlp=prose composition=sequential
    /// ```
    pub fn parse(text: &str) -> Result<NetSpec> {
        let mut input = None;
        let mut cp_fraction = 1.0;
        let mut layers = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "input" => {
                    let dims: Vec<usize> = value
                        .split('x')
                        .map(|d| d.trim().parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| perr(format!("bad input dims {value:?}: {e}")))?;
                    if dims.len() != 3 {
                        return Err(perr(format!("input must be CxHxW, got {value:?}")));
                    }
                    input = Some((dims[0], dims[1], dims[2]));
                }
                "cp_fraction" => {
                    cp_fraction = value
                        .parse()
                        .map_err(|e| perr(format!("bad cp_fraction {value:?}: {e}")))?;
                }
                "layer" => layers.push(parse_layer(value).map_err(perr)?),
                other => return Err(perr(format!("unknown key {other:?}"))),
            }
        }
        let input = input.ok_or(Error::Parse {
            line: text.lines().count().max(1),
            msg: "missing `input = CxHxW`".into(),
        })?;
        Ok(NetSpec {
            input,
            cp_fraction,
            layers,
        })
    }
}

fn parse_layer(value: &str) -> std::result::Result<LayerSpec, String> {
    let mut tokens = value.split_whitespace();
    let kind = tokens.next().ok_or("empty layer description")?;
    let name = tokens.next().ok_or("layer needs a name")?.to_string();
    let mut opts = std::collections::BTreeMap::new();
    for tok in tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| format!("expected option=value, got {tok:?}"))?;
        opts.insert(k.to_string(), v.to_string());
    }
    let mut take = |key: &str| opts.remove(key);
    fn num<T: std::str::FromStr>(key: &str, v: Option<String>, default: Option<T>) -> std::result::Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        match v {
            Some(s) => s.parse().map_err(|e| format!("bad {key}={s:?}: {e}")),
            None => default.ok_or_else(|| format!("missing required option {key}")),
        }
    }
    let spec = match kind {
        "conv" => {
            let kernel: usize = num("k", take("k"), Some(3))?;
            LayerSpec::Conv {
                out_channels: num("out", take("out"), None)?,
                stride: num("s", take("s"), Some(1))?,
                padding: num("p", take("p"), Some(kernel.saturating_sub(1) / 2))?,
                bias: num("bias", take("bias"), Some(true))?,
                activation: take("act").map(|a| a.parse()).transpose()?,
                kernel,
                name,
            }
        }
        "pconv" => LayerSpec::Pconv {
            kernel: num("k", take("k"), Some(3))?,
            name,
        },
        "fasternet" => LayerSpec::Fasternet {
            kernel: num("k", take("k"), Some(3))?,
            expansion: num("expansion", take("expansion"), Some(2.0))?,
            activation: num("act", take("act"), Some(Activation::Mish))?,
            name,
        },
        "spp" => {
            let windows = match take("windows") {
                Some(s) if !s.is_empty() => s
                    .split(',')
                    .map(|w| w.parse::<usize>().map_err(|e| format!("bad window {w:?}: {e}")))
                    .collect::<std::result::Result<_, _>>()?,
                _ => Vec::new(),
            };
            LayerSpec::Spp { name, windows }
        }
        "cbam" => LayerSpec::Cbam {
            reduction: num("reduction", take("reduction"), Some(4))?,
            spatial_kernel: num("spatial_kernel", take("spatial_kernel"), Some(1))?,
            composition: num("composition", take("composition"), Some(Composition::Sequential))?,
            channel_mlp: num("mlp", take("mlp"), Some(ChannelMlp::Prose))?,
            name,
        },
        other => return Err(format!("unknown layer kind {other:?}")),
    };
    if let Some(k) = opts.keys().next() {
        return Err(format!("unknown option {k:?} for {kind} layer"));
    }
    Ok(spec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub layers: Vec<LayerCost>,
    pub totals: LayerCost,
    pub bytes_per_element: u64,
    pub model_size_bytes: u64,
}

impl CostReport {
    pub fn new(layers: Vec<LayerCost>, bytes_per_element: u64) -> Self {
        let mut totals = LayerCost::zero("total");
        for l in &layers {
            totals.params += l.params;
            totals.macs += l.macs;
            totals.mem_access_exact += l.mem_access_exact;
            totals.mem_access_approx += l.mem_access_approx;
        }
        CostReport {
            model_size_bytes: totals.params * bytes_per_element,
            layers,
            totals,
            bytes_per_element,
        }
    }

    pub fn model_size_mb(&self) -> f64 {
        self.model_size_bytes as f64 / (1024.0 * 1024.0)
    }

    /// Re-derives totals from the rows.
    pub fn verify(&self) -> Result<()> {
        let again = CostReport::new(self.layers.clone(), self.bytes_per_element);
        if again.totals != self.totals || again.model_size_bytes != self.model_size_bytes {
            return Err(Error::Invalid("cost report totals do not match layer sums".into()));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,params,macs,mem_exact,mem_approx\n");
        for l in self.layers.iter().chain(std::iter::once(&self.totals)) {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                l.name, l.params, l.macs, l.mem_access_exact, l.mem_access_approx
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<18} {:>10} {:>12} {:>12} {:>12}\n",
            "layer", "params", "macs", "mem_exact", "mem_approx"
        );
        for l in self.layers.iter().chain(std::iter::once(&self.totals)) {
            let _ = writeln!(
                s,
                "{:<18} {:>10} {:>12} {:>12} {:>12}",
                l.name, l.params, l.macs, l.mem_access_exact, l.mem_access_approx
            );
        }
        let _ = writeln!(s, "model size: {} bytes ({:.4} MB)", self.model_size_bytes, self.model_size_mb());
        s
    }
}

/// Per-layer cost report for a net description.
pub fn model_cost(net: &NetSpec, bytes_per_element: u64) -> Result<CostReport> {
    let rows = net.resolve()?;
    Ok(CostReport::new(rows.into_iter().map(|r| r.cost).collect(), bytes_per_element))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub layer: String,
    pub pconv: LayerCost,
    pub full: LayerCost,
    /// `pconv.mem_access_approx / full.mem_access_approx`.
    pub mem_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostComparison {
    pub cp_fraction: f64,
    pub pconv: CostReport,
    pub full: CostReport,
    pub rows: Vec<ComparisonRow>,
}

/// Compares a net at `cp_fraction` against its full-convolution twin.
pub fn compare_variants(net: &NetSpec, cp_fraction: f64, bytes_per_element: u64) -> Result<CostComparison> {
    let pconv = model_cost(&net.with_cp_fraction(cp_fraction), bytes_per_element)?;
    let full = model_cost(&net.with_cp_fraction(1.0), bytes_per_element)?;
    let rows = pconv
        .layers
        .iter()
        .zip(&full.layers)
        .map(|(p, f)| ComparisonRow {
            layer: p.name.clone(),
            pconv: p.clone(),
            full: f.clone(),
            mem_ratio: if f.mem_access_approx == 0 {
                1.0
            } else {
                p.mem_access_approx as f64 / f.mem_access_approx as f64
            },
        })
        .collect();
    Ok(CostComparison {
        cp_fraction,
        pconv,
        full,
        rows,
    })
}

impl CostComparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "layer,params,macs,mem_exact,mem_approx,full_params,full_macs,full_mem_exact,full_mem_approx,mem_ratio\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.layer,
                r.pconv.params,
                r.pconv.macs,
                r.pconv.mem_access_exact,
                r.pconv.mem_access_approx,
                r.full.params,
                r.full.macs,
                r.full.mem_access_exact,
                r.full.mem_access_approx,
                r.mem_ratio
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<18} {:>10} {:>12} {:>12} | {:>10} {:>12} {:>12} | {:>9}\n",
            "layer", "params", "macs", "mem_approx", "full_par", "full_macs", "full_mem", "mem_ratio"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<18} {:>10} {:>12} {:>12} | {:>10} {:>12} {:>12} | {:>9.4}",
                r.layer,
                r.pconv.params,
                r.pconv.macs,
                r.pconv.mem_access_approx,
                r.full.params,
                r.full.macs,
                r.full.mem_access_approx,
                r.mem_ratio
            );
        }
        let (p, f) = (&self.pconv.totals, &self.full.totals);
        let _ = writeln!(
            s,
            "{:<18} {:>10} {:>12} {:>12} | {:>10} {:>12} {:>12} | {:>9.4}",
            "total",
            p.params,
            p.macs,
            p.mem_access_approx,
            f.params,
            f.macs,
            f.mem_access_approx,
            p.mem_access_approx as f64 / f.mem_access_approx.max(1) as f64
        );
        let _ = writeln!(
            s,
            "model size: {:.4} MB (pconv, cp_fraction={}) vs {:.4} MB (full conv)",
            self.pconv.model_size_mb(),
            self.cp_fraction,
            self.full.model_size_mb()
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_cost_examples() {
        let c = conv_cost(16, 16, 64, 64, 3);
        assert_eq!(c.mem_access_exact, 16 * 16 * 128 + 9 * 4096);
        assert_eq!(c.mem_access_exact, 69632);
        assert_eq!(conv_cost(1, 1, 1, 1, 1).macs, 1);
    }

    #[test]
    fn pconv_cost_examples() {
        let c = pconv_cost(16, 16, 64, 16, 3);
        assert_eq!(c.mem_access_exact, 10496);
        assert_eq!(c.mem_access_approx, 8192);
        let full = conv_cost(16, 16, 64, 64, 3);
        assert_eq!(c.mem_access_approx * 4, full.mem_access_approx);
    }

    #[test]
    fn degenerate_pconv_matches_square_conv() {
        let p = pconv_cost(9, 7, 12, 12, 3);
        let g = ConvGeometry {
            h: 9,
            w: 7,
            c_in: 12,
            c_out: 12,
            kernel: 3,
            stride: 1,
            padding: 1,
            bias: false,
        }
        .cost()
        .unwrap();
        assert_eq!(p, g);
    }

    #[test]
    fn empty_net_is_all_zero() {
        let net = NetSpec::parse("input = 3x8x8\n").unwrap();
        let r = model_cost(&net, 4).unwrap();
        assert!(r.layers.is_empty());
        assert_eq!(r.totals, LayerCost::zero("total"));
        assert_eq!(r.model_size_bytes, 0);
    }

    #[test]
    fn single_conv_net_equals_conv_cost() {
        let net = NetSpec::parse("input = 5x12x12\nlayer = conv c1 out=7 k=3\n").unwrap();
        let r = model_cost(&net, 4).unwrap();
        let want = conv_cost(12, 12, 5, 7, 3);
        assert_eq!(r.totals.params, want.params);
        assert_eq!(r.totals.macs, want.macs);
        assert_eq!(r.totals.mem_access_exact, want.mem_access_exact);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = NetSpec::parse("input = 3x8x8\n\nlayer = conv c1 k=3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = NetSpec::parse("input = 3x8x8\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = NetSpec::parse("input = 3x8x8\nlayer = spp s windows=3 extra=1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = NetSpec::parse("layer = spp s\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn invalid_layer_error_names_layer() {
        let net = NetSpec::parse("input = 3x4x4\nlayer = conv big out=2 k=9 p=0\n").unwrap();
        let err = model_cost(&net, 4).unwrap_err().to_string();
        assert!(err.contains("\"big\""), "{err}");
    }
}
