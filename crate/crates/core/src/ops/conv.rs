//! Zero-padded 2-D convolution, forward and backward.

use crate::error::{config, Result};
use crate::tensor::{count_macs, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    /// Stride 1 with `(k - 1) / 2` padding, so odd kernels preserve spatial size.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding: (kernel.saturating_sub(1)) / 2,
        }
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.kernel == 0 || self.stride == 0 {
            return config(format!("degenerate conv spec {self:?}"));
        }
        Ok(())
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((
            conv_out_size(h, self.kernel, self.padding, self.stride)?,
            conv_out_size(w, self.kernel, self.padding, self.stride)?,
        ))
    }
}

/// `floor((in - k + 2p) / s) + 1`, rejecting results below 1.
pub fn conv_out_size(in_size: usize, k: usize, p: usize, s: usize) -> Result<usize> {
    if s == 0 {
        return config("stride must be >= 1");
    }
    let span = in_size as i64 + 2 * p as i64 - k as i64;
    if span < 0 {
        return config(format!(
            "convolution output size < 1 (in={in_size}, k={k}, p={p}, s={s})"
        ));
    }
    Ok((span / s as i64) as usize + 1)
}

/// Range of output positions `o` for which `o*s + tap - p` lands inside `[0, len)`.
#[inline]
fn valid_range(out_len: usize, len: usize, tap: usize, s: usize, p: usize) -> (usize, usize) {
    // need o*s >= p - tap and o*s + tap - p <= len - 1
    let lo = if p > tap { (p - tap).div_ceil(s) } else { 0 };
    let hi_num = len as i64 - 1 + p as i64 - tap as i64;
    if hi_num < 0 {
        return (0, 0);
    }
    let hi = ((hi_num as usize) / s + 1).min(out_len);
    (lo.min(hi), hi)
}

fn check_args(input: &Tensor, weights: &Tensor, bias_len: usize, spec: &ConvSpec) -> Result<(usize, usize)> {
    spec.validate()?;
    if input.c() != spec.in_channels {
        return config(format!(
            "conv input has {} channels, spec expects {}",
            input.c(),
            spec.in_channels
        ));
    }
    weights.expect_shape(spec.weight_shape(), "conv weights")?;
    if bias_len != spec.out_channels {
        return config(format!(
            "conv bias length {bias_len}, expected {}",
            spec.out_channels
        ));
    }
    spec.output_hw(input.h(), input.w())
}

pub fn conv2d_forward(input: &Tensor, weights: &Tensor, bias: &[f64], spec: &ConvSpec) -> Result<Tensor> {
    let (ho, wo) = check_args(input, weights, bias.len(), spec)?;
    let [n, ci, h, w] = input.shape();
    let (co, k, s, p) = (spec.out_channels, spec.kernel, spec.stride, spec.padding);
    let mut out = Tensor::zeros([n, co, ho, wo]);
    let wd = weights.data();
    let mut macs = 0u64;
    for b in 0..n {
        for oc in 0..co {
            let plane = out.plane_mut(b, oc);
            plane.fill(bias[oc]);
            for ic in 0..ci {
                let inp = input.plane(b, ic);
                for ky in 0..k {
                    let (oy0, oy1) = valid_range(ho, h, ky, s, p);
                    for kx in 0..k {
                        macs += (ho * wo) as u64;
                        let wv = wd[((oc * ci + ic) * k + ky) * k + kx];
                        let (ox0, ox1) = valid_range(wo, w, kx, s, p);
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - p;
                            let row_in = &inp[iy * w..(iy + 1) * w];
                            let row_out = &mut plane[oy * wo..(oy + 1) * wo];
                            for ox in ox0..ox1 {
                                row_out[ox] += wv * row_in[ox * s + kx - p];
                            }
                        }
                    }
                }
            }
        }
    }
    count_macs(macs);
    out.checked_output("conv2d_forward")
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

/// Gradients of `<upstream, conv2d_forward(input, weights, bias)>`.
pub fn conv2d_backward(input: &Tensor, weights: &Tensor, spec: &ConvSpec, upstream: &Tensor) -> Result<ConvGrads> {
    let (ho, wo) = check_args(input, weights, spec.out_channels, spec)?;
    let [n, ci, h, w] = input.shape();
    let (co, k, s, p) = (spec.out_channels, spec.kernel, spec.stride, spec.padding);
    upstream.expect_shape([n, co, ho, wo], "conv upstream gradient")?;

    let mut g_in = Tensor::zeros(input.shape());
    let mut g_w = Tensor::zeros(weights.shape());
    let mut g_b = vec![0.0; co];
    let wd = weights.data();
    for b in 0..n {
        for oc in 0..co {
            let up = upstream.plane(b, oc);
            g_b[oc] += up.iter().sum::<f64>();
            for ic in 0..ci {
                let inp = input.plane(b, ic);
                for ky in 0..k {
                    let (oy0, oy1) = valid_range(ho, h, ky, s, p);
                    for kx in 0..k {
                        let widx = ((oc * ci + ic) * k + ky) * k + kx;
                        let wv = wd[widx];
                        let (ox0, ox1) = valid_range(wo, w, kx, s, p);
                        let mut acc = 0.0;
                        let gin = g_in.plane_mut(b, ic);
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - p;
                            for ox in ox0..ox1 {
                                let ix = ox * s + kx - p;
                                let u = up[oy * wo + ox];
                                acc += u * inp[iy * w + ix];
                                gin[iy * w + ix] += wv * u;
                            }
                        }
                        g_w.data_mut()[widx] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: g_in.checked_output("conv2d_backward")?,
        weights: g_w.checked_output("conv2d_backward")?,
        bias: g_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{mac_count, reset_mac_count};

    #[test]
    fn out_size_examples() {
        assert_eq!(conv_out_size(32, 3, 1, 1).unwrap(), 32);
        assert_eq!(conv_out_size(224, 7, 3, 2).unwrap(), 112);
        assert_eq!(conv_out_size(5, 2, 0, 2).unwrap(), 2); // floor
        assert!(conv_out_size(2, 5, 1, 1).is_err());
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let input = Tensor::from_fn([1, 1, 4, 4], |[_, _, h, w]| (h * 4 + w) as f64);
        let mut k = Tensor::zeros([1, 1, 3, 3]);
        k.set([0, 0, 1, 1], 1.0);
        let out = conv2d_forward(&input, &k, &[0.0], &ConvSpec::same(1, 1, 3)).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn shape_mismatches_are_config_errors() {
        let input = Tensor::zeros([1, 2, 4, 4]);
        let k = Tensor::zeros([1, 1, 3, 3]);
        assert!(conv2d_forward(&input, &k, &[0.0], &ConvSpec::same(1, 1, 3)).is_err());
        let k = Tensor::zeros([1, 2, 3, 3]);
        assert!(conv2d_forward(&input, &k, &[0.0, 1.0], &ConvSpec::same(2, 1, 3)).is_err());
        let spec = ConvSpec { in_channels: 2, out_channels: 1, kernel: 7, stride: 1, padding: 0 };
        let k = Tensor::zeros([1, 2, 7, 7]);
        assert!(conv2d_forward(&input, &k, &[0.0], &spec).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let input = Tensor::from_fn([1, 2, 5, 5], |[_, c, h, w]| (c + h * w) as f64 * 0.1);
        let k = Tensor::full([3, 2, 3, 3], 0.3);
        let spec = ConvSpec { in_channels: 2, out_channels: 3, kernel: 3, stride: 2, padding: 1 };
        let up = Tensor::zeros([1, 3, 3, 3]);
        let g = conv2d_backward(&input, &k, &spec, &up).unwrap();
        assert!(g.input.data().iter().all(|&x| x == 0.0));
        assert!(g.weights.data().iter().all(|&x| x == 0.0));
        assert!(g.bias.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn scalar_case_chain_rule() {
        let input = Tensor::full([1, 1, 1, 1], 3.0);
        let k = Tensor::full([1, 1, 1, 1], -2.0);
        let spec = ConvSpec::same(1, 1, 1);
        let up = Tensor::full([1, 1, 1, 1], 0.5);
        let g = conv2d_backward(&input, &k, &spec, &up).unwrap();
        assert_eq!(g.weights.data(), &[1.5]);
        assert_eq!(g.input.data(), &[-1.0]);
        assert_eq!(g.bias, vec![0.5]);
    }

    #[test]
    fn mac_instrumentation_counts_every_tap() {
        let input = Tensor::zeros([2, 3, 7, 6]);
        let spec = ConvSpec { in_channels: 3, out_channels: 4, kernel: 3, stride: 2, padding: 1 };
        let k = Tensor::zeros(spec.weight_shape());
        reset_mac_count();
        let out = conv2d_forward(&input, &k, &[0.0; 4], &spec).unwrap();
        assert_eq!(mac_count(), (2 * 4 * 3 * 9 * out.h() * out.w()) as u64);
    }
}
