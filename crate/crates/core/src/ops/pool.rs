//! Global pooling, per-position channel statistics, and spatial pyramid pooling.

use crate::error::{config, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Avg,
    Max,
}

/// Per-channel mean or max over all spatial positions, shape `(n, c, 1, 1)`.
pub fn global_pool(input: &Tensor, kind: PoolKind) -> Result<Tensor> {
    let [n, c, h, w] = input.shape();
    if h * w == 0 {
        return config("global_pool over empty spatial extent");
    }
    let mut out = Vec::with_capacity(n * c);
    for b in 0..n {
        for ch in 0..c {
            let p = input.plane(b, ch);
            out.push(match kind {
                PoolKind::Avg => p.iter().sum::<f64>() / p.len() as f64,
                PoolKind::Max => p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    Tensor::raw([n, c, 1, 1], out).checked_output("global_pool")
}

pub fn global_pool_backward(input: &Tensor, kind: PoolKind, upstream: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = input.shape();
    if h * w == 0 {
        return config("global_pool over empty spatial extent");
    }
    upstream.expect_shape([n, c, 1, 1], "global_pool upstream")?;
    let mut g = Tensor::zeros(input.shape());
    for b in 0..n {
        for ch in 0..c {
            let u = upstream.at([b, ch, 0, 0]);
            match kind {
                PoolKind::Avg => {
                    let v = u / (h * w) as f64;
                    g.plane_mut(b, ch).fill(v);
                }
                PoolKind::Max => {
                    let arg = argmax(input.plane(b, ch));
                    g.plane_mut(b, ch)[arg] = u;
                }
            }
        }
    }
    Ok(g)
}

/// First index of the maximum.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Channel 0: per-position max over channels; channel 1: per-position mean.
pub fn spatial_stats(input: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = input.shape();
    if c == 0 {
        return config("spatial_stats needs at least one channel");
    }
    let hw = h * w;
    let mut out = Tensor::zeros([n, 2, h, w]);
    for b in 0..n {
        let mut maxes = input.plane(b, 0).to_vec();
        let mut sums = maxes.clone();
        for ch in 1..c {
            for (i, &x) in input.plane(b, ch).iter().enumerate() {
                if x > maxes[i] {
                    maxes[i] = x;
                }
                sums[i] += x;
            }
        }
        out.plane_mut(b, 0).copy_from_slice(&maxes);
        let mean = out.plane_mut(b, 1);
        for i in 0..hw {
            mean[i] = sums[i] / c as f64;
        }
    }
    out.checked_output("spatial_stats")
}

pub fn spatial_stats_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = input.shape();
    upstream.expect_shape([n, 2, h, w], "spatial_stats upstream")?;
    let hw = h * w;
    let mut g = Tensor::zeros(input.shape());
    for b in 0..n {
        let gmax = upstream.plane(b, 0);
        let gmean = upstream.plane(b, 1);
        let mut arg = vec![0usize; hw];
        let mut best = input.plane(b, 0).to_vec();
        for ch in 1..c {
            for (i, &x) in input.plane(b, ch).iter().enumerate() {
                if x > best[i] {
                    best[i] = x;
                    arg[i] = ch;
                }
            }
        }
        for ch in 0..c {
            let gp = g.plane_mut(b, ch);
            for i in 0..hw {
                gp[i] = gmean[i] / c as f64 + if arg[i] == ch { gmax[i] } else { 0.0 };
            }
        }
    }
    Ok(g)
}

fn check_windows(windows: &[usize]) -> Result<()> {
    for &w in windows {
        if w == 0 || w % 2 == 0 {
            return config(format!("spp window {w} must be odd and >= 1"));
        }
    }
    Ok(())
}

/// Stride-1 max pool with `(win-1)/2` padding; padded cells never win.
/// Returns the pooled plane and the flat source index of each maximum.
fn max_pool_same(plane: &[f64], h: usize, w: usize, win: usize) -> (Vec<f64>, Vec<usize>) {
    let r = (win / 2) as isize;
    let mut out = vec![0.0; h * w];
    let mut arg = vec![0usize; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut best = f64::NEG_INFINITY;
            let mut besti = 0;
            for yy in (y - r).max(0)..=(y + r).min(h as isize - 1) {
                for xx in (x - r).max(0)..=(x + r).min(w as isize - 1) {
                    let i = yy as usize * w + xx as usize;
                    if plane[i] > best {
                        best = plane[i];
                        besti = i;
                    }
                }
            }
            let o = y as usize * w + x as usize;
            out[o] = best;
            arg[o] = besti;
        }
    }
    (out, arg)
}

/// Concatenates the input with one shape-preserving max pool per window.
pub fn spp(input: &Tensor, windows: &[usize]) -> Result<Tensor> {
    check_windows(windows)?;
    let [n, c, h, w] = input.shape();
    let mut out = Tensor::zeros([n, c * (1 + windows.len()), h, w]);
    for b in 0..n {
        for ch in 0..c {
            out.plane_mut(b, ch).copy_from_slice(input.plane(b, ch));
            for (wi, &win) in windows.iter().enumerate() {
                let (pooled, _) = max_pool_same(input.plane(b, ch), h, w, win);
                out.plane_mut(b, (wi + 1) * c + ch).copy_from_slice(&pooled);
            }
        }
    }
    out.checked_output("spp")
}

pub fn spp_backward(input: &Tensor, windows: &[usize], upstream: &Tensor) -> Result<Tensor> {
    check_windows(windows)?;
    let [n, c, h, w] = input.shape();
    upstream.expect_shape([n, c * (1 + windows.len()), h, w], "spp upstream")?;
    let mut g = Tensor::zeros(input.shape());
    for b in 0..n {
        for ch in 0..c {
            let mut acc = upstream.plane(b, ch).to_vec();
            for (wi, &win) in windows.iter().enumerate() {
                let (_, arg) = max_pool_same(input.plane(b, ch), h, w, win);
                let up = upstream.plane(b, (wi + 1) * c + ch);
                for (o, &src) in arg.iter().enumerate() {
                    acc[src] += up[o];
                }
            }
            g.plane_mut(b, ch).copy_from_slice(&acc);
        }
    }
    Ok(g)
}
