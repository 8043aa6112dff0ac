//! Independent reference implementations checked against the library.

use detkit::blocks::*;
use detkit::cost::{pconv_cost, ConvGeometry};
use detkit::losses::*;
use detkit::ops::*;
use detkit::postprocess::*;
use detkit::tensor::{mac_count, reset_mac_count};
use detkit::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::*;

#[test]
fn conv_matches_sliding_window_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // the documented fixed case first
    let x = rand_tensor(&mut rng, [2, 3, 8, 8]);
    let w = rand_tensor(&mut rng, [4, 3, 3, 3]);
    let b = vec![0.1, -0.2, 0.3, 0.0];
    let spec = ConvSpec {
        in_channels: 3,
        out_channels: 4,
        kernel: 3,
        stride: 2,
        padding: 1,
    };
    let got = conv2d_forward(&x, &w, &b, &spec).unwrap();
    assert!(got.max_abs_diff(&naive_conv(&x, &w, &b, 2, 1)) <= 1e-10);

    for _ in 0..50 {
        let k = rng.random_range(1..=5);
        let spec = ConvSpec {
            in_channels: rng.random_range(1..=4),
            out_channels: rng.random_range(1..=4),
            kernel: k,
            stride: rng.random_range(1..=3),
            padding: rng.random_range(0..=k),
        };
        let h = rng.random_range(k.saturating_sub(2 * spec.padding).max(1)..12);
        let wd = rng.random_range(k.saturating_sub(2 * spec.padding).max(1)..12);
        let batch = rng.random_range(1..=2);
        let x = rand_tensor(&mut rng, [batch, spec.in_channels, h, wd]);
        let w = rand_tensor(&mut rng, spec.weight_shape());
        let b: Vec<f64> = (0..spec.out_channels).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = conv2d_forward(&x, &w, &b, &spec).unwrap();
        let want = naive_conv(&x, &w, &b, spec.stride, spec.padding);
        assert_eq!(got.shape(), want.shape());
        assert!(got.max_abs_diff(&want) <= 1e-10, "{spec:?}");
    }
}

#[test]
fn conv_output_size_matches_execution() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut executed = 0;
    for _ in 0..400 {
        let (inp, k, p, s) = (
            rng.random_range(1..20),
            rng.random_range(1..8),
            rng.random_range(0..4),
            rng.random_range(1..4),
        );
        let law = conv_out_size(inp, k, p, s);
        let valid = inp as i64 + 2 * p as i64 - k as i64 >= 0;
        assert_eq!(law.is_ok(), valid);
        let Ok(out) = law else { continue };
        assert_eq!(out, (inp + 2 * p - k) / s + 1);
        let spec = ConvSpec {
            in_channels: 1,
            out_channels: 1,
            kernel: k,
            stride: s,
            padding: p,
        };
        let y = conv2d_forward(&Tensor::zeros([1, 1, inp, inp]), &Tensor::zeros([1, 1, k, k]), &[0.0], &spec).unwrap();
        assert_eq!((y.h(), y.w()), (out, out));
        executed += 1;
    }
    assert!(executed > 100);
}

#[test]
fn pconv_convolved_channels_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let spec = PConvSpec::new(8, 2, 3).unwrap();
    let x = rand_tensor(&mut rng, [1, 8, 6, 7]);
    let w = rand_tensor(&mut rng, spec.weight_shape());
    let y = pconv_forward(&x, &w, &spec).unwrap();
    let want = naive_conv(&x.narrow_channels(0, 2).unwrap(), &w, &[], 1, 1);
    assert!(y.narrow_channels(0, 2).unwrap().max_abs_diff(&want) <= 1e-12);
    assert_eq!(y.narrow_channels(2, 8).unwrap(), x.narrow_channels(2, 8).unwrap());
}

#[test]
fn pooling_matches_scan_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = rand_tensor(&mut rng, [2, 3, 5, 4]);
    let avg = global_pool(&x, PoolKind::Avg).unwrap();
    let max = global_pool(&x, PoolKind::Max).unwrap();
    for b in 0..2 {
        for c in 0..3 {
            let plane = x.plane(b, c);
            let mean = plane.iter().sum::<f64>() / plane.len() as f64;
            let m = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!((avg.at([b, c, 0, 0]) - mean).abs() < 1e-15);
            assert_eq!(max.at([b, c, 0, 0]), m);
        }
    }
    let st = spatial_stats(&x).unwrap();
    for b in 0..2 {
        for y in 0..5 {
            for xx in 0..4 {
                let vals: Vec<f64> = (0..3).map(|c| x.at([b, c, y, xx])).collect();
                assert_eq!(st.at([b, 0, y, xx]), vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
                assert!((st.at([b, 1, y, xx]) - vals.iter().sum::<f64>() / 3.0).abs() < 1e-15);
            }
        }
    }
    let pooled = spp(&x, &[3, 5]).unwrap();
    assert_eq!(pooled.c(), 9);
    for (slot, k) in [(1, 3i64), (2, 5i64)] {
        let r = k / 2;
        for b in 0..2 {
            for c in 0..3 {
                for y in 0..5i64 {
                    for xx in 0..4i64 {
                        let mut m = f64::NEG_INFINITY;
                        for dy in -r..=r {
                            for dx in -r..=r {
                                let (yy, xq) = (y + dy, xx + dx);
                                if (0..5).contains(&yy) && (0..4).contains(&xq) {
                                    m = m.max(x.at([b, c, yy as usize, xq as usize]));
                                }
                            }
                        }
                        assert_eq!(pooled.at([b, slot * 3 + c, y as usize, xx as usize]), m);
                    }
                }
            }
        }
    }
}

#[test]
fn spatial_attention_matches_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let spec = CbamSpec {
        spatial_kernel: 3,
        ..CbamSpec::new(4)
    };
    let x = rand_tensor(&mut rng, [1, 4, 5, 5]);
    let mut p = CbamParams::init(&spec, &mut rng).spatial;
    p.bias[0] = 0.3;
    let (m, f) = spatial_attention(&x, &p, &spec).unwrap();
    let logits = naive_conv(&spatial_stats(&x).unwrap(), &p.weight, &p.bias, 1, 1);
    let want_m = logits.map(sigmoid);
    assert!(m.max_abs_diff(&want_m) < 1e-14);
    let want_f = Tensor::from_fn(x.shape(), |[b, c, y, xx]| x.at([b, c, y, xx]) * want_m.at([b, 0, y, xx]));
    assert!(f.max_abs_diff(&want_f) < 1e-14);
}

#[test]
fn fasternet_matches_chained_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let spec = FasterNetBlockSpec::new(6, PConvSpec::new(6, 2, 3).unwrap());
    let p = FasterNetParams::init(&spec, &mut rng, 1.0);
    let x = rand_tensor(&mut rng, [2, 6, 4, 5]);
    let got = fasternet_block_forward(&x, &p, &spec).unwrap();
    let partial = Tensor::concat_channels(&[
        &naive_conv(&x.narrow_channels(0, 2).unwrap(), &p.pconv, &[], 1, 1),
        &x.narrow_channels(2, 6).unwrap(),
    ])
    .unwrap();
    let hidden = naive_conv(&partial, &p.pw1_weight, &p.pw1_bias, 1, 0).map(mish);
    let want = x.add(&naive_conv(&hidden, &p.pw2_weight, &p.pw2_bias, 1, 0)).unwrap();
    assert!(got.max_abs_diff(&want) < 1e-12);
}

#[test]
fn channel_gate_depends_only_on_pooled_stats_per_channel() {
    // Two inputs with the same per-channel mean and max give the same gate.
    let spec = CbamSpec::new(2);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let p = CbamParams::init(&spec, &mut rng).channel;
    let a = Tensor::from_vec([1, 2, 1, 4], vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 0.5, 0.5]).unwrap();
    let b = Tensor::from_vec([1, 2, 1, 4], vec![4.0, 1.0, 3.0, 2.0, 0.5, 0.0, -1.0, 0.5]).unwrap();
    let (ma, _) = channel_attention(&a, &p, &spec).unwrap();
    let (mb, _) = channel_attention(&b, &p, &spec).unwrap();
    assert_eq!(ma, mb);
}

/// CIoU written in the textbook form with the trade-off weight α spelled out.
fn ciou_oracle(p: &BBox, g: &BBox) -> f64 {
    let iw = (p.x2.min(g.x2) - p.x1.max(g.x1)).max(0.0);
    let ih = (p.y2.min(g.y2) - p.y1.max(g.y1)).max(0.0);
    let inter = iw * ih;
    let union = p.area() + g.area() - inter;
    let iou = if union > 0.0 { inter / union } else { 0.0 };
    let rho2 = ((p.x1 + p.x2) / 2.0 - (g.x1 + g.x2) / 2.0).powi(2) + ((p.y1 + p.y2) / 2.0 - (g.y1 + g.y2) / 2.0).powi(2);
    let cw = p.x2.max(g.x2) - p.x1.min(g.x1);
    let ch = p.y2.max(g.y2) - p.y1.min(g.y1);
    let c2 = cw * cw + ch * ch + EPS;
    let v = 4.0 / std::f64::consts::PI.powi(2) * ((g.width() / g.height()).atan() - (p.width() / p.height()).atan()).powi(2);
    let alpha = v / ((1.0 - iou) + v + EPS);
    1.0 - iou + rho2 / c2 + alpha * v
}

#[test]
fn ciou_matches_textbook_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..500 {
        let g = BBox::from_center(
            rng.random_range(0.0..50.0),
            rng.random_range(0.0..50.0),
            rng.random_range(0.5..20.0),
            rng.random_range(0.5..20.0),
        )
        .unwrap();
        let p = BBox::from_center(
            rng.random_range(0.0..50.0),
            rng.random_range(0.0..50.0),
            rng.random_range(0.5..20.0),
            rng.random_range(0.5..20.0),
        )
        .unwrap();
        let (a, b) = (ciou_loss(&p, &g), ciou_oracle(&p, &g));
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn unit_square_hand_values() {
    let a = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
    let b = BBox::new(0.5, 0.0, 1.5, 1.0).unwrap();
    assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
    // enclosing box 1.5 x 1, D = 3.25, rho^2 = 0.25
    let want = (0.25f64 / 3.25).exp() * (2.0 / 3.0);
    assert!((wiou_loss(&a, &b) - want).abs() < 1e-9);
}

#[test]
fn wiou_gradient_holds_normalizer_fixed() {
    // Finite differences of the full expression (normalizer moving with the
    // prediction) disagree with the returned gradient; freezing it agrees.
    let g = BBox::new(0.0, 0.0, 4.0, 4.0).unwrap();
    let p = BBox::new(1.0, 1.5, 6.0, 5.0).unwrap();
    let (_, grad) = wiou_loss_with_grad(&p, &g);
    let h = 1e-6;
    let full = |q: &BBox| wiou_loss(q, &g);
    let cw = p.x2.max(g.x2) - p.x1.min(g.x1);
    let ch = p.y2.max(g.y2) - p.y1.min(g.y1);
    let d0 = cw * cw + ch * ch + EPS;
    let frozen = |q: &BBox| {
        let (px, py) = q.center();
        let rho2 = (px - 2.0).powi(2) + (py - 2.0).powi(2);
        (rho2 / d0).exp() * (1.0 - iou(q, &g))
    };
    let coord = |q: &BBox, i: usize, d: f64| {
        let mut v = [q.x1, q.y1, q.x2, q.y2];
        v[i] += d;
        BBox::new(v[0], v[1], v[2], v[3]).unwrap()
    };
    let mut full_diff: f64 = 0.0;
    for i in 0..4 {
        let nf = (frozen(&coord(&p, i, h)) - frozen(&coord(&p, i, -h))) / (2.0 * h);
        assert!((nf - grad[i]).abs() < 1e-7, "coordinate {i}");
        let nfull = (full(&coord(&p, i, h)) - full(&coord(&p, i, -h))) / (2.0 * h);
        full_diff = full_diff.max((nfull - grad[i]).abs());
    }
    assert!(full_diff > 1e-4);
}

/// Keep-set defined pairwise: a box survives if no surviving same-class box
/// ahead of it in priority overlaps it beyond the threshold. Evaluated over
/// the full pair matrix.
#[test]
fn nms_matches_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..200 {
        let n = rng.random_range(0..=30);
        let dets = random_dets(&mut rng, n);
        let thr = rng.random_range(0.1..0.9);
        assert_eq!(nms(&dets, thr), nms_oracle(&dets, thr));
    }
    let dets = random_dets(&mut rng, 20);
    assert_eq!(nms(&dets, 0.45), nms_oracle(&dets, 0.45));
}

#[test]
fn encode_decode_round_trip() {
    let spec = GridDecodeSpec::new(8, 8, 8.0, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..500 {
        let b = BBox::from_center(
            rng.random_range(4.0..60.0),
            rng.random_range(4.0..60.0),
            rng.random_range(1.0..8.0),
            rng.random_range(1.0..8.0),
        )
        .unwrap();
        let Ok((r, c, t)) = encode_box(&b, &spec) else { continue };
        let d = decode_box(t, r, c, spec.stride);
        for (x, y) in [(d.x1, b.x1), (d.y1, b.y1), (d.x2, b.x2), (d.y2, b.y2)] {
            assert!((x - y).abs() < 1e-6);
        }
    }
}

#[test]
fn letterbox_box_round_trip_within_a_pixel() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let (h, w) = (rng.random_range(5..90), rng.random_range(5..90));
        let img = Tensor::zeros([1, 3, h, w]);
        let (out, t) = letterbox(&img, 64, 64).unwrap();
        assert_eq!(out.shape(), [1, 3, 64, 64]);
        let b = BBox::new(0.0, 0.0, w as f64 * 0.6, h as f64 * 0.4).unwrap();
        let back = t.to_original(&t.to_letterboxed(&b));
        assert!((back.x2 - b.x2).abs() <= 1.0 && (back.y2 - b.y2).abs() <= 1.0);
    }
}

#[test]
fn detection_loss_two_cell_hand_case() {
    // 1x2 grid, stride 8, one class; target sits in cell 0.
    let spec = GridDecodeSpec::new(1, 2, 8.0, 1);
    let gt = BBox::new(1.0, 2.0, 7.0, 6.0).unwrap();
    // channel-major: tx, ty, tw, th, obj, cls, each over (cell 0, cell 1)
    let pred = Tensor::from_vec(
        [1, 6, 1, 2],
        vec![0.2, 0.0, -0.1, 0.0, 0.3, 0.0, 0.1, 0.0, 1.0, -2.0, 0.5, 0.0],
    )
    .unwrap();
    let t = vec![vec![Target::new(gt, 0, 16.0, 8.0).unwrap()]];
    let l = detection_loss(&pred, &t, &spec, BoxLossKind::Wiou, &LossWeights::default()).unwrap();

    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let bce = |x: f64, y: f64| -(y * sig(x).ln() + (1.0 - y) * (1.0 - sig(x)).ln());
    let (cx, cy) = (sig(0.2) * 8.0, sig(-0.1) * 8.0);
    let (w, h) = (0.3f64.exp() * 8.0, 0.1f64.exp() * 8.0);
    let p = BBox::from_center(cx, cy, w, h).unwrap();
    let rho2 = (cx - 4.0).powi(2) + (cy - 4.0).powi(2);
    let cw = p.x2.max(gt.x2) - p.x1.min(gt.x1);
    let ch = p.y2.max(gt.y2) - p.y1.min(gt.y1);
    let wiou = (rho2 / (cw * cw + ch * ch + EPS)).exp() * (1.0 - iou(&p, &gt));
    let obj = (bce(1.0, 1.0) + bce(-2.0, 0.0)) / 2.0;
    let cls = bce(0.5, 1.0);
    assert!((l.box_loss - wiou).abs() < 1e-12);
    assert!((l.objectness_loss - obj).abs() < 1e-12);
    assert!((l.class_loss - cls).abs() < 1e-12);
    assert!((l.total - (5.0 * wiou + obj + cls)).abs() < 1e-12);
}

#[test]
fn mish_large_input_high_precision() {
    // tanh(softplus(20)) = 1 - 2/(1 + (1+e^20)^2) ~ 1 - 8.5e-18
    assert!((mish(20.0) - 20.0).abs() < 1e-6);
}

#[test]
fn cost_params_equal_constructed_weight_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let k = rng.random_range(1..=5);
        let g = ConvGeometry {
            h: rng.random_range(k..20),
            w: rng.random_range(k..20),
            c_in: rng.random_range(1..10),
            c_out: rng.random_range(1..10),
            kernel: k,
            stride: rng.random_range(1..3),
            padding: rng.random_range(0..=k / 2),
            bias: rng.random_bool(0.5),
        };
        let spec = ConvSpec {
            in_channels: g.c_in,
            out_channels: g.c_out,
            kernel: k,
            stride: g.stride,
            padding: g.padding,
        };
        let weights = Tensor::zeros(spec.weight_shape());
        let bias = if g.bias { g.c_out } else { 0 };
        assert_eq!(g.cost().unwrap().params as usize, weights.len() + bias);
    }
}

#[test]
fn pconv_macs_match_instrumentation() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..30 {
        let c = rng.random_range(1..12);
        let cp = rng.random_range(1..=c);
        let k = [1, 3, 5][rng.random_range(0..3)];
        let (h, w) = (rng.random_range(1..10), rng.random_range(1..10));
        let spec = PConvSpec::new(c, cp, k).unwrap();
        let x = rand_tensor(&mut rng, [1, c, h, w]);
        let wt = rand_tensor(&mut rng, spec.weight_shape());
        reset_mac_count();
        pconv_forward(&x, &wt, &spec).unwrap();
        assert_eq!(mac_count(), pconv_cost(h, w, c, cp, k).macs);
    }
}
