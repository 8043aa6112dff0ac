//! Reference implementations shared by the integration tests.
#![allow(dead_code)]

use detkit::losses::{iou, BBox};
use detkit::postprocess::Detection;
use detkit::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Direct sliding window with explicit bounds checks on every tap.
pub fn naive_conv(x: &Tensor, w: &Tensor, b: &[f64], s: usize, p: usize) -> Tensor {
    let [n, ci, h, wd] = x.shape();
    let [co, _, k, _] = w.shape();
    let ho = (h + 2 * p - k) / s + 1;
    let wo = (wd + 2 * p - k) / s + 1;
    Tensor::from_fn([n, co, ho, wo], |[bn, o, oy, ox]| {
        let mut acc = b.get(o).copied().unwrap_or(0.0);
        for c in 0..ci {
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (oy * s + ky) as i64 - p as i64;
                    let ix = (ox * s + kx) as i64 - p as i64;
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                        acc += x.at([bn, c, iy as usize, ix as usize]) * w.at([o, c, ky, kx]);
                    }
                }
            }
        }
        acc
    })
}

pub fn nms_oracle(dets: &[Detection], thr: f64) -> Vec<Detection> {
    let n = dets.len();
    let ahead = |a: usize, b: usize| {
        let (da, db) = (&dets[a], &dets[b]);
        da.score > db.score
            || (da.score == db.score && (da.class_id < db.class_id || (da.class_id == db.class_id && a < b)))
    };
    let mut overlaps = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            overlaps[i][j] = i != j && dets[i].class_id == dets[j].class_id && iou(&dets[i].bbox, &dets[j].bbox) > thr;
        }
    }
    // rank = number of boxes ahead; decide in rank order
    let mut rank: Vec<usize> = (0..n).collect();
    rank.sort_by_key(|&i| (0..n).filter(|&j| ahead(j, i)).count());
    let mut keep = vec![false; n];
    for &i in &rank {
        keep[i] = !(0..n).any(|j| ahead(j, i) && keep[j] && overlaps[j][i]);
    }
    rank.into_iter().filter(|&i| keep[i]).map(|i| dets[i]).collect()
}

pub fn random_dets(rng: &mut ChaCha8Rng, n: usize) -> Vec<Detection> {
    (0..n)
        .map(|_| {
            let b = BBox::from_center(
                rng.random_range(0.0..40.0),
                rng.random_range(0.0..40.0),
                rng.random_range(1.0..15.0),
                rng.random_range(1.0..15.0),
            )
            .unwrap();
            // coarse scores so ties occur
            let score = (rng.random_range(0..20) as f64) / 20.0;
            Detection::new(b, score, rng.random_range(0..3)).unwrap()
        })
        .collect()
}
