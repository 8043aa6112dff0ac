//! Anchor-free grid decode, class-aware greedy NMS, and letterbox resizing.
//!
//! Head layout per cell: `[tx, ty, tw, th, objectness, class logits...]`.
//! Cell `(i, j)` (row, column) decodes to
//!
//! ```text
//! center = ((j + σ(tx)) · stride, (i + σ(ty)) · stride)
//! size   = (e^tw · stride, e^th · stride)
//! score  = σ(obj) · max_k σ(class_k)
//! ```

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::losses::{iou, BBox};
use crate::ops::sigmoid;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    #[serde(rename = "class")]
    pub class_id: usize,
}

impl Detection {
    pub fn new(bbox: BBox, score: f64, class_id: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Invalid(format!("score {score} outside [0, 1]")));
        }
        Ok(Detection {
            bbox,
            score,
            class_id,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDecodeSpec {
    pub grid_h: usize,
    pub grid_w: usize,
    pub stride: f64,
    pub num_classes: usize,
    pub score_threshold: f64,
}

impl GridDecodeSpec {
    pub fn new(grid_h: usize, grid_w: usize, stride: f64, num_classes: usize) -> Self {
        GridDecodeSpec {
            grid_h,
            grid_w,
            stride,
            num_classes,
            score_threshold: 0.25,
        }
    }

    pub fn channels(&self) -> usize {
        5 + self.num_classes
    }

    pub fn image_width(&self) -> f64 {
        self.grid_w as f64 * self.stride
    }

    pub fn image_height(&self) -> f64 {
        self.grid_h as f64 * self.stride
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_h == 0 || self.grid_w == 0 || !(self.stride > 0.0) {
            return config(format!("invalid decode spec {self:?}"));
        }
        Ok(())
    }

    /// Grid cell `(row, col)` containing a point, clamped to the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let col = ((x / self.stride).floor().max(0.0) as usize).min(self.grid_w - 1);
        let row = ((y / self.stride).floor().max(0.0) as usize).min(self.grid_h - 1);
        (row, col)
    }
}

/// Unclamped box for raw offsets `[tx, ty, tw, th]` at cell `(row, col)`.
pub fn decode_box(t: [f64; 4], row: usize, col: usize, stride: f64) -> BBox {
    let cx = (col as f64 + sigmoid(t[0])) * stride;
    let cy = (row as f64 + sigmoid(t[1])) * stride;
    let w = t[2].exp() * stride;
    let h = t[3].exp() * stride;
    BBox {
        x1: cx - w / 2.0,
        y1: cy - h / 2.0,
        x2: cx + w / 2.0,
        y2: cy + h / 2.0,
    }
}

/// Inverse of [`decode_box`]: the responsible cell and its raw offsets.
pub fn encode_box(bbox: &BBox, spec: &GridDecodeSpec) -> Result<(usize, usize, [f64; 4])> {
    if bbox.is_degenerate() {
        return Err(Error::Invalid("cannot encode a degenerate box".into()));
    }
    let (cx, cy) = bbox.center();
    let (row, col) = spec.cell_of(cx, cy);
    let fx = cx / spec.stride - col as f64;
    let fy = cy / spec.stride - row as f64;
    if !(fx > 0.0 && fx < 1.0 && fy > 0.0 && fy < 1.0) {
        return Err(Error::Invalid(format!(
            "box center ({cx}, {cy}) lies on a cell boundary"
        )));
    }
    let logit = |p: f64| (p / (1.0 - p)).ln();
    Ok((
        row,
        col,
        [
            logit(fx),
            logit(fy),
            (bbox.width() / spec.stride).ln(),
            (bbox.height() / spec.stride).ln(),
        ],
    ))
}

/// Decodes a `(1, 5+K, grid_h, grid_w)` head into detections at or above the
/// score threshold, boxes clamped to the image.
pub fn decode(head: &Tensor, spec: &GridDecodeSpec) -> Result<Vec<Detection>> {
    spec.validate()?;
    let [n, c, gh, gw] = head.shape();
    if n != 1 || c != spec.channels() || gh != spec.grid_h || gw != spec.grid_w {
        return config(format!(
            "head shape {:?} does not match decode spec (1, {}, {}, {})",
            head.shape(),
            spec.channels(),
            spec.grid_h,
            spec.grid_w
        ));
    }
    let (img_w, img_h) = (spec.image_width(), spec.image_height());
    let mut dets = Vec::new();
    for i in 0..gh {
        for j in 0..gw {
            let obj = sigmoid(head.at([0, 4, i, j]));
            let (mut best_k, mut best_p) = (0, f64::NEG_INFINITY);
            for k in 0..spec.num_classes {
                let p = sigmoid(head.at([0, 5 + k, i, j]));
                if p > best_p {
                    best_p = p;
                    best_k = k;
                }
            }
            let score = if spec.num_classes == 0 { obj } else { obj * best_p };
            if score < spec.score_threshold {
                continue;
            }
            let t = [
                head.at([0, 0, i, j]),
                head.at([0, 1, i, j]),
                head.at([0, 2, i, j]),
                head.at([0, 3, i, j]),
            ];
            let bbox = decode_box(t, i, j, spec.stride).clamp_to(img_w, img_h);
            dets.push(Detection {
                bbox,
                score,
                class_id: best_k,
            });
        }
    }
    Ok(dets)
}

/// Priority order: higher score first, then lower class id, then input order.
fn priority(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(Ordering::Equal)
            .then(dets[a].class_id.cmp(&dets[b].class_id))
            .then(a.cmp(&b))
    });
    order
}

/// Greedy per-class NMS. Output is in priority order.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let order = priority(dets);
    let mut kept: Vec<Detection> = Vec::new();
    for &i in &order {
        let d = &dets[i];
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == d.class_id && iou(&k.bbox, &d.bbox) > iou_threshold);
        if !suppressed {
            kept.push(*d);
        }
    }
    kept
}

/// Maps boxes between original-image and letterboxed coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LetterboxTransform {
    pub scale: f64,
    pub pad_x: usize,
    pub pad_y: usize,
}

impl LetterboxTransform {
    pub fn to_letterboxed(&self, b: &BBox) -> BBox {
        BBox {
            x1: b.x1 * self.scale + self.pad_x as f64,
            y1: b.y1 * self.scale + self.pad_y as f64,
            x2: b.x2 * self.scale + self.pad_x as f64,
            y2: b.y2 * self.scale + self.pad_y as f64,
        }
    }

    pub fn to_original(&self, b: &BBox) -> BBox {
        BBox {
            x1: (b.x1 - self.pad_x as f64) / self.scale,
            y1: (b.y1 - self.pad_y as f64) / self.scale,
            x2: (b.x2 - self.pad_x as f64) / self.scale,
            y2: (b.y2 - self.pad_y as f64) / self.scale,
        }
    }
}

pub const LETTERBOX_FILL: f64 = 0.5;

/// Aspect-preserving nearest-neighbour resize into `target_h x target_w`,
/// centred, padding filled with 0.5.
pub fn letterbox(image: &Tensor, target_h: usize, target_w: usize) -> Result<(Tensor, LetterboxTransform)> {
    let [n, c, h, w] = image.shape();
    if h == 0 || w == 0 || c == 0 || n == 0 {
        return Err(Error::Invalid(format!("cannot letterbox empty image {:?}", image.shape())));
    }
    if target_h == 0 || target_w == 0 {
        return config("letterbox target dims must be >= 1");
    }
    let scale = (target_h as f64 / h as f64).min(target_w as f64 / w as f64);
    let nh = ((h as f64 * scale).round() as usize).clamp(1, target_h);
    let nw = ((w as f64 * scale).round() as usize).clamp(1, target_w);
    let pad_y = (target_h - nh) / 2;
    let pad_x = (target_w - nw) / 2;
    let mut out = Tensor::full([n, c, target_h, target_w], LETTERBOX_FILL);
    for b in 0..n {
        for ch in 0..c {
            let src = image.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for y in 0..nh {
                let sy = (((y as f64 + 0.5) / scale) as usize).min(h - 1);
                for x in 0..nw {
                    let sx = (((x as f64 + 0.5) / scale) as usize).min(w - 1);
                    dst[(y + pad_y) * target_w + x + pad_x] = src[sy * w + sx];
                }
            }
        }
    }
    Ok((out, LetterboxTransform { scale, pad_x, pad_y }))
}
