//! Composite detection loss over a single-scale grid head.
//!
//! Each target is assigned to the one cell containing its center (first
//! target wins on collisions). Box term: chosen box loss averaged over
//! assigned cells. Class term: per-cell sum of per-class BCE, averaged over
//! assigned cells. Objectness term: BCE averaged over every cell.

use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use super::box_loss::{box_loss_with_grad, BoxLossKind};
use crate::error::{config, Error, Result};
use crate::ops::sigmoid;
use crate::postprocess::{decode_box, GridDecodeSpec};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub bbox: BBox,
    #[serde(rename = "class")]
    pub class_id: usize,
}

impl Target {
    /// Rejects degenerate boxes and boxes outside `width x height`.
    pub fn new(bbox: BBox, class_id: usize, width: f64, height: f64) -> Result<Self> {
        let t = Target { bbox, class_id };
        t.validate(width, height)?;
        Ok(t)
    }

    pub fn validate(&self, width: f64, height: f64) -> Result<()> {
        if self.bbox.is_degenerate() {
            return Err(Error::Invalid(format!("degenerate target box {:?}", self.bbox)));
        }
        if !self.bbox.inside(width, height) {
            return Err(Error::Invalid(format!(
                "target box {:?} outside {width}x{height} image",
                self.bbox
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub box_weight: f64,
    pub objectness: f64,
    pub class: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            box_weight: 5.0,
            objectness: 1.0,
            class: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub box_loss: f64,
    pub objectness_loss: f64,
    pub class_loss: f64,
    pub total: f64,
    pub variant: BoxLossKind,
}

/// Binary cross-entropy on a logit, numerically stable. Returns `(loss, dloss/dlogit)`.
pub fn bce_with_logits(logit: f64, target: f64) -> (f64, f64) {
    let loss = logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit) - target)
}

/// Cell assignment per image: `assign[row * grid_w + col] = Some(target index)`.
pub fn assign_targets(targets: &[Target], spec: &GridDecodeSpec) -> Vec<Option<usize>> {
    let mut assign = vec![None; spec.grid_h * spec.grid_w];
    for (ti, t) in targets.iter().enumerate() {
        let (cx, cy) = t.bbox.center();
        let (row, col) = spec.cell_of(cx, cy);
        let slot = &mut assign[row * spec.grid_w + col];
        if slot.is_none() {
            *slot = Some(ti);
        }
    }
    assign
}

pub fn detection_loss(
    predictions: &Tensor,
    targets: &[Vec<Target>],
    spec: &GridDecodeSpec,
    variant: BoxLossKind,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    detection_loss_with_grad(predictions, targets, spec, variant, weights).map(|(l, _)| l)
}

/// Loss and its gradient with respect to the raw head tensor.
pub fn detection_loss_with_grad(
    predictions: &Tensor,
    targets: &[Vec<Target>],
    spec: &GridDecodeSpec,
    variant: BoxLossKind,
    weights: &LossWeights,
) -> Result<(LossBreakdown, Tensor)> {
    spec.validate()?;
    let [n, c, gh, gw] = predictions.shape();
    if c != spec.channels() || gh != spec.grid_h || gw != spec.grid_w {
        return config(format!(
            "prediction shape {:?} does not match grid spec ({}, {}, {})",
            predictions.shape(),
            spec.channels(),
            spec.grid_h,
            spec.grid_w
        ));
    }
    if targets.len() != n {
        return config(format!("{} target lists for batch of {n}", targets.len()));
    }
    let (img_w, img_h) = (spec.image_width(), spec.image_height());
    for t in targets.iter().flatten() {
        t.validate(img_w, img_h)?;
        if t.class_id >= spec.num_classes {
            return Err(Error::Invalid(format!(
                "target class {} >= {}",
                t.class_id, spec.num_classes
            )));
        }
    }

    let assignments: Vec<Vec<Option<usize>>> = targets.iter().map(|t| assign_targets(t, spec)).collect();
    let n_pos = assignments.iter().flatten().filter(|a| a.is_some()).count();
    let n_cells = (n * gh * gw) as f64;
    let pos_norm = n_pos.max(1) as f64;

    let mut grad = Tensor::zeros(predictions.shape());
    let (mut box_sum, mut obj_sum, mut cls_sum) = (0.0, 0.0, 0.0);
    for b in 0..n {
        for i in 0..gh {
            for j in 0..gw {
                let assigned = assignments[b][i * gw + j].map(|ti| &targets[b][ti]);
                let (l, d) = bce_with_logits(predictions.at([b, 4, i, j]), assigned.map_or(0.0, |_| 1.0));
                obj_sum += l;
                grad.set([b, 4, i, j], weights.objectness * d / n_cells);

                let Some(t) = assigned else { continue };
                for k in 0..spec.num_classes {
                    let y = if k == t.class_id { 1.0 } else { 0.0 };
                    let (l, d) = bce_with_logits(predictions.at([b, 5 + k, i, j]), y);
                    cls_sum += l;
                    grad.set([b, 5 + k, i, j], weights.class * d / pos_norm);
                }

                let raw = [
                    predictions.at([b, 0, i, j]),
                    predictions.at([b, 1, i, j]),
                    predictions.at([b, 2, i, j]),
                    predictions.at([b, 3, i, j]),
                ];
                let pred = decode_box(raw, i, j, spec.stride);
                let (l, g) = box_loss_with_grad(variant, &pred, &t.bbox);
                box_sum += l;
                // x1 = cx - w/2, x2 = cx + w/2 (same for y)
                let d_cx = g[0] + g[2];
                let d_cy = g[1] + g[3];
                let d_w = (g[2] - g[0]) / 2.0;
                let d_h = (g[3] - g[1]) / 2.0;
                let (sx, sy) = (sigmoid(raw[0]), sigmoid(raw[1]));
                let scale = weights.box_weight / pos_norm;
                grad.set([b, 0, i, j], scale * d_cx * spec.stride * sx * (1.0 - sx));
                grad.set([b, 1, i, j], scale * d_cy * spec.stride * sy * (1.0 - sy));
                grad.set([b, 2, i, j], scale * d_w * pred.width());
                grad.set([b, 3, i, j], scale * d_h * pred.height());
            }
        }
    }

    let box_loss = box_sum / pos_norm;
    let class_loss = cls_sum / pos_norm;
    let objectness_loss = obj_sum / n_cells;
    let total = weights.box_weight * box_loss + weights.objectness * objectness_loss + weights.class * class_loss;
    let breakdown = LossBreakdown {
        box_loss,
        objectness_loss,
        class_loss,
        total,
        variant,
    };
    if !total.is_finite() {
        return Err(Error::NonFinite("detection_loss"));
    }
    Ok((breakdown, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::postprocess::encode_box;

    #[test]
    fn zero_targets_only_objectness() {
        let spec = GridDecodeSpec::new(2, 3, 8.0, 2);
        let mut pred = Tensor::from_fn([1, 7, 2, 3], |[_, c, h, w]| (c as f64 - 3.0) * 0.3 + h as f64 - w as f64);
        pred.set([0, 4, 0, 0], -2.0);
        let l = detection_loss(&pred, &[vec![]], &spec, BoxLossKind::Wiou, &LossWeights::default()).unwrap();
        assert_eq!(l.box_loss, 0.0);
        assert_eq!(l.class_loss, 0.0);
        let mut want = 0.0;
        for i in 0..2 {
            for j in 0..3 {
                let x = pred.at([0, 4, i, j]);
                want += -(1.0 - sigmoid(x)).ln();
            }
        }
        assert!((l.objectness_loss - want / 6.0).abs() < 1e-12);
        assert!((l.total - l.objectness_loss).abs() < 1e-15);
    }

    #[test]
    fn perfect_saturated_prediction_approaches_zero() {
        let spec = GridDecodeSpec::new(4, 4, 8.0, 3);
        let gt = BBox::new(5.0, 6.0, 19.0, 17.0).unwrap();
        let (row, col, t) = encode_box(&gt, &spec).unwrap();
        let mut pred = Tensor::full([1, 8, 4, 4], -40.0);
        for k in 0..4 {
            pred.set([0, k, row, col], t[k]);
        }
        pred.set([0, 4, row, col], 40.0);
        pred.set([0, 5 + 2, row, col], 40.0);
        let targets = vec![vec![Target::new(gt, 2, 32.0, 32.0).unwrap()]];
        let l = detection_loss(&pred, &targets, &spec, BoxLossKind::Ciou, &LossWeights::default()).unwrap();
        assert!(l.total < 1e-9, "{l:?}");
    }

    #[test]
    fn targets_outside_image_rejected() {
        let spec = GridDecodeSpec::new(2, 2, 8.0, 1);
        let gt = BBox::new(10.0, 10.0, 17.0, 12.0).unwrap();
        let pred = Tensor::zeros([1, 6, 2, 2]);
        let t = vec![vec![Target { bbox: gt, class_id: 0 }]];
        assert!(detection_loss(&pred, &t, &spec, BoxLossKind::Iou, &LossWeights::default()).is_err());
        assert!(Target::new(gt, 0, 16.0, 16.0).is_err());
    }
}
