//! IoU, CIoU and WIoU (v1) box regression losses with gradients with respect
//! to the predicted corners `(x1, y1, x2, y2)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::bbox::{iou, BBox};

/// Guard added to every loss denominator.
pub const EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxLossKind {
    Iou,
    Ciou,
    Wiou,
}

impl std::str::FromStr for BoxLossKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "iou" => Ok(BoxLossKind::Iou),
            "ciou" => Ok(BoxLossKind::Ciou),
            "wiou" => Ok(BoxLossKind::Wiou),
            _ => Err(format!("unknown box loss {s:?} (iou|ciou|wiou)")),
        }
    }
}

impl std::fmt::Display for BoxLossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoxLossKind::Iou => "iou",
            BoxLossKind::Ciou => "ciou",
            BoxLossKind::Wiou => "wiou",
        })
    }
}

/// Gradient with respect to `(x1, y1, x2, y2)` of the predicted box.
pub type BoxGrad = [f64; 4];

struct IouParts {
    iou: f64,
    grad: BoxGrad,
}

fn iou_parts(p: &BBox, g: &BBox) -> IouParts {
    let iw_raw = p.x2.min(g.x2) - p.x1.max(g.x1);
    let ih_raw = p.y2.min(g.y2) - p.y1.max(g.y1);
    let (iw, ih) = (iw_raw.max(0.0), ih_raw.max(0.0));
    let inter = iw * ih;
    let (pw, ph) = (p.width(), p.height());
    let union = pw * ph + g.area() - inter;
    if union <= 0.0 {
        return IouParts {
            iou: 0.0,
            grad: [0.0; 4],
        };
    }
    let mut d_inter = [0.0; 4];
    if iw_raw > 0.0 && ih_raw > 0.0 {
        if p.x1 > g.x1 {
            d_inter[0] = -ih;
        }
        if p.y1 > g.y1 {
            d_inter[1] = -iw;
        }
        if p.x2 < g.x2 {
            d_inter[2] = ih;
        }
        if p.y2 < g.y2 {
            d_inter[3] = iw;
        }
    }
    let d_area = [-ph, -pw, ph, pw];
    let mut grad = [0.0; 4];
    for k in 0..4 {
        let d_union = d_area[k] - d_inter[k];
        grad[k] = (d_inter[k] * union - inter * d_union) / (union * union);
    }
    IouParts {
        iou: iou(p, g),
        grad,
    }
}

/// Squared center distance and its gradient.
fn center_dist2(p: &BBox, g: &BBox) -> (f64, BoxGrad) {
    let (pcx, pcy) = p.center();
    let (gcx, gcy) = g.center();
    let (dx, dy) = (pcx - gcx, pcy - gcy);
    (dx * dx + dy * dy, [dx, dy, dx, dy])
}

/// Width and height of the smallest enclosing box, with d(width)/d(x1, x2)
/// and d(height)/d(y1, y2).
fn enclosing(p: &BBox, g: &BBox) -> (f64, f64, BoxGrad) {
    let cw = p.x2.max(g.x2) - p.x1.min(g.x1);
    let ch = p.y2.max(g.y2) - p.y1.min(g.y1);
    let d = [
        if p.x1 < g.x1 { -1.0 } else { 0.0 },
        if p.y1 < g.y1 { -1.0 } else { 0.0 },
        if p.x2 > g.x2 { 1.0 } else { 0.0 },
        if p.y2 > g.y2 { 1.0 } else { 0.0 },
    ];
    (cw, ch, d)
}

pub fn iou_loss_with_grad(pred: &BBox, gt: &BBox) -> (f64, BoxGrad) {
    let ip = iou_parts(pred, gt);
    (1.0 - ip.iou, ip.grad.map(|d| -d))
}

/// `1 - IoU + ρ²/c² + α·v`.
pub fn ciou_loss_with_grad(pred: &BBox, gt: &BBox) -> (f64, BoxGrad) {
    let ip = iou_parts(pred, gt);
    let (rho2, d_rho2) = center_dist2(pred, gt);
    let (cw, ch, d_enc) = enclosing(pred, gt);
    let c2 = cw * cw + ch * ch + EPS;
    let d_c2 = [
        2.0 * cw * d_enc[0],
        2.0 * ch * d_enc[1],
        2.0 * cw * d_enc[2],
        2.0 * ch * d_enc[3],
    ];

    let (w, h) = (pred.width(), pred.height());
    let theta_g = gt.width().atan2(gt.height());
    let theta_p = w.atan2(h);
    let delta = theta_g - theta_p;
    let k = 4.0 / (PI * PI);
    let v = k * delta * delta;
    let den = w * w + h * h + EPS;
    // dθp/dw = h/den, dθp/dh = -w/den; dw/dx1 = -1, dw/dx2 = 1, dh/dy1 = -1, dh/dy2 = 1
    let d_theta = [-h / den, w / den, h / den, -w / den];
    let d_v = d_theta.map(|t| -2.0 * k * delta * t);

    let s = (1.0 - ip.iou) + v + EPS;
    let alpha_v = v * v / s;

    let loss = 1.0 - ip.iou + rho2 / c2 + alpha_v;
    let mut grad = [0.0; 4];
    for i in 0..4 {
        let d_dist = (d_rho2[i] * c2 - rho2 * d_c2[i]) / (c2 * c2);
        let d_s = -ip.grad[i] + d_v[i];
        let d_av = (2.0 * v * d_v[i] * s - v * v * d_s) / (s * s);
        grad[i] = -ip.grad[i] + d_dist + d_av;
    }
    (loss, grad)
}

/// `exp(ρ² / D*) · (1 - IoU)` where `D = W² + H²` of the enclosing box is held
/// constant in the gradient.
pub fn wiou_loss_with_grad(pred: &BBox, gt: &BBox) -> (f64, BoxGrad) {
    let ip = iou_parts(pred, gt);
    let (rho2, d_rho2) = center_dist2(pred, gt);
    let (cw, ch, _) = enclosing(pred, gt);
    let d = cw * cw + ch * ch + EPS;
    let r = (rho2 / d).exp();
    let base = 1.0 - ip.iou;
    let mut grad = [0.0; 4];
    for i in 0..4 {
        grad[i] = r * d_rho2[i] / d * base - r * ip.grad[i];
    }
    (r * base, grad)
}

pub fn ciou_loss(pred: &BBox, gt: &BBox) -> f64 {
    ciou_loss_with_grad(pred, gt).0
}

pub fn wiou_loss(pred: &BBox, gt: &BBox) -> f64 {
    wiou_loss_with_grad(pred, gt).0
}

pub fn box_loss_with_grad(kind: BoxLossKind, pred: &BBox, gt: &BBox) -> (f64, BoxGrad) {
    match kind {
        BoxLossKind::Iou => iou_loss_with_grad(pred, gt),
        BoxLossKind::Ciou => ciou_loss_with_grad(pred, gt),
        BoxLossKind::Wiou => wiou_loss_with_grad(pred, gt),
    }
}
