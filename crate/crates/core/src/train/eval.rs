//! Precision, recall, F1, PR curve and all-points AP.

use serde::{Deserialize, Serialize};

use crate::cost::CostReport;
use crate::error::{config, Result};
use crate::losses::{iou, Target};
use crate::postprocess::Detection;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// One point per distinct score, in descending score order.
    pub points: Vec<PrPoint>,
    pub ap: f64,
}

impl PrCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,recall,precision\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.threshold, p.recall, p.precision));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: usize,
    pub ground_truths: usize,
    pub detections: usize,
    pub precision: f64,
    pub recall: f64,
    pub ap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
    /// Mean of the per-class APs over classes that have ground truth.
    pub map: f64,
    pub model_size_mb: f64,
    pub computation_macs: u64,
    pub params: u64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub ground_truths: usize,
    pub per_class: Vec<ClassReport>,
}

impl EvalSummary {
    pub fn with_cost(mut self, report: &CostReport) -> Self {
        self.model_size_mb = report.model_size_mb();
        self.computation_macs = report.totals.macs;
        self.params = report.totals.params;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub summary: EvalSummary,
    pub curve: PrCurve,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// A scored detection after matching: `(score, class, true positive)`.
type Scored = (f64, usize, bool);

/// Greedy per-image matching. Detections are visited by descending score,
/// ties in input order; each one takes the unmatched same-class ground truth
/// with the highest IoU if that IoU reaches `iou_thr`.
pub fn match_image(dets: &[Detection], gts: &[Target], iou_thr: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut taken = vec![false; gts.len()];
    let mut tp = vec![false; dets.len()];
    for i in order {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] || gt.class_id != d.class_id {
                continue;
            }
            let v = iou(&d.bbox, &gt.bbox);
            if v >= iou_thr && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            tp[i] = true;
        }
    }
    tp
}

/// PR curve over score thresholds. Equal scores form one point so the
/// result does not depend on the order of tied detections.
fn pr_curve(mut scored: Vec<Scored>, total_gt: usize) -> PrCurve {
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let s = scored[i].0;
        while i < scored.len() && scored[i].0 == s {
            if scored[i].2 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold: s,
            recall: if total_gt > 0 { tp as f64 / total_gt as f64 } else { 0.0 },
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    let ap = all_points_ap(&points);
    PrCurve { points, ap }
}

/// Area under the precision envelope, stepping at each recall change.
fn all_points_ap(points: &[PrPoint]) -> f64 {
    let mut rec = vec![0.0];
    let mut prec = vec![0.0];
    for p in points {
        rec.push(p.recall);
        prec.push(p.precision);
    }
    for i in (0..prec.len() - 1).rev() {
        prec[i] = prec[i].max(prec[i + 1]);
    }
    let mut ap = 0.0;
    for i in 1..rec.len() {
        ap += (rec[i] - rec[i - 1]) * prec[i];
    }
    ap.clamp(0.0, 1.0)
}

/// Aggregate and per-class metrics. Precision with no detections is 0;
/// recall with no ground truth is 0.
pub fn evaluate(
    detections: &[Vec<Detection>],
    ground_truths: &[Vec<Target>],
    iou_thr: f64,
    num_classes: usize,
) -> Result<Evaluation> {
    if detections.len() != ground_truths.len() {
        return config(format!(
            "{} detection lists for {} images",
            detections.len(),
            ground_truths.len()
        ));
    }
    if !(0.0..=1.0).contains(&iou_thr) {
        return config(format!("iou threshold {iou_thr} outside [0, 1]"));
    }
    let mut scored: Vec<Scored> = Vec::new();
    for (dets, gts) in detections.iter().zip(ground_truths) {
        let tp = match_image(dets, gts, iou_thr);
        scored.extend(dets.iter().zip(tp).map(|(d, t)| (d.score, d.class_id, t)));
    }
    let classes = num_classes
        .max(scored.iter().map(|s| s.1 + 1).max().unwrap_or(0))
        .max(ground_truths.iter().flatten().map(|t| t.class_id + 1).max().unwrap_or(0));

    let total_gt = ground_truths.iter().map(Vec::len).sum::<usize>();
    let tp = scored.iter().filter(|s| s.2).count();
    let fp = scored.len() - tp;
    let ratio = |a: usize, b: usize| if b > 0 { a as f64 / b as f64 } else { 0.0 };
    let (precision, recall) = (ratio(tp, scored.len()), ratio(tp, total_gt));
    let curve = pr_curve(scored.clone(), total_gt);

    let mut per_class = Vec::with_capacity(classes);
    for k in 0..classes {
        let sk: Vec<Scored> = scored.iter().copied().filter(|s| s.1 == k).collect();
        let gt_k = ground_truths.iter().flatten().filter(|t| t.class_id == k).count();
        let tp_k = sk.iter().filter(|s| s.2).count();
        per_class.push(ClassReport {
            class: k,
            ground_truths: gt_k,
            detections: sk.len(),
            precision: ratio(tp_k, sk.len()),
            recall: ratio(tp_k, gt_k),
            ap: pr_curve(sk, gt_k).ap,
        });
    }
    let with_gt: Vec<f64> = per_class.iter().filter(|c| c.ground_truths > 0).map(|c| c.ap).collect();
    let map = if with_gt.is_empty() {
        0.0
    } else {
        with_gt.iter().sum::<f64>() / with_gt.len() as f64
    };

    let summary = EvalSummary {
        precision,
        recall,
        f1: f1_score(precision, recall),
        ap: curve.ap,
        map,
        model_size_mb: 0.0,
        computation_macs: 0,
        params: 0,
        true_positives: tp,
        false_positives: fp,
        ground_truths: total_gt,
        per_class,
    };
    Ok(Evaluation { summary, curve })
}
