//! Box geometry, the IoU/CIoU/WIoU loss family, and the composite detection loss.

pub mod bbox;
pub mod box_loss;
pub mod detection;

pub use bbox::{iou, BBox};
pub use box_loss::{
    box_loss_with_grad, ciou_loss, ciou_loss_with_grad, iou_loss_with_grad, wiou_loss, wiou_loss_with_grad,
    BoxGrad, BoxLossKind, EPS,
};
pub use detection::{
    assign_targets, bce_with_logits, detection_loss, detection_loss_with_grad, LossBreakdown, LossWeights, Target,
};
