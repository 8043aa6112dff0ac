//! Two-phase toy trainer: head-only updates with a frozen backbone, then
//! full fine-tuning, under one cosine schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::losses::{detection_loss_with_grad, BoxLossKind, LossWeights, Target};
use crate::tensor::Tensor;
use crate::train::data::{synth_dataset, Sample};
use crate::train::eval::{evaluate, Evaluation};
use crate::train::model::{stack_batch, ToyNet, ToyNetConfig};
use crate::train::optim::{cosine_lr, AdamWConfig, AdamWState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    /// Share of epochs trained with the backbone frozen.
    pub freeze_fraction: f64,
    pub loss: BoxLossKind,
    pub loss_weights: LossWeights,
    pub adamw: AdamWConfig,
    pub dataset_size: usize,
    pub net: ToyNetConfig,
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub eval_iou: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 42,
            epochs: 200,
            batch_size: 10,
            lr_max: 3e-3,
            lr_min: 3e-5,
            freeze_fraction: 0.3,
            loss: BoxLossKind::Wiou,
            loss_weights: LossWeights::default(),
            adamw: AdamWConfig::default(),
            dataset_size: 50,
            net: ToyNetConfig::default(),
            score_threshold: 0.25,
            nms_iou: 0.45,
            eval_iou: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if self.batch_size == 0 || self.dataset_size == 0 {
            return config("batch size and dataset size must be >= 1");
        }
        if !(self.lr_min >= 0.0 && self.lr_max >= self.lr_min && self.lr_max.is_finite()) {
            return config(format!("need 0 <= lr_min <= lr_max, got {} and {}", self.lr_min, self.lr_max));
        }
        if !(0.0..=1.0).contains(&self.freeze_fraction) {
            return config(format!("freeze fraction {} outside [0, 1]", self.freeze_fraction));
        }
        for (name, v) in [
            ("score_threshold", self.score_threshold),
            ("nms_iou", self.nms_iou),
            ("eval_iou", self.eval_iou),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return config(format!("{name} {v} outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn frozen_epochs(&self) -> usize {
        (self.freeze_fraction * self.epochs as f64).round() as usize
    }

    pub fn dataset(&self) -> Result<Vec<Sample>> {
        synth_dataset(self.seed, self.dataset_size, self.net.image_size, self.net.num_classes)
    }

    /// The freshly initialised net a training run starts from.
    pub fn init_net(&self) -> Result<ToyNet> {
        ToyNet::init(&self.net, self.init_seed())
    }

    fn init_seed(&self) -> u64 {
        self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1)
    }

    fn shuffle_seed(&self) -> u64 {
        self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Frozen,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub phase: Phase,
    pub lr: f64,
    pub loss: f64,
    pub box_loss: f64,
    pub objectness_loss: f64,
    pub class_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub initial: ToyNet,
    pub net: ToyNet,
    pub stats: Vec<EpochStats>,
}

/// Generates the dataset from the config and trains a freshly initialised net.
pub fn train_toy(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = cfg.dataset()?;
    let initial = cfg.init_net()?;
    let mut net = initial.clone();
    let stats = train_on(&mut net, &data, cfg, &mut |_| {})?;
    Ok(TrainOutcome { initial, net, stats })
}

/// Trains `net` in place. `on_epoch` sees each epoch's stats as they are produced.
pub fn train_on(
    net: &mut ToyNet,
    data: &[Sample],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if net.config != cfg.net {
        return config("net configuration differs from the training configuration");
    }
    if data.is_empty() {
        return config("empty training set");
    }
    let spec = cfg.net.decode_spec();
    let steps_per_epoch = data.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let frozen = cfg.frozen_epochs();
    let mut opt = AdamWState::new(cfg.adamw);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut stats = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let phase = if epoch < frozen { Phase::Frozen } else { Phase::Full };
        order.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        let mut lr = cfg.lr_max;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let global = epoch * steps_per_epoch + step;
            lr = cosine_lr(global, total_steps, cfg.lr_max, cfg.lr_min);
            let images: Vec<&Tensor> = chunk.iter().map(|&i| &data[i].image).collect();
            let targets: Vec<Vec<Target>> = chunk.iter().map(|&i| data[i].targets.clone()).collect();
            let diverged = |e: Error| Error::Divergence {
                epoch: epoch + 1,
                step,
                detail: e.to_string(),
            };
            let batch = stack_batch(&images)?;
            let (out, cache) = net.forward(&batch).map_err(diverged)?;
            let (loss, grad) =
                detection_loss_with_grad(&out, &targets, &spec, cfg.loss, &cfg.loss_weights).map_err(diverged)?;
            let grads = net.backward(&cache, &grad, phase == Phase::Full).map_err(diverged)?;
            let trainable = |name: &str| phase == Phase::Full || !ToyNet::is_backbone(name);
            opt.step(net, &grads, lr, &trainable)?;
            let w = chunk.len() as f64;
            sums[0] += loss.total * w;
            sums[1] += loss.box_loss * w;
            sums[2] += loss.objectness_loss * w;
            sums[3] += loss.class_loss * w;
        }
        let n = data.len() as f64;
        let s = EpochStats {
            epoch: epoch + 1,
            phase,
            lr,
            loss: sums[0] / n,
            box_loss: sums[1] / n,
            objectness_loss: sums[2] / n,
            class_loss: sums[3] / n,
        };
        if !s.loss.is_finite() {
            return Err(Error::Divergence {
                epoch: epoch + 1,
                step: steps_per_epoch,
                detail: format!("epoch loss {}", s.loss),
            });
        }
        on_epoch(&s);
        stats.push(s);
    }
    Ok(stats)
}

/// Runs detection over `data` and scores it against the annotations.
pub fn evaluate_net(net: &ToyNet, data: &[Sample], cfg: &TrainConfig) -> Result<Evaluation> {
    let mut spec = net.config.decode_spec();
    spec.score_threshold = cfg.score_threshold;
    let mut dets = Vec::with_capacity(data.len());
    for chunk in data.chunks(cfg.batch_size.max(1)) {
        let images: Vec<&Tensor> = chunk.iter().map(|s| &s.image).collect();
        dets.extend(net.detect(&stack_batch(&images)?, &spec, cfg.nms_iou)?);
    }
    let gts: Vec<Vec<Target>> = data.iter().map(|s| s.targets.clone()).collect();
    evaluate(&dets, &gts, cfg.eval_iou, net.config.num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Parameters;

    fn tiny() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            dataset_size: 4,
            batch_size: 2,
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_leaves_params_unchanged() {
        let cfg = TrainConfig { epochs: 0, ..tiny() };
        let out = train_toy(&cfg).unwrap();
        assert!(out.stats.is_empty());
        assert_eq!(out.initial, out.net);
    }

    #[test]
    fn frozen_phase_keeps_backbone_bits() {
        let cfg = TrainConfig {
            freeze_fraction: 1.0,
            ..tiny()
        };
        let out = train_toy(&cfg).unwrap();
        let mut before = Vec::new();
        out.initial.visit(&mut |n, xs| {
            if ToyNet::is_backbone(n) {
                before.extend(xs.iter().map(|v| v.to_bits()));
            }
        });
        let mut after = Vec::new();
        out.net.visit(&mut |n, xs| {
            if ToyNet::is_backbone(n) {
                after.extend(xs.iter().map(|v| v.to_bits()));
            }
        });
        assert_eq!(before, after);
        assert_ne!(out.initial.head, out.net.head);
    }

    #[test]
    fn deterministic_trajectory() {
        let a = train_toy(&tiny()).unwrap();
        let b = train_toy(&tiny()).unwrap();
        assert_eq!(a.stats, b.stats);
        assert_eq!(a.net, b.net);
    }
}
