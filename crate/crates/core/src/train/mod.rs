//! Synthetic data, the toy detector, its optimizer and trainer, evaluation
//! and weight persistence.

pub mod data;
pub mod eval;
pub mod model;
pub mod optim;
pub mod trainer;
pub mod weights;

pub use data::{synth_dataset, synth_dataset_with, Sample, Shape, SynthConfig};
pub use eval::{evaluate, f1_score, match_image, ClassReport, EvalSummary, Evaluation, PrCurve, PrPoint};
pub use model::{batch_item, stack_batch, ConvLayer, ToyNet, ToyNetCache, ToyNetConfig};
pub use optim::{cosine_lr, AdamWConfig, AdamWState};
pub use trainer::{evaluate_net, train_on, train_toy, EpochStats, Phase, TrainConfig, TrainOutcome};
pub use weights::{fnv1a64, load_weights, save_weights, LayerWeights, WeightsFile, WEIGHTS_MAGIC, WEIGHTS_VERSION};
