//! Flat `key = value` run configuration shared by train, eval, detect and report.

use std::path::{Path, PathBuf};

use detkit::train::TrainConfig;
use detkit::Error;

use crate::exit::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Eval,
    Detect,
    Report,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub train: TrainConfig,
    pub bytes_per_element: u64,
    /// Directory of `<name>.ppm|.pgm` images with `<name>.json` target lists.
    pub dataset: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub stats: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub curve: Option<PathBuf>,
    /// Precomputed detections to score instead of running the net.
    pub predictions: Option<PathBuf>,
    pub image: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub overlay: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

pub const KEYS: &[&str] = &[
    "seed",
    "epochs",
    "batch_size",
    "lr_max",
    "lr_min",
    "weight_decay",
    "freeze_fraction",
    "loss",
    "dataset_size",
    "image_size",
    "num_classes",
    "blocks",
    "cp_fraction",
    "expansion",
    "activation",
    "cbam_reduction",
    "cbam_spatial_kernel",
    "cbam_composition",
    "cbam_mlp",
    "score_threshold",
    "nms_iou",
    "eval_iou",
    "bytes_per_element",
    "dataset",
    "weights",
    "stats",
    "summary",
    "curve",
    "predictions",
    "image",
    "detections",
    "overlay",
    "report",
];

fn parse_err(line: usize, msg: impl Into<String>) -> Failure {
    Failure::from(Error::Parse { line, msg: msg.into() })
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            train: TrainConfig::default(),
            bytes_per_element: 8,
            dataset: None,
            weights: None,
            stats: None,
            summary: None,
            curve: None,
            predictions: None,
            image: None,
            detections: None,
            overlay: None,
            report: None,
        }
    }

    /// Config file first, then command-line `key=value` overrides in order.
    pub fn load(command: Command, file: Option<&Path>, overrides: &[String]) -> Result<Self, Failure> {
        let mut cfg = RunConfig::new(command);
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        for (i, kv) in overrides.iter().enumerate() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Failure::usage(format!("argument {} ({kv:?}) is not key=value", i + 1)))?;
            cfg.set(k.trim(), v.trim()).map_err(|m| Failure::usage(format!("{kv:?}: {m}")))?;
        }
        cfg.train.validate().map_err(|e| Failure::usage(e.to_string()))?;
        if cfg.bytes_per_element == 0 {
            return Err(Failure::usage("bytes_per_element must be >= 1"));
        }
        cfg.check_paths()?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), Failure> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(idx + 1, format!("expected `key = value`, got {line:?}")))?;
            self.set(k.trim(), v.trim()).map_err(|m| parse_err(idx + 1, m))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e| format!("bad value {v:?}: {e}"))
        }
        let t = &mut self.train;
        let path = || Some(PathBuf::from(value));
        match key {
            "seed" => t.seed = num(value)?,
            "epochs" => t.epochs = num(value)?,
            "batch_size" => t.batch_size = num(value)?,
            "lr_max" => t.lr_max = num(value)?,
            "lr_min" => t.lr_min = num(value)?,
            "weight_decay" => t.adamw.weight_decay = num(value)?,
            "freeze_fraction" => t.freeze_fraction = num(value)?,
            "loss" => t.loss = num(value)?,
            "dataset_size" => t.dataset_size = num(value)?,
            "image_size" => t.net.image_size = num(value)?,
            "num_classes" => t.net.num_classes = num(value)?,
            "blocks" => t.net.blocks = num(value)?,
            "cp_fraction" => t.net.cp_fraction = num(value)?,
            "expansion" => t.net.expansion = num(value)?,
            "activation" => t.net.activation = num(value)?,
            "cbam_reduction" => t.net.cbam_reduction = num(value)?,
            "cbam_spatial_kernel" => t.net.cbam_spatial_kernel = num(value)?,
            "cbam_composition" => t.net.cbam_composition = num(value)?,
            "cbam_mlp" => t.net.cbam_channel_mlp = num(value)?,
            "score_threshold" => t.score_threshold = num(value)?,
            "nms_iou" => t.nms_iou = num(value)?,
            "eval_iou" => t.eval_iou = num(value)?,
            "bytes_per_element" => self.bytes_per_element = num(value)?,
            "dataset" => self.dataset = path(),
            "weights" => self.weights = path(),
            "stats" => self.stats = path(),
            "summary" => self.summary = path(),
            "curve" => self.curve = path(),
            "predictions" => self.predictions = path(),
            "image" => self.image = path(),
            "detections" => self.detections = path(),
            "overlay" => self.overlay = path(),
            "report" => self.report = path(),
            other => return Err(format!("unknown key {other:?}; valid keys: {}", KEYS.join(", "))),
        }
        Ok(())
    }

    /// Validates every path up front so no work is done before a bad path surfaces.
    fn check_paths(&self) -> Result<(), Failure> {
        let need = |p: &Option<PathBuf>, key: &str| {
            p.clone().ok_or_else(|| Failure::usage(format!("`{key}` is required for this command")))
        };
        match self.command {
            Command::Train => {
                output(&need(&self.weights, "weights")?)?;
            }
            Command::Eval => {
                if self.predictions.is_none() {
                    weights_input(&need(&self.weights, "weights")?)?;
                }
                output(&need(&self.summary, "summary")?)?;
            }
            Command::Detect => {
                weights_input(&need(&self.weights, "weights")?)?;
                let image = need(&self.image, "image")?;
                if !image.is_file() {
                    return Err(Failure::image(format!("image {} does not exist", image.display())));
                }
            }
            Command::Report => {
                weights_input(&need(&self.weights, "weights")?)?;
            }
        }
        if let Some(p) = &self.predictions {
            if !p.is_file() {
                return Err(Failure::usage(format!("predictions file {} does not exist", p.display())));
            }
        }
        if let Some(d) = &self.dataset {
            if !d.is_dir() {
                return Err(Failure::usage(format!("dataset directory {} does not exist", d.display())));
            }
        }
        for p in [&self.stats, &self.curve, &self.detections, &self.overlay, &self.report].into_iter().flatten() {
            output(p)?;
        }
        Ok(())
    }
}

fn weights_input(p: &Path) -> Result<(), Failure> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Failure::missing_weights(format!("weights file {} does not exist", p.display())))
    }
}

fn output(p: &Path) -> Result<(), Failure> {
    match p.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(Failure::usage(format!(
            "output directory {} does not exist",
            dir.display()
        ))),
        _ if p.is_dir() => Err(Failure::usage(format!("output path {} is a directory", p.display()))),
        _ => Ok(()),
    }
}
