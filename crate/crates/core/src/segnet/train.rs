use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::UNetConfig;
use super::model::{forward, images_to_tensor, predict_mask, ProbMap, SegNet};
use crate::autodiff::{Adam, AdamConfig, Tape};
use crate::error::{Error, Result};
use crate::eval::{accuracy, confusion, Confusion};
use crate::image::{Image, Mask};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Every `validation_stride`-th training pair is held out for
    /// validation; 0 disables the split.
    pub validation_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 4,
            learning_rate: 1e-3,
            seed: 0,
            validation_stride: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::validation("epochs and batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub steps: usize,
    pub train_size: usize,
    pub val_size: usize,
}

impl TrainHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }
}

/// Splits pair indices into (train, validation).
pub fn validation_split(len: usize, stride: usize) -> (Vec<usize>, Vec<usize>) {
    if stride < 2 || len < stride {
        return ((0..len).collect(), Vec::new());
    }
    (0..len).partition(|i| i % stride != stride - 1)
}

fn batch_targets(masks: &[&Mask]) -> Vec<f32> {
    masks
        .iter()
        .flat_map(|m| m.data().iter().map(|&b| if b { 1.0 } else { 0.0 }))
        .collect()
}

/// One optimizer step on a batch; returns the batch loss and its confusion
/// counts at the model threshold.
pub fn train_step(
    model: &mut SegNet,
    adam: &mut Adam<f32>,
    tape: &mut Tape<f32>,
    images: &[&Image],
    masks: &[&Mask],
) -> Result<(f64, Confusion)> {
    tape.reset();
    let x = tape.input(images_to_tensor(images)?, false);
    let fwd = forward(&model.config, &model.params, tape, x, None)?;
    let loss = tape.bce_loss(fwd.prob, &batch_targets(masks))?;
    let loss_value = tape.value(loss).data()[0] as f64;
    if !loss_value.is_finite() {
        return Err(Error::Numeric {
            iteration: adam.step as usize + 1,
            message: format!("training loss is {loss_value}"),
        });
    }
    let conf = batch_confusion(tape.value(fwd.prob).data(), masks, model.config.threshold)?;
    tape.backward(loss)?;
    model.params.zero_grad();
    tape.accumulate_param_grads(&mut model.params)?;
    adam.step(&mut model.params);
    Ok((loss_value, conf))
}

fn batch_confusion(prob: &[f32], masks: &[&Mask], threshold: f64) -> Result<Confusion> {
    let mut total = Confusion::default();
    let mut offset = 0;
    for m in masks {
        let p = ProbMap {
            width: m.width(),
            height: m.height(),
            values: prob[offset..offset + m.len()].to_vec(),
        };
        offset += m.len();
        total = total + confusion(&predict_mask(&p, threshold), m)?;
    }
    Ok(total)
}

fn evaluate(model: &SegNet, images: &[&Image], masks: &[&Mask], batch: usize) -> Result<(f64, f64)> {
    let mut tape = Tape::new();
    let (mut loss_sum, mut conf) = (0.0, Confusion::default());
    for (ib, mb) in images.chunks(batch).zip(masks.chunks(batch)) {
        tape.reset();
        let x = tape.input(images_to_tensor(ib)?, false);
        let fwd = forward(&model.config, &model.params, &mut tape, x, None)?;
        let loss = tape.bce_loss(fwd.prob, &batch_targets(mb))?;
        loss_sum += tape.value(loss).data()[0] as f64 * ib.len() as f64;
        conf = conf + batch_confusion(tape.value(fwd.prob).data(), mb, model.config.threshold)?;
    }
    Ok((loss_sum / images.len() as f64, accuracy(&conf)?))
}

/// Minimises pixel-wise binary cross-entropy with Adam. Deterministic for a
/// given model initialisation, data order and `cfg.seed`.
pub fn train(model: &mut SegNet, pairs: &[(&Image, &Mask)], cfg: &TrainConfig) -> Result<(TrainHistory, Adam<f32>)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    for (img, mask) in pairs {
        if img.width() != mask.width() || img.height() != mask.height() {
            return Err(Error::shape(format!(
                "image {}x{} paired with mask {}x{}",
                img.width(),
                img.height(),
                mask.width(),
                mask.height()
            )));
        }
    }
    let (train_idx, val_idx) = validation_split(pairs.len(), cfg.validation_stride);
    let val_images: Vec<&Image> = val_idx.iter().map(|&i| pairs[i].0).collect();
    let val_masks: Vec<&Mask> = val_idx.iter().map(|&i| pairs[i].1).collect();

    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut tape = Tape::new();
    let mut history = TrainHistory {
        train_size: train_idx.len(),
        val_size: val_idx.len(),
        ..TrainHistory::default()
    };
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut order = train_idx.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, epoch as u64])));
        let (mut loss_sum, mut conf) = (0.0, Confusion::default());
        for chunk in order.chunks(cfg.batch_size) {
            let images: Vec<&Image> = chunk.iter().map(|&i| pairs[i].0).collect();
            let masks: Vec<&Mask> = chunk.iter().map(|&i| pairs[i].1).collect();
            let (loss, c) = train_step(model, &mut adam, &mut tape, &images, &masks)?;
            loss_sum += loss * chunk.len() as f64;
            conf = conf + c;
            history.steps += 1;
        }
        let (val_loss, val_accuracy) = if val_images.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(model, &val_images, &val_masks, cfg.batch_size)?;
            (Some(l), Some(a))
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_accuracy: accuracy(&conf)?,
            val_loss,
            val_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((history, adam))
}

/// JSON companion of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub method: String,
    pub config: UNetConfig,
    pub seed: u64,
    pub dataset_manifest_hash: String,
    pub train: TrainConfig,
    pub parameter_count: usize,
    pub validation_split: String,
    pub loss: String,
    pub optimizer: AdamConfig,
    pub history: TrainHistory,
}

impl ModelCard {
    pub fn new(model: &SegNet, seed: u64, dataset_manifest_hash: &str, train: &TrainConfig, history: TrainHistory) -> Self {
        ModelCard {
            method: model.config.method_name().to_string(),
            config: model.config.clone(),
            seed,
            dataset_manifest_hash: dataset_manifest_hash.to_string(),
            train: train.clone(),
            parameter_count: model.parameter_count(),
            validation_split: if history.val_size > 0 {
                format!("every {}th training pair held out ({} of {})", train.validation_stride, history.val_size, history.val_size + history.train_size)
            } else {
                "none".into()
            },
            loss: "pixel-wise binary cross-entropy, probabilities clamped to [1e-7, 1 - 1e-7]".into(),
            optimizer: AdamConfig {
                lr: train.learning_rate,
                ..AdamConfig::default()
            },
            history,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
