//! Mini-batch training: Adam with bias correction, seed-shuffled batches,
//! per-epoch validation and best-epoch parameter selection, plus a
//! versioned parameter archive.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Sample;
use crate::metrics::{auc_weighted_ovr, derive_seed, MetricsError};
use crate::model::{ModelError, MultimodalModel};
use crate::tensor::{cross_entropy_loss, Tensor, TensorError};

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },
    #[error("{split} split is empty")]
    EmptySplit { split: &'static str },
    #[error("batch size {batch_size} exceeds the training split of {train_size}")]
    BatchTooLarge {
        batch_size: usize,
        train_size: usize,
    },
    #[error("archive version {found} unsupported (expected {ARCHIVE_VERSION})")]
    ArchiveVersion { found: u32 },
    #[error("archive is missing parameter {path}")]
    MissingParameter { path: String },
    #[error("archive has unknown parameter {path}")]
    UnknownParameter { path: String },
    #[error("archive parameter {path} has shape {found:?}, expected {expected:?}")]
    ArchiveShape {
        path: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    ValAuc,
    ValLoss,
}

fn default_epochs() -> usize {
    100
}
fn default_batch_size() -> usize {
    100
}
fn default_learning_rate() -> f64 {
    1e-4
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub selection: SelectionMetric,
    /// Global-norm gradient clipping, off by default; useful for the
    /// recurrent stacks.
    #[serde(default)]
    pub grad_clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            seed: 0,
            selection: SelectionMetric::default(),
            grad_clip_norm: None,
        }
    }
}

/// Per-epoch history and the index of the selected epoch.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_auc: Vec<Option<f64>>,
    pub best_epoch: Option<usize>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_auc,best\n");
        for i in 0..self.train_loss.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                self.train_loss[i],
                self.val_loss[i],
                self.val_auc[i].map(|v| v.to_string()).unwrap_or_default(),
                if self.best_epoch == Some(i) { 1 } else { 0 },
            ));
        }
        out
    }
}

/// Adam accumulators, one slot per parameter tensor.
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> AdamState {
        AdamState {
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update over all parameters from their accumulated gradients.
/// Parameters without a gradient are treated as zero-gradient.
pub fn adam_step(params: &[Tensor], state: &mut AdamState, cfg: &TrainConfig) {
    state.t += 1;
    let t = state.t as i32;
    let mut grads: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();
    if let Some(clip) = cfg.grad_clip_norm {
        let norm: f64 = grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        if norm > clip {
            let scale = clip / norm;
            for g in grads.iter_mut().flat_map(|g| g.iter_mut()) {
                *g *= scale;
            }
        }
    }
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((param, grad), (m, v)) in params
        .iter()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        param.update_data(|data| {
            for i in 0..data.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        });
    }
}

/// Mean cross-entropy and weighted OvR AUC of a model over a sample set,
/// evaluated in inference mode.
pub fn evaluate_split(
    model: &MultimodalModel,
    samples: &[&Sample],
) -> Result<(f64, Option<f64>), TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptySplit { split: "evaluation" });
    }
    let classes = model.cfg.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut loss_sum = 0.0;
    let mut probs: Vec<Vec<f64>> = Vec::with_capacity(samples.len());
    let mut labels: Vec<usize> = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(128) {
        let chunk_labels: Vec<usize> = chunk.iter().map(|s| (s.label - 1) as usize).collect();
        let logits = model.forward(chunk, false, &mut rng)?;
        let loss = cross_entropy_loss(&logits, &chunk_labels)?;
        loss_sum += loss.item() * chunk.len() as f64;
        let soft = logits.softmax_lastdim()?.value();
        probs.extend(soft.chunks_exact(classes).map(|r| r.to_vec()));
        labels.extend(chunk_labels);
    }
    let auc = auc_weighted_ovr(&probs, &labels).ok();
    Ok((loss_sum / samples.len() as f64, auc))
}

/// Incremental trainer: owns the Adam state and batch shuffling so callers
/// can drive epochs one at a time (early stopping, probes).
pub struct Trainer<'a> {
    model: &'a MultimodalModel,
    train: Vec<&'a Sample>,
    cfg: TrainConfig,
    params: Vec<Tensor>,
    adam: AdamState,
    shuffle_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(
        model: &'a MultimodalModel,
        train: &[&'a Sample],
        cfg: &TrainConfig,
    ) -> Result<Trainer<'a>, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptySplit { split: "train" });
        }
        if cfg.batch_size == 0 || cfg.batch_size > train.len() {
            return Err(TrainError::BatchTooLarge {
                batch_size: cfg.batch_size,
                train_size: train.len(),
            });
        }
        let params = model.parameters();
        let adam = AdamState::new(&params);
        Ok(Trainer {
            model,
            train: train.to_vec(),
            cfg: cfg.clone(),
            params,
            adam,
            shuffle_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x5u64)),
            dropout_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xDu64)),
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One pass over the training split; returns the sample-mean loss.
    /// The final incomplete batch is used, not dropped.
    pub fn run_epoch(&mut self) -> Result<f64, TrainError> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| self.train[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|s| (s.label - 1) as usize).collect();
            self.model.zero_grad();
            let logits = self.model.forward(&batch, true, &mut self.dropout_rng)?;
            let loss = cross_entropy_loss(&logits, &labels)?;
            let loss_value = loss.item();
            if !loss_value.is_finite() {
                return Err(TrainError::NanLoss {
                    epoch: self.epoch,
                    batch: batch_idx,
                });
            }
            loss.backward()?;
            adam_step(&self.params, &mut self.adam, &self.cfg);
            self.model.zero_grad();
            loss_sum += loss_value * batch.len() as f64;
        }
        self.epoch += 1;
        Ok(loss_sum / self.train.len() as f64)
    }
}

/// Full training loop: `cfg.epochs` seed-shuffled epochs, per-epoch
/// validation, and restoration of the best epoch's parameters by the
/// selection metric.
pub fn train(
    model: &MultimodalModel,
    train_split: &[&Sample],
    validation: &[&Sample],
    cfg: &TrainConfig,
) -> Result<TrainTrace, TrainError> {
    if validation.is_empty() {
        return Err(TrainError::EmptySplit { split: "validation" });
    }
    let mut trainer = Trainer::new(model, train_split, cfg)?;
    let mut trace = TrainTrace::default();
    let mut best: Option<(usize, f64, Vec<Vec<f64>>)> = None;

    for epoch in 0..cfg.epochs {
        let train_loss = trainer.run_epoch()?;
        let (val_loss, val_auc) = evaluate_split(model, validation)?;
        trace.train_loss.push(train_loss);
        trace.val_loss.push(val_loss);
        trace.val_auc.push(val_auc);

        // Higher is better for AUC, lower for loss; undefined AUC loses
        // to any defined value.
        let score = match cfg.selection {
            SelectionMetric::ValAuc => val_auc.unwrap_or(f64::NEG_INFINITY),
            SelectionMetric::ValLoss => -val_loss,
        };
        let improved = match &best {
            Some((_, best_score, _)) => score > *best_score,
            None => true,
        };
        if improved {
            let snapshot = trainer.params.iter().map(Tensor::value).collect();
            best = Some((epoch, score, snapshot));
        }
    }
    if let Some((epoch, _, snapshot)) = best {
        for (param, data) in trainer.params.iter().zip(snapshot) {
            param.set_data(data)?;
        }
        trace.best_epoch = Some(epoch);
    }
    Ok(trace)
}

// ── parameter archive ───────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveEntry {
    path: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamArchive {
    format_version: u32,
    params: Vec<ArchiveEntry>,
}

/// Saves all trainable parameters keyed by layer path.
pub fn save_model(model: &MultimodalModel, path: &Path) -> Result<(), TrainError> {
    let archive = ParamArchive {
        format_version: ARCHIVE_VERSION,
        params: model
            .named_parameters()
            .into_iter()
            .map(|(path, t)| ArchiveEntry {
                path,
                shape: t.shape(),
                data: t.value(),
            })
            .collect(),
    };
    let file = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(file), &archive)?;
    Ok(())
}

/// Loads parameters into an identically built model, validating version,
/// coverage and shapes.
pub fn load_model(model: &MultimodalModel, path: &Path) -> Result<(), TrainError> {
    let file = std::fs::File::open(path)?;
    let archive: ParamArchive = serde_json::from_reader(std::io::BufReader::new(file))?;
    if archive.format_version != ARCHIVE_VERSION {
        return Err(TrainError::ArchiveVersion {
            found: archive.format_version,
        });
    }
    let mut by_path: HashMap<String, ArchiveEntry> = archive
        .params
        .into_iter()
        .map(|e| (e.path.clone(), e))
        .collect();
    for (name, tensor) in model.named_parameters() {
        let entry = by_path
            .remove(&name)
            .ok_or_else(|| TrainError::MissingParameter { path: name.clone() })?;
        if entry.shape != tensor.shape() {
            return Err(TrainError::ArchiveShape {
                path: name,
                expected: tensor.shape(),
                found: entry.shape,
            });
        }
        tensor.set_data(entry.data)?;
    }
    if let Some(path) = by_path.into_keys().next() {
        return Err(TrainError::UnknownParameter { path });
    }
    Ok(())
}
