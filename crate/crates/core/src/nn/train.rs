//! Mini-batch training with early stopping on validation accuracy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{argmax, softmax_unchecked};
use super::resnet::{pack_batch, Mode, Resnet1d, BN_MOMENTUM};
use super::{AdamConfig, AdamState};
use crate::dataset::LabeledDataset;
use crate::words::{WORD_CHANNELS, WORD_SAMPLES};
use crate::{Error, Result};

/// Samples in model input layout, sample-major `[N][C][L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    channels: usize,
    length: usize,
    data: Vec<f32>,
    labels: Vec<usize>,
}

impl Samples {
    pub fn new(channels: usize, length: usize, data: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        if channels * length == 0 || data.len() != labels.len() * channels * length {
            return Err(Error::invalid(format!(
                "{} values do not form {} samples of {channels} x {length}",
                data.len(),
                labels.len()
            )));
        }
        Ok(Self {
            channels,
            length,
            data,
            labels,
        })
    }

    pub fn from_dataset(ds: &LabeledDataset) -> Self {
        let data = ds.samples().iter().flat_map(|s| s.data().iter().copied()).collect();
        Self {
            channels: WORD_CHANNELS,
            length: WORD_SAMPLES,
            data,
            labels: ds.labels(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.channels * self.length;
        &self.data[i * n..(i + 1) * n]
    }

    /// `[C][B][L]` batch of the given samples.
    pub fn batch(&self, indices: &[usize]) -> Vec<f32> {
        let rows: Vec<&[f32]> = indices.iter().map(|&i| self.sample(i)).collect();
        pack_batch(&rows, self.channels, self.length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Training stops once this many consecutive epochs bring no strict
    /// improvement in validation accuracy (0 and 1 both stop at the first).
    pub patience: usize,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            batch_size: 32,
            patience: 10,
            seed: 0,
            optimizer: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("max_epochs and batch_size must be at least 1"));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Mini-batch losses in update order.
    pub step_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
}

/// A loss over a mini-batch of logits.
pub trait Objective: Sync {
    /// Mean loss over the batch and its gradient with respect to `logits`
    /// (`[B][K]` row-major). `indices` are positions in the training set.
    fn loss_and_grad(&self, logits: &[f32], classes: usize, indices: &[usize]) -> (f64, Vec<f32>);
}

/// Softmax cross-entropy on hard labels.
pub struct CrossEntropy<'a> {
    pub labels: &'a [usize],
}

impl Objective for CrossEntropy<'_> {
    fn loss_and_grad(&self, logits: &[f32], classes: usize, indices: &[usize]) -> (f64, Vec<f32>) {
        let scale = 1.0 / indices.len() as f64;
        let mut loss = 0.0;
        let mut grad = Vec::with_capacity(logits.len());
        for (row, &i) in logits.chunks(classes).zip(indices) {
            let z: Vec<f64> = row.iter().map(|&v| v as f64).collect();
            let p = softmax_unchecked(&z, 1.0);
            let y = self.labels[i];
            loss += -p[y].max(super::LOG_CLAMP).ln();
            grad.extend(p.iter().enumerate().map(|(c, &pc)| {
                let target = if c == y { 1.0 } else { 0.0 };
                ((pc - target) * scale) as f32
            }));
        }
        (loss * scale, grad)
    }
}

const EVAL_BATCH: usize = 64;

/// Eval-mode logits, one row per sample.
pub fn predict_logits(model: &Resnet1d<f32>, samples: &Samples) -> Result<Vec<Vec<f32>>> {
    check_shape(model, samples)?;
    let k = model.config().class_count;
    let mut out = Vec::with_capacity(samples.len());
    let all: Vec<usize> = (0..samples.len()).collect();
    for chunk in all.chunks(EVAL_BATCH) {
        let f = model.forward(&samples.batch(chunk), chunk.len(), Mode::Eval)?;
        out.extend(f.logits.chunks(k).map(<[f32]>::to_vec));
    }
    Ok(out)
}

/// Eval-mode softmax probabilities (temperature 1).
pub fn predict_proba(model: &Resnet1d<f32>, samples: &Samples) -> Result<Vec<Vec<f64>>> {
    Ok(predict_logits(model, samples)?
        .iter()
        .map(|row| softmax_unchecked(&row.iter().map(|&v| v as f64).collect::<Vec<_>>(), 1.0))
        .collect())
}

pub fn predict(model: &Resnet1d<f32>, samples: &Samples) -> Result<Vec<usize>> {
    Ok(predict_logits(model, samples)?.iter().map(|r| argmax(r)).collect())
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

fn check_shape(model: &Resnet1d<f32>, samples: &Samples) -> Result<()> {
    let cfg = model.config();
    if samples.channels != cfg.input_channels || samples.length != cfg.input_length {
        return Err(Error::invalid(format!(
            "samples are {} x {}, model expects {} x {}",
            samples.channels, samples.length, cfg.input_channels, cfg.input_length
        )));
    }
    if let Some(&bad) = samples.labels.iter().find(|&&l| l >= cfg.class_count) {
        return Err(Error::invalid(format!("label {bad} outside [0, {})", cfg.class_count)));
    }
    Ok(())
}

/// Cross-entropy training; see [`train_with`].
pub fn train(model: &mut Resnet1d<f32>, train: &Samples, val: &Samples, cfg: &TrainConfig) -> Result<History> {
    train_with(model, train, val, cfg, &CrossEntropy { labels: &train.labels })
}

/// Adam on `objective` over shuffled mini-batches. After every epoch the
/// validation accuracy is measured; the parameters and running statistics
/// of the best epoch are restored at the end.
pub fn train_with<O: Objective + ?Sized>(
    model: &mut Resnet1d<f32>,
    train: &Samples,
    val: &Samples,
    cfg: &TrainConfig,
    objective: &O,
) -> Result<History> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    check_shape(model, train)?;
    check_shape(model, val)?;

    let classes = model.config().class_count;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(cfg.optimizer, model.param_count())?;
    let mut grads = vec![0f32; model.param_count()];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = History {
        best_val_accuracy: f64::NEG_INFINITY,
        ..History::default()
    };
    let mut best = (model.params().to_vec(), model.buffers().to_vec());
    let mut stale = 0;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let batches = order.chunks(cfg.batch_size);
        let n_batches = batches.len();
        for chunk in batches {
            let f = model.forward(&train.batch(chunk), chunk.len(), Mode::Train)?;
            let trace = f.trace.expect("train mode keeps a trace");
            let (loss, dlogits) = objective.loss_and_grad(&f.logits, classes, chunk);
            model.backward(&trace, &dlogits, &mut grads);
            model.update_running_stats(&trace, BN_MOMENTUM);
            adam.step(model.params_mut(), &grads);
            history.step_losses.push(loss);
            epoch_loss += loss;
        }

        let val_accuracy = accuracy(&predict(model, val)?, &val.labels);
        log::debug!("epoch {epoch}: loss {:.4}, val acc {val_accuracy:.4}", epoch_loss / n_batches as f64);
        history.epochs.push(EpochRecord {
            epoch,
            mean_loss: epoch_loss / n_batches as f64,
            val_accuracy,
        });
        if val_accuracy > history.best_val_accuracy {
            history.best_val_accuracy = val_accuracy;
            history.best_epoch = epoch;
            best.0.copy_from_slice(model.params());
            best.1.copy_from_slice(model.buffers());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    model.params_mut().copy_from_slice(&best.0);
    model.buffers_mut().copy_from_slice(&best.1);
    Ok(history)
}
