//! Soft-voting ensembles of independently trained backbones.
//!
//! Every member produces a softmax distribution; the ensemble output is
//! their weighted average and the prediction its argmax.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::nn::{
    argmax, load_model, predict_proba, save_model, softmax_unchecked, train, History, Resnet1d,
    Resnet1dConfig, Samples, TrainConfig,
};
use crate::{Error, Result};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "KDE_SSI_THREADS";

/// Worker count: `KDE_SSI_THREADS` if set to a positive integer, else the
/// available parallelism.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` on a pool of [`worker_threads`] threads.
pub(crate) fn in_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(worker_threads()).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Scales non-negative weights to sum to one.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid(format!("weights must be finite and non-negative: {weights:?}")));
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Err(Error::invalid("weights must not all be zero"));
    }
    Ok(weights.iter().map(|w| w / sum).collect())
}

/// `sum_i w_i probs_i` with normalized `weights`.
pub fn soft_vote<P: AsRef<[f64]>>(probs: &[P], weights: &[f64]) -> Result<Vec<f64>> {
    if probs.is_empty() || probs.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} distributions for {} weights",
            probs.len(),
            weights.len()
        )));
    }
    let k = probs[0].as_ref().len();
    if let Some(bad) = probs.iter().find(|p| p.as_ref().len() != k) {
        return Err(Error::invalid(format!(
            "distributions differ in length: {k} vs {}",
            bad.as_ref().len()
        )));
    }
    let mut out = vec![0.0; k];
    for (p, &w) in probs.iter().zip(weights) {
        for (o, &v) in out.iter_mut().zip(p.as_ref()) {
            *o += w * v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    members: Vec<Resnet1d<f32>>,
    weights: Vec<f64>,
}

impl EnsembleModel {
    /// Members must agree on input shape and class count; weights are
    /// normalized.
    pub fn new(members: Vec<Resnet1d<f32>>, weights: &[f64]) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::invalid("an ensemble needs at least one member"));
        };
        if weights.len() != members.len() {
            return Err(Error::invalid(format!(
                "{} weights for {} members",
                weights.len(),
                members.len()
            )));
        }
        let shape = |m: &Resnet1d<f32>| {
            let c = m.config();
            (c.input_channels, c.input_length, c.class_count)
        };
        if members.iter().any(|m| shape(m) != shape(first)) {
            return Err(Error::invalid("members disagree on input shape or class count"));
        }
        Ok(Self {
            weights: normalize_weights(weights)?,
            members,
        })
    }

    pub fn uniform(members: Vec<Resnet1d<f32>>) -> Result<Self> {
        let w = vec![1.0; members.len()];
        Self::new(members, &w)
    }

    pub fn members(&self) -> &[Resnet1d<f32>] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.members[0].config().class_count
    }

    /// Total trainable parameters over all members.
    pub fn param_count(&self) -> usize {
        self.members.iter().map(Resnet1d::param_count).sum()
    }

    /// First `n` members, re-weighted uniformly.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::invalid(format!("prefix of {n} from {} members", self.len())));
        }
        Self::uniform(self.members[..n].to_vec())
    }

    /// `[member][sample][class]` softmax outputs.
    pub fn member_proba(&self, samples: &Samples) -> Result<Vec<Vec<Vec<f64>>>> {
        self.members.par_iter().map(|m| predict_proba(m, samples)).collect()
    }

    /// Combines per-member outputs from [`member_proba`](Self::member_proba).
    pub fn vote(&self, member_probs: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
        let n = member_probs.first().map_or(0, Vec::len);
        (0..n)
            .map(|i| {
                let rows: Vec<&[f64]> = member_probs.iter().map(|m| m[i].as_slice()).collect();
                soft_vote(&rows, &self.weights)
            })
            .collect()
    }

    pub fn predict_proba(&self, samples: &Samples) -> Result<Vec<Vec<f64>>> {
        self.vote(&self.member_proba(samples)?)
    }

    pub fn predict(&self, samples: &Samples) -> Result<Vec<usize>> {
        Ok(self.predict_proba(samples)?.iter().map(|p| argmax(p)).collect())
    }

    /// `(p_ve, class)` for one channel-major sample.
    pub fn predict_sample(&self, sample: &[f32]) -> Result<(Vec<f64>, usize)> {
        let probs = self
            .members
            .iter()
            .map(|m| {
                let z: Vec<f64> = m.forward_sample(sample)?.iter().map(|&v| v as f64).collect();
                Ok(softmax_unchecked(&z, 1.0))
            })
            .collect::<Result<Vec<_>>>()?;
        let p = soft_vote(&probs, &self.weights)?;
        let y = argmax(&p);
        Ok((p, y))
    }
}

/// One independently trained member per seed (used for both
/// initialization and batch order); members train in parallel.
pub fn train_members(
    seeds: &[u64],
    model: &Resnet1dConfig,
    train_set: &Samples,
    val_set: &Samples,
    cfg: &TrainConfig,
) -> Result<Vec<(Resnet1d<f32>, History)>> {
    in_pool(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut m = Resnet1d::new(model.clone(), seed)?;
                let h = train(&mut m, train_set, val_set, &TrainConfig { seed, ..*cfg })?;
                log::info!("member seed {seed}: best val acc {:.4} at epoch {}", h.best_val_accuracy, h.best_epoch);
                Ok((m, h))
            })
            .collect()
    })
}

/// `n` members with seeds `base_seed + i` and uniform weights.
pub fn train_ensemble(
    n: usize,
    model: &Resnet1dConfig,
    train_set: &Samples,
    val_set: &Samples,
    cfg: &TrainConfig,
    base_seed: u64,
) -> Result<(EnsembleModel, Vec<History>)> {
    if n == 0 {
        return Err(Error::invalid("an ensemble needs at least one member"));
    }
    let seeds: Vec<u64> = (0..n as u64).map(|i| base_seed + i).collect();
    let (members, histories) = train_members(&seeds, model, train_set, val_set, cfg)?
        .into_iter()
        .unzip();
    Ok((EnsembleModel::uniform(members)?, histories))
}

pub const ENSEMBLE_MANIFEST: &str = "ensemble.json";
pub const ENSEMBLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format_version: u32,
    pub n: usize,
    pub weights: Vec<f64>,
    /// Model files relative to the manifest.
    pub members: Vec<String>,
}

/// Writes `ensemble.json` and one model file per member into `dir`.
pub fn save_ensemble(ensemble: &EnsembleModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut members = Vec::with_capacity(ensemble.len());
    for (i, m) in ensemble.members.iter().enumerate() {
        let file = format!("member_{i:02}.kdsm");
        save_model(m, &dir.join(&file))?;
        members.push(file);
    }
    let manifest = EnsembleManifest {
        format_version: ENSEMBLE_VERSION,
        n: ensemble.len(),
        weights: ensemble.weights.clone(),
        members,
    };
    let path = dir.join(ENSEMBLE_MANIFEST);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
    Ok(())
}

pub fn load_ensemble(dir: &Path) -> Result<EnsembleModel> {
    let path = dir.join(ENSEMBLE_MANIFEST);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: EnsembleManifest = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    if manifest.format_version != ENSEMBLE_VERSION {
        return Err(Error::format(format!(
            "{}: unsupported version {}",
            path.display(),
            manifest.format_version
        )));
    }
    if manifest.n != manifest.members.len() || manifest.n != manifest.weights.len() {
        return Err(Error::format(format!(
            "{}: n = {} but {} members and {} weights",
            path.display(),
            manifest.n,
            manifest.members.len(),
            manifest.weights.len()
        )));
    }
    let members = manifest
        .members
        .iter()
        .map(|f| load_model(&dir.join(f)))
        .collect::<Result<Vec<_>>>()?;
    EnsembleModel::new(members, &manifest.weights)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))
}
