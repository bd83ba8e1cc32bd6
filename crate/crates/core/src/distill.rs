//! Offline knowledge distillation from a frozen soft-voting ensemble.
//!
//! The student minimizes
//! `alpha T^2 KL(softmax(z_s / T) || softmax(u / T)) + (1 - alpha) CE(y, softmax(z_s))`
//! where `u` is the teacher's probability vector itself (the default) or its
//! logarithm when [`DistillConfig::teacher_log_probs`] is set. Feeding the
//! probabilities through a second softmax flattens the target considerably;
//! the log form recovers the usual logit-matching formulation.

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleModel;
use crate::nn::{
    kl_divergence, log_t_softmax, softmax_unchecked, train_with, History, Objective, Resnet1d,
    Resnet1dConfig, Samples, TrainConfig, LOG_CLAMP,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub alpha: f64,
    pub temperature: f64,
    /// Soften `ln p_ve` instead of `p_ve`.
    pub teacher_log_probs: bool,
    pub student: Resnet1dConfig,
    /// `train.seed` also seeds the student initialization.
    pub train: TrainConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            temperature: 10.0,
            teacher_log_probs: false,
            student: Resnet1dConfig::student(),
            train: TrainConfig::default(),
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        check_hyper(self.temperature, self.alpha)?;
        self.student.validate()?;
        self.train.validate()
    }
}

fn check_hyper(t: f64, alpha: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {t}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

fn check_distribution(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.is_empty() || p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("not a probability distribution: {p:?}")));
    }
    Ok(())
}

/// The vector the teacher contributes before temperature scaling.
pub fn teacher_input(p_ve: &[f64], log_probs: bool) -> Vec<f64> {
    if log_probs {
        p_ve.iter().map(|p| p.max(LOG_CLAMP).ln()).collect()
    } else {
        p_ve.to_vec()
    }
}

/// Loss and `dL/dz_s` given the teacher's tempered log-distribution.
fn kd_terms(z_s: &[f64], log_q: &[f64], y: usize, t: f64, alpha: f64) -> (f64, Vec<f64>) {
    let log_s = log_t_softmax(z_s, t).expect("temperature checked");
    let s: Vec<f64> = log_s.iter().map(|v| v.exp()).collect();
    let q: Vec<f64> = log_q.iter().map(|v| v.exp()).collect();
    let kl = kl_divergence(&s, &q).expect("equal lengths");
    let p = softmax_unchecked(z_s, 1.0);
    let ce = -p[y].max(LOG_CLAMP).ln();

    let loss = alpha * t * t * kl + (1.0 - alpha) * ce;
    let grad = (0..z_s.len())
        .map(|j| {
            let soft = s[j] * (log_s[j] - log_q[j] - kl);
            let hard = p[j] - if j == y { 1.0 } else { 0.0 };
            alpha * t * soft + (1.0 - alpha) * hard
        })
        .collect();
    (loss, grad)
}

fn check_kd_args(z_s: &[f64], p_ve: &[f64], y: usize, t: f64, alpha: f64) -> Result<()> {
    check_hyper(t, alpha)?;
    check_distribution(p_ve)?;
    if z_s.len() != p_ve.len() {
        return Err(Error::invalid(format!(
            "{} student logits for {} teacher probabilities",
            z_s.len(),
            p_ve.len()
        )));
    }
    if y >= z_s.len() {
        return Err(Error::invalid(format!("label {y} outside [0, {})", z_s.len())));
    }
    Ok(())
}

/// Distillation loss for one sample with the teacher probabilities
/// softened as given (see the module docs).
pub fn kd_loss(z_s: &[f64], p_ve: &[f64], y: usize, t: f64, alpha: f64, teacher_log_probs: bool) -> Result<f64> {
    Ok(kd_loss_grad(z_s, p_ve, y, t, alpha, teacher_log_probs)?.0)
}

/// [`kd_loss`] together with its gradient with respect to `z_s`.
pub fn kd_loss_grad(
    z_s: &[f64],
    p_ve: &[f64],
    y: usize,
    t: f64,
    alpha: f64,
    teacher_log_probs: bool,
) -> Result<(f64, Vec<f64>)> {
    check_kd_args(z_s, p_ve, y, t, alpha)?;
    let log_q = log_t_softmax(&teacher_input(p_ve, teacher_log_probs), t)?;
    Ok(kd_terms(z_s, &log_q, y, t, alpha))
}

/// Batch objective over precomputed teacher outputs.
pub struct KdObjective {
    /// Tempered teacher log-distribution per training sample.
    log_targets: Vec<Vec<f64>>,
    labels: Vec<usize>,
    temperature: f64,
    alpha: f64,
}

impl KdObjective {
    pub fn new(
        teacher_probs: &[Vec<f64>],
        labels: &[usize],
        temperature: f64,
        alpha: f64,
        teacher_log_probs: bool,
    ) -> Result<Self> {
        check_hyper(temperature, alpha)?;
        if teacher_probs.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} teacher rows for {} labels",
                teacher_probs.len(),
                labels.len()
            )));
        }
        let log_targets = teacher_probs
            .iter()
            .map(|p| {
                check_distribution(p)?;
                log_t_softmax(&teacher_input(p, teacher_log_probs), temperature)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            log_targets,
            labels: labels.to_vec(),
            temperature,
            alpha,
        })
    }
}

impl Objective for KdObjective {
    fn loss_and_grad(&self, logits: &[f32], classes: usize, indices: &[usize]) -> (f64, Vec<f32>) {
        let scale = 1.0 / indices.len() as f64;
        let mut loss = 0.0;
        let mut grad = Vec::with_capacity(logits.len());
        for (row, &i) in logits.chunks(classes).zip(indices) {
            let z: Vec<f64> = row.iter().map(|&v| v as f64).collect();
            let (l, g) = kd_terms(&z, &self.log_targets[i], self.labels[i], self.temperature, self.alpha);
            loss += l;
            grad.extend(g.iter().map(|v| (v * scale) as f32));
        }
        (loss * scale, grad)
    }
}

/// Trains a fresh student against the frozen teacher. Teacher outputs are
/// computed once over `train_set`; early stopping uses hard-label accuracy
/// on `val_set`.
pub fn distill_train(
    teacher: &EnsembleModel,
    cfg: &DistillConfig,
    train_set: &Samples,
    val_set: &Samples,
) -> Result<(Resnet1d<f32>, History)> {
    cfg.validate()?;
    if cfg.student.class_count != teacher.class_count() {
        return Err(Error::invalid(format!(
            "student has {} classes, teacher {}",
            cfg.student.class_count,
            teacher.class_count()
        )));
    }
    let p_ve = teacher.predict_proba(train_set)?;
    let objective = KdObjective::new(&p_ve, train_set.labels(), cfg.temperature, cfg.alpha, cfg.teacher_log_probs)?;
    let mut student = Resnet1d::new(cfg.student.clone(), cfg.train.seed)?;
    let history = train_with(&mut student, train_set, val_set, &cfg.train, &objective)?;
    Ok((student, history))
}
