use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleModel;
use crate::nn::{argmax, Resnet1d, Samples};
use crate::{Error, Result};

/// Warm-up passes always performed before timing.
pub const MIN_WARMUP: usize = 10;

/// Single-sample inference.
pub trait Classifier {
    fn classify(&self, sample: &[f32]) -> Result<usize>;
    fn param_count(&self) -> usize;
}

impl Classifier for Resnet1d<f32> {
    fn classify(&self, sample: &[f32]) -> Result<usize> {
        Ok(argmax(&self.forward_sample(sample)?))
    }

    fn param_count(&self) -> usize {
        Resnet1d::param_count(self)
    }
}

impl Classifier for EnsembleModel {
    fn classify(&self, sample: &[f32]) -> Result<usize> {
        Ok(self.predict_sample(sample)?.1)
    }

    fn param_count(&self) -> usize {
        EnsembleModel::param_count(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    /// Mean per-sample time over repetitions, in milliseconds.
    pub mean_ms: f64,
    pub sd_ms: f64,
    pub repetitions: usize,
    pub warmup: usize,
    pub batch: usize,
}

/// Per-sample wall-clock time of classifying every sample in `batch`, one
/// at a time on the calling thread. Each repetition is one pass over the
/// batch; at least [`MIN_WARMUP`] untimed passes come first.
pub fn measure_latency<C: Classifier + ?Sized>(
    model: &C,
    batch: &Samples,
    repetitions: usize,
    warmup: usize,
) -> Result<LatencyStats> {
    if batch.is_empty() || repetitions == 0 {
        return Err(Error::invalid("latency needs a non-empty batch and at least one repetition"));
    }
    let warmup = warmup.max(MIN_WARMUP);
    let mut sink = 0usize;
    for _ in 0..warmup {
        for i in 0..batch.len() {
            sink = sink.wrapping_add(model.classify(batch.sample(i))?);
        }
    }
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        for i in 0..batch.len() {
            sink = sink.wrapping_add(model.classify(batch.sample(i))?);
        }
        times.push(start.elapsed().as_secs_f64() * 1e3 / batch.len() as f64);
    }
    std::hint::black_box(sink);
    let (mean_ms, sd_ms) = mean_sd(&times);
    Ok(LatencyStats {
        mean_ms,
        sd_ms,
        repetitions,
        warmup,
        batch: batch.len(),
    })
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Teacher vs student size and speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub teacher_members: usize,
    pub teacher_params: usize,
    pub student_params: usize,
    pub teacher: LatencyStats,
    pub student: LatencyStats,
    /// teacher / student
    pub param_ratio: f64,
    pub speedup: f64,
}

pub fn bench(
    teacher: &EnsembleModel,
    student: &Resnet1d<f32>,
    batch: &Samples,
    repetitions: usize,
    warmup: usize,
) -> Result<BenchReport> {
    let t = measure_latency(teacher, batch, repetitions, warmup)?;
    let s = measure_latency(student, batch, repetitions, warmup)?;
    Ok(BenchReport {
        teacher_members: teacher.len(),
        teacher_params: teacher.param_count(),
        student_params: student.param_count(),
        param_ratio: teacher.param_count() as f64 / student.param_count() as f64,
        speedup: t.mean_ms / s.mean_ms,
        teacher: t,
        student: s,
    })
}
