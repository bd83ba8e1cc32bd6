use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::latency::mean_sd;
use super::metrics::{compute_metrics, Metrics};
use crate::dataset::{split, standardize, LabeledDataset, SplitSpec};
use crate::distill::{distill_train, DistillConfig};
use crate::ensemble::{in_pool, train_members, EnsembleModel};
use crate::nn::{accuracy, predict, Resnet1dConfig, Samples, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n_grid: Vec<usize>,
    pub temperatures: Vec<f64>,
    /// Teacher formulations to distill with (see [`DistillConfig::teacher_log_probs`]).
    pub teacher_log_probs: Vec<bool>,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    pub split_ratios: [u32; 3],
    pub teacher: Resnet1dConfig,
    pub student: Resnet1dConfig,
    pub teacher_train: TrainConfig,
    pub student_train: TrainConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![4, 6, 8, 10],
            temperatures: vec![5.0, 10.0],
            teacher_log_probs: vec![false],
            seeds: vec![1, 2, 3],
            alpha: 0.5,
            split_ratios: [4, 1, 1],
            teacher: Resnet1dConfig::teacher(),
            student: Resnet1dConfig::student(),
            teacher_train: TrainConfig::default(),
            student_train: TrainConfig::default(),
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::invalid(format!("bad ensemble sizes {:?}", self.n_grid)));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.temperatures.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::invalid(format!("bad temperatures {:?}", self.temperatures)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        self.teacher.validate()?;
        self.student.validate()?;
        self.teacher_train.validate()?;
        self.student_train.validate()
    }

    pub fn largest_n(&self) -> usize {
        self.n_grid.iter().copied().max().unwrap_or(0)
    }
}

/// Seed of member `i` in the pool trained for experiment seed `seed`.
pub fn member_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1000).wrapping_add(i as u64)
}

/// `"ve"`, or `"t{T}"` with a `_logp` suffix for the log-probability
/// formulation.
pub fn column_name(temperature: Option<f64>, log_probs: bool) -> String {
    match temperature {
        None => "ve".into(),
        Some(t) if log_probs => format!("t{t}_logp"),
        Some(t) => format!("t{t}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub n: usize,
    pub column: String,
    pub temperature: Option<f64>,
    pub teacher_log_probs: Option<bool>,
    pub accuracy: f64,
    pub epochs: Option<usize>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub member_seeds: Vec<u64>,
    /// Test accuracy of each pool member on its own.
    pub member_accuracies: Vec<f64>,
    pub single_accuracy: f64,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub n: usize,
    pub column: String,
    /// One per seed, in seed order.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: GridConfig,
    pub seeds: Vec<u64>,
    pub columns: Vec<String>,
    pub single: GridCell,
    pub cells: Vec<GridCell>,
    pub per_seed: Vec<SeedRun>,
}

impl ExperimentReport {
    pub fn cell(&self, n: usize, column: &str) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.n == n && c.column == column)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::format(format!("experiment report: {e}")))
    }

    /// Flat `seed,n,column,accuracy,macro_f1` rows; single models appear with
    /// `n = 1` and column `single`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["seed", "n", "column", "accuracy", "macro_f1"])?;
        for s in &self.per_seed {
            w.write_record([
                s.seed.to_string(),
                "1".into(),
                "single".into(),
                s.single_accuracy.to_string(),
                String::new(),
            ])?;
            for r in &s.runs {
                w.write_record([
                    s.seed.to_string(),
                    r.n.to_string(),
                    r.column.clone(),
                    r.accuracy.to_string(),
                    r.metrics.macro_f1.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn prepare(data: &LabeledDataset, ratios: [u32; 3], seed: u64) -> Result<[Samples; 3]> {
    let s = split(
        data,
        &SplitSpec {
            ratios,
            seed,
            stratified: true,
        },
    )?;
    let (mut tr, mut va, mut te) = (s.train, s.val, s.test);
    standardize(&mut tr, &mut [&mut va, &mut te])?;
    Ok([
        Samples::from_dataset(&tr),
        Samples::from_dataset(&va),
        Samples::from_dataset(&te),
    ])
}

fn score(preds: &[usize], test: &Samples, k: usize) -> Result<(f64, Metrics)> {
    let m = compute_metrics(preds, test.labels(), k)?;
    Ok((m.accuracy, m))
}

fn run_seed(data: &LabeledDataset, cfg: &GridConfig, seed: u64) -> Result<SeedRun> {
    let [train, val, test] = prepare(data, cfg.split_ratios, seed)?;
    let k = cfg.teacher.class_count;

    // One pool per seed; smaller ensembles are its prefixes.
    let member_seeds: Vec<u64> = (0..cfg.largest_n()).map(|i| member_seed(seed, i)).collect();
    let members: Vec<_> = train_members(&member_seeds, &cfg.teacher, &train, &val, &TrainConfig { seed, ..cfg.teacher_train })?
        .into_iter()
        .map(|(m, _)| m)
        .collect();
    let member_accuracies = members
        .iter()
        .map(|m| Ok(accuracy(&predict(m, &test)?, test.labels())))
        .collect::<Result<Vec<f64>>>()?;
    let pool = EnsembleModel::uniform(members)?;

    let mut runs = Vec::new();
    let mut jobs = Vec::new();
    for &n in &cfg.n_grid {
        let teacher = pool.prefix(n)?;
        let (acc, metrics) = score(&teacher.predict(&test)?, &test, k)?;
        log::info!("seed {seed} N={n}: ensemble accuracy {acc:.4}");
        runs.push(RunRecord {
            n,
            column: column_name(None, false),
            temperature: None,
            teacher_log_probs: None,
            accuracy: acc,
            epochs: None,
            metrics,
        });
        for &t in &cfg.temperatures {
            for &log_probs in &cfg.teacher_log_probs {
                jobs.push((n, t, log_probs));
            }
        }
    }

    let students = in_pool(|| {
        jobs.par_iter()
            .map(|&(n, t, log_probs)| {
                let teacher = pool.prefix(n)?;
                let dc = DistillConfig {
                    alpha: cfg.alpha,
                    temperature: t,
                    teacher_log_probs: log_probs,
                    student: cfg.student.clone(),
                    train: TrainConfig { seed, ..cfg.student_train },
                };
                let (student, h) = distill_train(&teacher, &dc, &train, &val)?;
                let (acc, metrics) = score(&predict(&student, &test)?, &test, k)?;
                log::info!("seed {seed} N={n} T={t} log={log_probs}: student accuracy {acc:.4}");
                Ok(RunRecord {
                    n,
                    column: column_name(Some(t), log_probs),
                    temperature: Some(t),
                    teacher_log_probs: Some(log_probs),
                    accuracy: acc,
                    epochs: Some(h.epochs.len()),
                    metrics,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    runs.extend(students);
    runs.sort_by_key(|r| r.n);

    Ok(SeedRun {
        seed,
        single_accuracy: member_accuracies.iter().sum::<f64>() / member_accuracies.len() as f64,
        member_seeds,
        member_accuracies,
        runs,
    })
}

fn summarize(n: usize, column: String, accuracies: Vec<f64>) -> GridCell {
    let (mean, sd) = mean_sd(&accuracies);
    GridCell {
        n,
        column,
        accuracies,
        mean,
        sd,
    }
}

/// For every seed: split and standardize `data`, train a pool of
/// `max(n_grid)` members, score each prefix ensemble, and distill a student
/// for every `(N, T, formulation)`. Cells hold test accuracy mean ± sd over
/// seeds. The report depends only on `data` and `cfg`.
pub fn run_experiment_grid(data: &LabeledDataset, cfg: &GridConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if data.class_count() != cfg.teacher.class_count || data.class_count() != cfg.student.class_count {
        return Err(Error::invalid(format!(
            "dataset has {} classes, models {} and {}",
            data.class_count(),
            cfg.teacher.class_count,
            cfg.student.class_count
        )));
    }
    let per_seed = cfg
        .seeds
        .iter()
        .map(|&s| run_seed(data, cfg, s))
        .collect::<Result<Vec<_>>>()?;

    let mut columns = vec![column_name(None, false)];
    for &t in &cfg.temperatures {
        for &lp in &cfg.teacher_log_probs {
            columns.push(column_name(Some(t), lp));
        }
    }
    let mut cells = Vec::new();
    for &n in &cfg.n_grid {
        for col in &columns {
            let acc = per_seed
                .iter()
                .map(|s| {
                    s.runs
                        .iter()
                        .find(|r| r.n == n && &r.column == col)
                        .map(|r| r.accuracy)
                        .expect("every seed runs every cell")
                })
                .collect();
            cells.push(summarize(n, col.clone(), acc));
        }
    }
    let single = summarize(1, "single".into(), per_seed.iter().map(|s| s.single_accuracy).collect());
    Ok(ExperimentReport {
        config: cfg.clone(),
        seeds: cfg.seeds.clone(),
        columns,
        single,
        cells,
        per_seed,
    })
}
