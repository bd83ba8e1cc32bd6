use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use kde_ssi::dataset::{
    generate_synthetic, generate_trial, load_archive, load_packed, save_archive, save_packed, split,
    write_segment_csv, GeneratorConfig, LabeledDataset, ScalerParams, SplitSpec, TrialConfig,
};
use kde_ssi::distill::{distill_train, DistillConfig};
use kde_ssi::ensemble::{load_ensemble, save_ensemble, train_ensemble as fit_ensemble, EnsembleModel};
use kde_ssi::harness::{
    bench as bench_models, run_experiment_grid, write_class_metrics_csv, write_confusion_csv,
    compute_metrics, GridConfig, Metrics,
};
use kde_ssi::nn::{load_model, predict, save_model, AdamConfig, Resnet1d, Resnet1dConfig, Samples, TrainConfig};
use kde_ssi::signal::recording::{read_recording, sidecar_path, write_manifest, write_recording, RecordingManifest};
use kde_ssi::signal::{process_recording, BandpassDesign, FilterPhase, PipelineConfig};
use kde_ssi::words::{extract_words, ExtractionConfig};

use crate::{CliError, Globals};

type CliResult = Result<(), CliError>;

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| data_err(dir, e))?;
    }
    let file = File::create(path).map_err(|e| data_err(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).map_err(|e| data_err(path, e))
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| data_err(path, e))
}

/// A packed file or an archive directory.
pub fn load_data(path: &Path) -> Result<LabeledDataset, CliError> {
    if path.is_dir() {
        Ok(load_archive(path)?)
    } else {
        Ok(load_packed(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Teacher,
    Student,
    CompactTeacher,
    CompactStudent,
}

impl Arch {
    pub fn config(self) -> Resnet1dConfig {
        match self {
            Arch::Teacher => Resnet1dConfig::teacher(),
            Arch::Student => Resnet1dConfig::student(),
            Arch::CompactTeacher => Resnet1dConfig::compact_teacher(),
            Arch::CompactStudent => Resnet1dConfig::compact_student(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitName {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    /// Soften the teacher probabilities themselves
    Literal,
    /// Soften the teacher log-probabilities
    LogProbs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct Optim {
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
}

impl Optim {
    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            seed,
            optimizer: AdamConfig {
                learning_rate: self.lr,
                ..AdamConfig::default()
            },
        }
    }
}

/// Standardized train/val/test samples for `seed`.
fn prepare(data: &LabeledDataset, seed: u64) -> Result<[Samples; 3], CliError> {
    let s = split(
        data,
        &SplitSpec {
            seed,
            ..SplitSpec::default()
        },
    )?;
    let (mut tr, mut va, mut te) = (s.train, s.val, s.test);
    kde_ssi::dataset::standardize(&mut tr, &mut [&mut va, &mut te])?;
    Ok([
        Samples::from_dataset(&tr),
        Samples::from_dataset(&va),
        Samples::from_dataset(&te),
    ])
}

fn check_data(data: &LabeledDataset, model: &Resnet1dConfig) -> CliResult {
    if data.class_count() != model.class_count {
        return Err(CliError::Data(format!(
            "dataset has {} classes, model {}",
            data.class_count(),
            model.class_count
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- synth-data

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 150)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 0.2)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.25)]
    pub amplitude_jitter: f64,
    /// Burst shift standard deviation, in samples
    #[arg(long, default_value_t = 30.0)]
    pub timing_jitter: f64,
    /// Write the packed single-file format (default when --out ends in .kdss)
    #[arg(long)]
    pub packed: bool,
    /// Write one raw ten-word recording CSV instead of a dataset
    #[arg(long)]
    pub trial: bool,
    /// Class id stored in the trial sidecar
    #[arg(long)]
    pub word_label: Option<usize>,
}

pub fn synth_data(a: &SynthArgs, g: &Globals) -> CliResult {
    let out = g.out()?;
    if a.trial {
        let trial = generate_trial(&TrialConfig {
            seed: g.seed,
            ..TrialConfig::default()
        });
        write_recording(out, &trial.raw, 0)?;
        write_manifest(
            &sidecar_path(out),
            &RecordingManifest {
                sample_rate_hz: trial.raw.sample_rate(),
                word_label: a.word_label,
                trial_id: Some(format!("synthetic-{}", g.seed)),
                ..RecordingManifest::default()
            },
        )?;
        print_json(&serde_json::json!({ "centers": trial.centers }));
        return Ok(());
    }
    let ds = generate_synthetic(
        &GeneratorConfig::nato(a.samples_per_class, a.noise, g.seed).with_jitter(a.amplitude_jitter, a.timing_jitter),
    );
    if a.packed || out.extension().is_some_and(|e| e == "kdss") {
        save_packed(&ds, out)?;
    } else {
        save_archive(&ds, out)?;
    }
    log::info!("wrote {} samples to {}", ds.len(), out.display());
    Ok(())
}

// ------------------------------------------------------------------- process

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ProcessArgs {
    /// Raw recording CSV (`sample,lao,dao,zm`)
    #[arg(id = "in", long = "in", value_name = "CSV")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    /// Filter forwards and backwards
    #[arg(long)]
    pub zero_phase: bool,
    /// One band-pass design instead of a high-pass/low-pass cascade
    #[arg(long)]
    pub single_bandpass: bool,
}

pub fn process(a: &ProcessArgs, g: &Globals) -> CliResult {
    let out = g.out()?;
    let (raw, manifest) = read_recording(&a.input)?;
    let mut cfg = PipelineConfig::default();
    if a.zero_phase {
        cfg.filter.phase = FilterPhase::ZeroPhase;
    }
    if a.single_bandpass {
        cfg.filter.design = BandpassDesign::Single;
    }
    let env = process_recording(&raw, &cfg).map_err(|e| data_err(&a.input, e))?;
    write_recording(out, &env, cfg.envelope.window_samples / 2)?;
    write_manifest(&sidecar_path(out), &manifest)?;
    Ok(())
}

// ------------------------------------------------------------------- extract

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ExtractArgs {
    /// Envelope CSV written by `process`
    #[arg(id = "in", long = "in", value_name = "CSV")]
    #[serde(rename = "in")]
    pub input: PathBuf,
}

#[derive(Serialize)]
struct ExtractIndex {
    source: PathBuf,
    label: Option<usize>,
    /// Consensus envelope peaks, in envelope samples.
    consensus_peaks: Vec<usize>,
    segments: Vec<ExtractedSegment>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct ExtractedSegment {
    file: String,
    /// Window centre, in envelope samples.
    center: usize,
    label: Option<usize>,
}

pub fn extract(a: &ExtractArgs, g: &Globals) -> CliResult {
    let out = g.out()?;
    let (env, manifest) = read_recording(&a.input)?;
    let ex = extract_words(&env, &ExtractionConfig::default()).map_err(|e| data_err(&a.input, e))?;
    fs::create_dir_all(out).map_err(|e| data_err(out, e))?;
    let mut segments = Vec::new();
    for (i, s) in ex.segments.iter().enumerate() {
        let file = format!("word_{i:02}.csv");
        write_segment_csv(&out.join(&file), s)?;
        segments.push(ExtractedSegment {
            file,
            center: s.center,
            label: manifest.word_label,
        });
    }
    for w in &ex.warnings {
        log::warn!("{}: {w}", a.input.display());
    }
    write_json(
        &out.join("index.json"),
        &ExtractIndex {
            source: a.input.clone(),
            label: manifest.word_label,
            consensus_peaks: ex.consensus_peaks,
            segments,
            warnings: ex.warnings,
        },
    )
}

// --------------------------------------------------------------------- train

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainCmdArgs {
    /// Dataset archive directory or packed file
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Arch::Teacher)]
    pub arch: Arch,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: Optim,
}

fn history_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".history.json");
    PathBuf::from(s)
}

pub fn train(a: &TrainCmdArgs, g: &Globals) -> CliResult {
    let out = g.out()?;
    let data = load_data(&a.data)?;
    let cfg = a.arch.config();
    check_data(&data, &cfg)?;
    let [tr, va, te] = prepare(&data, g.seed)?;
    let mut model = Resnet1d::new(cfg, g.seed)?;
    let h = kde_ssi::nn::train(&mut model, &tr, &va, &a.optim.train_config(g.seed))?;
    let acc = kde_ssi::nn::accuracy(&predict(&model, &te)?, te.labels());
    save_model(&model, out)?;
    write_json(&history_path(out), &h)?;
    println!(
        "best epoch {} val accuracy {:.4} test accuracy {acc:.4}",
        h.best_epoch, h.best_val_accuracy
    );
    Ok(())
}

// ------------------------------------------------------------ train-ensemble

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleArgs {
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Arch::Teacher)]
    pub arch: Arch,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: Optim,
}

pub fn train_ensemble(a: &EnsembleArgs, g: &Globals) -> CliResult {
    let out = g.out()?;
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let data = load_data(&a.data)?;
    let cfg = a.arch.config();
    check_data(&data, &cfg)?;
    let [tr, va, te] = prepare(&data, g.seed)?;
    let (ens, histories) = fit_ensemble(a.n, &cfg, &tr, &va, &a.optim.train_config(g.seed), g.seed)?;
    save_ensemble(&ens, out)?;
    write_json(&out.join("histories.json"), &histories)?;
    let acc = kde_ssi::nn::accuracy(&ens.predict(&te)?, te.labels());
    println!("{} members, test accuracy {acc:.4}", ens.len());
    Ok(())
}

// ------------------------------------------------------------------- distill

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DistillArgs {
    /// Ensemble directory written by `train-ensemble`
    #[arg(long)]
    pub teacher: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Temperature
    #[arg(long, default_value_t = 10.0)]
    pub t: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Soften ln p instead of the teacher probabilities p
    #[arg(long)]
    pub teacher_log_probs: bool,
    #[arg(long, value_enum, default_value_t = Arch::Student)]
    pub arch: Arch,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: Optim,
}

pub fn distill(a: &DistillArgs, g: &Globals) -> CliResult {
    let out = g.out()?;
    if !(a.t > 0.0 && a.t.is_finite()) {
        return Err(CliError::Usage(format!("--t must be positive, got {}", a.t)));
    }
    if !(0.0..=1.0).contains(&a.alpha) {
        return Err(CliError::Usage(format!("--alpha must lie in [0, 1], got {}", a.alpha)));
    }
    let teacher = load_ensemble(&a.teacher)?;
    let data = load_data(&a.data)?;
    let cfg = DistillConfig {
        alpha: a.alpha,
        temperature: a.t,
        teacher_log_probs: a.teacher_log_probs,
        student: a.arch.config(),
        train: a.optim.train_config(g.seed),
    };
    check_data(&data, &cfg.student)?;
    let [tr, va, te] = prepare(&data, g.seed)?;
    let (student, h) = distill_train(&teacher, &cfg, &tr, &va)?;
    save_model(&student, out)?;
    write_json(&history_path(out), &h)?;
    let acc = kde_ssi::nn::accuracy(&predict(&student, &te)?, te.labels());
    println!("student test accuracy {acc:.4}");
    Ok(())
}

// ------------------------------------------------------------------ evaluate

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// Model file, or ensemble directory
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Split to score; the split and the standardization are recomputed from --seed
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
}

enum AnyModel {
    Single(Resnet1d<f32>),
    Ensemble(EnsembleModel),
}

impl AnyModel {
    fn load(path: &Path) -> Result<Self, CliError> {
        if path.is_dir() {
            Ok(AnyModel::Ensemble(load_ensemble(path)?))
        } else {
            Ok(AnyModel::Single(load_model(path)?))
        }
    }

    fn predict(&self, s: &Samples) -> Result<Vec<usize>, CliError> {
        Ok(match self {
            AnyModel::Single(m) => predict(m, s)?,
            AnyModel::Ensemble(e) => e.predict(s)?,
        })
    }

    fn config(&self) -> &Resnet1dConfig {
        match self {
            AnyModel::Single(m) => m.config(),
            AnyModel::Ensemble(e) => e.members()[0].config(),
        }
    }
}

pub fn evaluate(a: &EvaluateArgs, g: &Globals) -> CliResult {
    let model = AnyModel::load(&a.model)?;
    let data = load_data(&a.data)?;
    check_data(&data, model.config())?;
    let s = split(
        &data,
        &SplitSpec {
            seed: g.seed,
            ..SplitSpec::default()
        },
    )?;
    let scaler = ScalerParams::fit(&s.train)?;
    let mut chosen = match a.split {
        SplitName::Train => s.train,
        SplitName::Val => s.val,
        SplitName::Test => s.test,
        SplitName::All => data,
    };
    scaler.apply(&mut chosen);
    let samples = Samples::from_dataset(&chosen);
    let metrics: Metrics = compute_metrics(&model.predict(&samples)?, samples.labels(), model.config().class_count)?;
    println!(
        "accuracy {:.4} macro precision {:.4} recall {:.4} F1 {:.4} ({} samples)",
        metrics.accuracy, metrics.macro_precision, metrics.macro_recall, metrics.macro_f1, metrics.total
    );
    if let Some(out) = &g.out {
        fs::create_dir_all(out).map_err(|e| data_err(out, e))?;
        write_json(&out.join("metrics.json"), &metrics)?;
        let p = out.join("confusion.csv");
        write_confusion_csv(&metrics, create(&p)?).map_err(|e| data_err(&p, e))?;
        let p = out.join("per_class.csv");
        write_class_metrics_csv(&metrics, create(&p)?).map_err(|e| data_err(&p, e))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------- grid

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GridArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Experiment seeds; a lone --seed stands in when this is not given
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "4,6,8,10")]
    pub n_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "5,10")]
    pub temperatures: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "literal")]
    pub formulations: Vec<Formulation>,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = Arch::Teacher)]
    pub teacher_arch: Arch,
    #[arg(long, value_enum, default_value_t = Arch::Student)]
    pub student_arch: Arch,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: Optim,
    /// Learning rate of the distillation stage (default: --lr)
    #[arg(long)]
    pub student_lr: Option<f64>,
    /// Epoch cap of the distillation stage (default: --epochs)
    #[arg(long)]
    pub student_epochs: Option<usize>,
}

pub fn grid(a: &GridArgs, g: &Globals) -> CliResult {
    let data = load_data(&a.data)?;
    let seeds_explicit = a.seeds != [1, 2, 3];
    let seeds = if g.seed_given && !seeds_explicit {
        vec![g.seed]
    } else {
        a.seeds.clone()
    };
    let teacher_train = a.optim.train_config(0);
    let mut student_train = teacher_train;
    if let Some(lr) = a.student_lr {
        student_train.optimizer.learning_rate = lr;
    }
    if let Some(e) = a.student_epochs {
        student_train.max_epochs = e;
    }
    let cfg = GridConfig {
        n_grid: a.n_grid.clone(),
        temperatures: a.temperatures.clone(),
        teacher_log_probs: a.formulations.iter().map(|f| *f == Formulation::LogProbs).collect(),
        seeds,
        alpha: a.alpha,
        teacher: a.teacher_arch.config(),
        student: a.student_arch.config(),
        teacher_train,
        student_train,
        ..GridConfig::default()
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let report = run_experiment_grid(&data, &cfg)?;
    match &g.out {
        Some(out) => {
            fs::create_dir_all(out).map_err(|e| data_err(out, e))?;
            write_json(&out.join("report.json"), &report)?;
            let p = out.join("report.csv");
            report.write_csv(create(&p)?).map_err(|e| data_err(&p, e))?;
        }
        None => print_json(&report),
    }
    for c in &report.cells {
        eprintln!("N={:<3} {:<10} {:.4} ± {:.4}", c.n, c.column, c.mean, c.sd);
    }
    Ok(())
}

// --------------------------------------------------------------------- bench

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BenchArgs {
    /// Trained ensemble directory (default: fresh --n members of --teacher-arch)
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    /// Trained student model (default: a fresh --student-arch)
    #[arg(long)]
    pub student: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = Arch::Teacher)]
    pub teacher_arch: Arch,
    #[arg(long, value_enum, default_value_t = Arch::Student)]
    pub student_arch: Arch,
    /// Samples per timed pass
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 20)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
}

pub fn bench(a: &BenchArgs, g: &Globals) -> CliResult {
    if a.n == 0 || a.batch == 0 || a.repetitions == 0 {
        return Err(CliError::Usage("--n, --batch and --repetitions must be positive".into()));
    }
    let teacher = match &a.teacher {
        Some(p) => load_ensemble(p)?,
        None => EnsembleModel::uniform(
            (0..a.n as u64)
                .map(|i| Resnet1d::new(a.teacher_arch.config(), g.seed + i))
                .collect::<kde_ssi::Result<_>>()?,
        )?,
    };
    let student = match &a.student {
        Some(p) => load_model(p)?,
        None => Resnet1d::new(a.student_arch.config(), g.seed)?,
    };
    let cfg = student.config().clone();
    let ds = generate_synthetic(&GeneratorConfig::nato(a.batch.div_ceil(cfg.class_count), 0.2, g.seed));
    let samples = Samples::from_dataset(&ds.select(&(0..a.batch).collect::<Vec<_>>()));
    if samples.channels() != cfg.input_channels || samples.length() != cfg.input_length {
        return Err(CliError::Data("models must take 3 x 1500 inputs".into()));
    }
    let report = bench_models(&teacher, &student, &samples, a.repetitions, a.warmup)?;
    match &g.out {
        Some(out) => write_json(out, &report)?,
        None => print_json(&report),
    }
    Ok(())
}
