use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

mod commands;
mod config;

use commands::*;

#[derive(Parser, Debug)]
#[command(name = "kde-ssi", version, about = "Silent-speech recognition from three-channel facial sEMG")]
struct Cli {
    /// Seed for every random choice of the command
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON object whose keys mirror the long flags; explicit flags win
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,
    /// Output file or directory
    #[arg(long, global = true, visible_alias = "out-dir")]
    out: Option<PathBuf>,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled synthetic word dataset, or one raw trial with --trial
    SynthData(SynthArgs),
    /// Condition a raw recording CSV into its RMS envelope
    Process(ProcessArgs),
    /// Cut the words of an envelope CSV into 1500-sample segments
    Extract(ExtractArgs),
    /// Train one backbone
    Train(TrainCmdArgs),
    /// Train a soft-voting ensemble
    TrainEnsemble(EnsembleArgs),
    /// Distill an ensemble into a student
    Distill(DistillArgs),
    /// Score a model or ensemble on a dataset split
    Evaluate(EvaluateArgs),
    /// Ensemble size x temperature experiment grid
    Grid(GridArgs),
    /// Parameter counts and per-sample latency of teacher and student
    Bench(BenchArgs),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<kde_ssi::Error> for CliError {
    fn from(e: kde_ssi::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub struct Globals {
    pub seed: u64,
    pub seed_given: bool,
    pub out: Option<PathBuf>,
}

impl Globals {
    pub fn out(&self) -> Result<&std::path::Path, CliError> {
        self.out.as_deref().ok_or_else(|| CliError::Usage("--out is required".into()))
    }
}

fn run() -> Result<(), CliError> {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                // a closed pipe (`| head`) is not an error
                use std::io::Write;
                let _ = write!(std::io::stdout(), "{}", e.render());
                return Ok(());
            }
            return Err(CliError::Usage(e.render().to_string()));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?;

    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    let mut cfg = match &cli.config {
        Some(p) => Some((config::read_config(p)?, p.clone())),
        None => None,
    };
    let explicit = |id: &str| matches.value_source(id) == Some(clap::parser::ValueSource::CommandLine);
    let mut globals = Globals {
        seed: cli.seed.unwrap_or(0),
        seed_given: cli.seed.is_some(),
        out: cli.out.clone(),
    };
    if let Some((map, path)) = &mut cfg {
        if let Some(v) = map.remove("seed") {
            if !explicit("seed") {
                globals.seed = serde_json::from_value(v)
                    .map_err(|e| CliError::Data(format!("{}: seed: {e}", path.display())))?;
                globals.seed_given = true;
            }
        }
        if let Some(v) = map.remove("out") {
            if !explicit("out") {
                globals.out = serde_json::from_value(v)
                    .map_err(|e| CliError::Data(format!("{}: out: {e}", path.display())))?;
            }
        }
    }

    let sub = matches.subcommand().map(|(_, m)| m).expect("subcommand is required");
    macro_rules! merged {
        ($args:expr) => {{
            let args = $args;
            match &mut cfg {
                Some((map, path)) => {
                    let a = config::merge(args, sub, map, path)?;
                    if let Some(k) = map.keys().next() {
                        return Err(CliError::Data(format!("{}: unknown key `{k}`", path.display())));
                    }
                    a
                }
                None => args,
            }
        }};
    }

    match cli.command {
        Command::SynthData(a) => synth_data(&merged!(a), &globals),
        Command::Process(a) => process(&merged!(a), &globals),
        Command::Extract(a) => extract(&merged!(a), &globals),
        Command::Train(a) => train(&merged!(a), &globals),
        Command::TrainEnsemble(a) => train_ensemble(&merged!(a), &globals),
        Command::Distill(a) => distill(&merged!(a), &globals),
        Command::Evaluate(a) => evaluate(&merged!(a), &globals),
        Command::Grid(a) => grid(&merged!(a), &globals),
        Command::Bench(a) => bench(&merged!(a), &globals),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprint!("{msg}");
            if !msg.ends_with('\n') {
                eprintln!();
            }
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
