//! `mtl`: train, apply, evaluate and inspect multiple template learning
//! models.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "mtl", version, about = "Multiple template learning for sequence labeling and dependency parsing")]
struct Cli {
    /// Worker threads for decoding (default: all cores).
    #[arg(long, global = true, env = "MTL_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write it to a file.
    Train(TrainArgs),
    /// Decode an unlabeled corpus with a trained model.
    Predict(PredictArgs),
    /// Score predictions against gold annotations.
    Eval(EvalArgs),
    /// Report the learned per-template weights of a model.
    Weights(WeightsArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    #[value(alias = "sequence")]
    Seq,
    #[value(alias = "dependency")]
    Dep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Bie,
    Bio,
    Raw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DecoderArg {
    Projective,
    Nonprojective,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum, env = "MTL_TASK")]
    pub task: TaskArg,
    /// Template file (dependency task: built-in templates when omitted).
    #[arg(long, env = "MTL_TEMPLATES")]
    pub templates: Option<PathBuf>,
    /// Training corpus.
    #[arg(long, env = "MTL_DATA")]
    pub data: PathBuf,
    /// Label scheme of a sequence corpus.
    #[arg(long, value_enum, default_value = "raw", env = "MTL_SCHEME")]
    pub scheme: SchemeArg,
    /// Regularization constant C.
    #[arg(short = 'c', default_value_t = 1.0, env = "MTL_C")]
    pub c: f64,
    /// Multiply C by the number of training instances.
    #[arg(long, env = "MTL_C_TIMES_N")]
    pub c_times_n: bool,
    /// Stopping tolerance ε on R_emp − R_s.
    #[arg(short = 'e', default_value_t = 0.5, env = "MTL_EPSILON")]
    pub epsilon: f64,
    #[arg(long, default_value_t = 500, env = "MTL_MAX_ITER")]
    pub max_iter: usize,
    /// Fix every template weight at 1/m (plain structural SVM).
    #[arg(long, env = "MTL_UNIFORM")]
    pub uniform: bool,
    /// Templates whose weight stays at 1/m while the others are learned.
    #[arg(long, value_delimiter = ',', env = "MTL_FIXED_GROUPS")]
    pub fixed_groups: Vec<String>,
    #[arg(long, value_enum, default_value = "projective", env = "MTL_DECODER")]
    pub decoder: DecoderArg,
    /// Allow exactly one child of the root.
    #[arg(long, env = "MTL_SINGLE_ROOT")]
    pub single_root: bool,
    /// Output model file.
    #[arg(short = 'o', long = "output", env = "MTL_MODEL")]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(short = 'm', long, env = "MTL_MODEL")]
    pub model: PathBuf,
    /// Corpus to decode (stdin when omitted).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_enum, env = "MTL_TASK")]
    pub task: TaskArg,
    #[arg(long)]
    pub gold: PathBuf,
    /// Predictions; for sequences the last column is the predicted label.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, value_enum, default_value = "raw", env = "MTL_SCHEME")]
    pub scheme: SchemeArg,
    /// Training corpus whose words define the in-vocabulary set for R_iv.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Also print machine-readable key=value lines.
    #[arg(long)]
    pub key_values: bool,
}

#[derive(Args, Debug)]
pub struct WeightsArgs {
    #[arg(short = 'm', long, env = "MTL_MODEL")]
    pub model: PathBuf,
    /// Also write the report as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MTL_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Train(args) => commands::train(&args),
        Command::Predict(args) => commands::predict(&args),
        Command::Eval(args) => commands::eval(&args),
        Command::Weights(args) => commands::weights(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(err.exit_code())
        }
    }
}
