use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use log::info;
use rayon::prelude::*;

use mtl_core::corpus::{
    read_dependency_corpus, read_sequence_corpus, read_sequence_corpus_into, write_dependency_corpus, LabelCodec,
    LabelScheme, LabelTable, SequenceInstance, Token,
};
use mtl_core::dependency::{
    parse_edge_templates, DecodeOptions, DecoderKind, DependencyParser, DependencyTask, EdgeFeatureExtractor,
    DEFAULT_PARSE_TEMPLATES,
};
use mtl_core::eval::{evaluate_dependency, evaluate_sequence, segmentation_vocabulary};
use mtl_core::model::Model;
use mtl_core::sequence::{viterbi_decode, SequenceFeaturizer, SequenceScorer, SequenceTask};
use mtl_core::solver::{train as run_solver, SolverConfig, StructuredTask, TrainOutcome, WeightingMode};
use mtl_core::template::{check_columns, parse_templates};

use crate::{DecoderArg, EvalArgs, PredictArgs, SchemeArg, TaskArg, TrainArgs, WeightsArgs};

/// An error carrying the process exit code: 2 for usage problems such as
/// missing input files, 1 for everything else.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    inner: anyhow::Error,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        self.code
    }

    fn usage(inner: anyhow::Error) -> Self {
        CliError { code: 2, inner }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if f.alternate() {
            write!(f, "{:#}", self.inner)
        } else {
            write!(f, "{}", self.inner)
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(err: E) -> Self {
        CliError { code: 1, inner: err.into() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn read_input(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::usage(anyhow!("cannot read {}: {e}", path.display())))
}

fn read_optional_input(path: Option<&Path>) -> CliResult<String> {
    match path {
        Some(p) => read_input(p),
        None => {
            let mut text = String::new();
            io::stdin().read_to_string(&mut text).context("reading stdin")?;
            Ok(text)
        }
    }
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Column count of the first non-blank line, if any.
fn column_count(text: &str) -> Option<usize> {
    text.lines()
        .map(|l| l.split_whitespace().count())
        .find(|&n| n > 0)
}

fn scheme(arg: SchemeArg) -> LabelScheme {
    match arg {
        SchemeArg::Bie => LabelScheme::Bie,
        SchemeArg::Bio => LabelScheme::Bio,
        SchemeArg::Raw => LabelScheme::Raw,
    }
}

fn solver_config(args: &TrainArgs, n: usize, group_names: &[String]) -> CliResult<SolverConfig> {
    let c = if args.c_times_n { args.c * n as f64 } else { args.c };
    let fixed_groups = args
        .fixed_groups
        .iter()
        .map(|name| {
            group_names
                .iter()
                .position(|g| g == name)
                .ok_or_else(|| CliError::usage(anyhow!("--fixed-groups: no template named '{name}'")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(SolverConfig {
        c,
        epsilon: args.epsilon,
        max_iterations: args.max_iter,
        mode: if args.uniform { WeightingMode::Uniform } else { WeightingMode::Mkl },
        fixed_groups,
        ..SolverConfig::default()
    })
}

fn run_training<T: StructuredTask>(task: &T, config: &SolverConfig) -> CliResult<(TrainOutcome, BTreeMap<String, String>)> {
    let outcome = run_solver(task, config, |record| eprintln!("{record}"))?;
    eprintln!(
        "halt={} iterations={} gap={:.6e}",
        outcome.halt,
        outcome.iterations(),
        outcome.final_gap()
    );
    let diagnostics = BTreeMap::from([
        ("instances".to_string(), task.num_instances().to_string()),
        ("c".to_string(), config.c.to_string()),
        ("epsilon".to_string(), config.epsilon.to_string()),
        (
            "mode".to_string(),
            match config.mode {
                WeightingMode::Mkl => "mkl",
                WeightingMode::Uniform => "uniform",
            }
            .to_string(),
        ),
        ("iterations".to_string(), outcome.iterations().to_string()),
        ("final_gap".to_string(), outcome.final_gap().to_string()),
        ("halt".to_string(), outcome.halt.to_string()),
        ("working_set".to_string(), outcome.working_set.len().to_string()),
    ]);
    Ok((outcome, diagnostics))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn save_model(model: &Model, path: &Path) -> CliResult<()> {
    model
        .save(path, now())
        .with_context(|| format!("cannot write model {}", path.display()))?;
    eprintln!("model written to {} (payload sha256 {})", path.display(), model.checksum());
    Ok(())
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let templates = match (&args.templates, args.task) {
        (Some(path), _) => read_input(path)?,
        (None, TaskArg::Dep) => DEFAULT_PARSE_TEMPLATES.to_owned(),
        (None, TaskArg::Seq) => return Err(CliError::usage(anyhow!("--templates is required for sequence training"))),
    };
    let data = read_input(&args.data)?;
    match args.task {
        TaskArg::Seq => {
            let specs = parse_templates(&templates).context("parsing templates")?;
            let columns = column_count(&data).ok_or_else(|| anyhow!("training corpus {} is empty", args.data.display()))?;
            let (corpus, table) =
                read_sequence_corpus(data.as_bytes(), columns).with_context(|| format!("reading {}", args.data.display()))?;
            check_columns(&specs, columns - 1)?;
            info!("{} sentences, {} labels", corpus.len(), table.len());
            let featurizer = SequenceFeaturizer::build(specs, &corpus, table.len());
            let task = SequenceTask::new(&featurizer, &corpus)?;
            let config = solver_config(args, corpus.len(), &featurizer.group_names())?;
            let (outcome, diagnostics) = run_training(&task, &config)?;
            let codec = LabelCodec::new(scheme(args.scheme), table);
            let model = Model::from_sequence(
                &templates,
                &featurizer,
                &codec,
                columns - 1,
                outcome.mu,
                outcome.weights,
                diagnostics,
            );
            save_model(&model, &args.output)
        }
        TaskArg::Dep => {
            let edge_templates = parse_edge_templates(&templates).context("parsing templates")?;
            let corpus = read_dependency_corpus(data.as_bytes()).with_context(|| format!("reading {}", args.data.display()))?;
            if corpus.is_empty() {
                return Err(anyhow!("training corpus {} is empty", args.data.display()).into());
            }
            let extractor = EdgeFeatureExtractor::build(edge_templates, &corpus)?;
            let options = DecodeOptions {
                decoder: match args.decoder {
                    DecoderArg::Projective => DecoderKind::Projective,
                    DecoderArg::Nonprojective => DecoderKind::NonProjective,
                },
                single_root: args.single_root,
            };
            let task = DependencyTask::new(&extractor, &corpus, options)?;
            let config = solver_config(args, corpus.len(), &extractor.group_names())?;
            let (outcome, diagnostics) = run_training(&task, &config)?;
            let model = Model::from_dependency(&templates, &extractor, options, outcome.mu, outcome.weights, diagnostics);
            save_model(&model, &args.output)
        }
    }
}

fn load_model(path: &Path) -> CliResult<Model> {
    if !path.exists() {
        return Err(CliError::usage(anyhow!("model file {} does not exist", path.display())));
    }
    Ok(Model::load(path).with_context(|| format!("loading model {}", path.display()))?)
}

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    let text = read_optional_input(args.input.as_deref())?;
    let mut out = open_output(args.output.as_deref())?;
    if model.task.is_dependency() {
        let extractor = model.edge_extractor()?;
        let options = model.decode_options()?;
        let corpus = read_dependency_corpus(text.as_bytes()).context("reading input")?;
        let parser = DependencyParser {
            extractor: &extractor,
            weights: &model.weights,
            options,
        };
        let heads: Vec<Vec<usize>> = corpus.par_iter().map(|inst| parser.parse(inst)).collect();
        write_dependency_corpus(&mut out, &corpus, Some(&heads))?;
    } else {
        let featurizer = model.sequence_featurizer()?;
        let Some(columns) = column_count(&text) else {
            out.flush()?;
            return Ok(());
        };
        if columns != model.columns && columns != model.columns + 1 {
            return Err(anyhow!(
                "input has {columns} columns; the model expects {} (optionally followed by a gold label)",
                model.columns
            )
            .into());
        }
        let sentences = mtl_core::corpus::read_column_sentences(text.as_bytes(), Some(columns)).context("reading input")?;
        let scorer = SequenceScorer::new(&featurizer, &model.weights)?;
        let predictions: Vec<Vec<usize>> = sentences
            .par_iter()
            .map(|rows| {
                let tokens: Vec<Token> = rows
                    .iter()
                    .map(|r| Token {
                        columns: r[..model.columns].to_vec(),
                    })
                    .collect();
                viterbi_decode(&scorer, &featurizer.token_features(&tokens)).0
            })
            .collect();
        for (rows, labels) in sentences.iter().zip(&predictions) {
            for (row, &y) in rows.iter().zip(labels) {
                writeln!(out, "{} {}", row.join(" "), model.labels[y])?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_labeled(path: &Path, table: &mut LabelTable) -> CliResult<Vec<SequenceInstance>> {
    let text = read_input(path)?;
    match column_count(&text) {
        None => Ok(Vec::new()),
        Some(columns) => {
            Ok(read_sequence_corpus_into(text.as_bytes(), columns, table).with_context(|| format!("reading {}", path.display()))?)
        }
    }
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let mut stdout = io::stdout().lock();
    let key_values = match args.task {
        TaskArg::Seq => {
            let mut table = LabelTable::new();
            let gold = read_labeled(&args.gold, &mut table)?;
            let pred = read_labeled(&args.pred, &mut table)?;
            if gold.len() != pred.len() {
                return Err(anyhow!("{} gold sentences but {} predicted", gold.len(), pred.len()).into());
            }
            for (i, (g, p)) in gold.iter().zip(&pred).enumerate() {
                if g.len() != p.len() {
                    return Err(anyhow!("sentence {}: {} gold tokens, {} predicted", i + 1, g.len(), p.len()).into());
                }
            }
            let train = match &args.train {
                Some(path) => Some(read_labeled(path, &mut table)?),
                None => None,
            };
            let codec = LabelCodec::new(scheme(args.scheme), table);
            let vocabulary = train.as_deref().map(|t| segmentation_vocabulary(t, &codec)).transpose()?;
            let predicted: Vec<Vec<usize>> = pred.iter().map(|p| p.labels.clone().unwrap_or_default()).collect();
            let report = evaluate_sequence(&gold, &predicted, &codec, vocabulary.as_ref(), vocabulary.is_some())?;
            write!(stdout, "{report}")?;
            report.key_values()
        }
        TaskArg::Dep => {
            let gold = read_dependency_corpus(read_input(&args.gold)?.as_bytes()).context("reading gold corpus")?;
            let pred = read_dependency_corpus(read_input(&args.pred)?.as_bytes()).context("reading predictions")?;
            if gold.len() != pred.len() {
                return Err(anyhow!("{} gold sentences but {} predicted", gold.len(), pred.len()).into());
            }
            let heads = pred
                .into_iter()
                .enumerate()
                .map(|(i, p)| p.heads.ok_or_else(|| anyhow!("predicted sentence {} has no heads", i + 1)))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let report = evaluate_dependency(&gold, &heads)?;
            write!(stdout, "{report}")?;
            report.key_values()
        }
    };
    if args.key_values {
        for (k, v) in key_values {
            writeln!(stdout, "{k}={v}")?;
        }
    }
    Ok(())
}

pub fn weights(args: &WeightsArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    let mut rows: Vec<(String, f64, f64, usize)> = (0..model.num_groups())
        .map(|j| {
            (
                model.group_names[j].clone(),
                model.mu[j],
                model.weights.group_norm(j),
                model.weights.groups[j].len(),
            )
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let average = 1.0 / rows.len().max(1) as f64;

    let mut stdout = io::stdout().lock();
    writeln!(stdout, "{:<12} {:>12} {:>14} {:>10}", "template", "mu", "norm", "dim")?;
    for (name, mu, norm, dim) in &rows {
        writeln!(stdout, "{name:<12} {mu:>12.6} {norm:>14.6} {dim:>10}")?;
    }
    writeln!(stdout, "{:<12} {average:>12.6}", "average")?;

    if let Some(path) = &args.csv {
        let mut csv = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
        writeln!(csv, "template,mu,norm,dim")?;
        for (name, mu, norm, dim) in &rows {
            writeln!(csv, "{name},{mu},{norm},{dim}")?;
        }
        writeln!(csv, "average,{average},,")?;
        csv.flush()?;
    }
    Ok(())
}
