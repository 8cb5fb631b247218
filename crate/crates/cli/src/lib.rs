//! Command-line front end for the vulnscan pipeline.
//!
//! Every subcommand reads and writes plain files, so a run can be replayed
//! step by step and compared byte for byte.

mod config;
mod error;
mod features;

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use vulnscan::corpus::{self, FunctionRecord, SplitAssignment, DEFAULT_RATIOS, MAX_LEN, MIN_LEN};
use vulnscan::forest::{fit_forest, Forest, ForestConfig};
use vulnscan::labels::{self, CweMapping};
use vulnscan::lexer::{self, build_token_table, TokenId};
use vulnscan::metrics::{evaluate, EvalReport};
use vulnscan::nn::{self, checkpoint_from_json, checkpoint_to_json, Example, Hyperparams, Model};
use vulnscan::synthetic::{self, SyntheticConfig};

pub use config::overrides;
pub use error::{CliError, EXIT_PARSE, EXIT_RUNTIME, EXIT_USAGE};
pub use features::FeatureMatrix;

#[derive(Debug, Parser)]
#[command(
    name = "vulnscan",
    version,
    about = "Function-level vulnerability detection for C/C++"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Tuning {
    /// Seed; overrides any `seed` key from --config or --set.
    #[arg(long)]
    pub seed: Option<u64>,
    /// File of key=value lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra key=value override; repeatable, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lex a corpus into `<id>\t<token ids>` lines.
    Lex {
        corpus: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Drop unlexable, out-of-length and duplicate functions.
    Curate {
        corpus: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Per-origin counts as JSON.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long, default_value_t = MIN_LEN)]
        min_len: usize,
        #[arg(long, default_value_t = MAX_LEN)]
        max_len: usize,
    },
    /// Label functions from their analyzer findings.
    Label {
        corpus: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Mapping CSV; the built-in mapping is used when omitted.
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// CWE frequency table as CSV.
        #[arg(long)]
        frequencies: Option<PathBuf>,
    },
    /// Assign function ids to train/val/test.
    Split {
        corpus: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Train, validation and test fractions.
        #[arg(long, num_args = 3, value_names = ["TRAIN", "VAL", "TEST"])]
        ratios: Option<Vec<f64>>,
    },
    /// Train the convolutional network.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Per-epoch JSON lines.
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Write pooled convolutional features for every function.
    Features {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit a random forest on the training rows of a feature file.
    TrainForest {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Score one split part and report metrics.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also score the forest on the network's features.
        #[arg(long)]
        forest: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
        part: String,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Classify source files, one function per file.
    Scan {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        forest: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Print the token table as CSV.
    Tokens {
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Generate a labelled toy corpus with planted vulnerable statements.
    Synth {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        functions: usize,
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses `argv` (including the program name) and runs it, returning the
/// process exit status. Diagnostics go to stderr as a single line.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("vulnscan: {e}");
            e.exit_code()
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Runtime(format!("stdout: {e}")))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

fn load_corpus(path: &Path) -> Result<Vec<FunctionRecord>, CliError> {
    let text = read(path)?;
    Ok(corpus::parse_corpus(text.as_bytes())?)
}

fn load_split(path: &Path) -> Result<SplitAssignment, CliError> {
    Ok(SplitAssignment::from_json(&read(path)?)?)
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    Ok(checkpoint_from_json(&read(path)?)?)
}

fn load_forest(path: &Path) -> Result<Forest, CliError> {
    Ok(Forest::from_json(&read(path)?)?)
}

/// Looks up split ids in the corpus; every id must name a labelled,
/// lexable record.
fn select<'a>(
    by_id: &HashMap<&str, &'a FunctionRecord>,
    ids: &[String],
    part: &str,
) -> Result<Vec<(&'a [TokenId], bool)>, CliError> {
    ids.iter()
        .map(|id| {
            let rec = by_id
                .get(id.as_str())
                .ok_or_else(|| CliError::Parse(format!("{part} id {id:?} is not in the corpus")))?;
            let lexed = rec
                .lexed()
                .ok_or_else(|| CliError::Parse(format!("record {id:?} does not lex")))?;
            let label = rec
                .label
                .ok_or_else(|| CliError::Parse(format!("record {id:?} has no label")))?;
            Ok((lexed.tokens(), label))
        })
        .collect()
}

fn index(records: &[FunctionRecord]) -> HashMap<&str, &FunctionRecord> {
    records.iter().map(|r| (r.id.as_str(), r)).collect()
}

fn check_lengths(
    seqs: &[(&[TokenId], bool)],
    ids: &[String],
    max_len: usize,
) -> Result<(), CliError> {
    for ((tokens, _), id) in seqs.iter().zip(ids) {
        if !(nn::MIN_SEQ_LEN..=max_len).contains(&tokens.len()) {
            return Err(CliError::Parse(format!(
                "record {id:?} has {} tokens, outside [{}, {max_len}]; run curate first",
                tokens.len(),
                nn::MIN_SEQ_LEN
            )));
        }
    }
    Ok(())
}

fn examples<'a>(v: &[(&'a [TokenId], bool)]) -> Vec<Example<'a>> {
    v.iter()
        .map(|&(tokens, label)| Example { tokens, label })
        .collect()
}

fn hyperparams(tuning: &Tuning) -> Result<Hyperparams, CliError> {
    let mut h = Hyperparams::default();
    for (k, v) in overrides(tuning.config.as_deref(), &tuning.set)? {
        h.set(&k, &v)?;
    }
    if let Some(seed) = tuning.seed {
        h.seed = seed;
    }
    h.validate()?;
    Ok(h)
}

fn forest_config(tuning: &Tuning) -> Result<ForestConfig, CliError> {
    let mut c = ForestConfig::default();
    for (k, v) in overrides(tuning.config.as_deref(), &tuning.set)? {
        c.set(&k, &v)?;
    }
    if let Some(seed) = tuning.seed {
        c.seed = seed;
    }
    Ok(c)
}

#[derive(Debug, Serialize)]
struct ModelReports {
    cnn: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    forest: Option<EvalReport>,
}

#[derive(Debug, Serialize)]
struct Report {
    part: String,
    examples: usize,
    vulnerable: usize,
    models: ModelReports,
}

#[derive(Debug, Serialize)]
struct Verdict {
    file: String,
    tokens: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    cnn: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    forest: Option<f64>,
    /// "vulnerable", "clean" or "skipped".
    verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Lex { corpus, out } => {
            let records = load_corpus(&corpus)?;
            let mut text = String::new();
            let mut failed = 0;
            for r in &records {
                match r.lexed() {
                    Some(l) => {
                        text.push_str(&lexer::format_lexed_line(&r.id, l));
                        text.push('\n');
                    }
                    None => failed += 1,
                }
            }
            if failed > 0 {
                eprintln!(
                    "vulnscan: {failed} of {} functions did not lex",
                    records.len()
                );
            }
            emit(out.as_deref(), &text)
        }
        Command::Curate {
            corpus,
            out,
            stats,
            min_len,
            max_len,
        } => {
            if min_len > max_len {
                return Err(CliError::Usage(format!(
                    "--min-len {min_len} exceeds --max-len {max_len}"
                )));
            }
            let records = load_corpus(&corpus)?;
            let (kept, summary) = corpus::curate_with_cuts(records, Some((min_len, max_len)));
            emit(Some(&out), &corpus::write_corpus(&kept))?;
            if let Some(path) = stats {
                emit(Some(&path), &to_json(&summary))?;
            }
            Ok(())
        }
        Command::Label {
            corpus,
            out,
            mapping,
            frequencies,
        } => {
            let mapping = match mapping {
                Some(path) => labels::parse_mapping(read(&path)?.as_bytes())?,
                None => CweMapping::default_mapping(),
            };
            let mut records = load_corpus(&corpus)?;
            labels::apply_labels(&mut records, &mapping);
            emit(Some(&out), &corpus::write_corpus(&records))?;
            if let Some(path) = frequencies {
                emit(
                    Some(&path),
                    &labels::frequencies_csv(&labels::cwe_frequencies(&records)),
                )?;
            }
            Ok(())
        }
        Command::Split {
            corpus,
            out,
            seed,
            ratios,
        } => {
            let ratios = match ratios.as_deref() {
                Some([a, b, c]) => (*a, *b, *c),
                _ => DEFAULT_RATIOS,
            };
            let records = load_corpus(&corpus)?;
            let assignment = corpus::split(&records, seed, ratios)?;
            emit(Some(&out), &assignment.to_json())
        }
        Command::Train {
            corpus,
            split,
            out,
            history,
            tuning,
        } => {
            let hyper = hyperparams(&tuning)?;
            let records = load_corpus(&corpus)?;
            let assignment = load_split(&split)?;
            let by_id = index(&records);
            let train_set = select(&by_id, &assignment.train, "train")?;
            let val_set = select(&by_id, &assignment.val, "val")?;
            check_lengths(&train_set, &assignment.train, hyper.max_len)?;
            check_lengths(&val_set, &assignment.val, hyper.max_len)?;
            let outcome = nn::train(
                Model::new(hyper)?,
                &examples(&train_set),
                &examples(&val_set),
            )?;
            emit(Some(&out), &checkpoint_to_json(&outcome.best))?;
            if let Some(path) = history {
                emit(Some(&path), &nn::history_jsonl(&outcome.history))?;
            }
            Ok(())
        }
        Command::Features {
            checkpoint,
            corpus,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let records = load_corpus(&corpus)?;
            let mut ids = Vec::with_capacity(records.len());
            let mut seqs = Vec::with_capacity(records.len());
            for r in &records {
                let lexed = r
                    .lexed()
                    .ok_or_else(|| CliError::Parse(format!("record {:?} does not lex", r.id)))?;
                ids.push(r.id.clone());
                seqs.push((lexed.tokens(), false));
            }
            check_lengths(&seqs, &ids, model.hyper.max_len)?;
            let tokens: Vec<&[TokenId]> = seqs.iter().map(|(t, _)| *t).collect();
            let rows = nn::extract_features(&model, &tokens)?;
            let matrix = FeatureMatrix {
                dim: model.feature_dim(),
                rows: ids.into_iter().zip(rows).collect(),
            };
            emit(Some(&out), &matrix.to_text())
        }
        Command::TrainForest {
            features,
            corpus,
            split,
            out,
            tuning,
        } => {
            let config = forest_config(&tuning)?;
            let matrix = FeatureMatrix::parse(&read(&features)?)?;
            let rows: HashMap<&str, &Vec<f64>> =
                matrix.rows.iter().map(|(id, v)| (id.as_str(), v)).collect();
            let records = load_corpus(&corpus)?;
            let by_id = index(&records);
            let assignment = load_split(&split)?;
            let mut x = Vec::with_capacity(assignment.train.len());
            let mut y = Vec::with_capacity(assignment.train.len());
            for id in &assignment.train {
                let row = rows.get(id.as_str()).ok_or_else(|| {
                    CliError::Parse(format!("train id {id:?} has no feature row"))
                })?;
                let label = by_id
                    .get(id.as_str())
                    .and_then(|r| r.label)
                    .ok_or_else(|| {
                        CliError::Parse(format!("train id {id:?} has no labelled record"))
                    })?;
                x.push((*row).clone());
                y.push(label);
            }
            let forest = fit_forest(&x, &y, &config)?;
            emit(Some(&out), &forest.to_json())
        }
        Command::Eval {
            checkpoint,
            forest,
            corpus,
            split,
            part,
            threshold,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let forest = forest.as_deref().map(load_forest).transpose()?;
            let records = load_corpus(&corpus)?;
            let assignment = load_split(&split)?;
            let ids = match part.as_str() {
                "train" => &assignment.train,
                "val" => &assignment.val,
                _ => &assignment.test,
            };
            let chosen = select(&index(&records), ids, &part)?;
            check_lengths(&chosen, ids, model.hyper.max_len)?;
            let tokens: Vec<&[TokenId]> = chosen.iter().map(|(t, _)| *t).collect();
            let labels: Vec<bool> = chosen.iter().map(|(_, l)| *l).collect();
            let (probs, feats) = nn::infer(&model, &tokens)?;
            let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
            let cnn = evaluate(&scores, &labels, threshold)?;
            let forest = match forest {
                Some(f) => {
                    let scores = feats
                        .iter()
                        .map(|x| f.predict_proba(x).map(|p| p[1]))
                        .collect::<Result<Vec<_>, _>>()?;
                    Some(evaluate(&scores, &labels, threshold)?)
                }
                None => None,
            };
            let report = Report {
                part,
                examples: labels.len(),
                vulnerable: labels.iter().filter(|&&y| y).count(),
                models: ModelReports { cnn, forest },
            };
            emit(out.as_deref(), &to_json(&report))
        }
        Command::Scan {
            checkpoint,
            forest,
            threshold,
            files,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let forest = forest.as_deref().map(load_forest).transpose()?;
            let mut text = String::new();
            for path in &files {
                let source = read(path)?;
                let mut v = Verdict {
                    file: path.display().to_string(),
                    tokens: 0,
                    cnn: None,
                    forest: None,
                    verdict: "skipped",
                    reason: None,
                };
                match lexer::lex(&source) {
                    Err(e) => v.reason = Some(e.to_string()),
                    Ok(lexed)
                        if !(nn::MIN_SEQ_LEN..=model.hyper.max_len).contains(&lexed.len()) =>
                    {
                        v.tokens = lexed.len();
                        v.reason = Some(format!(
                            "{} tokens, outside [{}, {}]",
                            lexed.len(),
                            nn::MIN_SEQ_LEN,
                            model.hyper.max_len
                        ));
                    }
                    Ok(lexed) => {
                        v.tokens = lexed.len();
                        let (probs, feats) = nn::infer(&model, &[lexed.tokens()])?;
                        v.cnn = Some(probs[0][1]);
                        if let Some(f) = &forest {
                            v.forest = Some(f.predict_proba(&feats[0])?[1]);
                        }
                        let score = v.forest.or(v.cnn).expect("scored");
                        v.verdict = if score >= threshold {
                            "vulnerable"
                        } else {
                            "clean"
                        };
                    }
                }
                text.push_str(&serde_json::to_string(&v).expect("verdict serializes"));
                text.push('\n');
            }
            emit(out.as_deref(), &text)
        }
        Command::Tokens { out } => emit(out.as_deref(), &build_token_table().to_csv()),
        Command::Synth {
            out,
            functions,
            fraction,
            seed,
        } => {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(CliError::Usage(format!(
                    "--fraction {fraction} outside [0, 1]"
                )));
            }
            let cfg = SyntheticConfig {
                functions,
                vulnerable_fraction: fraction,
                seed,
                ..Default::default()
            };
            emit(
                Some(&out),
                &corpus::write_corpus(&synthetic::generate(&cfg)),
            )
        }
    }
}
