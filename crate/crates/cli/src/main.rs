//! `sidlab`: command-line front end for the transfer-experiment laboratory.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sidlab_core::corpus::{self, TaskKind};
use sidlab_core::distance::{corpus_similarity, AlignedCorpora, Mode};
use sidlab_core::metrics::{sid_report, SidPrediction};
use sidlab_core::model::{load_model, predict, save_model, Prediction};
use sidlab_core::report::{parse_tsv, render_tables};
use sidlab_core::schedule::{prepare, run_schedule, RunConfig, ScheduleError};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "sidlab", version, about = "Slot-and-intent detection transfer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Tsv,
    Md,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Kind {
    Sid,
    Ud,
    Ner,
    Mlm,
}

impl From<Kind> for TaskKind {
    fn from(k: Kind) -> TaskKind {
        match k {
            Kind::Sid => TaskKind::Sid,
            Kind::Ud => TaskKind::Ud,
            Kind::Ner => TaskKind::Ner,
            Kind::Mlm => TaskKind::Mlm,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse data files and report sentence/token counts.
    Validate {
        /// Data format of the files.
        #[arg(long, value_enum)]
        kind: Kind,
        /// Files to check.
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run a training schedule and write reports and model checkpoints.
    Train {
        /// Experiment configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overwrite existing outputs.
        #[arg(long)]
        force: bool,
        /// Override the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a saved model on a SID dataset.
    Eval {
        /// Model checkpoint written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// SID data file.
        #[arg(long)]
        data: PathBuf,
        /// Task head to use; defaults to the only SID head in the model.
        #[arg(long)]
        task: Option<String>,
        #[arg(long, value_enum, default_value = "tsv")]
        format: Format,
    },
    /// Pairwise corpus similarity matrices over aligned SID datasets.
    Dist {
        /// Aligned datasets as `name=path`, in row/column order.
        #[arg(required = true)]
        datasets: Vec<String>,
        /// Output directory (one TSV per mode).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Combine report TSVs into a delta table against a baseline.
    Report {
        /// Report TSV files written by `train`.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Name of the baseline report.
        #[arg(long)]
        baseline: String,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
    },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn schedule_error_code(e: &ScheduleError) -> u8 {
    match e {
        ScheduleError::Corpus(_) | ScheduleError::Metric(_) | ScheduleError::Io(_) => EXIT_DATA,
        ScheduleError::Model(_) => EXIT_INTERNAL,
        _ => EXIT_USAGE,
    }
}

fn checked_write(path: &Path, content: &str, force: bool) -> Result<(), (u8, String)> {
    if path.exists() && !force {
        return Err((
            EXIT_USAGE,
            format!("{} already exists; pass --force to overwrite", path.display()),
        ));
    }
    std::fs::write(path, content)
        .map_err(|e| (EXIT_DATA, format!("cannot write {}: {e}", path.display())))
}

fn cmd_validate(kind: Kind, files: &[PathBuf]) -> ExitCode {
    let kind: TaskKind = kind.into();
    for file in files {
        let text = match std::fs::read_to_string(file) {
            Ok(t) => t,
            Err(e) => return fail(EXIT_DATA, format!("cannot read {}: {e}", file.display())),
        };
        let name = file.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
        let parsed = match kind {
            TaskKind::Sid => corpus::parse_xsid(&text, name, "und"),
            TaskKind::Ud => corpus::parse_conllu(&text, name, "und"),
            TaskKind::Ner => corpus::parse_ner_conll(&text, name, "und"),
            TaskKind::Mlm => Ok(corpus::parse_plaintext(&text, name, "und")),
        };
        match parsed {
            Ok(d) => {
                let tokens: usize = d.sentences.iter().map(|s| s.len()).sum();
                println!("{}: ok ({} sentences, {} tokens)", file.display(), d.len(), tokens);
            }
            Err(e) => return fail(EXIT_DATA, format!("{}: {e}", file.display())),
        }
    }
    ExitCode::SUCCESS
}

fn cmd_train(config: &Path, out: &Path, force: bool, seed: Option<u64>) -> ExitCode {
    let mut cfg = match RunConfig::load(config) {
        Ok(c) => c,
        Err(e) => return fail(schedule_error_code(&e), e),
    };
    if let Some(seed) = seed {
        cfg.seeds = vec![seed];
    }
    let base_dir = config.parent().unwrap_or(Path::new("."));
    let exp = match prepare(cfg, base_dir) {
        Ok(e) => e,
        Err(e) => return fail(schedule_error_code(&e), e),
    };
    for w in &exp.warnings {
        eprintln!("warning: {w}");
    }
    if let Err(e) = std::fs::create_dir_all(out) {
        return fail(EXIT_DATA, format!("cannot create {}: {e}", out.display()));
    }
    let run = match run_schedule(&exp) {
        Ok(r) => r,
        Err(e) => return fail(schedule_error_code(&e), e),
    };
    for r in &run.report.per_seed {
        eprintln!("seed {} trained in {:.2}s", r.seed, r.stage_seconds.iter().sum::<f64>());
    }
    let writes = [
        (out.join("report.tsv"), run.report.to_tsv()),
        (out.join("report.md"), run.report.to_markdown()),
    ];
    for (path, content) in &writes {
        if let Err((code, msg)) = checked_write(path, content, force) {
            return fail(code, msg);
        }
    }
    for (seed, model) in &run.final_models {
        let path = out.join(format!("model-seed{seed}.json"));
        if path.exists() && !force {
            return fail(
                EXIT_USAGE,
                format!("{} already exists; pass --force to overwrite", path.display()),
            );
        }
        if let Err(e) = save_model(model, &path) {
            return fail(EXIT_INTERNAL, e);
        }
    }
    println!("wrote {}", out.join("report.tsv").display());
    ExitCode::SUCCESS
}

fn cmd_eval(model: &Path, data: &Path, task: Option<&str>, format: Format) -> ExitCode {
    let m = match load_model(model) {
        Ok(m) => m,
        Err(e) => return fail(EXIT_DATA, e),
    };
    let task = match task {
        Some(t) => t.to_string(),
        None => {
            let sid_heads: Vec<&String> = m
                .heads
                .iter()
                .filter(|(_, k)| **k == TaskKind::Sid)
                .map(|(n, _)| n)
                .collect();
            match sid_heads.as_slice() {
                [one] => (*one).clone(),
                [] => return fail(EXIT_USAGE, "model has no SID head"),
                _ => return fail(EXIT_USAGE, "model has several SID heads; pass --task"),
            }
        }
    };
    let text = match std::fs::read_to_string(data) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_DATA, format!("cannot read {}: {e}", data.display())),
    };
    let dataset = match corpus::parse_xsid(&text, "eval", "und") {
        Ok(d) => d,
        Err(e) => return fail(EXIT_DATA, e),
    };
    let mut preds = Vec::with_capacity(dataset.len());
    for s in &dataset.sentences {
        match predict(&m, &task, s) {
            Ok(Prediction::Sid { slot_tags, intent }) => {
                preds.push(SidPrediction { slot_tags, intent })
            }
            Ok(_) => return fail(EXIT_USAGE, format!("task `{task}` is not a SID head")),
            Err(e) => return fail(EXIT_INTERNAL, e),
        }
    }
    let report = match sid_report(&dataset.sentences, &preds) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_DATA, e),
    };
    match format {
        Format::Tsv => {
            println!("metric\tvalue");
            println!("slot_precision\t{}", report.slot_precision);
            println!("slot_recall\t{}", report.slot_recall);
            println!("slot_f1\t{}", report.slot_f1);
            println!("intent_accuracy\t{}", report.intent_accuracy);
            println!("fully_correct\t{}", report.fully_correct);
            println!("n_sentences\t{}", report.n_sentences);
        }
        Format::Md => {
            println!("| metric | value |");
            println!("|---|---|");
            println!("| slot precision | {:.1} |", 100.0 * report.slot_precision);
            println!("| slot recall | {:.1} |", 100.0 * report.slot_recall);
            println!("| slot F1 | {:.1} |", 100.0 * report.slot_f1);
            println!("| intent accuracy | {:.1} |", 100.0 * report.intent_accuracy);
            println!("| fully correct | {:.1} |", 100.0 * report.fully_correct);
            println!("| sentences | {} |", report.n_sentences);
        }
    }
    ExitCode::SUCCESS
}

fn cmd_dist(datasets: &[String], out: &Path, force: bool) -> ExitCode {
    let mut variants = Vec::new();
    for spec in datasets {
        let Some((name, path)) = spec.split_once('=') else {
            return fail(EXIT_USAGE, format!("expected name=path, got `{spec}`"));
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(EXIT_DATA, format!("cannot read {path}: {e}")),
        };
        match corpus::parse_xsid(&text, name, name) {
            Ok(d) => variants.push((name.to_string(), d)),
            Err(e) => return fail(EXIT_DATA, format!("{path}: {e}")),
        }
    }
    let aligned = match AlignedCorpora::new(variants) {
        Ok(a) => a,
        Err(e) => return fail(EXIT_DATA, e),
    };
    if let Err(e) = std::fs::create_dir_all(out) {
        return fail(EXIT_DATA, format!("cannot create {}: {e}", out.display()));
    }
    for mode in Mode::ALL {
        let matrix = match corpus_similarity(&aligned, mode) {
            Ok(m) => m,
            Err(e) => return fail(EXIT_DATA, e),
        };
        let path = out.join(format!("{}.tsv", mode.name()));
        if let Err((code, msg)) = checked_write(&path, &matrix.to_tsv(), force) {
            return fail(code, msg);
        }
        println!("wrote {}", path.display());
    }
    ExitCode::SUCCESS
}

fn cmd_report(reports: &[PathBuf], baseline: &str, format: Format) -> ExitCode {
    let mut parsed = Vec::new();
    for path in reports {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(EXIT_DATA, format!("cannot read {}: {e}", path.display())),
        };
        match parse_tsv(&text) {
            Ok(r) => parsed.push(r),
            Err(e) => return fail(EXIT_DATA, format!("{}: {e}", path.display())),
        }
    }
    let table = match render_tables(&parsed, baseline) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    match format {
        Format::Tsv => print!("{}", table.to_tsv()),
        Format::Md => print!("{}", table.to_markdown()),
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { kind, files } => cmd_validate(kind, &files),
        Command::Train { config, out, force, seed } => cmd_train(&config, &out, force, seed),
        Command::Eval { model, data, task, format } => {
            cmd_eval(&model, &data, task.as_deref(), format)
        }
        Command::Dist { datasets, out, force } => cmd_dist(&datasets, &out, force),
        Command::Report { reports, baseline, format } => cmd_report(&reports, &baseline, format),
    }
}
