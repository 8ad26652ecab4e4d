//! Training schedules: the `×` (joint) / `→` (sequential) setup notation,
//! stage execution with equal per-task cadence, head removal at stage
//! transitions, and dev-based model selection.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, CorpusError, Dataset, TaskKind};
use crate::metrics::{self, AuxReport, MetricReport, MetricError, SidPrediction};
use crate::model::{
    self, init_model, mask_tokens_with_rng, optimizer_step, predict, task_loss, Batch, MlmExample,
    ModelConfig, ModelError, ModelState, Prediction,
};
use crate::model::vocab::Vocab;
use crate::report::{ExperimentReport, SeedRun};

/// Fixed seed for dev-set masking so MLM dev perplexity is comparable
/// across epochs.
const DEV_MASK_SEED: u64 = 0x5eed_de11;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub tasks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub stages: Vec<Stage>,
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("schedule is empty")]
    EmptySchedule,
    #[error("schedule has an empty stage (leading, trailing, or doubled separator)")]
    EmptyStage,
    #[error("task `{0}` appears twice in one stage")]
    DuplicateTask(String),
    #[error("no binding for task `{0}`")]
    MissingBinding(String),
    #[error("task `{0}` has no training data")]
    NoTrainableData(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses `MLM×NER→SID` (or the ASCII form `MLM x NER -> SID`) into ordered
/// stages. A standalone `x` between task names is accepted as the joint
/// separator; inside an identifier it is just a letter.
pub fn parse_schedule(text: &str) -> Result<Schedule, ScheduleError> {
    #[derive(PartialEq)]
    enum Tok {
        Ident(String),
        Joint,
        Then,
    }
    let mut toks = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '×' {
            chars.next();
            toks.push(Tok::Joint);
        } else if c == '→' {
            chars.next();
            toks.push(Tok::Then);
        } else if c == '-' {
            chars.next();
            if chars.peek() == Some(&'>') {
                chars.next();
                toks.push(Tok::Then);
            } else {
                return Err(ScheduleError::Config(format!("unexpected `-` in schedule `{text}`")));
            }
        } else if c.is_alphanumeric() || c == '_' {
            let mut ident = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_alphanumeric() || c == '_' {
                    ident.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            if ident == "x" {
                toks.push(Tok::Joint);
            } else {
                toks.push(Tok::Ident(ident));
            }
        } else {
            return Err(ScheduleError::Config(format!(
                "unexpected character `{c}` in schedule `{text}`"
            )));
        }
    }
    let mut stages = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut expect_ident = true;
    for tok in toks {
        match tok {
            Tok::Ident(name) => {
                if !expect_ident {
                    return Err(ScheduleError::Config(format!(
                        "missing separator before `{name}`"
                    )));
                }
                if current.contains(&name) {
                    return Err(ScheduleError::DuplicateTask(name));
                }
                current.push(name);
                expect_ident = false;
            }
            Tok::Joint => {
                if expect_ident {
                    return Err(ScheduleError::EmptyStage);
                }
                expect_ident = true;
            }
            Tok::Then => {
                if expect_ident || current.is_empty() {
                    return Err(ScheduleError::EmptyStage);
                }
                stages.push(Stage { tasks: std::mem::take(&mut current) });
                expect_ident = true;
            }
        }
    }
    if expect_ident && !stages.is_empty() {
        return Err(ScheduleError::EmptyStage);
    }
    if !current.is_empty() {
        stages.push(Stage { tasks: current });
    }
    if stages.is_empty() {
        return Err(ScheduleError::EmptySchedule);
    }
    Ok(Schedule { stages })
}

/// Canonical text form using the Unicode separators.
pub fn render_schedule(s: &Schedule) -> String {
    s.stages
        .iter()
        .map(|stage| stage.tasks.join("×"))
        .collect::<Vec<_>>()
        .join("→")
}

#[derive(Debug, Clone)]
pub struct TaskBinding {
    pub name: String,
    pub kind: TaskKind,
    pub train: Dataset,
    pub dev: Dataset,
}

/// Knobs shared by every stage of a run.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub mlm_split_per_epoch: bool,
    pub mask_prob: f64,
}

/// Per-epoch record of optimizer steps attributed to each task.
pub type StepLog = Vec<BTreeMap<String, usize>>;

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub best_epoch: usize,
    /// Aggregate dev score per epoch.
    pub dev_scores: Vec<f64>,
    /// Dev metrics per task at the best epoch.
    pub dev_reports: BTreeMap<String, TaskDevReport>,
    pub step_log: StepLog,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskDevReport {
    Sid(MetricReport),
    Aux(AuxReport),
}

/// Deterministic per-epoch MLM slice: ⌈n/max_epochs⌉ sentences starting at
/// `epoch·size`, wrapping around the dataset. With the flag disabled the
/// full dataset is used every epoch.
pub fn mlm_epoch_slice(dataset: &Dataset, epoch: usize, opts: &TrainOptions) -> Dataset {
    if !opts.mlm_split_per_epoch || dataset.is_empty() {
        return dataset.clone();
    }
    let n = dataset.len();
    let size = n.div_ceil(opts.max_epochs);
    let start = (epoch * size) % n;
    let sentences = (0..size.min(n))
        .map(|i| dataset.sentences[(start + i) % n].clone())
        .collect();
    Dataset {
        name: format!("{}-epoch{}", dataset.name, epoch),
        language_tag: dataset.language_tag.clone(),
        task_kind: dataset.task_kind,
        sentences,
    }
}

fn sid_dev_report(
    m: &ModelState,
    task: &str,
    dev: &Dataset,
) -> Result<MetricReport, ScheduleError> {
    let mut preds = Vec::with_capacity(dev.len());
    for s in &dev.sentences {
        match predict(m, task, s)? {
            Prediction::Sid { slot_tags, intent } => {
                preds.push(SidPrediction { slot_tags, intent })
            }
            _ => unreachable!("SID head returned a non-SID prediction"),
        }
    }
    Ok(metrics::sid_report(&dev.sentences, &preds)?)
}

fn dev_mask(m: &ModelState, dev: &Dataset, mask_prob: f64) -> Vec<MlmExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(DEV_MASK_SEED);
    dev.sentences
        .iter()
        .map(|s| mask_tokens_with_rng(m, s, mask_prob, &mut rng))
        .collect()
}

fn task_dev_score(
    m: &ModelState,
    binding: &TaskBinding,
    opts: &TrainOptions,
) -> Result<(f64, TaskDevReport), ScheduleError> {
    match binding.kind {
        TaskKind::Sid => {
            let report = sid_dev_report(m, &binding.name, &binding.dev)?;
            let score = report.slot_f1 + report.intent_accuracy;
            Ok((score, TaskDevReport::Sid(report)))
        }
        TaskKind::Ud => {
            let mut pred_heads = Vec::new();
            let mut pred_deprels = Vec::new();
            let mut pred_pos = Vec::new();
            for s in &binding.dev.sentences {
                match predict(m, &binding.name, s)? {
                    Prediction::Ud { pos_tags, heads, deprels, .. } => {
                        pred_pos.push(pos_tags);
                        pred_heads.push(heads);
                        pred_deprels.push(deprels);
                    }
                    _ => unreachable!(),
                }
            }
            let las = metrics::las(&binding.dev.sentences, &pred_heads, &pred_deprels)?;
            let gold_pos: Vec<Vec<String>> = binding
                .dev
                .sentences
                .iter()
                .map(|s| s.pos_tags.clone().unwrap_or_default())
                .collect();
            let pos_acc = metrics::tagging_accuracy(&gold_pos, &pred_pos)?;
            let report = AuxReport {
                las: Some(las),
                pos_accuracy: Some(pos_acc),
                ner_span_f1: None,
                mlm_perplexity: None,
            };
            Ok((las + pos_acc, TaskDevReport::Aux(report)))
        }
        TaskKind::Ner => {
            let mut pred_tags = Vec::new();
            for s in &binding.dev.sentences {
                match predict(m, &binding.name, s)? {
                    Prediction::Tagging(tags) => pred_tags.push(tags),
                    _ => unreachable!(),
                }
            }
            let gold: Vec<Vec<String>> = binding
                .dev
                .sentences
                .iter()
                .map(|s| s.ner_tags.clone().unwrap_or_default())
                .collect();
            let f1 = metrics::ner_span_f1(&gold, &pred_tags)?;
            let report = AuxReport {
                las: None,
                pos_accuracy: None,
                ner_span_f1: Some(f1),
                mlm_perplexity: None,
            };
            Ok((f1, TaskDevReport::Aux(report)))
        }
        TaskKind::Mlm => {
            let examples = dev_mask(m, &binding.dev, opts.mask_prob);
            let (nll, n_masked) =
                model::mlm_nll(m, &binding.name, &binding.dev.sentences, &examples)?;
            let ppl = if n_masked == 0 {
                1.0
            } else {
                metrics::masked_perplexity(nll, n_masked)?
            };
            let report = AuxReport {
                las: None,
                pos_accuracy: None,
                ner_span_f1: None,
                mlm_perplexity: Some(ppl),
            };
            // Perplexity contributes negatively via −ln PPL.
            Ok((-ppl.ln(), TaskDevReport::Aux(report)))
        }
    }
}

/// Trains all stage tasks jointly for up to `max_epochs` epochs.
///
/// Batches are interleaved round-robin by task; every task takes the same
/// number of optimizer steps per epoch (smaller datasets cycle), which
/// realizes equal loss weighting by cadence. Returns the parameter snapshot
/// from the epoch with the best summed dev score.
pub fn run_stage(
    m: &mut ModelState,
    stage: &Stage,
    bindings: &BTreeMap<String, TaskBinding>,
    opts: &TrainOptions,
) -> Result<StageOutcome, ScheduleError> {
    let mut stage_bindings = Vec::new();
    for name in &stage.tasks {
        let b = bindings
            .get(name)
            .ok_or_else(|| ScheduleError::MissingBinding(name.clone()))?;
        if b.train.is_empty() {
            return Err(ScheduleError::NoTrainableData(name.clone()));
        }
        m.ensure_heads(name, b.kind)?;
        stage_bindings.push(b);
    }

    let mut best: Option<(f64, ModelState, BTreeMap<String, TaskDevReport>, usize)> = None;
    let mut dev_scores = Vec::with_capacity(opts.max_epochs);
    let mut step_log: StepLog = Vec::with_capacity(opts.max_epochs);

    for epoch in 0..opts.max_epochs {
        // Per-task training pools for this epoch (MLM may be sliced).
        let pools: Vec<Dataset> = stage_bindings
            .iter()
            .map(|b| {
                if b.kind == TaskKind::Mlm {
                    mlm_epoch_slice(&b.train, epoch, opts)
                } else {
                    b.train.clone()
                }
            })
            .collect();
        let max_len = pools.iter().map(|d| d.len()).max().unwrap_or(0);
        let steps_per_epoch = max_len.div_ceil(opts.batch_size);
        let mut orders: Vec<Vec<usize>> = pools
            .iter()
            .map(|d| {
                let mut ix: Vec<usize> = (0..d.len()).collect();
                ix.shuffle(&mut m.rng);
                ix
            })
            .collect();
        let mut cursors = vec![0usize; pools.len()];
        let mut steps: BTreeMap<String, usize> =
            stage.tasks.iter().map(|t| (t.clone(), 0)).collect();

        for _ in 0..steps_per_epoch {
            for (ti, b) in stage_bindings.iter().enumerate() {
                let pool = &pools[ti];
                let mut sentences = Vec::with_capacity(opts.batch_size);
                for _ in 0..opts.batch_size {
                    if cursors[ti] >= orders[ti].len() {
                        cursors[ti] = 0;
                        orders[ti].shuffle(&mut m.rng);
                    }
                    sentences.push(pool.sentences[orders[ti][cursors[ti]]].clone());
                    cursors[ti] += 1;
                }
                // Masking draws from the model RNG so it is part of the
                // single deterministic stream.
                let mlm = if b.kind == TaskKind::Mlm {
                    let mut examples = Vec::with_capacity(sentences.len());
                    for s in &sentences {
                        let mut rng = m.rng.clone();
                        let ex = mask_tokens_with_rng(m, s, opts.mask_prob, &mut rng);
                        m.rng = rng;
                        examples.push(ex);
                    }
                    Some(examples)
                } else {
                    None
                };
                let batch = Batch {
                    task_name: b.name.clone(),
                    kind: b.kind,
                    sentences,
                    mlm,
                };
                let (_loss, grads) = task_loss(m, &batch)?;
                if grads.is_empty() {
                    // MLM batch with no masked positions: no optimizer step.
                    continue;
                }
                optimizer_step(m, &grads);
                *steps.get_mut(&b.name).unwrap() += 1;
            }
        }
        step_log.push(steps);

        let mut epoch_score = 0.0;
        let mut reports = BTreeMap::new();
        for b in &stage_bindings {
            let (score, report) = task_dev_score(m, b, opts)?;
            epoch_score += score;
            reports.insert(b.name.clone(), report);
        }
        dev_scores.push(epoch_score);
        let improved = match &best {
            Some((best_score, ..)) => epoch_score > *best_score,
            None => true,
        };
        if improved {
            best = Some((epoch_score, m.clone(), reports, epoch));
        }
    }

    let (_, best_state, dev_reports, best_epoch) = best.expect("max_epochs >= 1");
    *m = best_state;
    Ok(StageOutcome { best_epoch, dev_scores, dev_reports, step_log })
}

/// Removes heads of tasks not present in the next stage; encoder and
/// embedding parameters are untouched. Heads for new tasks are freshly
/// initialized from the model's RNG stream; heads shared by both stages
/// continue training.
pub fn transition(
    m: &mut ModelState,
    from_stage: &Stage,
    to_stage: &Stage,
    bindings: &BTreeMap<String, TaskBinding>,
) -> Result<(), ScheduleError> {
    for task in &from_stage.tasks {
        if !to_stage.tasks.contains(task) {
            m.remove_head(task);
        }
    }
    for task in &to_stage.tasks {
        let b = bindings
            .get(task)
            .ok_or_else(|| ScheduleError::MissingBinding(task.clone()))?;
        m.ensure_heads(task, b.kind)?;
    }
    Ok(())
}

fn default_max_epochs() -> usize {
    20
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_batch_size() -> usize {
    8
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub train: PathBuf,
    pub dev: PathBuf,
    #[serde(default)]
    pub language: Option<String>,
}

/// Optional overrides for the model hyperparameters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelSection {
    pub dim: Option<usize>,
    pub hidden: Option<usize>,
    pub learning_rate: Option<f64>,
    pub mask_prob: Option<f64>,
}

impl ModelSection {
    pub fn to_config(&self) -> ModelConfig {
        let mut cfg = ModelConfig::default();
        if let Some(d) = self.dim {
            cfg.dim = d;
        }
        if let Some(h) = self.hidden {
            cfg.hidden = h;
        }
        if let Some(lr) = self.learning_rate {
            cfg.learning_rate = lr;
        }
        if let Some(p) = self.mask_prob {
            cfg.mask_prob = p;
        }
        cfg
    }
}

/// The experiment configuration file (TOML).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub schedule: String,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_true")]
    pub mlm_split_per_epoch: bool,
    #[serde(default)]
    pub model: ModelSection,
    pub tasks: BTreeMap<String, TaskConfig>,
    /// Evaluation dataset name → xSID file path.
    #[serde(default)]
    pub eval: BTreeMap<String, PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScheduleError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| ScheduleError::Config(e.to_string()))?;
        if cfg.max_epochs == 0 {
            return Err(ScheduleError::Config("max_epochs must be >= 1".into()));
        }
        if cfg.seeds.is_empty() {
            return Err(ScheduleError::Config("seeds must be non-empty".into()));
        }
        if cfg.batch_size == 0 {
            return Err(ScheduleError::Config("batch_size must be >= 1".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScheduleError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

fn load_dataset(kind: TaskKind, path: &Path, name: &str, lang: &str) -> Result<Dataset, ScheduleError> {
    let text = std::fs::read_to_string(path)?;
    let d = match kind {
        TaskKind::Sid => corpus::parse_xsid(&text, name, lang)?,
        TaskKind::Ud => corpus::parse_conllu(&text, name, lang)?,
        TaskKind::Ner => corpus::parse_ner_conll(&text, name, lang)?,
        TaskKind::Mlm => corpus::parse_plaintext(&text, name, lang),
    };
    Ok(d)
}

/// A config with its datasets loaded and its schedule parsed.
#[derive(Debug, Clone)]
pub struct PreparedExperiment {
    pub config: RunConfig,
    pub schedule: Schedule,
    pub bindings: BTreeMap<String, TaskBinding>,
    pub eval_sets: Vec<(String, Dataset)>,
    pub warnings: Vec<String>,
}

/// Loads every dataset named by the config, relative to `base_dir`.
pub fn prepare(config: RunConfig, base_dir: &Path) -> Result<PreparedExperiment, ScheduleError> {
    let schedule = parse_schedule(&config.schedule)?;
    let mut warnings = Vec::new();
    let final_stage = schedule.stages.last().unwrap();
    let final_has_sid = final_stage
        .tasks
        .iter()
        .any(|t| config.tasks.get(t).map(|c| c.kind) == Some(TaskKind::Sid));
    if !final_has_sid {
        warnings.push("final stage contains no SID task; evaluation will be skipped".to_string());
    }
    for stage in &schedule.stages {
        for task in &stage.tasks {
            if !config.tasks.contains_key(task) {
                return Err(ScheduleError::MissingBinding(task.clone()));
            }
        }
    }
    let mut bindings = BTreeMap::new();
    for (name, tc) in &config.tasks {
        let lang = tc.language.clone().unwrap_or_else(|| "und".to_string());
        let train = load_dataset(tc.kind, &base_dir.join(&tc.train), &format!("{name}-train"), &lang)?;
        let dev = load_dataset(tc.kind, &base_dir.join(&tc.dev), &format!("{name}-dev"), &lang)?;
        bindings.insert(
            name.clone(),
            TaskBinding { name: name.clone(), kind: tc.kind, train, dev },
        );
    }
    let mut eval_sets = Vec::new();
    for (name, path) in &config.eval {
        eval_sets.push((
            name.clone(),
            load_dataset(TaskKind::Sid, &base_dir.join(path), name, name)?,
        ));
    }
    Ok(PreparedExperiment { config, schedule, bindings, eval_sets, warnings })
}

/// Full result of `run_schedule`: the report plus each seed's final model
/// and step logs (one per stage per seed).
pub struct ScheduleRun {
    pub report: ExperimentReport,
    pub final_models: Vec<(u64, ModelState)>,
    pub step_logs: Vec<Vec<StepLog>>,
}

/// Executes the schedule for every seed: init → fold stage/transition →
/// final SID evaluation on every configured eval set.
pub fn run_schedule(exp: &PreparedExperiment) -> Result<ScheduleRun, ScheduleError> {
    let opts = TrainOptions {
        max_epochs: exp.config.max_epochs,
        batch_size: exp.config.batch_size,
        mlm_split_per_epoch: exp.config.mlm_split_per_epoch,
        mask_prob: exp.config.model.to_config().mask_prob,
    };
    let vocab = Vocab::build(exp.bindings.values().map(|b| &b.train));
    let final_stage = exp.schedule.stages.last().unwrap();
    let sid_task = final_stage
        .tasks
        .iter()
        .find(|t| exp.bindings.get(*t).map(|b| b.kind) == Some(TaskKind::Sid))
        .cloned();

    let mut per_seed = Vec::new();
    let mut final_models = Vec::new();
    let mut step_logs = Vec::new();
    for &seed in &exp.config.seeds {
        let mut m = init_model(exp.config.model.to_config(), vocab.clone(), seed)?;
        let mut aux = BTreeMap::new();
        let mut stage_seconds = Vec::new();
        let mut seed_steps = Vec::new();
        for (i, stage) in exp.schedule.stages.iter().enumerate() {
            if i > 0 {
                transition(&mut m, &exp.schedule.stages[i - 1], stage, &exp.bindings)?;
            }
            let t0 = std::time::Instant::now();
            let outcome = run_stage(&mut m, stage, &exp.bindings, &opts)?;
            stage_seconds.push(t0.elapsed().as_secs_f64());
            seed_steps.push(outcome.step_log);
            for (task, report) in outcome.dev_reports {
                if let TaskDevReport::Aux(a) = report {
                    aux.insert(task, a);
                }
            }
        }
        let mut metrics_by_dataset = BTreeMap::new();
        if let Some(sid_task) = &sid_task {
            for (name, dataset) in &exp.eval_sets {
                let report = sid_dev_report(&m, sid_task, dataset)?;
                metrics_by_dataset.insert(name.clone(), report);
            }
        }
        per_seed.push(SeedRun { seed, metrics: metrics_by_dataset, aux, stage_seconds });
        final_models.push((seed, m));
        step_logs.push(seed_steps);
    }

    let report = ExperimentReport::new(
        exp.config.name.clone(),
        toml::to_string(&exp.config).unwrap_or_default(),
        per_seed,
    );
    Ok(ScheduleRun { report, final_models, step_logs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stage_names(s: &Schedule) -> Vec<Vec<&str>> {
        s.stages
            .iter()
            .map(|st| st.tasks.iter().map(|t| t.as_str()).collect())
            .collect()
    }

    #[test]
    fn parse_single_task() {
        let s = parse_schedule("SID").unwrap();
        assert_eq!(stage_names(&s), vec![vec!["SID"]]);
    }

    #[test]
    fn parse_mixed_setup() {
        let s = parse_schedule("MLM×NER→SID").unwrap();
        assert_eq!(stage_names(&s), vec![vec!["MLM", "NER"], vec!["SID"]]);
    }

    #[test]
    fn parse_three_stages() {
        let s = parse_schedule("UD→NER→SID").unwrap();
        assert_eq!(stage_names(&s), vec![vec!["UD"], vec!["NER"], vec!["SID"]]);
    }

    #[test]
    fn parse_ascii_aliases() {
        let s = parse_schedule("MLM x NER -> SID").unwrap();
        assert_eq!(stage_names(&s), vec![vec!["MLM", "NER"], vec!["SID"]]);
    }

    #[test]
    fn parse_whitespace_insignificant() {
        let a = parse_schedule(" UD → SID ").unwrap();
        let b = parse_schedule("UD→SID").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parse_leading_separator_is_empty_stage() {
        assert!(matches!(parse_schedule("→SID"), Err(ScheduleError::EmptyStage)));
        assert!(matches!(parse_schedule("SID→"), Err(ScheduleError::EmptyStage)));
        assert!(matches!(parse_schedule("UD→→SID"), Err(ScheduleError::EmptyStage)));
        assert!(matches!(parse_schedule("×SID"), Err(ScheduleError::EmptyStage)));
    }

    #[test]
    fn parse_empty_schedule() {
        assert!(matches!(parse_schedule(""), Err(ScheduleError::EmptySchedule)));
        assert!(matches!(parse_schedule("   "), Err(ScheduleError::EmptySchedule)));
    }

    #[test]
    fn parse_duplicate_task() {
        assert!(matches!(
            parse_schedule("NER×NER→SID"),
            Err(ScheduleError::DuplicateTask(_))
        ));
    }

    #[test]
    fn render_round_trip() {
        for text in ["SID", "MLM×NER→SID", "UD→NER→SID", "MLM×UD×NER×SID"] {
            let s = parse_schedule(text).unwrap();
            assert_eq!(render_schedule(&s), text);
            assert_eq!(parse_schedule(&render_schedule(&s)).unwrap(), s);
        }
    }

    fn mlm_dataset(n: usize) -> Dataset {
        crate::corpus::parse_plaintext(
            &(0..n).map(|i| format!("w{i}\n")).collect::<String>(),
            "mlm",
            "bar",
        )
    }

    #[test]
    fn mlm_slices_disjoint_and_covering() {
        let d = mlm_dataset(1400);
        let opts = TrainOptions {
            max_epochs: 20,
            batch_size: 8,
            mlm_split_per_epoch: true,
            mask_prob: 0.15,
        };
        let mut seen = std::collections::BTreeSet::new();
        for epoch in 0..20 {
            let slice = mlm_epoch_slice(&d, epoch, &opts);
            assert_eq!(slice.len(), 70);
            for s in &slice.sentences {
                assert!(seen.insert(s.tokens[0].surface.clone()), "slices overlap");
            }
        }
        assert_eq!(seen.len(), 1400);
    }

    #[test]
    fn mlm_slice_flag_off_uses_full_data() {
        let d = mlm_dataset(100);
        let opts = TrainOptions {
            max_epochs: 20,
            batch_size: 8,
            mlm_split_per_epoch: false,
            mask_prob: 0.15,
        };
        assert_eq!(mlm_epoch_slice(&d, 3, &opts).len(), 100);
    }

    #[test]
    fn config_defaults() {
        let cfg = RunConfig::from_toml(
            r#"
name = "baseline"
schedule = "SID"

[tasks.SID]
kind = "sid"
train = "train.conll"
dev = "dev.conll"
"#,
        )
        .unwrap();
        assert_eq!(cfg.max_epochs, 20);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert!(cfg.mlm_split_per_epoch);
    }

    #[test]
    fn config_rejects_zero_epochs() {
        let err = RunConfig::from_toml(
            r#"
name = "x"
schedule = "SID"
max_epochs = 0

[tasks.SID]
kind = "sid"
train = "a"
dev = "b"
"#,
        );
        assert!(err.is_err());
    }
}
