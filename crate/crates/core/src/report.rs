//! Experiment reports: per-seed metric tables, seed aggregation, TSV and
//! Markdown rendering, and baseline-delta tables across setups.
//!
//! The TSV form is the machine-readable record: byte-for-byte deterministic
//! given the same inputs, full-precision floats, and re-parseable so delta
//! tables can be built from report files alone. Wall-clock timings are kept
//! in the in-memory report only and never written to files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{aggregate_seeds, AuxReport, MetricReport, SeedAggregate};

/// The SID metrics carried into reports, in fixed column order.
pub const SID_METRICS: [&str; 5] = [
    "slot_precision",
    "slot_recall",
    "slot_f1",
    "intent_accuracy",
    "fully_correct",
];

fn metric_value(r: &MetricReport, name: &str) -> f64 {
    match name {
        "slot_precision" => r.slot_precision,
        "slot_recall" => r.slot_recall,
        "slot_f1" => r.slot_f1,
        "intent_accuracy" => r.intent_accuracy,
        "fully_correct" => r.fully_correct,
        _ => unreachable!("unknown SID metric {name}"),
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("malformed report line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("report has no data rows")]
    Empty,
    #[error("no report named `{0}` among the inputs")]
    UnknownBaseline(String),
    #[error("duplicate report name `{0}` among the inputs")]
    DuplicateName(String),
}

/// One seed's final evaluation: SID metrics per eval dataset plus auxiliary
/// dev metrics per task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: BTreeMap<String, MetricReport>,
    pub aux: BTreeMap<String, AuxReport>,
    /// Wall-clock seconds per stage. Informational only; excluded from all
    /// file output so reports stay deterministic.
    pub stage_seconds: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    /// The configuration the run was produced from, echoed verbatim.
    pub config_echo: String,
    pub per_seed: Vec<SeedRun>,
    /// dataset → metric → aggregate over seeds.
    pub aggregates: BTreeMap<String, BTreeMap<String, SeedAggregate>>,
}

impl ExperimentReport {
    pub fn new(name: String, config_echo: String, per_seed: Vec<SeedRun>) -> Self {
        let mut aggregates: BTreeMap<String, BTreeMap<String, SeedAggregate>> = BTreeMap::new();
        let datasets: std::collections::BTreeSet<&String> =
            per_seed.iter().flat_map(|r| r.metrics.keys()).collect();
        for dataset in datasets {
            let mut by_metric = BTreeMap::new();
            for metric in SID_METRICS {
                let values: Vec<f64> = per_seed
                    .iter()
                    .filter_map(|r| r.metrics.get(dataset))
                    .map(|m| metric_value(m, metric))
                    .collect();
                if !values.is_empty() {
                    by_metric.insert(metric.to_string(), aggregate_seeds(&values));
                }
            }
            aggregates.insert(dataset.clone(), by_metric);
        }
        ExperimentReport { name, config_echo, per_seed, aggregates }
    }

    /// Machine-readable TSV. Row kinds: `seed:<n>`, `mean`, `stdev`,
    /// `n_runs`. Floats use Rust's shortest round-trip formatting, so the
    /// aggregates are exactly recomputable from the per-seed rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str("# report v1\n");
        out.push_str(&format!("# name: {}\n", self.name));
        out.push_str("dataset\tmetric\tkind\tvalue\n");
        for (dataset, by_metric) in &self.aggregates {
            for metric in SID_METRICS {
                let Some(agg) = by_metric.get(metric) else { continue };
                for run in &self.per_seed {
                    if let Some(m) = run.metrics.get(dataset) {
                        out.push_str(&format!(
                            "{dataset}\t{metric}\tseed:{}\t{}\n",
                            run.seed,
                            metric_value(m, metric)
                        ));
                    }
                }
                out.push_str(&format!("{dataset}\t{metric}\tmean\t{}\n", agg.mean));
                out.push_str(&format!("{dataset}\t{metric}\tstdev\t{}\n", agg.stdev));
                out.push_str(&format!("{dataset}\t{metric}\tn_runs\t{}\n", agg.n_runs));
            }
        }
        out
    }

    /// Human-readable Markdown: one row per eval dataset, mean±std in
    /// percent with one decimal.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# Report: {}\n\n", self.name));
        out.push_str("| dataset | slot P | slot R | slot F1 | intent acc | fully correct |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for (dataset, by_metric) in &self.aggregates {
            out.push_str(&format!("| {dataset} |"));
            for metric in SID_METRICS {
                match by_metric.get(metric) {
                    Some(a) => out.push_str(&format!(
                        " {:.1}±{:.1} |",
                        100.0 * a.mean,
                        100.0 * a.stdev
                    )),
                    None => out.push_str(" – |"),
                }
            }
            out.push('\n');
        }
        let aux_rows: Vec<(&u64, &String, &AuxReport)> = self
            .per_seed
            .iter()
            .flat_map(|r| r.aux.iter().map(move |(t, a)| (&r.seed, t, a)))
            .collect();
        if !aux_rows.is_empty() {
            out.push_str("\n## Auxiliary dev metrics\n\n");
            out.push_str("| seed | task | LAS | POS acc | NER span F1 | MLM PPL |\n");
            out.push_str("|---|---|---|---|---|---|\n");
            for (seed, task, a) in aux_rows {
                let cell = |v: Option<f64>, pct: bool| match v {
                    Some(v) if pct => format!("{:.1}", 100.0 * v),
                    Some(v) => format!("{v:.3}"),
                    None => "–".to_string(),
                };
                out.push_str(&format!(
                    "| {seed} | {task} | {} | {} | {} | {} |\n",
                    cell(a.las, true),
                    cell(a.pos_accuracy, true),
                    cell(a.ner_span_f1, true),
                    cell(a.mlm_perplexity, false),
                ));
            }
        }
        out
    }
}

/// A report read back from its TSV form.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub name: String,
    /// dataset → metric → (per-seed values in file order, aggregate).
    pub entries: BTreeMap<String, BTreeMap<String, (Vec<f64>, SeedAggregate)>>,
}

pub fn parse_tsv(text: &str) -> Result<ParsedReport, ReportError> {
    let mut name = String::new();
    let mut entries: BTreeMap<String, BTreeMap<String, (Vec<f64>, SeedAggregate)>> =
        BTreeMap::new();
    let mut saw_rows = false;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if let Some(rest) = line.strip_prefix("# name: ") {
            name = rest.to_string();
            continue;
        }
        if line.starts_with('#') || line.is_empty() || line.starts_with("dataset\t") {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(ReportError::Malformed {
                line: lineno,
                msg: format!("expected 4 columns, got {}", cols.len()),
            });
        }
        let value: f64 = cols[3].parse().map_err(|_| ReportError::Malformed {
            line: lineno,
            msg: format!("bad value `{}`", cols[3]),
        })?;
        let slot = entries
            .entry(cols[0].to_string())
            .or_default()
            .entry(cols[1].to_string())
            .or_insert_with(|| (Vec::new(), SeedAggregate { mean: 0.0, stdev: 0.0, n_runs: 0 }));
        match cols[2] {
            "mean" => slot.1.mean = value,
            "stdev" => slot.1.stdev = value,
            "n_runs" => slot.1.n_runs = value as usize,
            kind if kind.starts_with("seed:") => slot.0.push(value),
            kind => {
                return Err(ReportError::Malformed {
                    line: lineno,
                    msg: format!("unknown row kind `{kind}`"),
                })
            }
        }
        saw_rows = true;
    }
    if !saw_rows {
        return Err(ReportError::Empty);
    }
    Ok(ParsedReport { name, entries })
}

/// Mean scores of several setups relative to a named baseline, in
/// percentage points. The baseline row is present with all deltas zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTable {
    pub baseline: String,
    /// Column keys `dataset/metric`, in sorted order.
    pub columns: Vec<String>,
    /// (setup name, deltas in pp aligned with `columns`; None if the setup
    /// lacks that dataset/metric).
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

pub fn render_tables(reports: &[ParsedReport], baseline: &str) -> Result<DeltaTable, ReportError> {
    let base = reports
        .iter()
        .find(|r| r.name == baseline)
        .ok_or_else(|| ReportError::UnknownBaseline(baseline.to_string()))?;
    let mut seen = std::collections::BTreeSet::new();
    for r in reports {
        if !seen.insert(&r.name) {
            return Err(ReportError::DuplicateName(r.name.clone()));
        }
    }
    let mut columns = Vec::new();
    for (dataset, by_metric) in &base.entries {
        for metric in SID_METRICS {
            if by_metric.contains_key(metric) {
                columns.push(format!("{dataset}/{metric}"));
            }
        }
    }
    let mut rows = Vec::new();
    for r in reports {
        let deltas = columns
            .iter()
            .map(|col| {
                let (dataset, metric) = col.split_once('/').unwrap();
                let base_mean = base.entries[dataset][metric].1.mean;
                r.entries
                    .get(dataset)
                    .and_then(|m| m.get(metric))
                    .map(|(_, agg)| 100.0 * (agg.mean - base_mean))
            })
            .collect();
        rows.push((r.name.clone(), deltas));
    }
    Ok(DeltaTable { baseline: baseline.to_string(), columns, rows })
}

impl DeltaTable {
    /// Markdown with deltas in percentage points, one decimal.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# Deltas vs. baseline `{}` (pp)\n\n", self.baseline));
        out.push_str("| setup |");
        for c in &self.columns {
            out.push_str(&format!(" {c} |"));
        }
        out.push_str("\n|---|");
        for _ in &self.columns {
            out.push_str("---|");
        }
        out.push('\n');
        for (name, deltas) in &self.rows {
            out.push_str(&format!("| {name} |"));
            for d in deltas {
                match d {
                    Some(d) => out.push_str(&format!(" {d:+.1} |")),
                    None => out.push_str(" – |"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str("# delta v1\n");
        out.push_str(&format!("# baseline: {}\n", self.baseline));
        out.push_str(&format!("setup\t{}\n", self.columns.join("\t")));
        for (name, deltas) in &self.rows {
            out.push_str(name);
            for d in deltas {
                match d {
                    Some(d) => out.push_str(&format!("\t{d:+.1}")),
                    None => out.push_str("\t-"),
                }
            }
            out.push('\n');
        }
        out
    }
}
