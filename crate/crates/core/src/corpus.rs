//! Corpus ingestion: the CoNLL-family formats used by the experiments plus
//! plain text for masked language modelling.
//!
//! All parsers are pure functions over UTF-8 input; invalid UTF-8 is a hard
//! error at the I/O boundary (readers hand us `&str`).

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A surface token plus its lowercased form (Unicode lowercasing, so ä/Ä and
/// friends behave in Bavarian text).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lowercased: String,
}

impl Token {
    pub fn new(surface: impl Into<String>) -> Self {
        let surface = surface.into();
        let lowercased = surface.to_lowercase();
        Token { surface, lowercased }
    }
}

/// The universal sentence record. Per-task annotation lists, when present,
/// are exactly as long as `tokens`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: Option<String>,
    pub tokens: Vec<Token>,
    pub slot_tags: Option<Vec<String>>,
    pub intent: Option<String>,
    pub pos_tags: Option<Vec<String>>,
    /// Head indices, 0 = root, 1-based otherwise.
    pub heads: Option<Vec<usize>>,
    pub deprels: Option<Vec<String>>,
    pub ner_tags: Option<Vec<String>>,
    /// Opaque `# key: value` metadata retained from xSID blocks
    /// (everything except `intent` and `id`).
    pub meta: Vec<(String, String)>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks the structural invariants: annotation lengths, head ranges,
    /// no self-attachment, and intent/slot co-presence.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let n = self.tokens.len();
        let check_len = |list: &Option<Vec<String>>, what: &str| {
            if let Some(l) = list {
                if l.len() != n {
                    return Err(CorpusError::AnnotationLengthMismatch {
                        what: what.to_string(),
                        expected: n,
                        got: l.len(),
                    });
                }
            }
            Ok(())
        };
        check_len(&self.slot_tags, "slot_tags")?;
        check_len(&self.pos_tags, "pos_tags")?;
        check_len(&self.deprels, "deprels")?;
        check_len(&self.ner_tags, "ner_tags")?;
        if let Some(heads) = &self.heads {
            if heads.len() != n {
                return Err(CorpusError::AnnotationLengthMismatch {
                    what: "heads".to_string(),
                    expected: n,
                    got: heads.len(),
                });
            }
            for (i, &h) in heads.iter().enumerate() {
                if h > n || h == i + 1 {
                    return Err(CorpusError::HeadOutOfRange { line: i + 1, head: h, len: n });
                }
            }
        }
        if self.intent.is_some() != self.slot_tags.is_some() {
            return Err(CorpusError::IntentSlotMismatch);
        }
        Ok(())
    }
}

/// Which annotations a dataset carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Sid,
    Ud,
    Ner,
    Mlm,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::Sid => write!(f, "sid"),
            TaskKind::Ud => write!(f, "ud"),
            TaskKind::Ner => write!(f, "ner"),
            TaskKind::Mlm => write!(f, "mlm"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub language_tag: String,
    pub task_kind: TaskKind,
    pub sentences: Vec<Sentence>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// A half-open-by-convention labeled span, stored with inclusive indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl SlotSpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        SlotSpan { start, end, label: label.into() }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("block {block} (line {line}): no intent metadata entry")]
    MissingIntent { block: usize, line: usize },
    #[error("block {block} (line {line}): token indices are not contiguous from 1")]
    RaggedBlock { block: usize, line: usize },
    #[error("line {line}: expected {expected} tab-separated fields, found {got}")]
    BadColumnCount { line: usize, expected: usize, got: usize },
    #[error("line {line}: head field `{field}` is not a number")]
    NonNumericHead { line: usize, field: String },
    #[error("token {line}: head {head} out of range for sentence of length {len}")]
    HeadOutOfRange { line: usize, head: usize, len: usize },
    #[error("malformed BIO tag `{0}` (expected O, B-<label>, or I-<label>)")]
    MalformedTag(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{what}: expected {expected} entries, got {got}")]
    AnnotationLengthMismatch { what: String, expected: usize, got: usize },
    #[error("intent and slot tags must be present together")]
    IntentSlotMismatch,
}

fn split_blocks(input: &str) -> Vec<(usize, Vec<(usize, &str)>)> {
    // Blocks of non-blank lines, each line tagged with its 1-based number.
    let mut blocks = Vec::new();
    let mut current: Vec<(usize, &str)> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push((blocks.len() + 1, std::mem::take(&mut current)));
            }
        } else {
            current.push((i + 1, line));
        }
    }
    if !current.is_empty() {
        blocks.push((blocks.len() + 1, current));
    }
    blocks
}

/// Parses xSID-style SID data: blank-line-separated blocks of
/// `# key: value` metadata and `index ␉ token ␉ slot-tag` rows.
pub fn parse_xsid(input: &str, name: &str, language_tag: &str) -> Result<Dataset, CorpusError> {
    let mut sentences = Vec::new();
    for (block_no, lines) in split_blocks(input) {
        let mut sent = Sentence::default();
        let mut intent = None;
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        let first_line = lines[0].0;
        for (line_no, line) in lines {
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim_start();
                let (key, value) = match rest.split_once(':') {
                    Some((k, v)) => (k.trim(), v.trim()),
                    None => (rest.trim(), ""),
                };
                match key {
                    "intent" => intent = Some(value.to_string()),
                    "id" => sent.id = Some(value.to_string()),
                    _ => sent.meta.push((key.to_string(), value.to_string())),
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(CorpusError::BadColumnCount {
                    line: line_no,
                    expected: 3,
                    got: fields.len(),
                });
            }
            let idx: usize = fields[0]
                .parse()
                .map_err(|_| CorpusError::RaggedBlock { block: block_no, line: line_no })?;
            if idx != tokens.len() + 1 {
                return Err(CorpusError::RaggedBlock { block: block_no, line: line_no });
            }
            tokens.push(Token::new(fields[1]));
            tags.push(fields[2].to_string());
        }
        let intent = intent.ok_or(CorpusError::MissingIntent { block: block_no, line: first_line })?;
        sent.tokens = tokens;
        sent.slot_tags = Some(tags);
        sent.intent = Some(intent);
        sent.validate()?;
        sentences.push(sent);
    }
    Ok(Dataset {
        name: name.to_string(),
        language_tag: language_tag.to_string(),
        task_kind: TaskKind::Sid,
        sentences,
    })
}

/// Serializes a SID dataset back to the xSID block format.
pub fn write_xsid(d: &Dataset) -> String {
    let mut out = String::new();
    for s in &d.sentences {
        if let Some(id) = &s.id {
            out.push_str(&format!("# id: {id}\n"));
        }
        for (k, v) in &s.meta {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        if let Some(intent) = &s.intent {
            out.push_str(&format!("# intent: {intent}\n"));
        }
        let tags = s.slot_tags.as_deref().unwrap_or(&[]);
        for (i, (tok, tag)) in s.tokens.iter().zip(tags).enumerate() {
            out.push_str(&format!("{}\t{}\t{}\n", i + 1, tok.surface, tag));
        }
        out.push('\n');
    }
    out
}

/// Parses 10-column CoNLL-U. Multiword-token lines (`a-b`) and empty-node
/// lines (`a.b`) are skipped; only UPOS, HEAD, and DEPREL are retained.
pub fn parse_conllu(input: &str, name: &str, language_tag: &str) -> Result<Dataset, CorpusError> {
    let mut sentences = Vec::new();
    for (_block_no, lines) in split_blocks(input) {
        let mut sent = Sentence::default();
        let mut pos = Vec::new();
        let mut heads = Vec::new();
        let mut deprels = Vec::new();
        for (line_no, line) in lines {
            if line.starts_with('#') {
                if let Some(rest) = line.strip_prefix('#') {
                    if let Some((k, v)) = rest.trim_start().split_once('=') {
                        if k.trim() == "sent_id" {
                            sent.id = Some(v.trim().to_string());
                        }
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 10 {
                return Err(CorpusError::BadColumnCount {
                    line: line_no,
                    expected: 10,
                    got: fields.len(),
                });
            }
            let id = fields[0];
            if id.contains('-') || id.contains('.') {
                continue;
            }
            let head: usize = fields[6].parse().map_err(|_| CorpusError::NonNumericHead {
                line: line_no,
                field: fields[6].to_string(),
            })?;
            sent.tokens.push(Token::new(fields[1]));
            pos.push(fields[3].to_string());
            heads.push(head);
            deprels.push(fields[7].to_string());
        }
        if sent.tokens.is_empty() {
            continue;
        }
        sent.pos_tags = Some(pos);
        sent.heads = Some(heads);
        sent.deprels = Some(deprels);
        sent.validate()?;
        sentences.push(sent);
    }
    Ok(Dataset {
        name: name.to_string(),
        language_tag: language_tag.to_string(),
        task_kind: TaskKind::Ud,
        sentences,
    })
}

/// Serializes a UD dataset back to CoNLL-U; columns we do not track are `_`.
pub fn write_conllu(d: &Dataset) -> String {
    let mut out = String::new();
    for s in &d.sentences {
        if let Some(id) = &s.id {
            out.push_str(&format!("# sent_id = {id}\n"));
        }
        let pos = s.pos_tags.as_deref().unwrap_or(&[]);
        let heads = s.heads.as_deref().unwrap_or(&[]);
        let deprels = s.deprels.as_deref().unwrap_or(&[]);
        for (i, tok) in s.tokens.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_\n",
                i + 1,
                tok.surface,
                pos[i],
                heads[i],
                deprels[i]
            ));
        }
        out.push('\n');
    }
    out
}

/// Parses two-column `token ␉ tag` NER CoNLL. Tags are opaque at parse time;
/// BIO validation happens at decode/score time.
pub fn parse_ner_conll(input: &str, name: &str, language_tag: &str) -> Result<Dataset, CorpusError> {
    let mut sentences = Vec::new();
    for (_block_no, lines) in split_blocks(input) {
        let mut sent = Sentence::default();
        let mut tags = Vec::new();
        for (line_no, line) in lines {
            if line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(CorpusError::BadColumnCount {
                    line: line_no,
                    expected: 2,
                    got: fields.len(),
                });
            }
            sent.tokens.push(Token::new(fields[0]));
            tags.push(fields[1].to_string());
        }
        if sent.tokens.is_empty() {
            continue;
        }
        sent.ner_tags = Some(tags);
        sent.validate()?;
        sentences.push(sent);
    }
    Ok(Dataset {
        name: name.to_string(),
        language_tag: language_tag.to_string(),
        task_kind: TaskKind::Ner,
        sentences,
    })
}

pub fn write_ner_conll(d: &Dataset) -> String {
    let mut out = String::new();
    for s in &d.sentences {
        let tags = s.ner_tags.as_deref().unwrap_or(&[]);
        for (tok, tag) in s.tokens.iter().zip(tags) {
            out.push_str(&format!("{}\t{}\n", tok.surface, tag));
        }
        out.push('\n');
    }
    out
}

/// Parses plain text for MLM: one sentence per line, tokens split on
/// whitespace runs, blank lines skipped.
pub fn parse_plaintext(input: &str, name: &str, language_tag: &str) -> Dataset {
    let sentences = input
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Sentence {
            tokens: l.split_whitespace().map(Token::new).collect(),
            ..Sentence::default()
        })
        .collect();
    Dataset {
        name: name.to_string(),
        language_tag: language_tag.to_string(),
        task_kind: TaskKind::Mlm,
        sentences,
    }
}

pub fn write_plaintext(d: &Dataset) -> String {
    let mut out = String::new();
    for s in &d.sentences {
        let words: Vec<&str> = s.tokens.iter().map(|t| t.surface.as_str()).collect();
        out.push_str(&words.join(" "));
        out.push('\n');
    }
    out
}

/// Decodes a BIO tag sequence into labeled spans.
///
/// A `B-` always opens a span. An `I-` continues the open span if the label
/// matches, and otherwise opens a new span (conlleval-style repair of
/// ill-formed sequences). Output is sorted by start position.
pub fn decode_bio(tags: &[impl AsRef<str>]) -> Result<Vec<SlotSpan>, CorpusError> {
    let mut spans = Vec::new();
    let mut open: Option<SlotSpan> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        if tag == "O" {
            if let Some(span) = open.take() {
                spans.push(span);
            }
            continue;
        }
        let (prefix, label) = tag
            .split_once('-')
            .ok_or_else(|| CorpusError::MalformedTag(tag.to_string()))?;
        if label.is_empty() {
            return Err(CorpusError::MalformedTag(tag.to_string()));
        }
        match prefix {
            "B" => {
                if let Some(span) = open.take() {
                    spans.push(span);
                }
                open = Some(SlotSpan::new(i, i, label));
            }
            "I" => match &mut open {
                Some(span) if span.label == label => span.end = i,
                _ => {
                    if let Some(span) = open.take() {
                        spans.push(span);
                    }
                    open = Some(SlotSpan::new(i, i, label));
                }
            },
            _ => return Err(CorpusError::MalformedTag(tag.to_string())),
        }
    }
    if let Some(span) = open {
        spans.push(span);
    }
    Ok(spans)
}

/// Encodes spans back into BIO tags for a sentence of length `n`.
/// Spans must be disjoint and in order (as produced by `decode_bio`).
pub fn encode_bio(spans: &[SlotSpan], n: usize) -> Vec<String> {
    let mut tags = vec!["O".to_string(); n];
    for span in spans {
        tags[span.start] = format!("B-{}", span.label);
        for tag in tags.iter_mut().take(span.end + 1).skip(span.start + 1) {
            *tag = format!("I-{}", span.label);
        }
    }
    tags
}

/// Deterministic shuffle-and-cut split. The first ⌊n·train_fraction⌋
/// sentences of the shuffled order go to train, the rest to dev.
pub fn split_dataset(
    d: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), CorpusError> {
    assert!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train_fraction must be in (0, 1)"
    );
    if d.sentences.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..d.sentences.len()).collect();
    order.shuffle(&mut rng);
    let n_train = (d.sentences.len() as f64 * train_fraction).floor() as usize;
    let pick = |ix: &[usize], suffix: &str| Dataset {
        name: format!("{}-{}", d.name, suffix),
        language_tag: d.language_tag.clone(),
        task_kind: d.task_kind,
        sentences: ix.iter().map(|&i| d.sentences[i].clone()).collect(),
    };
    Ok((pick(&order[..n_train], "train"), pick(&order[n_train..], "dev")))
}

/// Label inventory of a dataset for one annotation layer.
pub fn label_inventory(d: &Dataset) -> BTreeSet<String> {
    let mut labels = BTreeSet::new();
    for s in &d.sentences {
        match d.task_kind {
            TaskKind::Sid => {
                if let Some(tags) = &s.slot_tags {
                    labels.extend(tags.iter().cloned());
                }
                if let Some(intent) = &s.intent {
                    labels.insert(intent.clone());
                }
            }
            TaskKind::Ud => {
                if let Some(pos) = &s.pos_tags {
                    labels.extend(pos.iter().cloned());
                }
            }
            TaskKind::Ner => {
                if let Some(tags) = &s.ner_tags {
                    labels.extend(tags.iter().cloned());
                }
            }
            TaskKind::Mlm => {}
        }
    }
    labels
}
