//! Dialect-distance analysis: Levenshtein-based similarity between parallel
//! translations, word-level over sentences and character-level over slot
//! values, aggregated into pairwise language matrices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{decode_bio, CorpusError, Dataset, Sentence, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    /// Word-level distance over whole sentences.
    SentenceWords,
    /// Character-level distance over joined slot values.
    SlotChars,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseMode {
    CaseSensitive,
    CaseInsensitive,
}

/// One of the four analysis modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mode {
    pub level: Level,
    pub case: CaseMode,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode { level: Level::SlotChars, case: CaseMode::CaseSensitive },
        Mode { level: Level::SlotChars, case: CaseMode::CaseInsensitive },
        Mode { level: Level::SentenceWords, case: CaseMode::CaseSensitive },
        Mode { level: Level::SentenceWords, case: CaseMode::CaseInsensitive },
    ];

    pub fn name(&self) -> &'static str {
        match (self.level, self.case) {
            (Level::SlotChars, CaseMode::CaseSensitive) => "slot_chars_case_sensitive",
            (Level::SlotChars, CaseMode::CaseInsensitive) => "slot_chars_case_insensitive",
            (Level::SentenceWords, CaseMode::CaseSensitive) => "sentence_words_case_sensitive",
            (Level::SentenceWords, CaseMode::CaseInsensitive) => "sentence_words_case_insensitive",
        }
    }

    pub fn from_name(name: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// Position-aligned SID datasets: sentence i in every variant translates the
/// same source sentence.
#[derive(Debug, Clone)]
pub struct AlignedCorpora {
    pub variants: Vec<(String, Dataset)>,
}

#[derive(Debug, Error, PartialEq)]
pub enum DistanceError {
    #[error("corpora are misaligned: {a} has {n_a} sentences but {b} has {n_b}")]
    MisalignedCorpora { a: String, b: String, n_a: usize, n_b: usize },
    #[error("variant {0} is not a SID dataset")]
    NotSid(String),
    #[error("sentence {0} is missing slot tags")]
    MissingSlotTags(usize),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl AlignedCorpora {
    pub fn new(variants: Vec<(String, Dataset)>) -> Result<Self, DistanceError> {
        for (tag, d) in &variants {
            if d.task_kind != TaskKind::Sid {
                return Err(DistanceError::NotSid(tag.clone()));
            }
        }
        if let Some((first_tag, first)) = variants.first() {
            for (tag, d) in &variants[1..] {
                if d.len() != first.len() {
                    return Err(DistanceError::MisalignedCorpora {
                        a: first_tag.clone(),
                        b: tag.clone(),
                        n_a: first.len(),
                        n_b: d.len(),
                    });
                }
            }
        }
        Ok(AlignedCorpora { variants })
    }
}

/// Pairwise mean similarities for one mode. `values[i][j]` is defined for
/// i ≤ j; the diagonal is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub mode: Mode,
}

impl SimilarityMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        Some(self.values[i][j - i])
    }

    /// TSV rendering with the mode in a header comment.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# mode: {}\n", self.mode.name());
        out.push_str(&format!("\t{}\n", self.labels.join("\t")));
        for (i, row_label) in self.labels.iter().enumerate() {
            let mut row = vec![row_label.clone()];
            for j in 0..self.labels.len() {
                if j < i {
                    row.push(String::new());
                } else {
                    row.push(format!("{:.4}", self.values[i][j - i]));
                }
            }
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Minimal number of insertions, deletions, and substitutions (unit costs).
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(row[j + 1] + 1);
        }
    }
    row[b.len()]
}

/// 1 − d / max(|a|, |b|); two empty sequences are vacuously identical (1).
pub fn normalized_similarity<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longer = a.len().max(b.len());
    if longer == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longer as f64
}

fn words(s: &Sentence, case: CaseMode) -> Vec<&str> {
    s.tokens
        .iter()
        .map(|t| match case {
            CaseMode::CaseSensitive => t.surface.as_str(),
            CaseMode::CaseInsensitive => t.lowercased.as_str(),
        })
        .collect()
}

/// Word-level normalized similarity between two sentences.
pub fn sentence_similarity(a: &Sentence, b: &Sentence, case: CaseMode) -> f64 {
    normalized_similarity(&words(a, case), &words(b, case))
}

fn slot_values(s: &Sentence, case: CaseMode, index: usize) -> Result<BTreeMap<String, String>, DistanceError> {
    let tags = s.slot_tags.as_ref().ok_or(DistanceError::MissingSlotTags(index))?;
    let spans = decode_bio(tags)?;
    // All words tagged with the same slot type, joined with single spaces,
    // in token order.
    let mut values: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    let words = words(s, case);
    for span in &spans {
        let entry = values.entry(span.label.clone()).or_default();
        entry.extend(&words[span.start..=span.end]);
    }
    Ok(values.into_iter().map(|(k, v)| (k, v.join(" "))).collect())
}

/// Character-level similarity over slot values, averaged over the slot
/// labels present in both sentences. `None` when no label is shared.
pub fn slot_similarity(
    a: &Sentence,
    b: &Sentence,
    case: CaseMode,
) -> Result<Option<f64>, DistanceError> {
    let va = slot_values(a, case, 0)?;
    let vb = slot_values(b, case, 1)?;
    let shared: Vec<&String> = va.keys().filter(|k| vb.contains_key(*k)).collect();
    if shared.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for label in &shared {
        let ca: Vec<char> = va[*label].chars().collect();
        let cb: Vec<char> = vb[*label].chars().collect();
        total += normalized_similarity(&ca, &cb);
    }
    Ok(Some(total / shared.len() as f64))
}

/// Mean pairwise similarity matrix over all language pairs of an aligned
/// corpus collection.
pub fn corpus_similarity(
    corpora: &AlignedCorpora,
    mode: Mode,
) -> Result<SimilarityMatrix, DistanceError> {
    let labels: Vec<String> = corpora.variants.iter().map(|(t, _)| t.clone()).collect();
    let mut values = Vec::with_capacity(labels.len());
    for i in 0..corpora.variants.len() {
        let mut row = vec![1.0];
        for j in i + 1..corpora.variants.len() {
            row.push(pair_similarity(&corpora.variants[i].1, &corpora.variants[j].1, mode)?);
        }
        values.push(row);
    }
    Ok(SimilarityMatrix { labels, values, mode })
}

fn pair_similarity(a: &Dataset, b: &Dataset, mode: Mode) -> Result<f64, DistanceError> {
    if a.len() != b.len() {
        return Err(DistanceError::MisalignedCorpora {
            a: a.name.clone(),
            b: b.name.clone(),
            n_a: a.len(),
            n_b: b.len(),
        });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (sa, sb) in a.sentences.iter().zip(&b.sentences) {
        match mode.level {
            Level::SentenceWords => {
                total += sentence_similarity(sa, sb, mode.case);
                count += 1;
            }
            Level::SlotChars => {
                if let Some(sim) = slot_similarity(sa, sb, mode.case)? {
                    total += sim;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Ok(1.0);
    }
    Ok(total / count as f64)
}
