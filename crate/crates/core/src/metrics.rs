//! Evaluation metrics: strict span F1, intent accuracy, fully-correct rate,
//! labelled attachment score, POS accuracy, masked-token perplexity, and
//! cross-seed aggregation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{decode_bio, CorpusError, Sentence};

/// A model's output for one SID sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidPrediction {
    pub slot_tags: Vec<String>,
    pub intent: String,
}

/// The three SID metrics plus corpus size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub slot_precision: f64,
    pub slot_recall: f64,
    pub slot_f1: f64,
    pub intent_accuracy: f64,
    pub fully_correct: f64,
    pub n_sentences: usize,
}

/// Auxiliary-task dev metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxReport {
    pub las: Option<f64>,
    pub pos_accuracy: Option<f64>,
    pub ner_span_f1: Option<f64>,
    pub mlm_perplexity: Option<f64>,
}

/// Mean and sample standard deviation over seed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub mean: f64,
    pub stdev: f64,
    pub n_runs: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("gold has {gold} sentences but predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("sentence {index}: gold has {gold} tokens but prediction has {pred} tags")]
    TagLengthMismatch { index: usize, gold: usize, pred: usize },
    #[error("sentence {index} has no gold slot tags")]
    MissingSlotTags { index: usize },
    #[error("sentence {index} has no gold intent")]
    MissingIntent { index: usize },
    #[error("no masked tokens to score")]
    NoMaskedTokens,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn check_lengths(gold: &[Sentence], pred: &[SidPrediction]) -> Result<(), MetricError> {
    if gold.len() != pred.len() {
        return Err(MetricError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.slot_tags.len() {
            return Err(MetricError::TagLengthMismatch {
                index: i,
                gold: g.len(),
                pred: p.slot_tags.len(),
            });
        }
    }
    Ok(())
}

fn gold_spans(s: &Sentence, i: usize) -> Result<BTreeSet<crate::corpus::SlotSpan>, MetricError> {
    let tags = s.slot_tags.as_ref().ok_or(MetricError::MissingSlotTags { index: i })?;
    Ok(decode_bio(tags)?.into_iter().collect())
}

/// Strict span F1: a true positive needs identical (start, end, label).
///
/// Zero-denominator convention: if gold and prediction both contain zero
/// spans over the whole corpus, P = R = F1 = 1; if exactly one side is
/// empty, the affected ratios are 0.
pub fn strict_slot_f1(
    gold: &[Sentence],
    pred: &[SidPrediction],
) -> Result<(f64, f64, f64), MetricError> {
    check_lengths(gold, pred)?;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fne = 0usize;
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        let gspans = gold_spans(g, i)?;
        let pspans: BTreeSet<_> = decode_bio(&p.slot_tags)?.into_iter().collect();
        tp += gspans.intersection(&pspans).count();
        fp += pspans.difference(&gspans).count();
        fne += gspans.difference(&pspans).count();
    }
    if tp + fp + fne == 0 {
        return Ok((1.0, 1.0, 1.0));
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fne == 0 { 0.0 } else { tp as f64 / (tp + fne) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((precision, recall, f1))
}

pub fn intent_accuracy(gold: &[Sentence], pred: &[SidPrediction]) -> Result<f64, MetricError> {
    check_lengths(gold, pred)?;
    if gold.is_empty() {
        return Ok(1.0);
    }
    let mut correct = 0usize;
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        let gi = g.intent.as_ref().ok_or(MetricError::MissingIntent { index: i })?;
        if *gi == p.intent {
            correct += 1;
        }
    }
    Ok(correct as f64 / gold.len() as f64)
}

/// Fraction of sentences with the right intent and an identical decoded
/// span set. Comparing span sets (not raw tags) means BIO-equivalent
/// taggings count as equal.
pub fn fully_correct(gold: &[Sentence], pred: &[SidPrediction]) -> Result<f64, MetricError> {
    check_lengths(gold, pred)?;
    if gold.is_empty() {
        return Ok(1.0);
    }
    let mut correct = 0usize;
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        let gi = g.intent.as_ref().ok_or(MetricError::MissingIntent { index: i })?;
        if *gi != p.intent {
            continue;
        }
        let gspans = gold_spans(g, i)?;
        let pspans: BTreeSet<_> = decode_bio(&p.slot_tags)?.into_iter().collect();
        if gspans == pspans {
            correct += 1;
        }
    }
    Ok(correct as f64 / gold.len() as f64)
}

/// Computes the standard SID metric bundle in one pass.
pub fn sid_report(gold: &[Sentence], pred: &[SidPrediction]) -> Result<MetricReport, MetricError> {
    let (slot_precision, slot_recall, slot_f1) = strict_slot_f1(gold, pred)?;
    Ok(MetricReport {
        slot_precision,
        slot_recall,
        slot_f1,
        intent_accuracy: intent_accuracy(gold, pred)?,
        fully_correct: fully_correct(gold, pred)?,
        n_sentences: gold.len(),
    })
}

/// Labelled attachment score: fraction of tokens with both head and deprel
/// correct.
pub fn las(
    gold: &[Sentence],
    pred_heads: &[Vec<usize>],
    pred_deprels: &[Vec<String>],
) -> Result<f64, MetricError> {
    if gold.len() != pred_heads.len() || gold.len() != pred_deprels.len() {
        return Err(MetricError::LengthMismatch { gold: gold.len(), pred: pred_heads.len() });
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for (i, g) in gold.iter().enumerate() {
        let gh = g.heads.as_ref().ok_or(MetricError::MissingSlotTags { index: i })?;
        let gd = g.deprels.as_ref().ok_or(MetricError::MissingSlotTags { index: i })?;
        if gh.len() != pred_heads[i].len() || gd.len() != pred_deprels[i].len() {
            return Err(MetricError::TagLengthMismatch {
                index: i,
                gold: gh.len(),
                pred: pred_heads[i].len(),
            });
        }
        for t in 0..gh.len() {
            total += 1;
            if gh[t] == pred_heads[i][t] && gd[t] == pred_deprels[i][t] {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(correct as f64 / total as f64)
}

/// Per-token tagging accuracy over the whole corpus.
pub fn tagging_accuracy(gold: &[Vec<String>], pred: &[Vec<String>]) -> Result<f64, MetricError> {
    if gold.len() != pred.len() {
        return Err(MetricError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(MetricError::TagLengthMismatch { index: i, gold: g.len(), pred: p.len() });
        }
        total += g.len();
        correct += g.iter().zip(p).filter(|(a, b)| a == b).count();
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(correct as f64 / total as f64)
}

/// Span F1 over BIO NER tags; same strict matching and conventions as
/// `strict_slot_f1`.
pub fn ner_span_f1(gold: &[Vec<String>], pred: &[Vec<String>]) -> Result<f64, MetricError> {
    if gold.len() != pred.len() {
        return Err(MetricError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fne = 0usize;
    for (g, p) in gold.iter().zip(pred) {
        let gspans: BTreeSet<_> = decode_bio(g)?.into_iter().collect();
        let pspans: BTreeSet<_> = decode_bio(p)?.into_iter().collect();
        tp += gspans.intersection(&pspans).count();
        fp += pspans.difference(&gspans).count();
        fne += gspans.difference(&pspans).count();
    }
    if tp + fp + fne == 0 {
        return Ok(1.0);
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fne == 0 { 0.0 } else { tp as f64 / (tp + fne) as f64 };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// exp(total negative log likelihood / number of masked tokens).
pub fn masked_perplexity(total_nll: f64, n_masked: usize) -> Result<f64, MetricError> {
    if n_masked == 0 {
        return Err(MetricError::NoMaskedTokens);
    }
    Ok((total_nll / n_masked as f64).exp())
}

/// Mean and sample standard deviation (n−1 denominator; 0 for a single run).
pub fn aggregate_seeds(values: &[f64]) -> SeedAggregate {
    assert!(!values.is_empty(), "aggregate_seeds needs at least one value");
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let stdev = if n < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        var.sqrt()
    };
    SeedAggregate { mean, stdev, n_runs: n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;
    use approx::assert_relative_eq;

    fn sid_sentence(tokens: &[&str], tags: &[&str], intent: &str) -> Sentence {
        Sentence {
            tokens: tokens.iter().map(|t| Token::new(*t)).collect(),
            slot_tags: Some(tags.iter().map(|t| t.to_string()).collect()),
            intent: Some(intent.to_string()),
            ..Sentence::default()
        }
    }

    fn pred(tags: &[&str], intent: &str) -> SidPrediction {
        SidPrediction {
            slot_tags: tags.iter().map(|t| t.to_string()).collect(),
            intent: intent.to_string(),
        }
    }

    #[test]
    fn f1_perfect_prediction() {
        let gold = vec![sid_sentence(&["a", "b"], &["B-x", "O"], "i")];
        let p = vec![pred(&["B-x", "O"], "i")];
        assert_eq!(strict_slot_f1(&gold, &p).unwrap(), (1.0, 1.0, 1.0));
    }

    #[test]
    fn f1_boundary_off_scores_zero() {
        // gold span (1,2,x), pred span (1,1,x): no exact match.
        let gold = vec![sid_sentence(&["a", "b", "c"], &["O", "B-x", "I-x"], "i")];
        let p = vec![pred(&["O", "B-x", "O"], "i")];
        assert_eq!(strict_slot_f1(&gold, &p).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn f1_half_overlap() {
        // gold {A, B}, pred {A, C}: TP=1, FP=1, FN=1.
        let gold = vec![sid_sentence(&["a", "b", "c", "d"], &["B-a", "O", "B-b", "O"], "i")];
        let p = vec![pred(&["B-a", "O", "O", "B-b"], "i")];
        assert_eq!(strict_slot_f1(&gold, &p).unwrap(), (0.5, 0.5, 0.5));
    }

    #[test]
    fn f1_empty_both_sides() {
        let gold = vec![sid_sentence(&["a"], &["O"], "i")];
        let p = vec![pred(&["O"], "i")];
        assert_eq!(strict_slot_f1(&gold, &p).unwrap(), (1.0, 1.0, 1.0));
    }

    #[test]
    fn f1_one_side_empty() {
        let gold = vec![sid_sentence(&["a"], &["B-x"], "i")];
        let p = vec![pred(&["O"], "i")];
        assert_eq!(strict_slot_f1(&gold, &p).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn f1_length_mismatch() {
        let gold = vec![sid_sentence(&["a"], &["O"], "i")];
        assert!(matches!(
            strict_slot_f1(&gold, &[]),
            Err(MetricError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn intent_accuracy_counts() {
        let gold: Vec<_> = ["a", "a", "b", "c"]
            .iter()
            .map(|i| sid_sentence(&["w"], &["O"], i))
            .collect();
        let p: Vec<_> = ["a", "a", "b", "x"].iter().map(|i| pred(&["O"], i)).collect();
        assert_relative_eq!(intent_accuracy(&gold, &p).unwrap(), 0.75);
        let all_wrong: Vec<_> = ["z"; 4].iter().map(|i| pred(&["O"], i)).collect();
        assert_eq!(intent_accuracy(&gold, &all_wrong).unwrap(), 0.0);
    }

    #[test]
    fn fully_correct_requires_both() {
        let gold = vec![sid_sentence(&["a", "b"], &["B-x", "I-x"], "i")];
        // Intent right, boundary off.
        let p = vec![pred(&["B-x", "O"], "i")];
        assert_eq!(fully_correct(&gold, &p).unwrap(), 0.0);
        // Both right.
        let p = vec![pred(&["B-x", "I-x"], "i")];
        assert_eq!(fully_correct(&gold, &p).unwrap(), 1.0);
    }

    #[test]
    fn fully_correct_compares_span_sets() {
        // Gold `O, I-x` repairs to span (1,1,x); pred `O, B-x` decodes the same.
        let gold = vec![sid_sentence(&["a", "b"], &["O", "I-x"], "i")];
        let p = vec![pred(&["O", "B-x"], "i")];
        assert_eq!(fully_correct(&gold, &p).unwrap(), 1.0);
    }

    fn ud_sentence(heads: &[usize], deprels: &[&str]) -> Sentence {
        Sentence {
            tokens: heads.iter().map(|_| Token::new("w")).collect(),
            heads: Some(heads.to_vec()),
            deprels: Some(deprels.iter().map(|d| d.to_string()).collect()),
            ..Sentence::default()
        }
    }

    #[test]
    fn las_all_correct() {
        let gold = vec![ud_sentence(&[0, 1], &["root", "obj"])];
        let r = las(&gold, &[vec![0, 1]], &[vec!["root".into(), "obj".into()]]).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn las_labels_all_wrong() {
        let gold = vec![ud_sentence(&[0, 1], &["root", "obj"])];
        let r = las(&gold, &[vec![0, 1]], &[vec!["x".into(), "y".into()]]).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn las_half_correct() {
        let gold = vec![ud_sentence(&[0, 1], &["root", "obj"])];
        let r = las(&gold, &[vec![0, 0]], &[vec!["root".into(), "obj".into()]]).unwrap();
        assert_eq!(r, 0.5);
    }

    #[test]
    fn pos_accuracy_two_thirds() {
        let gold = vec![vec!["A".to_string(), "B".to_string(), "C".to_string()]];
        let p = vec![vec!["A".to_string(), "B".to_string(), "X".to_string()]];
        assert_relative_eq!(tagging_accuracy(&gold, &p).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn perplexity_analytic_cases() {
        // Uniform model over a vocabulary of size V: nll = ln V per token.
        let v = 50.0f64;
        let ppl = masked_perplexity(10.0 * v.ln(), 10).unwrap();
        assert_relative_eq!(ppl, v, max_relative = 1e-12);
        // Perfect model.
        assert_eq!(masked_perplexity(0.0, 5).unwrap(), 1.0);
        // ln 2 per token.
        assert_relative_eq!(
            masked_perplexity(3.0 * 2f64.ln(), 3).unwrap(),
            2.0,
            max_relative = 1e-12
        );
        assert!(matches!(masked_perplexity(1.0, 0), Err(MetricError::NoMaskedTokens)));
    }

    #[test]
    fn aggregate_identical_seeds() {
        let a = aggregate_seeds(&[1.0, 1.0, 1.0]);
        assert_eq!(a.mean, 1.0);
        assert_eq!(a.stdev, 0.0);
        assert_eq!(a.n_runs, 3);
    }

    #[test]
    fn aggregate_pair() {
        let a = aggregate_seeds(&[0.0, 1.0]);
        assert_relative_eq!(a.mean, 0.5);
    }

    #[test]
    fn aggregate_matches_spreadsheet() {
        // Sample stdev for [73.5, 76.6, 78.6], checked against an independent
        // spreadsheet computation: mean 76.2333…, stdev 2.5697…
        let a = aggregate_seeds(&[73.5, 76.6, 78.6]);
        assert_relative_eq!(a.mean, 76.233333333333333, max_relative = 1e-12);
        assert_relative_eq!(a.stdev, 2.5696951829610684, max_relative = 1e-9);
    }
}
