//! Property tests: parser round trips, BIO decoding against an independent
//! oracle, metric invariants, edit-distance laws, and split partitioning.

use proptest::prelude::*;

use sidlab_core::corpus::{
    decode_bio, encode_bio, parse_xsid, split_dataset, write_xsid, SlotSpan,
};
use sidlab_core::distance::{levenshtein, normalized_similarity};
use sidlab_core::metrics::{
    aggregate_seeds, fully_correct, intent_accuracy, strict_slot_f1, SidPrediction,
};

/// Independent BIO span oracle, written as a linear scan with explicit
/// open-span state. Dangling or label-mismatched `I-` opens a new span
/// (conlleval-style repair).
fn bio_oracle(tags: &[String]) -> Vec<SlotSpan> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let (prefix, label) = match tag.split_once('-') {
            Some((p, l)) => (p, Some(l.to_string())),
            None => (tag.as_str(), None),
        };
        let continues = prefix == "I"
            && open.as_ref().map(|(_, l)| Some(l) == label.as_ref()).unwrap_or(false);
        if !continues {
            if let Some((start, l)) = open.take() {
                spans.push(SlotSpan::new(start, i - 1, l));
            }
            if let Some(l) = label {
                open = Some((i, l));
            }
        }
    }
    if let Some((start, l)) = open {
        spans.push(SlotSpan::new(start, tags.len() - 1, l));
    }
    spans
}

fn tag_strategy() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("O".to_string()),
        Just("B-a".to_string()),
        Just("I-a".to_string()),
        Just("B-b".to_string()),
        Just("I-b".to_string()),
    ]
}

fn tags_strategy(max_len: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(tag_strategy(), 0..=max_len)
}

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,6}"
}

/// (tokens, tags, intent) for one valid SID sentence.
fn sid_sentence() -> impl Strategy<Value = (Vec<String>, Vec<String>, String)> {
    (1usize..10).prop_flat_map(|n| {
        (
            prop::collection::vec(word(), n),
            prop::collection::vec(tag_strategy(), n),
            "[a-z]{1,8}",
        )
    })
}

fn sid_text(sentences: &[(Vec<String>, Vec<String>, String)]) -> String {
    let mut out = String::new();
    for (tokens, tags, intent) in sentences {
        out.push_str(&format!("# intent: {intent}\n"));
        for (i, (tok, tag)) in tokens.iter().zip(tags).enumerate() {
            out.push_str(&format!("{}\t{tok}\t{tag}\n", i + 1));
        }
        out.push('\n');
    }
    out
}

proptest! {
    #[test]
    fn decode_bio_matches_oracle(tags in tags_strategy(12)) {
        let got = decode_bio(&tags).unwrap();
        prop_assert_eq!(got, bio_oracle(&tags));
    }

    #[test]
    fn encode_decode_is_identity_on_decoded_spans(tags in tags_strategy(12)) {
        let spans = decode_bio(&tags).unwrap();
        let encoded = encode_bio(&spans, tags.len());
        prop_assert_eq!(decode_bio(&encoded).unwrap(), spans);
    }

    #[test]
    fn xsid_write_parse_round_trip(sents in prop::collection::vec(sid_sentence(), 1..8)) {
        let d = parse_xsid(&sid_text(&sents), "rt", "en").unwrap();
        let d2 = parse_xsid(&write_xsid(&d), "rt", "en").unwrap();
        prop_assert_eq!(d, d2);
    }

    #[test]
    fn perfect_prediction_scores_one(sents in prop::collection::vec(sid_sentence(), 1..8)) {
        let d = parse_xsid(&sid_text(&sents), "p", "en").unwrap();
        let preds: Vec<SidPrediction> = d.sentences.iter().map(|s| SidPrediction {
            slot_tags: s.slot_tags.clone().unwrap(),
            intent: s.intent.clone().unwrap(),
        }).collect();
        let (p, r, f1) = strict_slot_f1(&d.sentences, &preds).unwrap();
        prop_assert_eq!((p, r, f1), (1.0, 1.0, 1.0));
        prop_assert_eq!(intent_accuracy(&d.sentences, &preds).unwrap(), 1.0);
        prop_assert_eq!(fully_correct(&d.sentences, &preds).unwrap(), 1.0);
    }

    #[test]
    fn fully_correct_never_exceeds_intent_accuracy(
        sents in prop::collection::vec(sid_sentence(), 1..8),
        pred_sents in prop::collection::vec(sid_sentence(), 1..8),
    ) {
        let n = sents.len().min(pred_sents.len());
        let d = parse_xsid(&sid_text(&sents[..n]), "g", "en").unwrap();
        // Predictions reuse the gold token counts but arbitrary tags/intents.
        let preds: Vec<SidPrediction> = d.sentences.iter().zip(&pred_sents[..n]).map(|(g, (_, tags, intent))| {
            let mut t: Vec<String> = tags.clone();
            t.resize(g.len(), "O".to_string());
            SidPrediction { slot_tags: t, intent: intent.clone() }
        }).collect();
        let fc = fully_correct(&d.sentences, &preds).unwrap();
        let ia = intent_accuracy(&d.sentences, &preds).unwrap();
        prop_assert!(fc <= ia + 1e-12);
    }

    #[test]
    fn slot_f1_invariant_under_sentence_permutation(
        sents in prop::collection::vec(sid_sentence(), 2..8),
        seed in any::<u64>(),
    ) {
        let d = parse_xsid(&sid_text(&sents), "g", "en").unwrap();
        let preds: Vec<SidPrediction> = d.sentences.iter().map(|s| SidPrediction {
            slot_tags: s.slot_tags.clone().unwrap().iter().rev().cloned().collect(),
            intent: "x".to_string(),
        }).collect();
        let base = strict_slot_f1(&d.sentences, &preds).unwrap();
        // Deterministic permutation from the seed.
        let n = d.sentences.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let gold_p: Vec<_> = order.iter().map(|&i| d.sentences[i].clone()).collect();
        let pred_p: Vec<_> = order.iter().map(|&i| preds[i].clone()).collect();
        prop_assert_eq!(strict_slot_f1(&gold_p, &pred_p).unwrap(), base);
    }

    #[test]
    fn levenshtein_laws(a in "[ab]{0,12}", b in "[ab]{0,12}", c in "[ab]{0,12}") {
        let av: Vec<char> = a.chars().collect();
        let bv: Vec<char> = b.chars().collect();
        let cv: Vec<char> = c.chars().collect();
        let dab = levenshtein(&av, &bv);
        prop_assert_eq!(dab, levenshtein(&bv, &av));
        prop_assert_eq!(levenshtein(&av, &av), 0);
        prop_assert!(dab >= av.len().abs_diff(bv.len()));
        prop_assert!(dab <= av.len().max(bv.len()));
        // Triangle inequality.
        prop_assert!(dab <= levenshtein(&av, &cv) + levenshtein(&cv, &bv));
    }

    #[test]
    fn normalized_similarity_bounds(a in "[abc]{0,10}", b in "[abc]{0,10}") {
        let av: Vec<char> = a.chars().collect();
        let bv: Vec<char> = b.chars().collect();
        let s = normalized_similarity(&av, &bv);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, normalized_similarity(&bv, &av));
        if a == b {
            prop_assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn split_preserves_sentence_multiset(
        sents in prop::collection::vec(sid_sentence(), 3..20),
        seed in any::<u64>(),
        frac in 0.1f64..0.9,
    ) {
        let d = parse_xsid(&sid_text(&sents), "s", "en").unwrap();
        let (train, dev) = split_dataset(&d, frac, seed).unwrap();
        prop_assert_eq!(train.len() + dev.len(), d.len());
        prop_assert_eq!(train.len(), (d.len() as f64 * frac).floor() as usize);
        let key = |s: &sidlab_core::Sentence| format!("{:?}", s);
        let mut orig: Vec<String> = d.sentences.iter().map(key).collect();
        let mut got: Vec<String> = train.sentences.iter().chain(&dev.sentences).map(key).collect();
        orig.sort();
        got.sort();
        prop_assert_eq!(orig, got);
    }

    #[test]
    fn aggregate_seeds_invariants(values in prop::collection::vec(-100.0f64..100.0, 1..10)) {
        let agg = aggregate_seeds(&values);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(agg.mean >= min - 1e-9 && agg.mean <= max + 1e-9);
        prop_assert!(agg.stdev >= 0.0);
        prop_assert_eq!(agg.n_runs, values.len());
        let mut rev = values.clone();
        rev.reverse();
        let agg_rev = aggregate_seeds(&rev);
        prop_assert!((agg.mean - agg_rev.mean).abs() < 1e-12);
        prop_assert!((agg.stdev - agg_rev.stdev).abs() < 1e-9);
    }
}

/// Exhaustive BIO check for all taggings up to 6 tokens over 2 labels.
#[test]
fn decode_bio_exhaustive_small() {
    let alphabet = ["O", "B-a", "I-a", "B-b", "I-b"];
    for len in 0..=6usize {
        let mut idx = vec![0usize; len];
        loop {
            let tags: Vec<String> = idx.iter().map(|&i| alphabet[i].to_string()).collect();
            assert_eq!(decode_bio(&tags).unwrap(), bio_oracle(&tags), "tags {tags:?}");
            // Odometer increment.
            let mut pos = 0;
            loop {
                if pos == len {
                    break;
                }
                idx[pos] += 1;
                if idx[pos] < alphabet.len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == len {
                break;
            }
        }
    }
}
