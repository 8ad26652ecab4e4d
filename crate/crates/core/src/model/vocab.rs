//! Token and label vocabularies with reserved UNKNOWN/PAD/MASK entries.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, TaskKind};

pub const UNK: usize = 0;
pub const PAD: usize = 1;
pub const MASK: usize = 2;
pub const RESERVED: [&str; 3] = ["<unk>", "<pad>", "<mask>"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelVocab {
    pub list: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl LabelVocab {
    fn from_set(labels: BTreeSet<String>) -> Self {
        let list: Vec<String> = labels.into_iter().collect();
        let index = list.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        LabelVocab { list, index }
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.list[index]
    }
}

/// Annotation layers that tagging/classification heads predict over.
pub mod layer {
    pub const SLOTS: &str = "slots";
    pub const INTENT: &str = "intent";
    pub const POS: &str = "pos";
    pub const DEPREL: &str = "deprel";
    pub const NER: &str = "ner";
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub tokens: Vec<String>,
    token_index: BTreeMap<String, usize>,
    pub labels: BTreeMap<String, LabelVocab>,
}

impl Vocab {
    /// Builds token and per-layer label vocabularies from training datasets.
    /// Token order is sorted, so the vocabulary is independent of dataset
    /// order.
    pub fn build<'a>(datasets: impl IntoIterator<Item = &'a Dataset>) -> Self {
        let mut token_set = BTreeSet::new();
        let mut slots = BTreeSet::new();
        let mut intents = BTreeSet::new();
        let mut pos = BTreeSet::new();
        let mut deprels = BTreeSet::new();
        let mut ner = BTreeSet::new();
        for d in datasets {
            for s in &d.sentences {
                token_set.extend(s.tokens.iter().map(|t| t.surface.clone()));
                match d.task_kind {
                    TaskKind::Sid => {
                        if let Some(tags) = &s.slot_tags {
                            slots.extend(tags.iter().cloned());
                        }
                        if let Some(i) = &s.intent {
                            intents.insert(i.clone());
                        }
                    }
                    TaskKind::Ud => {
                        if let Some(tags) = &s.pos_tags {
                            pos.extend(tags.iter().cloned());
                        }
                        if let Some(rels) = &s.deprels {
                            deprels.extend(rels.iter().cloned());
                        }
                    }
                    TaskKind::Ner => {
                        if let Some(tags) = &s.ner_tags {
                            ner.extend(tags.iter().cloned());
                        }
                    }
                    TaskKind::Mlm => {}
                }
            }
        }
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(token_set);
        let token_index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let mut labels = BTreeMap::new();
        for (name, set) in [
            (layer::SLOTS, slots),
            (layer::INTENT, intents),
            (layer::POS, pos),
            (layer::DEPREL, deprels),
            (layer::NER, ner),
        ] {
            if !set.is_empty() {
                labels.insert(name.to_string(), LabelVocab::from_set(set));
            }
        }
        Vocab { tokens, token_index, labels }
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    /// Unknown tokens map to UNK.
    pub fn token_id(&self, surface: &str) -> usize {
        self.token_index.get(surface).copied().unwrap_or(UNK)
    }

    pub fn layer(&self, name: &str) -> Option<&LabelVocab> {
        self.labels.get(name)
    }
}
