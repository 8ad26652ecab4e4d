//! The trainable multi-task model: a small embedding + self-attention
//! encoder with exact reverse-mode gradients, and per-task heads for
//! tagging, intent classification, masked-token prediction, and dependency
//! arcs+labels.
//!
//! Encoder: token embeddings (d) + sinusoidal position encodings, one
//! single-head self-attention block and one tanh feedforward block, both
//! with residual connections.

pub mod tape;
pub mod vocab;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Sentence, TaskKind};
use tape::{NodeId, Tape, Tensor};
use vocab::{layer, Vocab, MASK};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding / encoder width.
    pub dim: usize,
    /// Feedforward hidden width.
    pub hidden: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub mask_prob: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 64,
            hidden: 128,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            mask_prob: 0.15,
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("cannot encode an empty sentence")]
    EmptySentence,
    #[error("batch contains no sentences")]
    EmptyBatch,
    #[error("no head for task `{0}`")]
    UnknownTask(String),
    #[error("sentence is missing `{0}` annotations")]
    MissingAnnotation(&'static str),
    #[error("label `{label}` not in the `{layer}` vocabulary")]
    UnknownLabel { layer: String, label: String },
    #[error("checkpoint is corrupt: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint version {found} (this build reads version {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameter gradients keyed by parameter name; iteration order is the
/// sorted name order, which fixes the optimizer update order.
pub type GradMap = BTreeMap<String, Tensor>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: BTreeMap<String, Tensor>,
    adam_m: BTreeMap<String, Tensor>,
    adam_v: BTreeMap<String, Tensor>,
    pub step_count: u64,
    /// Task heads currently attached, by task name.
    pub heads: BTreeMap<String, TaskKind>,
    /// RNG stream for head initialization and masking; advancing it is part
    /// of the deterministic run state.
    pub rng: ChaCha8Rng,
}

/// One MLM training example: input ids after masking plus the original ids
/// at the selected positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmExample {
    pub input_ids: Vec<usize>,
    /// (position, original token id)
    pub targets: Vec<(usize, usize)>,
}

/// A single-task batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub task_name: String,
    pub kind: TaskKind,
    pub sentences: Vec<Sentence>,
    /// Parallel to `sentences` when kind is Mlm.
    pub mlm: Option<Vec<MlmExample>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Sid { slot_tags: Vec<String>, intent: String },
    Tagging(Vec<String>),
    Ud { pos_tags: Vec<String>, heads: Vec<usize>, deprels: Vec<String>, has_cycle: bool },
    /// Predicted token id per masked position, in target order.
    Mlm(Vec<usize>),
}

fn uniform_init(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(rows, cols, data)
}

fn positional_encoding(n: usize, d: usize) -> Tensor {
    let mut pe = Tensor::zeros(n, d);
    for pos in 0..n {
        for i in 0..d {
            let angle = pos as f64 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            *pe.at_mut(pos, i) = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

/// FNV-1a over parameter names and f64 bit patterns, in sorted name order.
pub fn param_checksum(m: &ModelState, prefix: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    let mut eat = |byte: u8| {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    };
    for (name, t) in &m.params {
        if !name.starts_with(prefix) {
            continue;
        }
        for b in name.bytes() {
            eat(b);
        }
        for v in &t.data {
            for b in v.to_bits().to_le_bytes() {
                eat(b);
            }
        }
    }
    hash
}

/// Initializes the encoder and embeddings; heads are attached per stage via
/// `ensure_heads`.
pub fn init_model(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<ModelState, ModelError> {
    if config.dim == 0 {
        return Err(ModelError::InvalidConfig("dim must be positive".into()));
    }
    if config.hidden == 0 {
        return Err(ModelError::InvalidConfig("hidden must be positive".into()));
    }
    let d = config.dim;
    let h = config.hidden;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = BTreeMap::new();
    params.insert("enc.emb".to_string(), uniform_init(&mut rng, vocab.n_tokens(), d, d));
    for name in ["enc.attn.wq", "enc.attn.wk", "enc.attn.wv", "enc.attn.wo"] {
        params.insert(name.to_string(), uniform_init(&mut rng, d, d, d));
    }
    params.insert("enc.ffn.w1".to_string(), uniform_init(&mut rng, d, h, d));
    params.insert("enc.ffn.b1".to_string(), Tensor::zeros(1, h));
    params.insert("enc.ffn.w2".to_string(), uniform_init(&mut rng, h, d, h));
    params.insert("enc.ffn.b2".to_string(), Tensor::zeros(1, d));
    Ok(ModelState {
        config,
        vocab,
        params,
        adam_m: BTreeMap::new(),
        adam_v: BTreeMap::new(),
        step_count: 0,
        heads: BTreeMap::new(),
        rng,
    })
}

impl ModelState {
    fn layer_len(&self, name: &str) -> Result<usize, ModelError> {
        self.vocab
            .layer(name)
            .map(|l| l.len())
            .filter(|&n| n > 0)
            .ok_or(ModelError::InvalidConfig(format!("no `{name}` labels in the vocabulary")))
    }

    /// Attaches freshly initialized head parameters for a task, drawing from
    /// the model's RNG stream. Existing heads are left untouched.
    pub fn ensure_heads(&mut self, task_name: &str, kind: TaskKind) -> Result<(), ModelError> {
        if self.heads.contains_key(task_name) {
            return Ok(());
        }
        let d = self.config.dim;
        let mut fresh = Vec::new();
        match kind {
            TaskKind::Sid => {
                let n_slots = self.layer_len(layer::SLOTS)?;
                let n_intents = self.layer_len(layer::INTENT)?;
                fresh.push((format!("head.{task_name}.slots.w"), (d, n_slots, d)));
                fresh.push((format!("head.{task_name}.slots.b"), (0, n_slots, 0)));
                fresh.push((format!("head.{task_name}.intent.w"), (d, n_intents, d)));
                fresh.push((format!("head.{task_name}.intent.b"), (0, n_intents, 0)));
            }
            TaskKind::Ud => {
                let n_pos = self.layer_len(layer::POS)?;
                let n_rel = self.layer_len(layer::DEPREL)?;
                fresh.push((format!("head.{task_name}.pos.w"), (d, n_pos, d)));
                fresh.push((format!("head.{task_name}.pos.b"), (0, n_pos, 0)));
                fresh.push((format!("head.{task_name}.arc.u"), (d, d, d)));
                fresh.push((format!("head.{task_name}.arc.root"), (1, d, d)));
                fresh.push((format!("head.{task_name}.label.w"), (d, n_rel, d)));
                fresh.push((format!("head.{task_name}.label.b"), (0, n_rel, 0)));
            }
            TaskKind::Ner => {
                let n_ner = self.layer_len(layer::NER)?;
                fresh.push((format!("head.{task_name}.ner.w"), (d, n_ner, d)));
                fresh.push((format!("head.{task_name}.ner.b"), (0, n_ner, 0)));
            }
            TaskKind::Mlm => {
                let v = self.vocab.n_tokens();
                fresh.push((format!("head.{task_name}.mlm.w"), (d, v, d)));
                fresh.push((format!("head.{task_name}.mlm.b"), (0, v, 0)));
            }
        }
        for (name, (rows, cols, fan_in)) in fresh {
            let t = if rows == 0 {
                Tensor::zeros(1, cols)
            } else {
                uniform_init(&mut self.rng, rows, cols, fan_in)
            };
            self.params.insert(name, t);
        }
        self.heads.insert(task_name.to_string(), kind);
        Ok(())
    }

    /// Removes a task head and its optimizer state.
    pub fn remove_head(&mut self, task_name: &str) {
        let prefix = format!("head.{task_name}.");
        self.params.retain(|k, _| !k.starts_with(&prefix));
        self.adam_m.retain(|k, _| !k.starts_with(&prefix));
        self.adam_v.retain(|k, _| !k.starts_with(&prefix));
        self.heads.remove(task_name);
    }

    pub fn token_ids(&self, s: &Sentence) -> Vec<usize> {
        s.tokens.iter().map(|t| self.vocab.token_id(&t.surface)).collect()
    }
}

/// Parameter node handles for one tape.
struct ParamNodes {
    nodes: BTreeMap<String, NodeId>,
}

impl ParamNodes {
    fn new(tape: &mut Tape, m: &ModelState, task_prefix: &str) -> Self {
        let mut nodes = BTreeMap::new();
        for (name, t) in &m.params {
            if name.starts_with("enc.") || name.starts_with(task_prefix) {
                nodes.insert(name.clone(), tape.leaf(t.clone()));
            }
        }
        ParamNodes { nodes }
    }

    fn get(&self, name: &str) -> NodeId {
        self.nodes[name]
    }

    fn head(&self, task: &str, part: &str) -> NodeId {
        self.nodes[&format!("head.{task}.{part}")]
    }
}

fn encode_on_tape(tape: &mut Tape, p: &ParamNodes, cfg: &ModelConfig, ids: &[usize]) -> NodeId {
    let d = cfg.dim;
    let emb = tape.gather(p.get("enc.emb"), ids.to_vec());
    let pe = tape.leaf(positional_encoding(ids.len(), d));
    let x = tape.add(emb, pe);
    let q = tape.matmul(x, p.get("enc.attn.wq"));
    let k = tape.matmul(x, p.get("enc.attn.wk"));
    let v = tape.matmul(x, p.get("enc.attn.wv"));
    let scores = tape.matmul_nt(q, k);
    let scaled = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let attn = tape.softmax_rows(scaled);
    let ctx = tape.matmul(attn, v);
    let o = tape.matmul(ctx, p.get("enc.attn.wo"));
    let x2 = tape.add(x, o);
    let h_pre = tape.matmul(x2, p.get("enc.ffn.w1"));
    let h_b = tape.add_row_broadcast(h_pre, p.get("enc.ffn.b1"));
    let h = tape.tanh(h_b);
    let f_pre = tape.matmul(h, p.get("enc.ffn.w2"));
    let f = tape.add_row_broadcast(f_pre, p.get("enc.ffn.b2"));
    tape.add(x2, f)
}

/// Per-token vectors plus the mean-pooled sentence vector.
pub fn encode(m: &ModelState, s: &Sentence) -> Result<(Vec<Vec<f64>>, Vec<f64>), ModelError> {
    if s.is_empty() {
        return Err(ModelError::EmptySentence);
    }
    let mut tape = Tape::new();
    let p = ParamNodes::new(&mut tape, m, "enc.");
    let enc = encode_on_tape(&mut tape, &p, &m.config, &m.token_ids(s));
    let pooled = tape.mean_rows(enc);
    let t = tape.value(enc);
    let vectors = (0..t.rows).map(|r| t.row(r).to_vec()).collect();
    Ok((vectors, tape.value(pooled).row(0).to_vec()))
}

fn label_targets(
    vocab: &Vocab,
    layer_name: &str,
    tags: &[String],
) -> Result<Vec<(usize, usize)>, ModelError> {
    let lv = vocab.layer(layer_name).ok_or(ModelError::MissingAnnotation("labels"))?;
    tags.iter()
        .enumerate()
        .map(|(i, tag)| {
            lv.index_of(tag)
                .map(|c| (i, c))
                .ok_or_else(|| ModelError::UnknownLabel {
                    layer: layer_name.to_string(),
                    label: tag.clone(),
                })
        })
        .collect()
}

/// Adds a mask leaf with −1e30 at each token's self-attachment column so a
/// token can never pick itself as head. Arc columns: 0 = root, j = token j.
fn self_attachment_mask(tape: &mut Tape, n: usize) -> NodeId {
    let mut mask = Tensor::zeros(n, n + 1);
    for i in 0..n {
        *mask.at_mut(i, i + 1) = -1e30;
    }
    tape.leaf(mask)
}

struct LossAccumulator {
    /// (sum-of-CE node, unit count) per loss group.
    groups: Vec<(Vec<NodeId>, usize)>,
}

/// Batch loss and exact parameter gradients.
///
/// Tagging, classification, and MLM losses are the mean cross-entropy over
/// their prediction units in the batch; the dependency loss is the mean
/// over tokens of head NLL plus deprel cross-entropy. SID sums its slot and
/// intent means (the two heads are weighted equally).
pub fn task_loss(m: &ModelState, batch: &Batch) -> Result<(f64, GradMap), ModelError> {
    let kind = *m
        .heads
        .get(&batch.task_name)
        .ok_or_else(|| ModelError::UnknownTask(batch.task_name.clone()))?;
    if batch.sentences.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let task = &batch.task_name;
    let mut tape = Tape::new();
    let p = ParamNodes::new(&mut tape, m, &format!("head.{task}."));

    let mut acc = match kind {
        TaskKind::Sid => LossAccumulator { groups: vec![(vec![], 0), (vec![], 0)] },
        _ => LossAccumulator { groups: vec![(vec![], 0)] },
    };

    for (si, s) in batch.sentences.iter().enumerate() {
        if s.is_empty() {
            return Err(ModelError::EmptySentence);
        }
        let ids = match (kind, &batch.mlm) {
            (TaskKind::Mlm, Some(examples)) => examples[si].input_ids.clone(),
            (TaskKind::Mlm, None) => return Err(ModelError::MissingAnnotation("mlm targets")),
            _ => m.token_ids(s),
        };
        let enc = encode_on_tape(&mut tape, &p, &m.config, &ids);
        match kind {
            TaskKind::Sid => {
                let tags = s.slot_tags.as_ref().ok_or(ModelError::MissingAnnotation("slot_tags"))?;
                let intent = s.intent.as_ref().ok_or(ModelError::MissingAnnotation("intent"))?;
                let slot_logits_pre = tape.matmul(enc, p.head(task, "slots.w"));
                let slot_logits = tape.add_row_broadcast(slot_logits_pre, p.head(task, "slots.b"));
                let slot_targets = label_targets(&m.vocab, layer::SLOTS, tags)?;
                let n_units = slot_targets.len();
                let slot_ce = tape.cross_entropy_sum(slot_logits, slot_targets);
                acc.groups[0].0.push(slot_ce);
                acc.groups[0].1 += n_units;

                let pooled = tape.mean_rows(enc);
                let int_logits_pre = tape.matmul(pooled, p.head(task, "intent.w"));
                let int_logits = tape.add_row_broadcast(int_logits_pre, p.head(task, "intent.b"));
                let iv = m.vocab.layer(layer::INTENT).unwrap();
                let c = iv.index_of(intent).ok_or_else(|| ModelError::UnknownLabel {
                    layer: layer::INTENT.to_string(),
                    label: intent.clone(),
                })?;
                let int_ce = tape.cross_entropy_sum(int_logits, vec![(0, c)]);
                acc.groups[1].0.push(int_ce);
                acc.groups[1].1 += 1;
            }
            TaskKind::Ner => {
                let tags = s.ner_tags.as_ref().ok_or(ModelError::MissingAnnotation("ner_tags"))?;
                let logits_pre = tape.matmul(enc, p.head(task, "ner.w"));
                let logits = tape.add_row_broadcast(logits_pre, p.head(task, "ner.b"));
                let targets = label_targets(&m.vocab, layer::NER, tags)?;
                let n_units = targets.len();
                let ce = tape.cross_entropy_sum(logits, targets);
                acc.groups[0].0.push(ce);
                acc.groups[0].1 += n_units;
            }
            TaskKind::Ud => {
                let heads = s.heads.as_ref().ok_or(ModelError::MissingAnnotation("heads"))?;
                let deprels = s.deprels.as_ref().ok_or(ModelError::MissingAnnotation("deprels"))?;
                let pos = s.pos_tags.as_ref().ok_or(ModelError::MissingAnnotation("pos_tags"))?;
                let n = ids.len();
                // POS tagging head.
                let pos_logits_pre = tape.matmul(enc, p.head(task, "pos.w"));
                let pos_logits = tape.add_row_broadcast(pos_logits_pre, p.head(task, "pos.b"));
                let pos_targets = label_targets(&m.vocab, layer::POS, pos)?;
                let pos_ce = tape.cross_entropy_sum(pos_logits, pos_targets);
                // Bilinear arc scores over {root} ∪ tokens.
                let hu = tape.matmul(enc, p.head(task, "arc.u"));
                let cands = tape.concat_rows(p.head(task, "arc.root"), enc);
                let arcs_raw = tape.matmul_nt(hu, cands);
                let mask = self_attachment_mask(&mut tape, n);
                let arcs = tape.add(arcs_raw, mask);
                let arc_targets: Vec<(usize, usize)> =
                    heads.iter().enumerate().map(|(i, &h)| (i, h)).collect();
                let arc_ce = tape.cross_entropy_sum(arcs, arc_targets);
                // Deprel head.
                let rel_logits_pre = tape.matmul(enc, p.head(task, "label.w"));
                let rel_logits = tape.add_row_broadcast(rel_logits_pre, p.head(task, "label.b"));
                let rel_targets = label_targets(&m.vocab, layer::DEPREL, deprels)?;
                let rel_ce = tape.cross_entropy_sum(rel_logits, rel_targets);
                acc.groups[0].0.extend([pos_ce, arc_ce, rel_ce]);
                acc.groups[0].1 += n;
            }
            TaskKind::Mlm => {
                let example = &batch.mlm.as_ref().unwrap()[si];
                if example.targets.is_empty() {
                    continue;
                }
                let logits_pre = tape.matmul(enc, p.head(task, "mlm.w"));
                let logits = tape.add_row_broadcast(logits_pre, p.head(task, "mlm.b"));
                let ce = tape.cross_entropy_sum(logits, example.targets.clone());
                acc.groups[0].0.push(ce);
                acc.groups[0].1 += example.targets.len();
            }
        }
    }

    // An MLM batch where masking selected nothing contributes zero loss.
    if acc.groups.iter().all(|(nodes, _)| nodes.is_empty()) {
        return Ok((0.0, GradMap::new()));
    }

    let mut total: Option<NodeId> = None;
    for (nodes, units) in &acc.groups {
        if nodes.is_empty() {
            continue;
        }
        let mut sum = nodes[0];
        for node in &nodes[1..] {
            sum = tape.add(sum, *node);
        }
        let mean = tape.scale(sum, 1.0 / *units as f64);
        total = Some(match total {
            Some(t) => tape.add(t, mean),
            None => mean,
        });
    }
    let loss_node = total.unwrap();
    let loss = tape.value(loss_node).data[0];
    let grads_by_node = tape.backward(loss_node);
    let mut grads = GradMap::new();
    for (name, node) in &p.nodes {
        grads.insert(name.clone(), grads_by_node[*node].clone());
    }
    Ok((loss, grads))
}

/// MLM masking: each position is independently selected with `mask_prob`;
/// selected positions are replaced by MASK 80% of the time, by a random
/// vocabulary token 10%, and kept 10%.
pub fn mask_tokens_with_rng(
    m: &ModelState,
    s: &Sentence,
    mask_prob: f64,
    rng: &mut ChaCha8Rng,
) -> MlmExample {
    let ids = m.token_ids(s);
    let mut input_ids = ids.clone();
    let mut targets = Vec::new();
    let n_vocab = m.vocab.n_tokens();
    for (i, &orig) in ids.iter().enumerate() {
        if rng.gen::<f64>() >= mask_prob {
            continue;
        }
        targets.push((i, orig));
        let roll: f64 = rng.gen();
        if roll < 0.8 {
            input_ids[i] = MASK;
        } else if roll < 0.9 && n_vocab > vocab::RESERVED.len() {
            input_ids[i] = rng.gen_range(vocab::RESERVED.len()..n_vocab);
        }
    }
    MlmExample { input_ids, targets }
}

pub fn mask_tokens(m: &ModelState, s: &Sentence, mask_prob: f64, seed: u64) -> MlmExample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mask_tokens_with_rng(m, s, mask_prob, &mut rng)
}

fn argmax(row: &[f64]) -> usize {
    // Ties break toward the lowest index.
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn has_cycle(heads: &[usize]) -> bool {
    // Follow parent pointers; 0 is the root sentinel.
    for start in 0..heads.len() {
        let mut seen = BTreeSet::new();
        let mut cur = start + 1;
        while cur != 0 {
            if !seen.insert(cur) {
                return true;
            }
            cur = heads[cur - 1];
        }
    }
    false
}

/// Greedy per-unit argmax decoding for one sentence.
pub fn predict(m: &ModelState, task_name: &str, s: &Sentence) -> Result<Prediction, ModelError> {
    let kind = *m
        .heads
        .get(task_name)
        .ok_or_else(|| ModelError::UnknownTask(task_name.to_string()))?;
    if s.is_empty() {
        return Err(ModelError::EmptySentence);
    }
    let mut tape = Tape::new();
    let p = ParamNodes::new(&mut tape, m, &format!("head.{task_name}."));
    let ids = m.token_ids(s);
    let enc = encode_on_tape(&mut tape, &p, &m.config, &ids);
    match kind {
        TaskKind::Sid => {
            let slot_pre = tape.matmul(enc, p.head(task_name, "slots.w"));
            let slot_logits = tape.add_row_broadcast(slot_pre, p.head(task_name, "slots.b"));
            let sv = m.vocab.layer(layer::SLOTS).unwrap();
            let slot_tags = (0..ids.len())
                .map(|r| sv.label(argmax(tape.value(slot_logits).row(r))).to_string())
                .collect();
            let pooled = tape.mean_rows(enc);
            let int_pre = tape.matmul(pooled, p.head(task_name, "intent.w"));
            let int_logits = tape.add_row_broadcast(int_pre, p.head(task_name, "intent.b"));
            let iv = m.vocab.layer(layer::INTENT).unwrap();
            let intent = iv.label(argmax(tape.value(int_logits).row(0))).to_string();
            Ok(Prediction::Sid { slot_tags, intent })
        }
        TaskKind::Ner => {
            let pre = tape.matmul(enc, p.head(task_name, "ner.w"));
            let logits = tape.add_row_broadcast(pre, p.head(task_name, "ner.b"));
            let nv = m.vocab.layer(layer::NER).unwrap();
            let tags = (0..ids.len())
                .map(|r| nv.label(argmax(tape.value(logits).row(r))).to_string())
                .collect();
            Ok(Prediction::Tagging(tags))
        }
        TaskKind::Ud => {
            let pos_pre = tape.matmul(enc, p.head(task_name, "pos.w"));
            let pos_logits = tape.add_row_broadcast(pos_pre, p.head(task_name, "pos.b"));
            let pv = m.vocab.layer(layer::POS).unwrap();
            let pos_tags = (0..ids.len())
                .map(|r| pv.label(argmax(tape.value(pos_logits).row(r))).to_string())
                .collect();
            let hu = tape.matmul(enc, p.head(task_name, "arc.u"));
            let cands = tape.concat_rows(p.head(task_name, "arc.root"), enc);
            let arcs_raw = tape.matmul_nt(hu, cands);
            let mask = self_attachment_mask(&mut tape, ids.len());
            let arcs = tape.add(arcs_raw, mask);
            let heads: Vec<usize> =
                (0..ids.len()).map(|r| argmax(tape.value(arcs).row(r))).collect();
            let rel_pre = tape.matmul(enc, p.head(task_name, "label.w"));
            let rel_logits = tape.add_row_broadcast(rel_pre, p.head(task_name, "label.b"));
            let rv = m.vocab.layer(layer::DEPREL).unwrap();
            let deprels = (0..ids.len())
                .map(|r| rv.label(argmax(tape.value(rel_logits).row(r))).to_string())
                .collect();
            let cycle = has_cycle(&heads);
            Ok(Prediction::Ud { pos_tags, heads, deprels, has_cycle: cycle })
        }
        TaskKind::Mlm => {
            let pre = tape.matmul(enc, p.head(task_name, "mlm.w"));
            let logits = tape.add_row_broadcast(pre, p.head(task_name, "mlm.b"));
            // Without an explicit example, every position is a target.
            let preds = (0..ids.len()).map(|r| argmax(tape.value(logits).row(r))).collect();
            Ok(Prediction::Mlm(preds))
        }
    }
}

/// MLM prediction at the example's masked positions.
pub fn predict_mlm(
    m: &ModelState,
    task_name: &str,
    example: &MlmExample,
) -> Result<Vec<usize>, ModelError> {
    if !matches!(m.heads.get(task_name), Some(TaskKind::Mlm)) {
        return Err(ModelError::UnknownTask(task_name.to_string()));
    }
    if example.input_ids.is_empty() {
        return Err(ModelError::EmptySentence);
    }
    let mut tape = Tape::new();
    let p = ParamNodes::new(&mut tape, m, &format!("head.{task_name}."));
    let enc = encode_on_tape(&mut tape, &p, &m.config, &example.input_ids);
    let pre = tape.matmul(enc, p.head(task_name, "mlm.w"));
    let logits = tape.add_row_broadcast(pre, p.head(task_name, "mlm.b"));
    Ok(example
        .targets
        .iter()
        .map(|&(pos, _)| argmax(tape.value(logits).row(pos)))
        .collect())
}

/// Total MLM negative log likelihood and masked-token count over a dev set.
pub fn mlm_nll(
    m: &ModelState,
    task_name: &str,
    sentences: &[Sentence],
    examples: &[MlmExample],
) -> Result<(f64, usize), ModelError> {
    let n_masked: usize = examples.iter().map(|e| e.targets.len()).sum();
    if n_masked == 0 {
        return Ok((0.0, 0));
    }
    let batch = Batch {
        task_name: task_name.to_string(),
        kind: TaskKind::Mlm,
        sentences: sentences.to_vec(),
        mlm: Some(examples.to_vec()),
    };
    let (mean_nll, _) = task_loss(m, &batch)?;
    Ok((mean_nll * n_masked as f64, n_masked))
}

/// Adam update with bias correction; only the parameters present in `grads`
/// are touched. Deterministic: iteration follows sorted parameter names.
pub fn optimizer_step(m: &mut ModelState, grads: &GradMap) {
    m.step_count += 1;
    let t = m.step_count as i32;
    let cfg = m.config.clone();
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (name, g) in grads {
        let param = match m.params.get_mut(name) {
            Some(p) => p,
            None => continue,
        };
        let mom = m
            .adam_m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.rows, g.cols));
        let vel = m
            .adam_v
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.rows, g.cols));
        for i in 0..g.data.len() {
            mom.data[i] = cfg.beta1 * mom.data[i] + (1.0 - cfg.beta1) * g.data[i];
            vel.data[i] = cfg.beta2 * vel.data[i] + (1.0 - cfg.beta2) * g.data[i] * g.data[i];
            let m_hat = mom.data[i] / bc1;
            let v_hat = vel.data[i] / bc2;
            param.data[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    state: ModelState,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

/// Writes a versioned JSON checkpoint. f64 values survive the round trip
/// bit-exactly (shortest-round-trip float formatting).
pub fn save_model(m: &ModelState, path: &Path) -> Result<(), ModelError> {
    let cp = Checkpoint { version: CHECKPOINT_VERSION, state: m.clone() };
    let json = serde_json::to_string(&cp)
        .map_err(|e| ModelError::CorruptCheckpoint(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelState, ModelError> {
    let raw = std::fs::read_to_string(path)?;
    let probe: VersionProbe =
        serde_json::from_str(&raw).map_err(|e| ModelError::CorruptCheckpoint(e.to_string()))?;
    if probe.version != CHECKPOINT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: probe.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let cp: Checkpoint =
        serde_json::from_str(&raw).map_err(|e| ModelError::CorruptCheckpoint(e.to_string()))?;
    Ok(cp.state)
}
