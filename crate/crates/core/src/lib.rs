//! Desk-scale laboratory for slot-and-intent detection transfer
//! experiments: corpus ingestion for the CoNLL-family formats, SID and
//! auxiliary-task metrics, Levenshtein dialect-distance analysis, a small
//! multi-task model with exact gradients, and `×`/`→` training schedules.

pub mod corpus;
pub mod distance;
pub mod metrics;
pub mod model;
pub mod report;
pub mod schedule;

pub use corpus::{Dataset, Sentence, SlotSpan, TaskKind, Token};
pub use metrics::{AuxReport, MetricReport, SeedAggregate, SidPrediction};
