//! GenRec: generative sequential recommendation at desk scale.
//!
//! The pipeline turns raw user-item interaction logs into chronological
//! sequences, serializes them into token sequences, trains a small
//! encoder-decoder Transformer with a masked-item objective (the same cloze
//! objective in pretraining and finetuning), and ranks next-item candidates
//! with trie-constrained beam search. Metrics are HR@k and NDCG@k under the
//! all-item setting with leave-one-out splits.

pub mod corpus;
pub mod decoding;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod synthetic;
pub mod tasks;
pub mod tokenizer;

pub use corpus::{DatasetStats, Interaction, SplitSequence, UserSequence};
pub use decoding::{ItemTrie, RankedPrediction};
pub use evaluation::EvalReport;
pub use model::{ForwardMode, GenRecConfig, ModelWeights};
pub use numerics::{AdamWState, Float, Graph, NodeId, ParamSet, Parameter, Tensor, WarmupSchedule};
pub use tasks::{EvalPhase, MaskOrigin, MaskedExample, Stage, StageConfig};
pub use tokenizer::{EntityTag, MaskSpec, TokenSequence, Tokenizer, Vocab};
