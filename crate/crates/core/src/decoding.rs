//! Trie-constrained beam search over the item vocabulary, plus an
//! exhaustive teacher-forcing oracle for testing.
//!
//! At every step a hypothesis may only emit tokens that extend some item's
//! token sequence ([END] becomes available at terminals), so every finished
//! hypothesis decodes to a real item, no matter what the model weights are.
//! Scores are raw summed token log-probabilities with no length
//! normalization; ties break toward the smaller item index.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{EncodedStates, ModelError, ModelWeights};
use crate::numerics::{Float, Tensor};
use crate::tokenizer::{TokenId, TokenSequence, Tokenizer, TokenizerError, BEG, END, MASK};

/// Exhaustive ranking refuses vocabularies above this size.
pub const EXHAUSTIVE_GUARD: usize = 10_000;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("items {a:?} and {b:?} tokenize to the same sequence")]
    DuplicateItemSequence { a: String, b: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("input must contain exactly one [MASK], found {found}")]
    BadMaskCount { found: usize },
    #[error("beam_width must be at least 1")]
    ZeroBeamWidth,
    #[error("beam search produced no finished hypothesis")]
    EmptyBeam,
    #[error("{count} items exceed the exhaustive-ranking guard of {guard}")]
    TooManyItems { count: usize, guard: usize },
}

#[derive(Debug, Default)]
struct TrieNode {
    children: BTreeMap<TokenId, TrieNode>,
    terminal: Option<(u32, String)>,
}

/// Prefix trie over every item's token sequence. Terminals carry the item;
/// a terminal may have children when one item's sequence is a proper prefix
/// of another's.
#[derive(Debug)]
pub struct ItemTrie {
    root: TrieNode,
    num_items: usize,
    shared_prefix_terminals: usize,
}

impl ItemTrie {
    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Terminals that also have children (one item's tokens are a proper
    /// prefix of another's).
    pub fn shared_prefix_terminals(&self) -> usize {
        self.shared_prefix_terminals
    }

    pub fn num_terminals(&self) -> usize {
        fn count(node: &TrieNode) -> usize {
            node.terminal.is_some() as usize
                + node.children.values().map(count).sum::<usize>()
        }
        count(&self.root)
    }

    /// Walk a token path from the root; None if the path leaves the trie.
    pub fn lookup(&self, tokens: &[TokenId]) -> Option<Option<&str>> {
        let mut node = &self.root;
        for t in tokens {
            node = node.children.get(t)?;
        }
        Some(node.terminal.as_ref().map(|(_, id)| id.as_str()))
    }
}

/// Build the trie over the tokenizer's full item vocabulary.
pub fn build_trie(tok: &Tokenizer) -> Result<ItemTrie, DecodeError> {
    let mut root = TrieNode::default();
    for (idx, item_id) in tok.item_ids().iter().enumerate() {
        let tokens = tok.item_token_ids(item_id)?;
        let mut node = &mut root;
        for t in tokens {
            node = node.children.entry(t).or_default();
        }
        if let Some((_, existing)) = &node.terminal {
            return Err(DecodeError::DuplicateItemSequence {
                a: existing.clone(),
                b: item_id.clone(),
            });
        }
        node.terminal = Some((idx as u32, item_id.clone()));
    }
    fn shared(node: &TrieNode) -> usize {
        let own = (node.terminal.is_some() && !node.children.is_empty()) as usize;
        own + node.children.values().map(shared).sum::<usize>()
    }
    let shared_prefix_terminals = shared(&root);
    Ok(ItemTrie {
        root,
        num_items: tok.num_items(),
        shared_prefix_terminals,
    })
}

/// Ranked (item, log-probability) list, descending by score.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPrediction {
    pub entries: Vec<(String, Float)>,
}

impl RankedPrediction {
    pub fn rank_of(&self, item: &str) -> Option<usize> {
        self.entries.iter().position(|(id, _)| id == item).map(|p| p + 1)
    }
}

fn log_softmax_row(logits: &Tensor, row: usize) -> Vec<Float> {
    let cols = *logits.shape().last().unwrap();
    let slice = &logits.data()[row * cols..(row + 1) * cols];
    let max = slice.iter().cloned().fold(Float::NEG_INFINITY, Float::max);
    let lse = max + slice.iter().map(|&v| (v - max).exp()).sum::<Float>().ln();
    slice.iter().map(|&v| v - lse).collect()
}

fn check_mask(input: &TokenSequence) -> Result<(), DecodeError> {
    let found = input.ids.iter().filter(|&&t| t == MASK).count();
    if found != 1 {
        return Err(DecodeError::BadMaskCount { found });
    }
    Ok(())
}

struct Hyp<'t> {
    node: &'t TrieNode,
    tokens: Vec<TokenId>,
    score: Float,
}

enum Cand<'t> {
    Finished {
        item_idx: u32,
        item_id: String,
        score: Float,
    },
    Live(Hyp<'t>),
}

impl Cand<'_> {
    fn score(&self) -> Float {
        match self {
            Cand::Finished { score, .. } => *score,
            Cand::Live(h) => h.score,
        }
    }
}

/// Beam search constrained by the trie. Returns up to `beam_width` items
/// scored by total sequence log-probability.
pub fn beam_search(
    weights: &ModelWeights,
    input: &TokenSequence,
    beam_width: usize,
    trie: &ItemTrie,
) -> Result<RankedPrediction, DecodeError> {
    if beam_width == 0 {
        return Err(DecodeError::ZeroBeamWidth);
    }
    check_mask(input)?;
    let enc = weights.encode_states(input)?;

    let mut finished: Vec<(u32, String, Float)> = Vec::new();
    let mut live = vec![Hyp {
        node: &trie.root,
        tokens: Vec::new(),
        score: 0.0,
    }];

    while !live.is_empty() {
        let mut pool: Vec<Cand> = finished
            .drain(..)
            .map(|(idx, id, score)| Cand::Finished {
                item_idx: idx,
                item_id: id,
                score,
            })
            .collect();
        for hyp in &live {
            let mut prefix = Vec::with_capacity(hyp.tokens.len() + 1);
            prefix.push(BEG);
            prefix.extend_from_slice(&hyp.tokens);
            let logits = step_logits(weights, &prefix, &enc)?;
            let logp = log_softmax_row(&logits, prefix.len() - 1);
            if let Some((item_idx, item_id)) = &hyp.node.terminal {
                pool.push(Cand::Finished {
                    item_idx: *item_idx,
                    item_id: item_id.clone(),
                    score: hyp.score + logp[END as usize],
                });
            }
            for (&token, child) in &hyp.node.children {
                let mut tokens = hyp.tokens.clone();
                tokens.push(token);
                pool.push(Cand::Live(Hyp {
                    node: child,
                    tokens,
                    score: hyp.score + logp[token as usize],
                }));
            }
        }
        // Deterministic pruning order: score, then finished before live
        // (smaller item index first), then token path.
        pool.sort_by(|a, b| {
            b.score()
                .total_cmp(&a.score())
                .then_with(|| match (a, b) {
                    (Cand::Finished { item_idx: x, .. }, Cand::Finished { item_idx: y, .. }) => {
                        x.cmp(y)
                    }
                    (Cand::Finished { .. }, Cand::Live(_)) => std::cmp::Ordering::Less,
                    (Cand::Live(_), Cand::Finished { .. }) => std::cmp::Ordering::Greater,
                    (Cand::Live(x), Cand::Live(y)) => x.tokens.cmp(&y.tokens),
                })
        });
        pool.truncate(beam_width);

        let mut next_finished = Vec::new();
        let mut next_live = Vec::new();
        for cand in pool {
            match cand {
                Cand::Finished {
                    item_idx,
                    item_id,
                    score,
                } => next_finished.push((item_idx, item_id, score)),
                Cand::Live(h) => next_live.push(h),
            }
        }
        finished = next_finished;
        live = next_live;
    }

    if finished.is_empty() {
        return Err(DecodeError::EmptyBeam);
    }
    finished.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    Ok(RankedPrediction {
        entries: finished.into_iter().map(|(_, id, s)| (id, s)).collect(),
    })
}

fn step_logits(
    weights: &ModelWeights,
    prefix: &[TokenId],
    enc: &EncodedStates,
) -> Result<Tensor, ModelError> {
    weights.decode_step(prefix, enc)
}

/// Score every item's token sequence by teacher forcing and rank all of
/// them. Small-vocabulary oracle for beam search.
pub fn exhaustive_rank(
    weights: &ModelWeights,
    tok: &Tokenizer,
    input: &TokenSequence,
) -> Result<RankedPrediction, DecodeError> {
    let count = tok.num_items();
    if count > EXHAUSTIVE_GUARD {
        return Err(DecodeError::TooManyItems {
            count,
            guard: EXHAUSTIVE_GUARD,
        });
    }
    check_mask(input)?;
    let enc = weights.encode_states(input)?;

    let mut scored: Vec<(u32, &str, Float)> = Vec::with_capacity(count);
    for (idx, item_id) in tok.item_ids().iter().enumerate() {
        let tokens = tok.item_token_ids(item_id)?;
        let mut prefix = Vec::with_capacity(tokens.len() + 1);
        prefix.push(BEG);
        prefix.extend_from_slice(&tokens);
        let logits = step_logits(weights, &prefix, &enc)?;
        // Token-by-token in sequence order, then [END]; this matches the
        // beam's incremental accumulation exactly.
        let mut score = 0.0;
        for (j, &t) in tokens.iter().enumerate() {
            score += log_softmax_row(&logits, j)[t as usize];
        }
        score += log_softmax_row(&logits, tokens.len())[END as usize];
        scored.push((idx as u32, item_id, score));
    }
    scored.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    Ok(RankedPrediction {
        entries: scored
            .into_iter()
            .map(|(_, id, s)| (id.to_string(), s))
            .collect(),
    })
}
