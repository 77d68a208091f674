//! HR@k and NDCG@k over the all-item candidate set, from beam-search
//! rankings of leave-one-out eval examples.

use thiserror::Error;

use crate::corpus::SplitSequence;
use crate::decoding::{beam_search, DecodeError, ItemTrie, RankedPrediction};
use crate::model::ModelWeights;
use crate::tasks::{make_eval_example, EvalPhase, TaskError};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no users to evaluate")]
    EmptyEvalSet,
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Mean metrics over evaluated users. Users whose eval example could not
/// be formed are counted in `num_users_skipped`, never silently dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub phase: EvalPhase,
    pub hr: Vec<(usize, f64)>,
    pub ndcg: Vec<(usize, f64)>,
    pub num_users_evaluated: usize,
    pub num_users_skipped: usize,
    pub beam_width: usize,
    /// Set when beam_width < max(k): targets below the beam score zero.
    pub short_beam: bool,
}

/// 1 iff the target sits within the first k entries.
pub fn hit(ranked: &RankedPrediction, target: &str, k: usize) -> bool {
    assert!(k >= 1, "k must be at least 1");
    ranked.rank_of(target).is_some_and(|r| r <= k)
}

/// Single-relevant-item NDCG: 1/log2(rank+1) inside the cutoff, else 0.
/// The ideal DCG is 1, so no further normalization is needed.
pub fn ndcg(ranked: &RankedPrediction, target: &str, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    match ranked.rank_of(target) {
        Some(r) if r <= k => 1.0 / ((r as f64) + 1.0).log2(),
        _ => 0.0,
    }
}

/// Evaluate one phase over all splits: build each user's eval example, rank
/// with trie-constrained beam search, average hit and NDCG per cutoff.
/// Users are folded in split order, so the result is deterministic.
pub fn evaluate(
    weights: &ModelWeights,
    tok: &Tokenizer,
    splits: &[SplitSequence],
    phase: EvalPhase,
    beam_width: usize,
    k_list: &[usize],
    trie: &ItemTrie,
) -> Result<EvalReport, EvalError> {
    if splits.is_empty() {
        return Err(EvalError::EmptyEvalSet);
    }
    let mut ks: Vec<usize> = k_list.to_vec();
    ks.sort_unstable();
    ks.dedup();

    let mut hr_sums = vec![0.0f64; ks.len()];
    let mut ndcg_sums = vec![0.0f64; ks.len()];
    let mut evaluated = 0usize;
    let mut skipped = 0usize;

    for split in splits {
        let example = match make_eval_example(tok, split, phase) {
            Ok(ex) => ex,
            Err(TaskError::Tokenizer(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => unreachable!("eval example construction: {e}"),
        };
        let ranked = beam_search(weights, &example.input, beam_width, trie)?;
        for (i, &k) in ks.iter().enumerate() {
            hr_sums[i] += hit(&ranked, &example.target_item, k) as u8 as f64;
            ndcg_sums[i] += ndcg(&ranked, &example.target_item, k);
        }
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(EvalError::EmptyEvalSet);
    }

    let n = evaluated as f64;
    let max_k = ks.iter().copied().max().unwrap_or(1);
    Ok(EvalReport {
        phase,
        hr: ks.iter().enumerate().map(|(i, &k)| (k, hr_sums[i] / n)).collect(),
        // NDCG@1 always equals HR@1; only larger cutoffs are reported.
        ndcg: ks
            .iter()
            .enumerate()
            .filter(|&(_, &k)| k > 1)
            .map(|(i, &k)| (k, ndcg_sums[i] / n))
            .collect(),
        num_users_evaluated: evaluated,
        num_users_skipped: skipped,
        beam_width,
        short_beam: beam_width < max_k,
    })
}

impl EvalReport {
    /// Plain key=value lines, metrics at 4 decimal places.
    pub fn render(&self) -> String {
        let mut out = format!("phase={}\n", self.phase.as_str());
        for (k, v) in &self.hr {
            out.push_str(&format!("HR@{k}={v:.4}\n"));
        }
        for (k, v) in &self.ndcg {
            out.push_str(&format!("NDCG@{k}={v:.4}\n"));
        }
        out.push_str(&format!("num_users_evaluated={}\n", self.num_users_evaluated));
        out.push_str(&format!("num_users_skipped={}\n", self.num_users_skipped));
        if self.short_beam {
            out.push_str(&format!(
                "warning=beam_width {} is below the largest cutoff\n",
                self.beam_width
            ));
        }
        out
    }
}
