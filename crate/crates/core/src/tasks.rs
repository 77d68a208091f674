//! Masked-example construction for pretraining, finetuning and evaluation,
//! plus the training loop shared by both stages.
//!
//! Pretraining masks one random item drawn from the training split only;
//! the split already excludes the last two items of the full sequence, so
//! validation and test items never leak. Finetuning appends the mask and
//! supervises the last training item. The objective is identical in both
//! stages: generate the one masked item.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::SplitSequence;
use crate::model::{ForwardMode, ModelError, ModelWeights};
use crate::numerics::{adamw_step, AdamWState, Float, Graph, WarmupSchedule};
use crate::tokenizer::{MaskSpec, TokenId, TokenSequence, Tokenizer, TokenizerError};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("user {user}: no training items to mask")]
    EmptyTrainItems { user: String },
    #[error("no usable training examples")]
    NoExamples,
    #[error("non-finite loss at update {step} (batch users: {users:?})")]
    NonFiniteLoss { step: usize, users: Vec<String> },
}

/// Where the [MASK] in an example came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskOrigin {
    PretrainReplace(usize),
    FinetuneAppend,
    EvalAppend,
}

/// One training or evaluation instance: an encoder input holding exactly
/// one [MASK], and the masked item as the decoder target.
#[derive(Debug, Clone)]
pub struct MaskedExample {
    pub input: TokenSequence,
    pub target_item: String,
    pub target_tokens: Vec<TokenId>,
    pub mask_origin: MaskOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    Finetune,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalPhase {
    Validation,
    Test,
}

impl EvalPhase {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvalPhase::Validation => "validation",
            EvalPhase::Test => "test",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StageConfig {
    pub stage: Stage,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub base_lr: Float,
    pub weight_decay: Float,
}

impl StageConfig {
    /// Paper-default hyperparameters: lr and weight decay 1e-5,
    /// 25 finetune epochs. Pretraining epochs are a desk-scale choice.
    pub fn new(stage: Stage) -> Self {
        StageConfig {
            stage,
            epochs: match stage {
                Stage::Pretrain => 20,
                Stage::Finetune => 25,
            },
            batch_size: 16,
            seed: 42,
            base_lr: 1e-5,
            weight_decay: 1e-5,
        }
    }
}

/// One epoch's record in the loss log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub stage: Stage,
    pub epoch: usize,
    pub mean_loss: Float,
    pub lr: Float,
    pub num_examples: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunLog {
    pub epochs: Vec<EpochLog>,
    /// Splits skipped because no example could be formed.
    pub skipped: usize,
}

/// Mask one uniformly random training item. The target is the masked item.
pub fn make_pretrain_example(
    tok: &Tokenizer,
    split: &SplitSequence,
    rng: &mut ChaCha8Rng,
) -> Result<MaskedExample, TaskError> {
    if split.train_items.is_empty() {
        return Err(TaskError::EmptyTrainItems {
            user: split.user_id.clone(),
        });
    }
    let idx = rng.gen_range(0..split.train_items.len());
    let (input, _) = tok.encode(
        &split.user_id,
        &split.train_items,
        MaskSpec::ReplaceItemAt(idx),
    )?;
    let target_item = split.train_items[idx].clone();
    let target_tokens = tok.target_tokens(&target_item)?;
    Ok(MaskedExample {
        input,
        target_item,
        target_tokens,
        mask_origin: MaskOrigin::PretrainReplace(idx),
    })
}

/// Append [MASK] after the training prefix; the target is the last training
/// item. Returns None (skip) when the split has fewer than two training
/// items, since no prefix+target pair exists.
pub fn make_finetune_example(
    tok: &Tokenizer,
    split: &SplitSequence,
) -> Result<Option<MaskedExample>, TaskError> {
    let n = split.train_items.len();
    if n < 2 {
        return Ok(None);
    }
    let (input, _) = tok.encode(
        &split.user_id,
        &split.train_items[..n - 1],
        MaskSpec::AppendMask,
    )?;
    let target_item = split.train_items[n - 1].clone();
    let target_tokens = tok.target_tokens(&target_item)?;
    Ok(Some(MaskedExample {
        input,
        target_item,
        target_tokens,
        mask_origin: MaskOrigin::FinetuneAppend,
    }))
}

/// Validation: mask after the training items, target is the validation
/// item. Test: the validation item joins the input, target is the test item.
pub fn make_eval_example(
    tok: &Tokenizer,
    split: &SplitSequence,
    phase: EvalPhase,
) -> Result<MaskedExample, TaskError> {
    let (items, target_item) = match phase {
        EvalPhase::Validation => (split.train_items.clone(), split.val_item.clone()),
        EvalPhase::Test => {
            let mut items = split.train_items.clone();
            items.push(split.val_item.clone());
            (items, split.test_item.clone())
        }
    };
    let (input, _) = tok.encode(&split.user_id, &items, MaskSpec::AppendMask)?;
    let target_tokens = tok.target_tokens(&target_item)?;
    Ok(MaskedExample {
        input,
        target_item,
        target_tokens,
        mask_origin: MaskOrigin::EvalAppend,
    })
}

pub(crate) fn epoch_order(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Train one stage: seeded shuffling, per-step warmup learning rate, AdamW
/// updates, one mean-loss line per epoch. Pretraining redraws mask
/// positions every epoch; finetuning examples are fixed up front.
pub fn run_stage(
    tok: &Tokenizer,
    splits: &[SplitSequence],
    cfg: &StageConfig,
    weights: &mut ModelWeights,
) -> Result<RunLog, TaskError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = RunLog::default();

    // Fixed example set for finetuning; pretraining rebuilds per epoch.
    let mut finetune_examples: Vec<(usize, MaskedExample)> = Vec::new();
    let usable: usize = match cfg.stage {
        Stage::Finetune => {
            for (i, split) in splits.iter().enumerate() {
                match make_finetune_example(tok, split)? {
                    Some(ex) => finetune_examples.push((i, ex)),
                    None => log.skipped += 1,
                }
            }
            finetune_examples.len()
        }
        Stage::Pretrain => {
            let usable = splits.iter().filter(|s| !s.train_items.is_empty()).count();
            log.skipped = splits.len() - usable;
            usable
        }
    };
    if usable == 0 {
        return Err(TaskError::NoExamples);
    }

    let steps_per_epoch = usable.div_ceil(cfg.batch_size);
    let schedule = WarmupSchedule::new(cfg.epochs * steps_per_epoch, cfg.base_lr);
    let mut opt = AdamWState::new(&weights.params, cfg.base_lr, cfg.weight_decay);
    let mut update = 0usize;

    for epoch in 1..=cfg.epochs {
        let examples: Vec<(usize, MaskedExample)> = match cfg.stage {
            Stage::Finetune => finetune_examples.clone(),
            Stage::Pretrain => {
                let mut out = Vec::with_capacity(usable);
                for (i, split) in splits.iter().enumerate() {
                    if !split.train_items.is_empty() {
                        out.push((i, make_pretrain_example(tok, split, &mut rng)?));
                    }
                }
                out
            }
        };
        let order = epoch_order(examples.len(), &mut rng);

        let mut epoch_loss = 0.0;
        let mut last_lr = 0.0;
        for batch_idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&(usize, MaskedExample)> =
                batch_idx.iter().map(|&i| &examples[i]).collect();
            let max_input = batch.iter().map(|(_, ex)| ex.input.ids.len()).max().unwrap();
            let max_target = batch
                .iter()
                .map(|(_, ex)| ex.target_tokens.len())
                .max()
                .unwrap();

            weights.params.zero_grads();
            let inv = 1.0 / batch.len() as Float;
            for (split_idx, ex) in &batch {
                let mut input = ex.input.clone();
                input.pad_to(max_input);
                let mut target = ex.target_tokens.clone();
                target.resize(max_target, crate::tokenizer::PAD);

                let mut g = Graph::new();
                let loss = weights.training_loss(
                    &mut g,
                    &input,
                    &target,
                    &mut ForwardMode::Train { rng: &mut rng },
                )?;
                let value = g.value(loss).item();
                if !value.is_finite() {
                    return Err(TaskError::NonFiniteLoss {
                        step: update + 1,
                        users: batch
                            .iter()
                            .map(|(i, _)| splits[*i].user_id.clone())
                            .collect(),
                    });
                }
                epoch_loss += value;
                let scaled = g.scale(loss, inv).map_err(ModelError::from)?;
                g.backward(scaled).map_err(ModelError::from)?;
                g.accumulate_grads(&mut weights.params);
                let _ = split_idx;
            }
            update += 1;
            last_lr = schedule.lr_at(update);
            adamw_step(&mut opt, &mut weights.params, last_lr).map_err(ModelError::from)?;
        }

        log.epochs.push(EpochLog {
            stage: cfg.stage,
            epoch,
            mean_loss: epoch_loss / examples.len() as Float,
            lr: last_lr,
            num_examples: examples.len(),
        });
    }
    Ok(log)
}

/// Render loss-log lines: `stage \t epoch \t mean_loss \t lr`.
pub fn render_loss_log(log: &RunLog) -> String {
    let mut out = String::new();
    for e in &log.epochs {
        out.push_str(&format!(
            "{}\t{}\t{:.6}\t{:e}\n",
            e.stage.as_str(),
            e.epoch,
            e.mean_loss,
            e.lr
        ));
    }
    out
}
