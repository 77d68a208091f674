//! The five pipeline subcommands. Everything on disk lives under the
//! configured workdir:
//!
//!   splits.tsv          leave-one-out splits, one user per line
//!   vocab.txt           token per line, line number = token id
//!   stats.txt           dataset statistics table
//!   pretrain.ckpt       checkpoint after masked-item pretraining
//!   finetune.ckpt       checkpoint after finetuning
//!   pretrain.loss.log   appended per run, one line per epoch
//!   finetune.loss.log
//!   report_<phase>.txt  evaluation metrics

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use genrec_core::decoding::build_trie;
use genrec_core::evaluation::evaluate;
use genrec_core::tasks::{render_loss_log, run_stage, RunLog};
use genrec_core::{
    corpus, EvalPhase, MaskSpec, ModelWeights, SplitSequence, Stage, StageConfig, Tokenizer,
};

use crate::checkpoint::{self, CheckpointMeta};
use crate::config::RunConfig;

pub struct Paths {
    pub splits: PathBuf,
    pub vocab: PathBuf,
    pub stats: PathBuf,
    pub pretrain_ckpt: PathBuf,
    pub finetune_ckpt: PathBuf,
    pub pretrain_log: PathBuf,
    pub finetune_log: PathBuf,
}

impl Paths {
    pub fn new(cfg: &RunConfig) -> Self {
        let w = &cfg.workdir;
        Paths {
            splits: w.join("splits.tsv"),
            vocab: w.join("vocab.txt"),
            stats: w.join("stats.txt"),
            pretrain_ckpt: w.join("pretrain.ckpt"),
            finetune_ckpt: w.join("finetune.ckpt"),
            pretrain_log: w.join("pretrain.loss.log"),
            finetune_log: w.join("finetune.loss.log"),
        }
    }

    pub fn report(&self, cfg: &RunConfig, phase: EvalPhase) -> PathBuf {
        cfg.workdir.join(format!("report_{}.txt", phase.as_str()))
    }
}

/// Run the corpus pipeline: ingest, chronological sequences, iterative
/// core filtering, leave-one-out splits. Writes the split file, the
/// vocabulary file and a stats report.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<()> {
    let file = fs::File::open(&cfg.data)
        .with_context(|| format!("opening raw data {}", cfg.data.display()))?;
    let interactions = corpus::ingest(std::io::BufReader::new(file))?;
    let sequences = corpus::build_sequences(&interactions);
    let filtered = corpus::core_filter(&sequences, cfg.min_count);
    let stats = corpus::stats(&filtered);

    let mut splits = Vec::with_capacity(filtered.len());
    let mut too_short = 0usize;
    for seq in &filtered {
        if seq.items.len() < 3 {
            too_short += 1;
            continue;
        }
        splits.push(corpus::leave_one_out(seq)?);
    }
    if splits.is_empty() {
        bail!("no user survives filtering with min_count {}", cfg.min_count);
    }
    let tok = Tokenizer::build(&filtered, cfg.max_length)?;

    fs::create_dir_all(&cfg.workdir)
        .with_context(|| format!("creating workdir {}", cfg.workdir.display()))?;
    let paths = Paths::new(cfg);
    fs::write(&paths.splits, corpus::render_split_file(&splits)?)?;
    fs::write(&paths.vocab, tok.vocab().render())?;
    let stats_text = corpus::render_stats(&stats);
    fs::write(&paths.stats, &stats_text)?;

    print!("{stats_text}");
    eprintln!(
        "preprocess: {} users, {} splits written ({} too short), vocab of {} tokens",
        filtered.len(),
        splits.len(),
        too_short,
        tok.vocab_size()
    );
    Ok(())
}

/// Rebuild the tokenizer and splits from the preprocess outputs. The
/// vocabulary derived from the split file must match vocab.txt exactly.
pub fn load_pipeline(cfg: &RunConfig) -> Result<(Tokenizer, Vec<SplitSequence>, String)> {
    let paths = Paths::new(cfg);
    let split_text = fs::read_to_string(&paths.splits).with_context(|| {
        format!(
            "reading {} (run `genrec preprocess` first)",
            paths.splits.display()
        )
    })?;
    let splits = corpus::parse_split_file(&split_text)?;
    let sequences: Vec<_> = splits
        .iter()
        .map(|s| genrec_core::UserSequence {
            user_id: s.user_id.clone(),
            items: s.full_sequence(),
        })
        .collect();
    let tok = Tokenizer::build(&sequences, cfg.max_length)?;
    let vocab_on_disk = fs::read_to_string(&paths.vocab)
        .with_context(|| format!("reading {}", paths.vocab.display()))?;
    if vocab_on_disk != tok.vocab().render() {
        bail!(
            "{} does not match the vocabulary derived from {}; re-run preprocess",
            paths.vocab.display(),
            paths.splits.display()
        );
    }
    let hash = checkpoint::file_hash(&paths.vocab)?;
    Ok((tok, splits, hash))
}

fn append_log(path: &Path, log: &RunLog) -> Result<()> {
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    file.write_all(render_loss_log(log).as_bytes())?;
    Ok(())
}

fn stage_config(cfg: &RunConfig, stage: Stage) -> StageConfig {
    StageConfig {
        stage,
        epochs: match stage {
            Stage::Pretrain => cfg.pretrain_epochs,
            Stage::Finetune => cfg.finetune_epochs,
        },
        batch_size: cfg.batch_size,
        // Distinct deterministic streams per stage.
        seed: cfg.seed.wrapping_add(match stage {
            Stage::Pretrain => 1,
            Stage::Finetune => 2,
        }),
        base_lr: match stage {
            Stage::Pretrain => cfg.pretrain_lr.unwrap_or(cfg.base_lr),
            Stage::Finetune => cfg.finetune_lr.unwrap_or(cfg.base_lr),
        },
        weight_decay: cfg.weight_decay,
    }
}

/// Masked-item pretraining from fresh weights.
pub fn cmd_pretrain(cfg: &RunConfig) -> Result<()> {
    let (tok, splits, vocab_hash) = load_pipeline(cfg)?;
    let model_config = cfg.model_config(tok.vocab_size(), tok.num_users(), tok.num_items());
    let mut weights = ModelWeights::init(model_config, cfg.seed)?;
    let stage_cfg = stage_config(cfg, Stage::Pretrain);
    let log = run_stage(&tok, &splits, &stage_cfg, &mut weights)?;

    let paths = Paths::new(cfg);
    append_log(&paths.pretrain_log, &log)?;
    checkpoint::save(
        &paths.pretrain_ckpt,
        &CheckpointMeta {
            stage: "pretrain".into(),
            epoch: stage_cfg.epochs,
            vocab_hash,
            config: weights.config.clone(),
        },
        &weights.params,
    )?;
    let last = log.epochs.last().map(|e| e.mean_loss).unwrap_or_default();
    eprintln!(
        "pretrain: {} epochs, final mean loss {last:.4}, checkpoint {}",
        stage_cfg.epochs,
        paths.pretrain_ckpt.display()
    );
    Ok(())
}

/// Finetune with the appended-mask objective, either from a pretraining
/// checkpoint (--from) or from scratch (the ablation arm).
pub fn cmd_finetune(cfg: &RunConfig, from: Option<&Path>) -> Result<()> {
    let (tok, splits, vocab_hash) = load_pipeline(cfg)?;
    let model_config = cfg.model_config(tok.vocab_size(), tok.num_users(), tok.num_items());
    let mut weights = match from {
        Some(path) => {
            let (meta, params) = checkpoint::load(path)?;
            if meta.vocab_hash != vocab_hash {
                bail!(
                    "{}: vocabulary hash {} does not match current vocabulary {}",
                    path.display(),
                    meta.vocab_hash,
                    vocab_hash
                );
            }
            if meta.config != model_config {
                bail!(
                    "{}: checkpoint model config does not match the run config",
                    path.display()
                );
            }
            ModelWeights::from_params(meta.config, params)?
        }
        None => ModelWeights::init(model_config, cfg.seed)?,
    };
    let stage_cfg = stage_config(cfg, Stage::Finetune);
    let log = run_stage(&tok, &splits, &stage_cfg, &mut weights)?;

    let paths = Paths::new(cfg);
    append_log(&paths.finetune_log, &log)?;
    checkpoint::save(
        &paths.finetune_ckpt,
        &CheckpointMeta {
            stage: "finetune".into(),
            epoch: stage_cfg.epochs,
            vocab_hash,
            config: weights.config.clone(),
        },
        &weights.params,
    )?;
    let last = log.epochs.last().map(|e| e.mean_loss).unwrap_or_default();
    eprintln!(
        "finetune: {} epochs ({}), final mean loss {last:.4}, checkpoint {}",
        stage_cfg.epochs,
        if from.is_some() {
            "from pretrain checkpoint"
        } else {
            "from scratch"
        },
        paths.finetune_ckpt.display()
    );
    Ok(())
}

fn load_weights(path: &Path, vocab_hash: &str) -> Result<ModelWeights> {
    let (meta, params) = checkpoint::load(path)?;
    if meta.vocab_hash != vocab_hash {
        bail!(
            "{}: vocabulary hash mismatch; checkpoint was trained on a different vocabulary",
            path.display()
        );
    }
    Ok(ModelWeights::from_params(meta.config, params)?)
}

/// Rank every user's held-out item with constrained beam search and write
/// the metric report for the phase.
pub fn cmd_evaluate(cfg: &RunConfig, from: Option<&Path>, phase: EvalPhase) -> Result<()> {
    let (tok, splits, vocab_hash) = load_pipeline(cfg)?;
    let paths = Paths::new(cfg);
    let ckpt = from.map(Path::to_path_buf).unwrap_or(paths.finetune_ckpt.clone());
    let weights = load_weights(&ckpt, &vocab_hash)?;
    let trie = build_trie(&tok)?;
    let report = evaluate(
        &weights,
        &tok,
        &splits,
        phase,
        cfg.beam_width,
        &cfg.k_list,
        &trie,
    )?;
    let rendered = report.render();
    fs::write(paths.report(cfg, phase), &rendered)?;
    print!("{rendered}");
    Ok(())
}

/// Top-k next-item predictions for one user, from their full history.
pub fn cmd_recommend(cfg: &RunConfig, from: Option<&Path>, user_id: &str) -> Result<()> {
    let (tok, splits, vocab_hash) = load_pipeline(cfg)?;
    let paths = Paths::new(cfg);
    let ckpt = from.map(Path::to_path_buf).unwrap_or(paths.finetune_ckpt.clone());
    let weights = load_weights(&ckpt, &vocab_hash)?;
    let split = splits
        .iter()
        .find(|s| s.user_id == user_id)
        .ok_or_else(|| anyhow!("unknown user {user_id:?}"))?;
    let (input, _) = tok.encode(user_id, &split.full_sequence(), MaskSpec::AppendMask)?;
    let trie = build_trie(&tok)?;
    let ranked = genrec_core::decoding::beam_search(&weights, &input, cfg.beam_width, &trie)?;
    let line: Vec<String> = ranked
        .entries
        .iter()
        .map(|(item, lp)| format!("{item}:{lp:.4}"))
        .collect();
    println!("{user_id}\t{}", line.join(","));
    Ok(())
}
