//! Flat key=value run configuration. Command-line flags override file
//! values; anything absent falls back to the defaults below.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use genrec_core::{Float, GenRecConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub workdir: PathBuf,
    pub seed: u64,
    pub min_count: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub num_encoder_layers: usize,
    pub num_decoder_layers: usize,
    pub ffn_dim: usize,
    pub max_length: usize,
    pub dropout: Float,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub base_lr: Float,
    /// Per-stage overrides; fall back to base_lr.
    pub pretrain_lr: Option<Float>,
    pub finetune_lr: Option<Float>,
    pub weight_decay: Float,
    pub beam_width: usize,
    pub k_list: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: PathBuf::from("data.tsv"),
            workdir: PathBuf::from("work"),
            seed: 42,
            min_count: 5,
            d_model: 64,
            num_heads: 4,
            num_encoder_layers: 2,
            num_decoder_layers: 2,
            ffn_dim: 256,
            max_length: 512,
            dropout: 0.1,
            pretrain_epochs: 20,
            finetune_epochs: 25,
            batch_size: 16,
            base_lr: 1e-5,
            pretrain_lr: None,
            finetune_lr: None,
            weight_decay: 1e-5,
            beam_width: 20,
            k_list: vec![1, 5, 10],
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {lineno}: expected key=value, got {line:?}");
            };
            let (key, value) = (key.trim(), value.trim());
            let ctx = || format!("config line {lineno}: bad value {value:?} for {key}");
            match key {
                "data" => cfg.data = PathBuf::from(value),
                "workdir" => cfg.workdir = PathBuf::from(value),
                "seed" => cfg.seed = value.parse().with_context(ctx)?,
                "min_count" => cfg.min_count = value.parse().with_context(ctx)?,
                "d_model" => cfg.d_model = value.parse().with_context(ctx)?,
                "num_heads" => cfg.num_heads = value.parse().with_context(ctx)?,
                "num_encoder_layers" => {
                    cfg.num_encoder_layers = value.parse().with_context(ctx)?
                }
                "num_decoder_layers" => {
                    cfg.num_decoder_layers = value.parse().with_context(ctx)?
                }
                "ffn_dim" => cfg.ffn_dim = value.parse().with_context(ctx)?,
                "max_length" => cfg.max_length = value.parse().with_context(ctx)?,
                "dropout" => cfg.dropout = value.parse().with_context(ctx)?,
                "pretrain_epochs" => cfg.pretrain_epochs = value.parse().with_context(ctx)?,
                "finetune_epochs" => cfg.finetune_epochs = value.parse().with_context(ctx)?,
                "batch_size" => cfg.batch_size = value.parse().with_context(ctx)?,
                "base_lr" => cfg.base_lr = value.parse().with_context(ctx)?,
                "pretrain_lr" => cfg.pretrain_lr = Some(value.parse().with_context(ctx)?),
                "finetune_lr" => cfg.finetune_lr = Some(value.parse().with_context(ctx)?),
                "weight_decay" => cfg.weight_decay = value.parse().with_context(ctx)?,
                "beam_width" => cfg.beam_width = value.parse().with_context(ctx)?,
                "k_list" => {
                    cfg.k_list = value
                        .split(',')
                        .map(|v| v.trim().parse::<usize>())
                        .collect::<Result<_, _>>()
                        .with_context(ctx)?
                }
                other => bail!("config line {lineno}: unknown key {other:?}"),
            }
        }
        if cfg.batch_size == 0 {
            bail!("batch_size must be at least 1");
        }
        if cfg.k_list.is_empty() {
            bail!("k_list must not be empty");
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    /// Model dimensions for a vocabulary of the given sizes.
    pub fn model_config(
        &self,
        vocab_size: usize,
        num_users: usize,
        num_items: usize,
    ) -> GenRecConfig {
        GenRecConfig {
            vocab_size,
            num_users,
            num_items,
            d_model: self.d_model,
            num_encoder_layers: self.num_encoder_layers,
            num_decoder_layers: self.num_decoder_layers,
            num_heads: self.num_heads,
            ffn_dim: self.ffn_dim,
            max_length: self.max_length,
            dropout: self.dropout,
        }
    }
}
