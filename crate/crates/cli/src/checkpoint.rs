//! Bit-exact, language-neutral checkpoint files: a key=value text manifest
//! (format version, model config, vocabulary hash, stage, epoch, parameter
//! list) followed by raw little-endian f32 arrays, one per parameter, each
//! preceded by a length-prefixed name and element count.

use std::path::Path;

use anyhow::{bail, Context, Result};
use genrec_core::{GenRecConfig, ParamSet, Tensor};

const MAGIC: &str = "genrec-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub stage: String,
    pub epoch: usize,
    pub vocab_hash: String,
    pub config: GenRecConfig,
}

/// Hex SHA-256 of a file's bytes; used to pin the vocabulary a checkpoint
/// was trained with.
pub fn file_hash(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes =
        std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn render_manifest(meta: &CheckpointMeta, params: &ParamSet) -> String {
    let c = &meta.config;
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("stage={}\n", meta.stage));
    out.push_str(&format!("epoch={}\n", meta.epoch));
    out.push_str(&format!("vocab_hash={}\n", meta.vocab_hash));
    out.push_str(&format!("vocab_size={}\n", c.vocab_size));
    out.push_str(&format!("num_users={}\n", c.num_users));
    out.push_str(&format!("num_items={}\n", c.num_items));
    out.push_str(&format!("d_model={}\n", c.d_model));
    out.push_str(&format!("num_encoder_layers={}\n", c.num_encoder_layers));
    out.push_str(&format!("num_decoder_layers={}\n", c.num_decoder_layers));
    out.push_str(&format!("num_heads={}\n", c.num_heads));
    out.push_str(&format!("ffn_dim={}\n", c.ffn_dim));
    out.push_str(&format!("max_length={}\n", c.max_length));
    out.push_str(&format!("dropout={}\n", c.dropout));
    for p in params.iter() {
        let dims: Vec<String> = p.value.shape().iter().map(|d| d.to_string()).collect();
        out.push_str(&format!("param={} {}\n", p.name, dims.join("x")));
    }
    out.push_str("binary=begin\n");
    out
}

pub fn save(path: &Path, meta: &CheckpointMeta, params: &ParamSet) -> Result<()> {
    let mut bytes = render_manifest(meta, params).into_bytes();
    for p in params.iter() {
        let name = p.name.as_bytes();
        bytes.extend_from_slice(&(name.len() as u32).to_le_bytes());
        bytes.extend_from_slice(name);
        bytes.extend_from_slice(&(p.value.len() as u32).to_le_bytes());
        for &v in p.value.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(CheckpointMeta, ParamSet)> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let marker = b"binary=begin\n";
    let split = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .with_context(|| format!("{}: no binary marker", path.display()))?;
    let header = std::str::from_utf8(&bytes[..split])
        .with_context(|| format!("{}: manifest is not UTF-8", path.display()))?;
    let mut body = &bytes[split + marker.len()..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        bail!("{}: not a {MAGIC} file", path.display());
    }
    let mut stage = None;
    let mut epoch = None;
    let mut vocab_hash = None;
    let mut fields: std::collections::BTreeMap<&str, &str> = Default::default();
    let mut manifest_params: Vec<(String, Vec<usize>)> = Vec::new();
    for line in lines {
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}: bad manifest line {line:?}", path.display());
        };
        match key {
            "stage" => stage = Some(value.to_string()),
            "epoch" => epoch = Some(value.parse().context("epoch")?),
            "vocab_hash" => vocab_hash = Some(value.to_string()),
            "param" => {
                let (name, dims) = value
                    .rsplit_once(' ')
                    .with_context(|| format!("bad param line {line:?}"))?;
                let shape: Vec<usize> = dims
                    .split('x')
                    .map(|d| d.parse::<usize>())
                    .collect::<Result<_, _>>()
                    .with_context(|| format!("bad shape in {line:?}"))?;
                manifest_params.push((name.to_string(), shape));
            }
            other => {
                fields.insert(other, value);
            }
        }
    }
    let get = |name: &str| -> Result<&str> {
        fields
            .get(name)
            .copied()
            .with_context(|| format!("{}: missing {name}", path.display()))
    };
    let config = GenRecConfig {
        vocab_size: get("vocab_size")?.parse()?,
        num_users: get("num_users")?.parse()?,
        num_items: get("num_items")?.parse()?,
        d_model: get("d_model")?.parse()?,
        num_encoder_layers: get("num_encoder_layers")?.parse()?,
        num_decoder_layers: get("num_decoder_layers")?.parse()?,
        num_heads: get("num_heads")?.parse()?,
        ffn_dim: get("ffn_dim")?.parse()?,
        max_length: get("max_length")?.parse()?,
        dropout: get("dropout")?.parse()?,
    };
    let meta = CheckpointMeta {
        stage: stage.context("missing stage")?,
        epoch: epoch.context("missing epoch")?,
        vocab_hash: vocab_hash.context("missing vocab_hash")?,
        config,
    };

    let mut params = ParamSet::new();
    for (name, shape) in &manifest_params {
        let take = |body: &mut &[u8], n: usize| -> Result<Vec<u8>> {
            if body.len() < n {
                bail!("{}: truncated binary section", path.display());
            }
            let (head, rest) = body.split_at(n);
            *body = rest;
            Ok(head.to_vec())
        };
        let name_len = u32::from_le_bytes(take(&mut body, 4)?.try_into().unwrap()) as usize;
        let stored_name = String::from_utf8(take(&mut body, name_len)?)
            .context("parameter name is not UTF-8")?;
        if &stored_name != name {
            bail!(
                "{}: binary section has {stored_name:?} where manifest lists {name:?}",
                path.display()
            );
        }
        let count = u32::from_le_bytes(take(&mut body, 4)?.try_into().unwrap()) as usize;
        if count != shape.iter().product::<usize>() {
            bail!(
                "{}: {name}: {count} elements for shape {shape:?}",
                path.display()
            );
        }
        let raw = take(&mut body, count * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as genrec_core::Float)
            .collect();
        let tensor = Tensor::from_vec(shape, data)
            .map_err(|e| anyhow::anyhow!("{}: {name}: {e}", path.display()))?;
        params
            .add(name, tensor)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    }
    if !body.is_empty() {
        bail!(
            "{}: {} trailing bytes after last parameter",
            path.display(),
            body.len()
        );
    }
    Ok((meta, params))
}
