//! The GenRec network: composite embeddings feeding a bidirectional
//! encoder, and an auto-regressive decoder with cross-attention producing
//! token logits. Training uses teacher forcing on the masked item's token
//! sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::numerics::gradcheck::{GradCheck, GradReport};
use crate::numerics::{Float, Graph, NodeId, NumericsError, ParamId, ParamSet, Tensor};
use crate::tokenizer::{EntityTag, TokenId, TokenSequence, BEG, PAD};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("sequence of {len} tokens exceeds max_length {max}")]
    TooLong { len: usize, max: usize },
    #[error("decoder prefix must start with [BEG] and be non-empty")]
    BadPrefix,
    #[error("target must be [BEG] <item tokens> [END]")]
    BadTarget,
    #[error("parameters do not match config layout: {0}")]
    LayoutMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRecConfig {
    pub vocab_size: usize,
    pub num_users: usize,
    pub num_items: usize,
    pub d_model: usize,
    pub num_encoder_layers: usize,
    pub num_decoder_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_length: usize,
    pub dropout: Float,
}

impl GenRecConfig {
    /// Desk-scale defaults: trains on a laptop core in minutes while still
    /// exercising every mechanism.
    pub fn desk_default(vocab_size: usize, num_users: usize, num_items: usize) -> Self {
        GenRecConfig {
            vocab_size,
            num_users,
            num_items,
            d_model: 64,
            num_encoder_layers: 2,
            num_decoder_layers: 2,
            num_heads: 4,
            ffn_dim: 256,
            max_length: 512,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            (self.vocab_size, "vocab_size"),
            (self.num_users, "num_users"),
            (self.num_items, "num_items"),
            (self.d_model, "d_model"),
            (self.num_encoder_layers, "num_encoder_layers"),
            (self.num_decoder_layers, "num_decoder_layers"),
            (self.num_heads, "num_heads"),
            (self.ffn_dim, "ffn_dim"),
        ];
        for (v, name) in positive {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if self.d_model % self.num_heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "d_model {} not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.max_length < 4 {
            return Err(ModelError::InvalidConfig("max_length must be >= 4".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Exact scalar parameter count for a config.
pub fn param_count(config: &GenRecConfig) -> usize {
    let d = config.d_model;
    let f = config.ffn_dim;
    let tables = (config.vocab_size + config.max_length + config.num_users + config.num_items) * d;
    let attn = 4 * (d * d + d);
    let ln = 2 * d;
    let ffn = d * f + f + f * d + d;
    let enc_layer = attn + 2 * ln + ffn;
    let dec_layer = 2 * attn + 3 * ln + ffn;
    let out_proj = d * config.vocab_size;
    tables
        + config.num_encoder_layers * enc_layer
        + config.num_decoder_layers * dec_layer
        + 2 * ln
        + out_proj
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

fn push_ln(out: &mut Vec<(String, Vec<usize>, Init)>, prefix: &str, d: usize) {
    out.push((format!("{prefix}.gain"), vec![d], Init::Ones));
    out.push((format!("{prefix}.bias"), vec![d], Init::Zeros));
}

fn push_attn(out: &mut Vec<(String, Vec<usize>, Init)>, prefix: &str, d: usize) {
    for (w, b) in [("wq", "bq"), ("wk", "bk"), ("wv", "bv"), ("wo", "bo")] {
        out.push((format!("{prefix}.{w}"), vec![d, d], Init::Normal));
        out.push((format!("{prefix}.{b}"), vec![d], Init::Zeros));
    }
}

fn push_ffn(out: &mut Vec<(String, Vec<usize>, Init)>, prefix: &str, d: usize, f: usize) {
    out.push((format!("{prefix}.w1"), vec![d, f], Init::Normal));
    out.push((format!("{prefix}.b1"), vec![f], Init::Zeros));
    out.push((format!("{prefix}.w2"), vec![f, d], Init::Normal));
    out.push((format!("{prefix}.b2"), vec![d], Init::Zeros));
}

/// Canonical (name, shape, init) list; also the checkpoint order.
fn layout(config: &GenRecConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = config.d_model;
    let f = config.ffn_dim;
    let mut out: Vec<(String, Vec<usize>, Init)> = vec![
        ("embed.token".into(), vec![config.vocab_size, d], Init::Normal),
        ("embed.pos".into(), vec![config.max_length, d], Init::Normal),
        ("embed.user".into(), vec![config.num_users, d], Init::Normal),
        ("embed.item".into(), vec![config.num_items, d], Init::Normal),
    ];
    for l in 0..config.num_encoder_layers {
        push_ln(&mut out, &format!("enc.{l}.ln1"), d);
        push_attn(&mut out, &format!("enc.{l}.attn"), d);
        push_ln(&mut out, &format!("enc.{l}.ln2"), d);
        push_ffn(&mut out, &format!("enc.{l}.ffn"), d, f);
    }
    push_ln(&mut out, "enc.final_ln", d);
    for l in 0..config.num_decoder_layers {
        push_ln(&mut out, &format!("dec.{l}.ln1"), d);
        push_attn(&mut out, &format!("dec.{l}.self_attn"), d);
        push_ln(&mut out, &format!("dec.{l}.ln2"), d);
        push_attn(&mut out, &format!("dec.{l}.cross_attn"), d);
        push_ln(&mut out, &format!("dec.{l}.ln3"), d);
        push_ffn(&mut out, &format!("dec.{l}.ffn"), d, f);
    }
    push_ln(&mut out, "dec.final_ln", d);
    out.push(("out.w".into(), vec![d, config.vocab_size], Init::Normal));
    out
}

const INIT_STD: Float = 0.02;

/// Model parameters plus config. Read-only during inference; the training
/// loop owns it mutably while stepping.
#[derive(Debug, Clone)]
pub struct ModelWeights {
    pub config: GenRecConfig,
    pub params: ParamSet,
}

/// Detached encoder output for inference-time decoding.
#[derive(Debug, Clone)]
pub struct EncodedStates {
    pub states: Tensor,
    pub key_mask: Vec<bool>,
}

/// Dropout switch: `Eval` is deterministic, `Train` draws inverted-dropout
/// masks from the rng.
pub enum ForwardMode<'a> {
    Eval,
    Train { rng: &'a mut ChaCha8Rng },
}

impl ModelWeights {
    /// Fresh weights: normal(0, 0.02) tables and projections, zero biases,
    /// unit layer-norm gains.
    pub fn init(config: GenRecConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, shape, init) in layout(&config) {
            let tensor = match init {
                Init::Normal => Tensor::randn(&shape, INIT_STD, &mut rng),
                Init::Zeros => Tensor::zeros(&shape),
                Init::Ones => Tensor::ones(&shape),
            };
            params.add(&name, tensor)?;
        }
        Ok(ModelWeights { config, params })
    }

    /// Wrap an existing parameter set (checkpoint load). Names, order and
    /// shapes must match the config's canonical layout exactly.
    pub fn from_params(config: GenRecConfig, params: ParamSet) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = layout(&config);
        if params.len() != expected.len() {
            return Err(ModelError::LayoutMismatch(format!(
                "{} parameters, expected {}",
                params.len(),
                expected.len()
            )));
        }
        for (param, (name, shape, _)) in params.iter().zip(&expected) {
            if &param.name != name {
                return Err(ModelError::LayoutMismatch(format!(
                    "parameter {:?} where {:?} expected",
                    param.name, name
                )));
            }
            if param.value.shape() != shape.as_slice() {
                return Err(ModelError::LayoutMismatch(format!(
                    "{name}: shape {:?}, expected {shape:?}",
                    param.value.shape()
                )));
            }
        }
        Ok(ModelWeights { config, params })
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.params.by_name(name)
    }

    fn bind(&self, g: &mut Graph, name: &str) -> NodeId {
        let id = self
            .params
            .by_name(name)
            .unwrap_or_else(|| panic!("parameter {name} missing"));
        g.param(&self.params, id)
    }

    /// Composite input embedding: token + position + (user / item) ID
    /// lookup. Specials get token + position only; the user and item
    /// tables are separate parameters and never mix.
    pub fn embed(&self, g: &mut Graph, seq: &TokenSequence) -> Result<NodeId, ModelError> {
        let tables = EmbedNodes::bind(self, g);
        self.embed_with(g, &tables, seq)
    }

    fn embed_with(
        &self,
        g: &mut Graph,
        tables: &EmbedNodes,
        seq: &TokenSequence,
    ) -> Result<NodeId, ModelError> {
        let len = seq.ids.len();
        if len > self.config.max_length {
            return Err(ModelError::TooLong {
                len,
                max: self.config.max_length,
            });
        }
        let d = self.config.d_model;
        let token_ids: Vec<usize> = seq.ids.iter().map(|&t| t as usize).collect();
        let positions: Vec<usize> = (0..len).collect();
        let tok = g.embedding(tables.token, &token_ids)?;
        let pos = g.embedding(tables.pos, &positions)?;
        let mut x = g.add(tok, pos)?;

        let mut user_ids = vec![0usize; len];
        let mut item_ids = vec![0usize; len];
        let mut user_mask = Tensor::zeros(&[len, d]);
        let mut item_mask = Tensor::zeros(&[len, d]);
        let mut any_user = false;
        let mut any_item = false;
        for (j, tag) in seq.tags.iter().enumerate() {
            match tag {
                EntityTag::User(u) => {
                    user_ids[j] = *u as usize;
                    user_mask.data_mut()[j * d..(j + 1) * d].fill(1.0);
                    any_user = true;
                }
                EntityTag::Item(i) => {
                    item_ids[j] = *i as usize;
                    item_mask.data_mut()[j * d..(j + 1) * d].fill(1.0);
                    any_item = true;
                }
                EntityTag::None => {}
            }
        }
        if any_user {
            let looked = g.embedding(tables.user, &user_ids)?;
            let mask = g.leaf(user_mask);
            let contrib = g.mul(looked, mask)?;
            x = g.add(x, contrib)?;
        }
        if any_item {
            let looked = g.embedding(tables.item, &item_ids)?;
            let mask = g.leaf(item_mask);
            let contrib = g.mul(looked, mask)?;
            x = g.add(x, contrib)?;
        }
        Ok(x)
    }

    /// Encoder stack over one token sequence. Returns output states and the
    /// key mask (true at real positions); padded keys are never attended to.
    pub fn encode(
        &self,
        g: &mut Graph,
        seq: &TokenSequence,
        mode: &mut ForwardMode,
    ) -> Result<(NodeId, Vec<bool>), ModelError> {
        let tables = EmbedNodes::bind(self, g);
        let mut x = self.embed_with(g, &tables, seq)?;
        let len = seq.ids.len();
        let key_mask: Vec<bool> = (0..len).map(|j| j < seq.true_length).collect();
        let attn_mask: Vec<bool> = (0..len * len).map(|idx| key_mask[idx % len]).collect();
        for l in 0..self.config.num_encoder_layers {
            x = self.attn_block(
                g,
                &format!("enc.{l}.ln1"),
                &format!("enc.{l}.attn"),
                x,
                None,
                &attn_mask,
                mode,
            )?;
            x = self.ffn_block(g, &format!("enc.{l}.ln2"), &format!("enc.{l}.ffn"), x, mode)?;
        }
        let gain = self.bind(g, "enc.final_ln.gain");
        let bias = self.bind(g, "enc.final_ln.bias");
        let out = g.layer_norm(x, gain, bias)?;
        Ok((out, key_mask))
    }

    /// Decoder over a target prefix with cross-attention into encoder
    /// states. Returns next-token logits at every prefix position. The
    /// causal mask keeps position k blind to positions after k.
    pub fn decode(
        &self,
        g: &mut Graph,
        prefix: &[TokenId],
        enc_states: NodeId,
        enc_key_mask: &[bool],
        mode: &mut ForwardMode,
    ) -> Result<NodeId, ModelError> {
        if prefix.is_empty() || prefix[0] != BEG {
            return Err(ModelError::BadPrefix);
        }
        let len = prefix.len();
        if len > self.config.max_length {
            return Err(ModelError::TooLong {
                len,
                max: self.config.max_length,
            });
        }
        // Decoder input embedding: token + position only.
        let token_table = self.bind(g, "embed.token");
        let pos_table = self.bind(g, "embed.pos");
        let token_ids: Vec<usize> = prefix.iter().map(|&t| t as usize).collect();
        let positions: Vec<usize> = (0..len).collect();
        let tok = g.embedding(token_table, &token_ids)?;
        let pos = g.embedding(pos_table, &positions)?;
        let mut x = g.add(tok, pos)?;

        let causal: Vec<bool> = (0..len * len)
            .map(|idx| (idx % len) <= (idx / len))
            .collect();
        let m = enc_key_mask.len();
        let cross: Vec<bool> = (0..len * m).map(|idx| enc_key_mask[idx % m]).collect();

        for l in 0..self.config.num_decoder_layers {
            x = self.attn_block(
                g,
                &format!("dec.{l}.ln1"),
                &format!("dec.{l}.self_attn"),
                x,
                None,
                &causal,
                mode,
            )?;
            x = self.attn_block(
                g,
                &format!("dec.{l}.ln2"),
                &format!("dec.{l}.cross_attn"),
                x,
                Some(enc_states),
                &cross,
                mode,
            )?;
            x = self.ffn_block(g, &format!("dec.{l}.ln3"), &format!("dec.{l}.ffn"), x, mode)?;
        }
        let gain = self.bind(g, "dec.final_ln.gain");
        let bias = self.bind(g, "dec.final_ln.bias");
        let h = g.layer_norm(x, gain, bias)?;
        let out_w = self.bind(g, "out.w");
        Ok(g.matmul(h, out_w)?)
    }

    /// Teacher-forced loss for one example: decoder input is the target
    /// shifted right, loss is mean cross-entropy over target tokens with
    /// [PAD] positions ignored.
    pub fn training_loss(
        &self,
        g: &mut Graph,
        input: &TokenSequence,
        target_tokens: &[TokenId],
        mode: &mut ForwardMode,
    ) -> Result<NodeId, ModelError> {
        if target_tokens.len() < 2 || target_tokens[0] != BEG {
            return Err(ModelError::BadTarget);
        }
        let (enc, key_mask) = self.encode(g, input, mode)?;
        let dec_input = &target_tokens[..target_tokens.len() - 1];
        let labels: Vec<usize> = target_tokens[1..].iter().map(|&t| t as usize).collect();
        let logits = self.decode(g, dec_input, enc, &key_mask, mode)?;
        Ok(g.cross_entropy(logits, &labels, Some(PAD as usize))?)
    }

    /// Encoder forward with detached values, for inference.
    pub fn encode_states(&self, seq: &TokenSequence) -> Result<EncodedStates, ModelError> {
        let mut g = Graph::new();
        let (node, key_mask) = self.encode(&mut g, seq, &mut ForwardMode::Eval)?;
        Ok(EncodedStates {
            states: g.value(node).clone(),
            key_mask,
        })
    }

    /// One decoder forward over a prefix, returning the logits tensor
    /// `[prefix_len x vocab_size]`.
    pub fn decode_step(
        &self,
        prefix: &[TokenId],
        enc: &EncodedStates,
    ) -> Result<Tensor, ModelError> {
        let mut g = Graph::new();
        let states = g.leaf(enc.states.clone());
        let logits = self.decode(&mut g, prefix, states, &enc.key_mask, &mut ForwardMode::Eval)?;
        Ok(g.value(logits).clone())
    }

    fn attn_block(
        &self,
        g: &mut Graph,
        ln_prefix: &str,
        attn_prefix: &str,
        x: NodeId,
        kv: Option<NodeId>,
        mask: &[bool],
        mode: &mut ForwardMode,
    ) -> Result<NodeId, ModelError> {
        let gain = self.bind(g, &format!("{ln_prefix}.gain"));
        let bias = self.bind(g, &format!("{ln_prefix}.bias"));
        let normed = g.layer_norm(x, gain, bias)?;
        let kv_in = kv.unwrap_or(normed);
        let attn_out = self.attention(g, attn_prefix, normed, kv_in, mask, mode)?;
        Ok(g.add(x, attn_out)?)
    }

    fn ffn_block(
        &self,
        g: &mut Graph,
        ln_prefix: &str,
        ffn_prefix: &str,
        x: NodeId,
        mode: &mut ForwardMode,
    ) -> Result<NodeId, ModelError> {
        let gain = self.bind(g, &format!("{ln_prefix}.gain"));
        let bias = self.bind(g, &format!("{ln_prefix}.bias"));
        let normed = g.layer_norm(x, gain, bias)?;
        let w1 = self.bind(g, &format!("{ffn_prefix}.w1"));
        let b1 = self.bind(g, &format!("{ffn_prefix}.b1"));
        let w2 = self.bind(g, &format!("{ffn_prefix}.w2"));
        let b2 = self.bind(g, &format!("{ffn_prefix}.b2"));
        let h = g.matmul(normed, w1)?;
        let h = g.add_bias(h, b1)?;
        let h = g.gelu(h)?;
        let h = self.dropout(g, h, mode)?;
        let y = g.matmul(h, w2)?;
        let y = g.add_bias(y, b2)?;
        Ok(g.add(x, y)?)
    }

    fn attention(
        &self,
        g: &mut Graph,
        prefix: &str,
        xq: NodeId,
        xkv: NodeId,
        mask: &[bool],
        mode: &mut ForwardMode,
    ) -> Result<NodeId, ModelError> {
        let d = self.config.d_model;
        let heads = self.config.num_heads;
        let dh = d / heads;
        let wq = self.bind(g, &format!("{prefix}.wq"));
        let bq = self.bind(g, &format!("{prefix}.bq"));
        let wk = self.bind(g, &format!("{prefix}.wk"));
        let bk = self.bind(g, &format!("{prefix}.bk"));
        let wv = self.bind(g, &format!("{prefix}.wv"));
        let bv = self.bind(g, &format!("{prefix}.bv"));
        let wo = self.bind(g, &format!("{prefix}.wo"));
        let bo = self.bind(g, &format!("{prefix}.bo"));

        let q = g.matmul(xq, wq)?;
        let q = g.add_bias(q, bq)?;
        let k = g.matmul(xkv, wk)?;
        let k = g.add_bias(k, bk)?;
        let v = g.matmul(xkv, wv)?;
        let v = g.add_bias(v, bv)?;

        let scale = 1.0 / (dh as Float).sqrt();
        let mut head_outputs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scaled = g.scale(scores, scale)?;
            let attn = g.masked_softmax(scaled, mask.to_vec())?;
            let attn = self.dropout(g, attn, mode)?;
            head_outputs.push(g.matmul(attn, vh)?);
        }
        let ctx = g.concat_cols(&head_outputs)?;
        let out = g.matmul(ctx, wo)?;
        Ok(g.add_bias(out, bo)?)
    }

    fn dropout(
        &self,
        g: &mut Graph,
        x: NodeId,
        mode: &mut ForwardMode,
    ) -> Result<NodeId, ModelError> {
        let rate = self.config.dropout;
        match mode {
            ForwardMode::Eval => Ok(x),
            ForwardMode::Train { .. } if rate == 0.0 => Ok(x),
            ForwardMode::Train { rng } => {
                use rand::Rng;
                let keep = 1.0 - rate;
                let shape = g.value(x).shape().to_vec();
                let mut mask = Tensor::zeros(&shape);
                for v in mask.data_mut() {
                    if rng.gen::<Float>() < keep {
                        *v = 1.0 / keep;
                    }
                }
                let mask = g.leaf(mask);
                Ok(g.mul(x, mask)?)
            }
        }
    }
}

struct EmbedNodes {
    token: NodeId,
    pos: NodeId,
    user: NodeId,
    item: NodeId,
}

impl EmbedNodes {
    fn bind(w: &ModelWeights, g: &mut Graph) -> Self {
        EmbedNodes {
            token: w.bind(g, "embed.token"),
            pos: w.bind(g, "embed.pos"),
            user: w.bind(g, "embed.user"),
            item: w.bind(g, "embed.item"),
        }
    }
}

/// Verify the full model's analytic gradients against central finite
/// differences, perturbing every parameter element. The oracle only runs
/// the forward pass, so it is independent of the reverse sweep.
pub fn check_model_gradients(
    weights: &ModelWeights,
    input: &TokenSequence,
    target: &[TokenId],
    cfg: GradCheck,
) -> Result<GradReport, String> {
    let loss_value = |w: &ModelWeights| -> Result<Float, String> {
        let mut g = Graph::new();
        let loss = w
            .training_loss(&mut g, input, target, &mut ForwardMode::Eval)
            .map_err(|e| e.to_string())?;
        Ok(g.value(loss).item())
    };

    let mut scratch = weights.clone();
    scratch.params.zero_grads();
    {
        let mut g = Graph::new();
        let loss = scratch
            .training_loss(&mut g, input, target, &mut ForwardMode::Eval)
            .map_err(|e| e.to_string())?;
        g.backward(loss).map_err(|e| e.to_string())?;
        g.accumulate_grads(&mut scratch.params);
    }

    let mut report = GradReport::default();
    for pid in 0..scratch.params.len() {
        for j in 0..scratch.params.get(pid).value.len() {
            let orig = scratch.params.get(pid).value.data()[j];
            scratch.params.get_mut(pid).value.data_mut()[j] = orig + cfg.eps;
            let plus = loss_value(&scratch)?;
            scratch.params.get_mut(pid).value.data_mut()[j] = orig - cfg.eps;
            let minus = loss_value(&scratch)?;
            scratch.params.get_mut(pid).value.data_mut()[j] = orig;
            let fd = (plus - minus) / (2.0 * cfg.eps);
            let ad = scratch.params.get(pid).grad.data()[j];
            let abs = (fd - ad).abs();
            let rel = abs / fd.abs().max(ad.abs()).max(1e-12);
            report.max_abs_diff = report.max_abs_diff.max(abs);
            report.max_rel_diff = report.max_rel_diff.max(rel);
            if abs > cfg.atol + cfg.rtol * fd.abs().max(ad.abs()) {
                return Err(format!(
                    "parameter {:?} element {j}: analytic {ad} vs finite-difference {fd}",
                    scratch.params.get(pid).name
                ));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UserSequence;
    use crate::tokenizer::{MaskSpec, Tokenizer, END, MASK};

    fn tiny_config(tok: &Tokenizer) -> GenRecConfig {
        GenRecConfig {
            vocab_size: tok.vocab_size(),
            num_users: tok.num_users(),
            num_items: tok.num_items(),
            d_model: 8,
            num_encoder_layers: 2,
            num_decoder_layers: 2,
            num_heads: 2,
            ffn_dim: 16,
            max_length: 64,
            dropout: 0.0,
        }
    }

    fn fixture() -> (Tokenizer, ModelWeights) {
        let seqs: Vec<UserSequence> = (0..3)
            .map(|u| UserSequence {
                user_id: format!("u{u}"),
                items: (0..6).map(|i| format!("i{i}")).collect(),
            })
            .collect();
        let tok = Tokenizer::build(&seqs, 64).unwrap();
        let config = tiny_config(&tok);
        let weights = ModelWeights::init(config, 7).unwrap();
        (tok, weights)
    }

    fn encode_fixture_input(tok: &Tokenizer) -> TokenSequence {
        let items: Vec<String> = (0..3).map(|i| format!("i{i}")).collect();
        tok.encode("u0", &items, MaskSpec::AppendMask).unwrap().0
    }

    fn table_row<'a>(w: &'a ModelWeights, name: &str, row: usize) -> &'a [Float] {
        let id = w.param_id(name).unwrap();
        let t = &w.params.get(id).value;
        let d = t.shape()[1];
        &t.data()[row * d..(row + 1) * d]
    }

    #[test]
    fn embed_is_sum_of_lookups() {
        let (tok, w) = fixture();
        let seq = encode_fixture_input(&tok);
        let mut g = Graph::new();
        let x = w.embed(&mut g, &seq).unwrap();
        let d = w.config.d_model;
        let out = g.value(x).data();
        for (j, (&id, tag)) in seq.ids.iter().zip(&seq.tags).enumerate() {
            let tok_row = table_row(&w, "embed.token", id as usize);
            let pos_row = table_row(&w, "embed.pos", j);
            for col in 0..d {
                let mut expected = tok_row[col] + pos_row[col];
                match tag {
                    EntityTag::User(u) => expected += table_row(&w, "embed.user", *u as usize)[col],
                    EntityTag::Item(i) => expected += table_row(&w, "embed.item", *i as usize)[col],
                    EntityTag::None => {}
                }
                let got = out[j * d + col];
                assert!(
                    (got - expected).abs() < 1e-6,
                    "position {j} col {col}: {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn embed_special_token_has_no_id_contribution() {
        let (tok, mut w) = fixture();
        // Zero everything but the token table; specials then equal their
        // token row plus a zero position row.
        for name in ["embed.pos", "embed.user", "embed.item"] {
            let id = w.param_id(name).unwrap();
            w.params.get_mut(id).value.fill(0.0);
        }
        let seq = encode_fixture_input(&tok);
        let mut g = Graph::new();
        let x = w.embed(&mut g, &seq).unwrap();
        let d = w.config.d_model;
        let out = g.value(x).data();
        for (j, &id) in seq.ids.iter().enumerate() {
            let tok_row = table_row(&w, "embed.token", id as usize);
            for col in 0..d {
                assert_eq!(out[j * d + col], tok_row[col]);
            }
        }
    }

    #[test]
    fn embed_one_hot_probe_counts_contributions() {
        let (tok, mut w) = fixture();
        for name in ["embed.token", "embed.pos", "embed.user", "embed.item"] {
            let id = w.param_id(name).unwrap();
            w.params.get_mut(id).value.fill(1.0);
        }
        let seq = encode_fixture_input(&tok);
        let mut g = Graph::new();
        let x = w.embed(&mut g, &seq).unwrap();
        let d = w.config.d_model;
        let out = g.value(x).data();
        for (j, tag) in seq.tags.iter().enumerate() {
            let expected = match tag {
                EntityTag::None => 2.0,
                _ => 3.0,
            };
            assert_eq!(out[j * d], expected, "position {j}");
        }
    }

    #[test]
    fn id_tables_are_independent() {
        let (tok, w) = fixture();
        let seq = encode_fixture_input(&tok);
        let d = w.config.d_model;

        let baseline = {
            let mut g = Graph::new();
            let x = w.embed(&mut g, &seq).unwrap();
            g.value(x).clone()
        };

        let mut wu = w.clone();
        let uid = wu.param_id("embed.user").unwrap();
        for v in wu.params.get_mut(uid).value.data_mut() {
            *v += 1.0;
        }
        let perturbed = {
            let mut g = Graph::new();
            let x = wu.embed(&mut g, &seq).unwrap();
            g.value(x).clone()
        };
        for (j, tag) in seq.tags.iter().enumerate() {
            let changed = baseline.data()[j * d..(j + 1) * d]
                != perturbed.data()[j * d..(j + 1) * d];
            match tag {
                EntityTag::User(_) => assert!(changed, "user token {j} should change"),
                _ => assert!(!changed, "non-user token {j} must not change"),
            }
        }
    }

    #[test]
    fn encoder_permutation_equivariant_without_positions() {
        let (tok, mut w) = fixture();
        let pid = w.param_id("embed.pos").unwrap();
        w.params.get_mut(pid).value.fill(0.0);
        let seq = encode_fixture_input(&tok);
        let n = seq.true_length;
        // Rotate all real positions by one.
        let perm: Vec<usize> = (0..n).map(|j| (j + 1) % n).collect();
        let mut permuted = seq.clone();
        for (j, &src) in perm.iter().enumerate() {
            permuted.ids[j] = seq.ids[src];
            permuted.tags[j] = seq.tags[src];
        }
        let a = w.encode_states(&seq).unwrap().states;
        let b = w.encode_states(&permuted).unwrap().states;
        let d = w.config.d_model;
        // Permuting the keys reorders float summation inside attention, so
        // rows agree to rounding, not bitwise.
        for (j, &src) in perm.iter().enumerate() {
            for col in 0..d {
                let x = a.data()[src * d + col];
                let y = b.data()[j * d + col];
                assert!((x - y).abs() < 1e-4, "row {j} col {col}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn encoder_ignores_padded_values() {
        let (tok, w) = fixture();
        let mut seq = encode_fixture_input(&tok);
        seq.pad_to(seq.true_length + 4);
        let a = w.encode_states(&seq).unwrap().states;
        // Same real prefix, garbage ids and tags in the padding.
        let mut noisy = seq.clone();
        for j in noisy.true_length..noisy.ids.len() {
            noisy.ids[j] = END;
            noisy.tags[j] = EntityTag::Item(0);
        }
        let b = w.encode_states(&noisy).unwrap().states;
        let d = w.config.d_model;
        for j in 0..seq.true_length {
            assert_eq!(
                a.data()[j * d..(j + 1) * d],
                b.data()[j * d..(j + 1) * d],
                "non-pad row {j} must be invariant"
            );
        }
    }

    #[test]
    fn decoder_is_causal() {
        let (tok, w) = fixture();
        let seq = encode_fixture_input(&tok);
        let enc = w.encode_states(&seq).unwrap();
        let prefix_a = vec![BEG, 4, 5, 6];
        let mut prefix_b = prefix_a.clone();
        prefix_b[2] = 7; // change position 2
        let la = w.decode_step(&prefix_a, &enc).unwrap();
        let lb = w.decode_step(&prefix_b, &enc).unwrap();
        let v = w.config.vocab_size;
        for pos in 0..2 {
            assert_eq!(
                la.data()[pos * v..(pos + 1) * v],
                lb.data()[pos * v..(pos + 1) * v],
                "logits at position {pos} must not see position 2"
            );
        }
        assert_ne!(
            la.data()[2 * v..3 * v],
            lb.data()[2 * v..3 * v],
            "position 2 itself should differ"
        );
    }

    #[test]
    fn all_pad_encoder_reduces_decoder_to_language_model() {
        let (tok, w) = fixture();
        let seq = encode_fixture_input(&tok);
        let mut enc = w.encode_states(&seq).unwrap();
        enc.key_mask.iter_mut().for_each(|m| *m = false);
        let prefix = vec![BEG, 4, 5];
        let la = w.decode_step(&prefix, &enc).unwrap();
        // Different encoder content, same all-masked key mask.
        enc.states.fill(123.0);
        let lb = w.decode_step(&prefix, &enc).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn untrained_loss_is_near_ln_vocab() {
        let (tok, w) = fixture();
        let seq = encode_fixture_input(&tok);
        let target = tok.target_tokens("i3").unwrap();
        let mut g = Graph::new();
        let loss = w
            .training_loss(&mut g, &seq, &target, &mut ForwardMode::Eval)
            .unwrap();
        let expected = (w.config.vocab_size as Float).ln();
        let got = g.value(loss).item();
        assert!(
            (got - expected).abs() / expected < 0.05,
            "loss {got} vs ln(V) {expected}"
        );
    }

    #[test]
    fn loss_is_non_negative_over_random_models() {
        let (tok, _) = fixture();
        let seq = encode_fixture_input(&tok);
        let target = tok.target_tokens("i2").unwrap();
        for seed in 0..100 {
            let config = tiny_config(&tok);
            let w = ModelWeights::init(config, seed).unwrap();
            let mut g = Graph::new();
            let loss = w
                .training_loss(&mut g, &seq, &target, &mut ForwardMode::Eval)
                .unwrap();
            assert!(g.value(loss).item() >= 0.0, "seed {seed}");
        }
    }

    #[test]
    fn memorizes_single_example() {
        use crate::numerics::{adamw_step, AdamWState};
        let (tok, mut w) = fixture();
        let seq = encode_fixture_input(&tok);
        let target = tok.target_tokens("i3").unwrap();
        let mut opt = AdamWState::new(&w.params, 1e-2, 0.0);
        let mut last = Float::MAX;
        for _ in 0..200 {
            w.params.zero_grads();
            let mut g = Graph::new();
            let loss = w
                .training_loss(&mut g, &seq, &target, &mut ForwardMode::Eval)
                .unwrap();
            last = g.value(loss).item();
            g.backward(loss).unwrap();
            g.accumulate_grads(&mut w.params);
            adamw_step(&mut opt, &mut w.params, 1e-2).unwrap();
        }
        assert!(last < 0.01, "final loss {last}");
    }

    #[test]
    fn param_count_formula() {
        // Desk-shaped config with known sizes; total derived term by term:
        // tables (50+512+10+20)*64 = 37888, encoder 2*49984, decoder
        // 2*66752, final norms 256, output 3200.
        let config = GenRecConfig {
            vocab_size: 50,
            num_users: 10,
            num_items: 20,
            d_model: 64,
            num_encoder_layers: 2,
            num_decoder_layers: 2,
            num_heads: 4,
            ffn_dim: 256,
            max_length: 512,
            dropout: 0.1,
        };
        assert_eq!(param_count(&config), 274_816);
        let w = ModelWeights::init(config, 0).unwrap();
        assert_eq!(w.params.num_scalars(), 274_816);
    }

    #[test]
    fn param_count_table_term() {
        // Growing only the item vocabulary adds exactly d scalars per item.
        let (tok, _) = fixture();
        let mut a = tiny_config(&tok);
        let mut b = tiny_config(&tok);
        a.num_items = 10;
        b.num_items = 11;
        assert_eq!(param_count(&b) - param_count(&a), a.d_model);
        // Growing the vocab adds a token row plus an output column.
        a.vocab_size = 30;
        b.vocab_size = 31;
        b.num_items = 10;
        assert_eq!(param_count(&b) - param_count(&a), 2 * a.d_model);
    }

    #[test]
    fn params_match_count_for_fixture() {
        let (_, w) = fixture();
        assert_eq!(w.params.num_scalars(), param_count(&w.config));
    }

    #[test]
    fn from_params_round_trip_and_mismatch() {
        let (_, w) = fixture();
        let rebuilt = ModelWeights::from_params(w.config.clone(), w.params.clone()).unwrap();
        assert_eq!(rebuilt.params.num_scalars(), w.params.num_scalars());

        let mut bad = w.config.clone();
        bad.d_model = 16;
        bad.ffn_dim = 32;
        assert!(matches!(
            ModelWeights::from_params(bad, w.params.clone()),
            Err(ModelError::LayoutMismatch(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = GenRecConfig::desk_default(10, 2, 3);
        c.num_heads = 5; // 64 % 5 != 0
        assert!(c.validate().is_err());
        let mut c = GenRecConfig::desk_default(10, 2, 3);
        c.max_length = 2;
        assert!(c.validate().is_err());
        let mut c = GenRecConfig::desk_default(10, 2, 3);
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        assert!(GenRecConfig::desk_default(10, 2, 3).validate().is_ok());
    }

    #[test]
    fn decode_rejects_bad_prefix() {
        let (tok, w) = fixture();
        let seq = encode_fixture_input(&tok);
        let enc = w.encode_states(&seq).unwrap();
        assert!(matches!(
            w.decode_step(&[MASK, 4], &enc),
            Err(ModelError::BadPrefix)
        ));
        assert!(matches!(w.decode_step(&[], &enc), Err(ModelError::BadPrefix)));
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let (tok, w) = fixture();
        let seq = encode_fixture_input(&tok);
        let target = tok.target_tokens("i4").unwrap();
        let report =
            check_model_gradients(&w, &seq, &target, GradCheck::default()).unwrap();
        assert!(report.max_abs_diff.is_finite());
    }

    #[test]
    fn dropout_draws_masks_in_train_mode_only() {
        let (tok, mut w) = fixture();
        w.config.dropout = 0.5;
        let seq = encode_fixture_input(&tok);
        let a = w.encode_states(&seq).unwrap().states;
        let b = w.encode_states(&seq).unwrap().states;
        assert_eq!(a, b, "eval mode is deterministic");

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new();
        let (x1, _) = w
            .encode(&mut g, &seq, &mut ForwardMode::Train { rng: &mut rng })
            .unwrap();
        let t1 = g.value(x1).clone();
        assert_ne!(t1, a, "training dropout perturbs activations");
    }
}
