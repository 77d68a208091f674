//! Deterministic synthetic interaction logs for fixtures and demo runs.
//!
//! Each user walks the item catalog cyclically from a start offset, so the
//! next item is always fully determined by the previous one. An optional
//! noise rate substitutes random items, which makes the pattern harder
//! without destroying it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Interaction;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub seq_len: usize,
    /// Probability that a position is replaced by a uniformly random item.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// The desk-scale fixture: 200 users over 30 items, sequences of 8,
    /// noise-free.
    pub fn cyclic() -> Self {
        SyntheticSpec {
            num_users: 200,
            num_items: 30,
            seq_len: 8,
            noise: 0.0,
            seed: 7,
        }
    }

    /// Same generator with 20% random item substitutions.
    pub fn noisy() -> Self {
        SyntheticSpec {
            noise: 0.2,
            ..Self::cyclic()
        }
    }
}

/// Generate interactions: user `u` visits items
/// `(u + k) mod num_items` for k in 0..seq_len, timestamps 0..seq_len.
pub fn generate(spec: &SyntheticSpec) -> Vec<Interaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.num_users * spec.seq_len);
    for u in 0..spec.num_users {
        for k in 0..spec.seq_len {
            let clean = (u + k) % spec.num_items;
            let item = if spec.noise > 0.0 && rng.gen::<f64>() < spec.noise {
                rng.gen_range(0..spec.num_items)
            } else {
                clean
            };
            out.push(Interaction {
                user_id: format!("user{u:04}"),
                item_id: format!("prod{item:03}"),
                timestamp: k as u64,
            });
        }
    }
    out
}

/// The TSV form accepted by ingestion.
pub fn render_tsv(interactions: &[Interaction]) -> String {
    let mut out = String::new();
    for rec in interactions {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            rec.user_id, rec.item_id, rec.timestamp
        ));
    }
    out
}
