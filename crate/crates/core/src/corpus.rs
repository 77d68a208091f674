//! Interaction log ingestion, chronological sequence building, iterative
//! 5-core filtering and leave-one-out splits.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::BufRead;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: invalid timestamp {value:?}")]
    BadTimestamp { line: usize, value: String },
    #[error("line {line}: empty {field}")]
    EmptyField { line: usize, field: &'static str },
    #[error("sequence for user {user} has {len} items, need at least 3 for a split")]
    TooShortForSplit { user: String, len: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("split line {line}: {reason}")]
    BadSplitLine { line: usize, reason: String },
    #[error("id {id:?} contains a reserved character (tab, comma or newline)")]
    ReservedChar { id: String },
}

/// One raw interaction record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: u64,
}

/// A user with their items in chronological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSequence {
    pub user_id: String,
    pub items: Vec<String>,
}

/// Leave-one-out split of one user sequence: last item is test, the item
/// before it is validation, the remainder is training data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSequence {
    pub user_id: String,
    pub train_items: Vec<String>,
    pub val_item: String,
    pub test_item: String,
}

impl SplitSequence {
    /// The original sequence: train ++ [val, test].
    pub fn full_sequence(&self) -> Vec<String> {
        let mut out = self.train_items.clone();
        out.push(self.val_item.clone());
        out.push(self.test_item.clone());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub num_users: usize,
    pub num_items: usize,
    pub avg_items_per_user: f64,
    pub avg_users_per_item: f64,
}

/// Parse a TSV byte stream: one interaction per line,
/// `user_id \t item_id \t timestamp`. Records come back in input order.
pub fn ingest<R: BufRead>(source: R) -> Result<Vec<Interaction>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(CorpusError::FieldCount {
                line: lineno,
                found: fields.len(),
            });
        }
        if fields[0].is_empty() {
            return Err(CorpusError::EmptyField {
                line: lineno,
                field: "user_id",
            });
        }
        if fields[1].is_empty() {
            return Err(CorpusError::EmptyField {
                line: lineno,
                field: "item_id",
            });
        }
        let timestamp: u64 = fields[2].parse().map_err(|_| CorpusError::BadTimestamp {
            line: lineno,
            value: fields[2].to_string(),
        })?;
        out.push(Interaction {
            user_id: fields[0].to_string(),
            item_id: fields[1].to_string(),
            timestamp,
        });
    }
    Ok(out)
}

/// Group interactions per user and sort each user's items by timestamp
/// ascending. The sort is stable, so ties keep raw input order. Output is
/// sorted by user_id.
pub fn build_sequences(interactions: &[Interaction]) -> Vec<UserSequence> {
    let mut per_user: BTreeMap<&str, Vec<(u64, usize)>> = BTreeMap::new();
    for (pos, rec) in interactions.iter().enumerate() {
        per_user.entry(&rec.user_id).or_default().push((rec.timestamp, pos));
    }
    per_user
        .into_iter()
        .map(|(user, mut recs)| {
            recs.sort_by_key(|&(ts, _)| ts);
            UserSequence {
                user_id: user.to_string(),
                items: recs
                    .into_iter()
                    .map(|(_, pos)| interactions[pos].item_id.clone())
                    .collect(),
            }
        })
        .collect()
}

/// Iterative k-core filtering: drop users with fewer than `min_count` items
/// and items occurring in fewer than `min_count` sequences, until a fixed
/// point. The result is the maximal subset where every remaining user and
/// item meets the threshold.
pub fn core_filter(sequences: &[UserSequence], min_count: usize) -> Vec<UserSequence> {
    assert!(min_count >= 1, "min_count must be at least 1");
    let mut seqs: Vec<UserSequence> = sequences.to_vec();
    loop {
        let mut item_support: HashMap<&str, usize> = HashMap::new();
        for seq in &seqs {
            let distinct: HashSet<&str> = seq.items.iter().map(String::as_str).collect();
            for item in distinct {
                *item_support.entry(item).or_insert(0) += 1;
            }
        }
        let dead_items: HashSet<String> = item_support
            .iter()
            .filter(|&(_, &n)| n < min_count)
            .map(|(item, _)| item.to_string())
            .collect();

        let mut changed = !dead_items.is_empty();
        let mut next = Vec::with_capacity(seqs.len());
        for mut seq in seqs {
            if !dead_items.is_empty() {
                seq.items.retain(|item| !dead_items.contains(item));
            }
            if seq.items.len() < min_count {
                changed = true;
            } else {
                next.push(seq);
            }
        }
        seqs = next;
        if !changed {
            return seqs;
        }
    }
}

/// Split one sequence leave-one-out style. Needs at least 3 items.
pub fn leave_one_out(seq: &UserSequence) -> Result<SplitSequence, CorpusError> {
    let n = seq.items.len();
    if n < 3 {
        return Err(CorpusError::TooShortForSplit {
            user: seq.user_id.clone(),
            len: n,
        });
    }
    Ok(SplitSequence {
        user_id: seq.user_id.clone(),
        train_items: seq.items[..n - 2].to_vec(),
        val_item: seq.items[n - 2].clone(),
        test_item: seq.items[n - 1].clone(),
    })
}

/// Distinct user/item counts and interaction averages. The identity
/// `num_users * avg_items_per_user == num_items * avg_users_per_item`
/// holds because both sides equal the total interaction count.
pub fn stats(sequences: &[UserSequence]) -> DatasetStats {
    let num_users = sequences.len();
    let mut items: BTreeSet<&str> = BTreeSet::new();
    let mut total: usize = 0;
    for seq in sequences {
        total += seq.items.len();
        for item in &seq.items {
            items.insert(item);
        }
    }
    let num_items = items.len();
    DatasetStats {
        num_users,
        num_items,
        avg_items_per_user: if num_users == 0 {
            0.0
        } else {
            total as f64 / num_users as f64
        },
        avg_users_per_item: if num_items == 0 {
            0.0
        } else {
            total as f64 / num_items as f64
        },
    }
}

fn check_id(id: &str) -> Result<(), CorpusError> {
    if id.contains('\t') || id.contains(',') || id.contains('\n') {
        return Err(CorpusError::ReservedChar { id: id.to_string() });
    }
    Ok(())
}

/// Render splits as the split file: one line per user,
/// `user_id \t comma-joined train items \t val_item \t test_item`,
/// sorted by user_id.
pub fn render_split_file(splits: &[SplitSequence]) -> Result<String, CorpusError> {
    let mut sorted: Vec<&SplitSequence> = splits.iter().collect();
    sorted.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    let mut out = String::new();
    for split in sorted {
        check_id(&split.user_id)?;
        for item in split
            .train_items
            .iter()
            .chain([&split.val_item, &split.test_item])
        {
            check_id(item)?;
        }
        out.push_str(&split.user_id);
        out.push('\t');
        out.push_str(&split.train_items.join(","));
        out.push('\t');
        out.push_str(&split.val_item);
        out.push('\t');
        out.push_str(&split.test_item);
        out.push('\n');
    }
    Ok(out)
}

/// Parse a split file produced by [`render_split_file`].
pub fn parse_split_file(text: &str) -> Result<Vec<SplitSequence>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(CorpusError::BadSplitLine {
                line: lineno,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let train_items: Vec<String> = if fields[1].is_empty() {
            Vec::new()
        } else {
            fields[1].split(',').map(str::to_string).collect()
        };
        if fields[0].is_empty() || fields[2].is_empty() || fields[3].is_empty() {
            return Err(CorpusError::BadSplitLine {
                line: lineno,
                reason: "empty field".to_string(),
            });
        }
        out.push(SplitSequence {
            user_id: fields[0].to_string(),
            train_items,
            val_item: fields[2].to_string(),
            test_item: fields[3].to_string(),
        });
    }
    Ok(out)
}

/// Render dataset statistics in the usual dataset-table shape.
pub fn render_stats(stats: &DatasetStats) -> String {
    format!(
        "# Users\t{}\n# Items\t{}\nAvg. Items / User\t{:.1}\nAvg. Users / Item\t{:.1}\n",
        stats.num_users, stats.num_items, stats.avg_items_per_user, stats.avg_users_per_item
    )
}
