use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LogitSource;
use crate::text_codec::{TokenId, TokenSequence, Vocabulary};
use crate::{Error, Result};

/// Begin-of-sequence padding id; never a vocabulary id.
pub const BOS: TokenId = TokenId::MAX;
pub const DEFAULT_ORDER: usize = 3;
/// Additive smoothing. Must stay well below `exp(-alpha)` for biased
/// sampling to prefer seen successors over unseen keywords.
pub const DEFAULT_SMOOTHING: f64 = 0.001;

#[derive(Debug, Clone, Default, PartialEq)]
struct Row {
    total: u64,
    successors: Vec<(TokenId, u32)>,
}

/// Additively smoothed n-gram counts: `logit(w | ctx) = ln(count(ctx, w) + λ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelFile", try_from = "ModelFile")]
pub struct NgramModel {
    order: usize,
    smoothing: f64,
    vocab_size: usize,
    vocab_version: u64,
    rows: HashMap<Vec<TokenId>, Row>,
}

pub fn train_ngram(
    corpus: &[TokenSequence],
    vocab: &Vocabulary,
    order: usize,
    smoothing: f64,
) -> Result<NgramModel> {
    if order == 0 {
        return Err(Error::out_of_range("order", 0.0, "[1, inf)"));
    }
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(Error::out_of_range("smoothing", smoothing, "(0, inf)"));
    }
    if corpus.iter().all(TokenSequence::is_empty) {
        return Err(Error::Empty("corpus"));
    }

    let mut counts: HashMap<Vec<TokenId>, HashMap<TokenId, u32>> = HashMap::new();
    for seq in corpus {
        vocab.check_version(seq.vocab_version)?;
        let mut padded = vec![BOS; order - 1];
        padded.extend_from_slice(&seq.ids);
        for window in padded.windows(order) {
            let (ctx, next) = window.split_at(order - 1);
            *counts
                .entry(ctx.to_vec())
                .or_default()
                .entry(next[0])
                .or_default() += 1;
        }
    }

    let rows = counts
        .into_iter()
        .map(|(ctx, succ)| {
            let mut successors: Vec<(TokenId, u32)> = succ.into_iter().collect();
            successors.sort_unstable();
            let total = successors.iter().map(|&(_, c)| u64::from(c)).sum();
            (ctx, Row { total, successors })
        })
        .collect();

    Ok(NgramModel {
        order,
        smoothing,
        vocab_size: vocab.len(),
        vocab_version: vocab.version_tag(),
        rows,
    })
}

impl NgramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn context_count(&self) -> usize {
        self.rows.len()
    }

    fn context_key(&self, context: &[TokenId]) -> Vec<TokenId> {
        let want = self.order - 1;
        let have = context.len().min(want);
        let mut key = vec![BOS; want - have];
        key.extend_from_slice(&context[context.len() - have..]);
        key
    }

    fn row(&self, context: &[TokenId]) -> Option<&Row> {
        self.rows.get(&self.context_key(context))
    }

    /// Smoothed `ln P(next | context)`.
    pub fn log_prob(&self, context: &[TokenId], next: TokenId) -> f64 {
        let lambda = self.smoothing;
        let denom_extra = lambda * self.vocab_size as f64;
        match self.row(context) {
            Some(row) => {
                let c = row
                    .successors
                    .binary_search_by_key(&next, |&(id, _)| id)
                    .map(|i| row.successors[i].1)
                    .unwrap_or(0);
                ((f64::from(c) + lambda) / (row.total as f64 + denom_extra)).ln()
            }
            None => -(self.vocab_size as f64).ln(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl LogitSource for NgramModel {
    fn vocab_version(&self) -> u64 {
        self.vocab_version
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logits(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        let mut logits = vec![self.smoothing.ln(); self.vocab_size];
        if let Some(row) = self.row(context) {
            for &(id, c) in &row.successors {
                logits[id as usize] = (f64::from(c) + self.smoothing).ln();
            }
        }
        Ok(logits)
    }

    fn seed_len(&self) -> usize {
        self.order - 1
    }
}

/// On-disk form: rows sorted by context so the JSON is byte-stable.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    order: usize,
    smoothing: f64,
    vocab_size: usize,
    vocab_version: String,
    rows: Vec<RowFile>,
}

#[derive(Serialize, Deserialize)]
struct RowFile {
    context: Vec<Option<TokenId>>,
    successors: Vec<(TokenId, u32)>,
}

impl From<NgramModel> for ModelFile {
    fn from(m: NgramModel) -> Self {
        let mut rows: Vec<RowFile> = m
            .rows
            .into_iter()
            .map(|(ctx, row)| RowFile {
                context: ctx
                    .into_iter()
                    .map(|id| (id != BOS).then_some(id))
                    .collect(),
                successors: row.successors,
            })
            .collect();
        rows.sort_unstable_by(|a, b| a.context.cmp(&b.context));
        ModelFile {
            order: m.order,
            smoothing: m.smoothing,
            vocab_size: m.vocab_size,
            vocab_version: format!("{:016x}", m.vocab_version),
            rows,
        }
    }
}

impl TryFrom<ModelFile> for NgramModel {
    type Error = String;

    fn try_from(f: ModelFile) -> Result<Self, String> {
        if f.order == 0 || f.smoothing.is_nan() || f.smoothing <= 0.0 {
            return Err("invalid order or smoothing".into());
        }
        let vocab_version = u64::from_str_radix(&f.vocab_version, 16).map_err(|e| e.to_string())?;
        let mut rows = HashMap::with_capacity(f.rows.len());
        for r in f.rows {
            if r.context.len() != f.order - 1 {
                return Err("context length does not match order".into());
            }
            if r.successors
                .iter()
                .any(|&(id, _)| id as usize >= f.vocab_size)
            {
                return Err("successor id out of range".into());
            }
            let ctx = r.context.into_iter().map(|id| id.unwrap_or(BOS)).collect();
            let mut successors = r.successors;
            successors.sort_unstable();
            let total = successors.iter().map(|&(_, c)| u64::from(c)).sum();
            rows.insert(ctx, Row { total, successors });
        }
        Ok(NgramModel {
            order: f.order,
            smoothing: f.smoothing,
            vocab_size: f.vocab_size,
            vocab_version,
            rows,
        })
    }
}
