//! Desk-scale evaluation: zero-bit ROC, BER against capacity, null
//! calibration, secrecy statistics and the channel robustness table.
//!
//! Every experiment derives all keys and random streams from one master seed
//! and a per-trial index, so runs are reproducible and sequential and
//! parallel execution produce identical reports.

mod experiments;
mod export;
mod roc;
mod stats;

pub use experiments::{
    run_capacity_sweep, run_null_calibration, run_robustness_matrix, run_secrecy_analysis,
    run_zero_bit_experiment, CapacityCurve, CapacityEntry, CapacityParams, CapacityTrial,
    NullCalibration, NullParams, NullTrial, RobustnessParams, RobustnessReport, RobustnessRow,
    RobustnessTrial, SecrecyParams, SecrecyReport, ZeroBitParams, ZeroBitReport, ZeroBitTrial,
};
pub use export::{
    write_capacity_csv, write_rank_frequency_csv, write_robustness_csv, write_roc_csv,
};
pub use roc::{pairwise_auc, RocCurve};
pub use stats::{
    bit_errors, perplexity, quartiles, zipf_stats, Quartiles, ZipfStats, ZIPF_MIN_TOKENS,
};

use serde::{Deserialize, Serialize};

use crate::detector::{CountMode, DEFAULT_THETA};
use crate::exec::ExecMode;
use crate::generator::{train_ngram, NgramModel, SamplerConfig, DEFAULT_ORDER, DEFAULT_SMOOTHING};
use crate::keying::DEFAULT_DELTA;
use crate::text_codec::{NormalizeFlags, TokenSequence, Vocabulary};
use crate::Result;

/// Bundled English prose, paragraphs separated by blank lines.
pub const BUNDLED_CORPUS: &str = include_str!("../../data/corpus.txt");

/// Splits at blank lines; paragraphs that are only whitespace are skipped.
pub fn split_paragraphs(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut end = 0;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if line.trim().is_empty() {
            if let Some(s) = start.take() {
                out.push(&text[s..end]);
            }
        } else {
            start.get_or_insert(offset);
            end = offset + line.trim_end().len();
        }
        offset += line.len();
    }
    if let Some(s) = start {
        out.push(&text[s..end]);
    }
    out
}

/// Vocabulary, tokenized paragraphs and n-gram model built from one corpus.
#[derive(Debug, Clone)]
pub struct Workbench {
    pub vocab: Vocabulary,
    pub paragraphs: Vec<TokenSequence>,
    pub model: NgramModel,
}

impl Workbench {
    pub fn from_text(text: &str, order: usize, smoothing: f64) -> Result<Self> {
        let vocab = Vocabulary::from_text(text, NormalizeFlags::ALL)?;
        let paragraphs: Vec<TokenSequence> = split_paragraphs(text)
            .into_iter()
            .map(|p| vocab.encode_text(p, NormalizeFlags::ALL))
            .filter(|s| !s.is_empty())
            .collect();
        let model = train_ngram(&paragraphs, &vocab, order, smoothing)?;
        Ok(Self {
            vocab,
            paragraphs,
            model,
        })
    }

    pub fn bundled() -> Result<Self> {
        Self::from_text(BUNDLED_CORPUS, DEFAULT_ORDER, DEFAULT_SMOOTHING)
    }

    /// The first `len` tokens of the concatenated paragraphs.
    pub fn opening(&self, len: usize) -> TokenSequence {
        let ids = self
            .paragraphs
            .iter()
            .flat_map(|p| p.ids.iter().copied())
            .take(len)
            .collect();
        TokenSequence::from_ids(ids, self.vocab.version_tag())
    }
}

/// Settings shared by all experiments. Recorded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub master_seed: u64,
    pub delta: f64,
    pub theta: f64,
    pub count_mode: CountMode,
    /// `rng_seed` is ignored; each trial gets its own.
    pub sampler: SamplerConfig,
    #[serde(skip)]
    pub exec: ExecMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            delta: DEFAULT_DELTA,
            theta: DEFAULT_THETA,
            count_mode: CountMode::default(),
            sampler: SamplerConfig::default(),
            exec: ExecMode::default(),
        }
    }
}

impl EvalConfig {
    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn with_exec(mut self, exec: ExecMode) -> Self {
        self.exec = exec;
        self
    }
}
