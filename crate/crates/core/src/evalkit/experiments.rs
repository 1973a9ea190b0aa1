use serde::{Deserialize, Serialize};

use super::roc::{pairwise_auc, RocCurve};
use super::stats::{bit_errors, perplexity, quartiles, zipf_stats, Quartiles, ZipfStats};
use super::EvalConfig;
use crate::channels::{apply_channel, ChannelSpec};
use crate::detector::{count_keywords, decide_counts, multi_bit_decode_with, CountMode};
use crate::generator::{encode, LogitSource, NgramModel, SamplerConfig};
use crate::keying::{derive_keyset, KeySet, KeywordPartition, MasterSeed};
use crate::rng::{derive_seed, SplitMix64};
use crate::text_codec::{NormalizeFlags, TokenSequence, Vocabulary};
use crate::{Error, Result};

impl EvalConfig {
    fn master(&self) -> MasterSeed {
        MasterSeed::from_u64(self.master_seed)
    }

    fn sampler_for(&self, rng_seed: u64, alpha: f64) -> SamplerConfig {
        SamplerConfig {
            alpha,
            rng_seed,
            ..self.sampler.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        crate::keying::check_delta(self.delta)?;
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::out_of_range("theta", self.theta, "(0, 1)"));
        }
        Ok(())
    }
}

fn fraction(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

// ---------------------------------------------------------------- zero-bit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroBitParams {
    pub eval: EvalConfig,
    pub n_marked: usize,
    pub n_unmarked: usize,
}

impl Default for ZeroBitParams {
    fn default() -> Self {
        Self {
            eval: EvalConfig::default(),
            n_marked: 100,
            n_unmarked: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroBitTrial {
    pub index: usize,
    pub marked: bool,
    pub key: String,
    pub n: u64,
    pub t: u64,
    pub sf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroBitReport {
    pub config: ZeroBitParams,
    pub text_len: usize,
    pub auc: f64,
    pub pairwise_auc: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub roc: RocCurve,
    pub trials: Vec<ZeroBitTrial>,
}

/// Regenerates `cover` once per trial under a fresh key: with the configured
/// bias for marked texts, with no bias for unmarked ones. Every text is then
/// tested against the key it was generated with.
pub fn run_zero_bit_experiment(
    cover: &TokenSequence,
    source: &dyn LogitSource,
    params: &ZeroBitParams,
) -> Result<ZeroBitReport> {
    let eval = &params.eval;
    eval.validate()?;
    if params.n_marked < 2 || params.n_unmarked < 2 {
        return Err(Error::out_of_range(
            "trials per class",
            params.n_marked.min(params.n_unmarked) as f64,
            "[2, inf)",
        ));
    }
    let master = eval.master();
    let total = params.n_marked + params.n_unmarked;
    let trials = eval.exec.try_map(total, |index| {
        let marked = index < params.n_marked;
        let trial = master.child("zero-bit", index as u64);
        let partition =
            KeywordPartition::new(trial.derive_key(0), eval.delta, cover.vocab_version)?;
        let alpha = if marked { eval.sampler.alpha } else { 0.0 };
        let text = encode(
            cover,
            source,
            &partition,
            &eval.sampler_for(trial.rng_seed(), alpha),
        )?;
        let count = count_keywords(&text, &partition, eval.count_mode)?;
        let (sf, _) = decide_counts(count, eval.delta, eval.theta)?;
        Ok::<_, Error>(ZeroBitTrial {
            index,
            marked,
            key: partition.key().fingerprint(),
            n: count.n,
            t: count.t,
            sf,
        })
    })?;

    let (marked, unmarked): (Vec<&ZeroBitTrial>, Vec<&ZeroBitTrial>) =
        trials.iter().partition(|t| t.marked);
    let marked: Vec<f64> = marked.iter().map(|t| t.sf).collect();
    let unmarked: Vec<f64> = unmarked.iter().map(|t| t.sf).collect();
    let roc = RocCurve::from_scores(&marked, &unmarked);
    let (fpr, tpr) = RocCurve::rates_below(&marked, &unmarked, eval.theta);
    let text_len = cover.len().min(eval.sampler.max_tokens);
    Ok(ZeroBitReport {
        config: params.clone(),
        text_len,
        auc: roc.auc,
        pairwise_auc: pairwise_auc(&marked, &unmarked),
        tpr,
        fpr,
        roc,
        trials,
    })
}

// ---------------------------------------------------------------- capacity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityParams {
    pub eval: EvalConfig,
    pub capacities: Vec<u32>,
    /// How many leading paragraphs to use as covers.
    pub paragraphs: usize,
}

impl Default for CapacityParams {
    fn default() -> Self {
        Self {
            eval: EvalConfig::default(),
            capacities: (1..=10).collect(),
            paragraphs: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityTrial {
    pub capacity: u32,
    pub paragraph: usize,
    pub symbol: usize,
    pub decoded: usize,
    pub bit_errors: u32,
    pub n: u64,
    pub t: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityEntry {
    pub capacity: u32,
    pub ber: f64,
    pub symbol_error_rate: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityCurve {
    pub config: CapacityParams,
    pub entries: Vec<CapacityEntry>,
    pub trials: Vec<CapacityTrial>,
}

impl CapacityCurve {
    pub fn ber(&self, capacity: u32) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.capacity == capacity)
            .map(|e| e.ber)
    }
}

/// For each capacity `c`, one key set of `2^c` keys; every paragraph carries
/// a uniformly random symbol and is regenerated at its own length.
pub fn run_capacity_sweep(
    paragraphs: &[TokenSequence],
    source: &dyn LogitSource,
    params: &CapacityParams,
) -> Result<CapacityCurve> {
    let eval = &params.eval;
    eval.validate()?;
    let covers = &paragraphs[..params.paragraphs.min(paragraphs.len())];
    if covers.is_empty() {
        return Err(Error::Empty("paragraph list"));
    }
    if covers.iter().any(TokenSequence::is_empty) {
        return Err(Error::Empty("paragraph"));
    }
    let master = eval.master();
    let keysets = params
        .capacities
        .iter()
        .map(|&c| derive_keyset(&master.child("capacity/keys", c.into()), c))
        .collect::<Result<Vec<KeySet>>>()?;

    let per = covers.len();
    let trials = eval.exec.try_map(keysets.len() * per, |job| {
        let (which, paragraph) = (job / per, job % per);
        let keyset = &keysets[which];
        let capacity = keyset.capacity();
        let cover = &covers[paragraph];
        let trial = master
            .child("capacity", capacity.into())
            .child("paragraph", paragraph as u64);
        let mut rng = SplitMix64::new(trial.rng_seed());
        let symbol = rng.below(keyset.len() as u64) as usize;
        let partition = keyset.partition(symbol, eval.delta, cover.vocab_version)?;
        let sampler = eval.sampler_for(rng.next_u64(), eval.sampler.alpha);
        let text = encode(cover, source, &partition, &sampler)?;
        let report = multi_bit_decode_with(&text, keyset, eval.delta, eval.count_mode, eval.exec)?;
        let decoded = report.symbol().expect("multi-bit report carries a symbol");
        Ok::<_, Error>(CapacityTrial {
            capacity,
            paragraph,
            symbol,
            decoded,
            bit_errors: bit_errors(symbol, decoded),
            n: report.n,
            t: report.t,
        })
    })?;

    let entries = keysets
        .iter()
        .zip(trials.chunks(per))
        .map(|(ks, chunk)| {
            let bits: u64 = chunk.iter().map(|t| u64::from(t.bit_errors)).sum();
            let wrong = chunk.iter().filter(|t| t.decoded != t.symbol).count();
            CapacityEntry {
                capacity: ks.capacity(),
                ber: bits as f64 / (chunk.len() as f64 * f64::from(ks.capacity())),
                symbol_error_rate: fraction(wrong, chunk.len()),
                trials: chunk.len(),
            }
        })
        .collect();
    Ok(CapacityCurve {
        config: params.clone(),
        entries,
        trials,
    })
}

// ---------------------------------------------------------------- null

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullParams {
    pub eval: EvalConfig,
    pub texts: usize,
    pub text_len: usize,
}

impl Default for NullParams {
    fn default() -> Self {
        Self {
            eval: EvalConfig::default(),
            texts: 1000,
            text_len: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullTrial {
    pub paragraph: usize,
    pub n: u64,
    pub t: u64,
    pub sf: f64,
    /// Same text scored with per-occurrence counts.
    pub sf_occurrences: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullCalibration {
    pub config: NullParams,
    pub positive_rate: f64,
    /// `theta` plus three binomial standard errors.
    pub upper_band: f64,
    pub occurrence_positive_rate: f64,
    pub trials: Vec<NullTrial>,
}

/// Unbiased texts continued from random paragraph openings, each tested
/// against an independent random key. The positive rate estimates the false
/// alarm probability at `theta`.
pub fn run_null_calibration(
    paragraphs: &[TokenSequence],
    source: &dyn LogitSource,
    params: &NullParams,
) -> Result<NullCalibration> {
    let eval = &params.eval;
    eval.validate()?;
    if paragraphs.is_empty() || paragraphs.iter().any(TokenSequence::is_empty) {
        return Err(Error::Empty("paragraph list"));
    }
    if params.texts == 0 || params.text_len == 0 {
        return Err(Error::Empty("null calibration run"));
    }
    let master = eval.master();
    let trials = eval.exec.try_map(params.texts, |i| {
        let trial = master.child("null", i as u64);
        let mut rng = SplitMix64::new(trial.rng_seed());
        let paragraph = rng.below(paragraphs.len() as u64) as usize;
        let cover = &paragraphs[paragraph];
        let partition =
            KeywordPartition::new(trial.derive_key(0), eval.delta, cover.vocab_version)?;
        let sampler = SamplerConfig {
            max_tokens: params.text_len,
            slack: params.text_len,
            ..eval.sampler_for(rng.next_u64(), 0.0)
        };
        let text = encode(cover, source, &partition, &sampler)?;
        let count = count_keywords(&text, &partition, eval.count_mode)?;
        let (sf, _) = decide_counts(count, eval.delta, eval.theta)?;
        let occ = count_keywords(&text, &partition, CountMode::Occurrences)?;
        let (sf_occurrences, _) = decide_counts(occ, eval.delta, eval.theta)?;
        Ok::<_, Error>(NullTrial {
            paragraph,
            n: count.n,
            t: count.t,
            sf,
            sf_occurrences,
        })
    })?;
    let total = trials.len();
    let theta = eval.theta;
    Ok(NullCalibration {
        config: params.clone(),
        positive_rate: fraction(trials.iter().filter(|t| t.sf < theta).count(), total),
        upper_band: theta + 3.0 * (theta * (1.0 - theta) / total as f64).sqrt(),
        occurrence_positive_rate: fraction(
            trials.iter().filter(|t| t.sf_occurrences < theta).count(),
            total,
        ),
        trials,
    })
}

// ---------------------------------------------------------------- secrecy

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecrecyParams {
    pub eval: EvalConfig,
    pub paragraphs: usize,
}

impl Default for SecrecyParams {
    fn default() -> Self {
        Self {
            eval: EvalConfig::default(),
            paragraphs: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecrecyReport {
    pub config: SecrecyParams,
    pub cover_zipf: ZipfStats,
    pub stego_zipf: ZipfStats,
    pub slope_difference: Option<f64>,
    pub cover_perplexity: Quartiles,
    pub stego_perplexity: Quartiles,
    pub iqr_overlap: bool,
    pub cover_perplexities: Vec<f64>,
    pub stego_perplexities: Vec<f64>,
}

/// Compares cover paragraphs with their marked regenerations by word
/// frequency shape and by perplexity under `model`.
pub fn run_secrecy_analysis(
    paragraphs: &[TokenSequence],
    model: &NgramModel,
    params: &SecrecyParams,
) -> Result<SecrecyReport> {
    let eval = &params.eval;
    eval.validate()?;
    let covers = &paragraphs[..params.paragraphs.min(paragraphs.len())];
    if covers.is_empty() {
        return Err(Error::Empty("paragraph list"));
    }
    let master = eval.master();
    let stego = eval.exec.try_map(covers.len(), |i| {
        let trial = master.child("secrecy", i as u64);
        let cover = &covers[i];
        let partition =
            KeywordPartition::new(trial.derive_key(0), eval.delta, cover.vocab_version)?;
        encode(
            cover,
            model,
            &partition,
            &eval.sampler_for(trial.rng_seed(), eval.sampler.alpha),
        )
    })?;

    let ppl = |set: &[TokenSequence]| -> Result<Vec<f64>> {
        set.iter().map(|s| perplexity(s, model)).collect()
    };
    let cover_perplexities = ppl(covers)?;
    let stego_perplexities = ppl(&stego)?;
    let cover_q = quartiles(&cover_perplexities).expect("non-empty");
    let stego_q = quartiles(&stego_perplexities).expect("non-empty");
    let cover_zipf = zipf_stats(covers);
    let stego_zipf = zipf_stats(&stego);
    let slope_difference = cover_zipf
        .log_log_slope
        .zip(stego_zipf.log_log_slope)
        .map(|(a, b)| (a - b).abs());
    Ok(SecrecyReport {
        config: params.clone(),
        cover_zipf,
        stego_zipf,
        slope_difference,
        cover_perplexity: cover_q,
        stego_perplexity: stego_q,
        iqr_overlap: cover_q.overlaps(&stego_q),
        cover_perplexities,
        stego_perplexities,
    })
}

// ---------------------------------------------------------------- robustness

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessParams {
    pub eval: EvalConfig,
    pub trials: usize,
    pub channels: Vec<ChannelSpec>,
}

impl RobustnessParams {
    /// The four transcript-preserving conditions.
    pub fn standard_channels() -> Vec<ChannelSpec> {
        vec![
            ChannelSpec::identity(),
            ChannelSpec::resample(),
            ChannelSpec::deepfake(),
            ChannelSpec::hybrid(),
        ]
    }
}

impl Default for RobustnessParams {
    fn default() -> Self {
        Self {
            eval: EvalConfig::default(),
            trials: 100,
            channels: Self::standard_channels(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessTrial {
    pub cover: usize,
    pub symbol: usize,
    /// Decoded symbol per channel, `None` when nothing in-vocabulary survived.
    pub decoded: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub channel: String,
    pub spec: ChannelSpec,
    pub accuracy: f64,
    pub ber: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub config: RobustnessParams,
    pub capacity: u32,
    pub keys: Vec<String>,
    pub rows: Vec<RobustnessRow>,
    pub trials: Vec<RobustnessTrial>,
}

impl RobustnessReport {
    pub fn accuracy(&self, label: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.channel == label)
            .map(|r| r.accuracy)
    }
}

/// Each trial embeds a random symbol into a cover (cycling through
/// `covers`), renders the stego text, passes it through every channel, then
/// re-tokenizes and decodes what comes out.
pub fn run_robustness_matrix(
    covers: &[TokenSequence],
    source: &dyn LogitSource,
    vocab: &Vocabulary,
    keyset: &KeySet,
    params: &RobustnessParams,
) -> Result<RobustnessReport> {
    let eval = &params.eval;
    eval.validate()?;
    if covers.is_empty() || covers.iter().any(TokenSequence::is_empty) {
        return Err(Error::Empty("cover list"));
    }
    if params.trials == 0 {
        return Err(Error::out_of_range("trials", 0.0, "[1, inf)"));
    }
    for spec in &params.channels {
        spec.validate()?;
    }
    let master = eval.master();
    let trials = eval.exec.try_map(params.trials, |i| {
        let cover_index = i % covers.len();
        let cover = &covers[cover_index];
        let trial = master.child("robustness", i as u64);
        let mut rng = SplitMix64::new(trial.rng_seed());
        let symbol = rng.below(keyset.len() as u64) as usize;
        let partition = keyset.partition(symbol, eval.delta, vocab.version_tag())?;
        let sampler = eval.sampler_for(rng.next_u64(), eval.sampler.alpha);
        let stego = vocab.detokenize(&encode(cover, source, &partition, &sampler)?)?;
        let channel_seed = rng.next_u64();

        let decoded = params
            .channels
            .iter()
            .map(|spec| {
                let spec = spec
                    .clone()
                    .with_seed(derive_seed(channel_seed, spec.rng_seed));
                let received = apply_channel(&stego, &spec, vocab)?;
                let seq = vocab.encode_text(&received, NormalizeFlags::ALL);
                match multi_bit_decode_with(&seq, keyset, eval.delta, eval.count_mode, eval.exec) {
                    Ok(r) => Ok(r.symbol()),
                    Err(Error::Undecidable(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok::<_, Error>(RobustnessTrial {
            cover: cover_index,
            symbol,
            decoded,
        })
    })?;

    let capacity = keyset.capacity();
    let rows = params
        .channels
        .iter()
        .enumerate()
        .map(|(c, spec)| {
            let correct = trials
                .iter()
                .filter(|t| t.decoded[c] == Some(t.symbol))
                .count();
            let bits: f64 = trials
                .iter()
                .map(|t| match t.decoded[c] {
                    Some(d) => f64::from(bit_errors(t.symbol, d)),
                    // nothing decoded: half the bits wrong on average
                    None => f64::from(capacity) / 2.0,
                })
                .sum();
            RobustnessRow {
                channel: spec.label(),
                spec: spec.clone(),
                accuracy: fraction(correct, trials.len()),
                ber: bits / (trials.len() as f64 * f64::from(capacity)),
                trials: trials.len(),
            }
        })
        .collect();
    Ok(RobustnessReport {
        config: params.clone(),
        capacity,
        keys: keyset.fingerprints(),
        rows,
        trials,
    })
}
