//! Stego text generation: raw logits, plus `alpha` on keyword ids, divided
//! by the temperature, softmax, then an inverse-CDF draw from SplitMix64.

mod external;
mod ngram;

pub use external::{ExternalSource, Request, Response};
pub use ngram::{train_ngram, NgramModel, BOS, DEFAULT_ORDER, DEFAULT_SMOOTHING};

use serde::{Deserialize, Serialize};

use crate::keying::KeywordPartition;
use crate::rng::SplitMix64;
use crate::text_codec::{TokenId, TokenSequence};
use crate::{Error, Result};

/// Anything that scores the next token given the tokens so far.
///
/// Implementations must be safe for concurrent read-only queries.
pub trait LogitSource: Send + Sync {
    fn vocab_version(&self) -> u64;

    fn vocab_size(&self) -> usize;

    /// One finite logit per vocabulary id.
    fn next_logits(&self, context: &[TokenId]) -> Result<Vec<f64>>;

    /// How many leading cover tokens seed the generation context.
    fn seed_len(&self) -> usize {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub alpha: f64,
    pub temperature: f64,
    pub max_tokens: usize,
    pub rng_seed: u64,
    /// Extra tokens allowed beyond the cover length.
    pub slack: usize,
}

pub const DEFAULT_ALPHA: f64 = 4.0;
pub const DEFAULT_TEMPERATURE: f64 = 0.1;

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: 1024,
            rng_seed: 0,
            slack: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::out_of_range("alpha", self.alpha, "[0, inf)"));
        }
        check_temperature(self.temperature)?;
        if self.max_tokens == 0 {
            return Err(Error::out_of_range("max_tokens", 0.0, "[1, inf)"));
        }
        Ok(())
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::out_of_range("temperature", t, "(0, inf)"))
    }
}

/// Adds `alpha` to every keyword logit. The input is left untouched.
pub fn bias_logits(logits: &[f64], partition: &KeywordPartition, alpha: f64) -> Vec<f64> {
    logits
        .iter()
        .enumerate()
        .map(|(id, &z)| {
            if partition.is_keyword(id as TokenId) {
                z + alpha
            } else {
                z
            }
        })
        .collect()
}

pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out, temperature)?;
    Ok(out)
}

fn softmax_in_place(z: &mut [f64], temperature: f64) -> Result<()> {
    check_temperature(temperature)?;
    if z.is_empty() {
        return Err(Error::Empty("logit vector"));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in z.iter_mut() {
        *v = ((*v - max) / temperature).exp();
        // Neumaier summation
        let t = sum + *v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + *v;
        } else {
            comp += (*v - t) + sum;
        }
        sum = t;
    }
    let total = sum + comp;
    for v in z.iter_mut() {
        *v /= total;
    }
    Ok(())
}

/// Inverse-CDF draw. `probs` must sum to 1 within 1e-9.
pub fn sample_token(probs: &[f64], rng: &mut SplitMix64) -> Result<TokenId> {
    if probs.is_empty() {
        return Err(Error::Empty("probability vector"));
    }
    let mut total = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::NonFinite(i));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized(total));
    }
    Ok(draw(probs, rng))
}

fn draw(probs: &[f64], rng: &mut SplitMix64) -> TokenId {
    let u = rng.next_f64();
    let mut cum = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_nonzero = i;
            if u < cum {
                return i as TokenId;
            }
        }
    }
    last_nonzero as TokenId
}

/// Regenerates `cover` under the keyword bias of `partition`.
///
/// The first `source.seed_len()` cover tokens form the initial context and are
/// not part of the output. Emits `min(max_tokens, len(cover) + slack)` tokens.
pub fn encode(
    cover: &TokenSequence,
    source: &dyn LogitSource,
    partition: &KeywordPartition,
    config: &SamplerConfig,
) -> Result<TokenSequence> {
    config.validate()?;
    if cover.is_empty() {
        return Err(Error::Empty("cover"));
    }
    let version = source.vocab_version();
    for found in [cover.vocab_version, partition.vocab_version()] {
        if found != version {
            return Err(Error::VersionMismatch {
                expected: version,
                found,
            });
        }
    }

    let vocab_size = source.vocab_size();
    let keyword = partition.mask(vocab_size);
    let target = config.max_tokens.min(cover.len() + config.slack);
    let seed = source.seed_len().min(cover.len());

    let mut context: Vec<TokenId> = cover.ids[..seed].to_vec();
    let mut out = Vec::with_capacity(target);
    let mut rng = SplitMix64::new(config.rng_seed);
    for _ in 0..target {
        let mut z = source.next_logits(&context)?;
        if z.len() != vocab_size {
            return Err(Error::LengthMismatch {
                expected: vocab_size,
                found: z.len(),
            });
        }
        if config.alpha != 0.0 {
            for (v, &k) in z.iter_mut().zip(&keyword) {
                if k {
                    *v += config.alpha;
                }
            }
        }
        softmax_in_place(&mut z, config.temperature)?;
        let id = draw(&z, &mut rng);
        context.push(id);
        out.push(id);
    }
    Ok(TokenSequence::from_ids(out, version))
}
