//! Receiver side: count keyword tokens, convert the count to a binomial
//! survival probability, then threshold it (zero-bit) or take the key with
//! the smallest one (multi-bit).

mod binomial;

pub use binomial::binomial_sf;

use serde::{Deserialize, Serialize};

use crate::exec::ExecMode;
use crate::keying::{check_delta, KeySet, KeywordPartition};
use crate::text_codec::{TokenId, TokenSequence};
use crate::{Error, Result};

pub const DEFAULT_THETA: f64 = 0.03;

/// What `n` and `t` count.
///
/// `Distinct` counts each vocabulary id at most once per text, which keeps
/// the keyword memberships behind `t` independent under a random key and
/// makes the survival probability a valid p-value on natural text.
/// `Occurrences` counts every position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    #[default]
    Distinct,
    Occurrences,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordCount {
    pub n: u64,
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Decision {
    /// Zero-bit: mark present.
    Present(bool),
    /// Multi-bit: decoded symbol.
    Symbol(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyScore {
    pub key: String,
    pub sf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub n: u64,
    pub t: u64,
    pub sf: f64,
    pub theta: Option<f64>,
    pub decision: Decision,
    pub per_key: Vec<KeyScore>,
    pub count_mode: CountMode,
}

impl DetectionReport {
    pub fn is_present(&self) -> Option<bool> {
        match self.decision {
            Decision::Present(b) => Some(b),
            Decision::Symbol(_) => None,
        }
    }

    pub fn symbol(&self) -> Option<usize> {
        match self.decision {
            Decision::Symbol(s) => Some(s),
            Decision::Present(_) => None,
        }
    }
}

/// Token ids with their multiplicities, sorted by id.
fn histogram(ids: &[TokenId]) -> Vec<(TokenId, u64)> {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<(TokenId, u64)> = Vec::new();
    for id in sorted {
        match out.last_mut() {
            Some((last, c)) if *last == id => *c += 1,
            _ => out.push((id, 1)),
        }
    }
    out
}

fn count_from_histogram(
    hist: &[(TokenId, u64)],
    partition: &KeywordPartition,
    mode: CountMode,
) -> KeywordCount {
    let weight = |c: u64| match mode {
        CountMode::Distinct => 1,
        CountMode::Occurrences => c,
    };
    let mut n = 0;
    let mut t = 0;
    for &(id, c) in hist {
        n += weight(c);
        if partition.is_keyword(id) {
            t += weight(c);
        }
    }
    KeywordCount { n, t }
}

pub fn count_keywords(
    seq: &TokenSequence,
    partition: &KeywordPartition,
    mode: CountMode,
) -> Result<KeywordCount> {
    check_version(seq, partition)?;
    Ok(count_from_histogram(&histogram(&seq.ids), partition, mode))
}

fn check_version(seq: &TokenSequence, partition: &KeywordPartition) -> Result<()> {
    if seq.vocab_version == partition.vocab_version() {
        Ok(())
    } else {
        Err(Error::VersionMismatch {
            expected: partition.vocab_version(),
            found: seq.vocab_version,
        })
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::out_of_range("theta", theta, "(0, 1)"))
    }
}

/// Zero-bit decision from raw counts: present iff `sf(t) < theta`.
pub fn decide_counts(count: KeywordCount, delta: f64, theta: f64) -> Result<(f64, bool)> {
    check_theta(theta)?;
    if count.n == 0 {
        return Err(Error::Undecidable("no in-vocabulary tokens to test"));
    }
    let sf = binomial_sf(count.t, count.n, delta)?;
    Ok((sf, sf < theta))
}

pub fn zero_bit_decide(
    seq: &TokenSequence,
    partition: &KeywordPartition,
    theta: f64,
    mode: CountMode,
) -> Result<DetectionReport> {
    let count = count_keywords(seq, partition, mode)?;
    let (sf, present) = decide_counts(count, partition.delta(), theta)?;
    Ok(DetectionReport {
        n: count.n,
        t: count.t,
        sf,
        theta: Some(theta),
        decision: Decision::Present(present),
        per_key: vec![KeyScore {
            key: partition.key().fingerprint(),
            sf,
        }],
        count_mode: mode,
    })
}

pub fn multi_bit_decode(
    seq: &TokenSequence,
    keyset: &KeySet,
    delta: f64,
    mode: CountMode,
) -> Result<DetectionReport> {
    multi_bit_decode_with(seq, keyset, delta, mode, ExecMode::default())
}

/// Per-key survival probabilities are independent and may be computed in
/// parallel; the argmin (lowest index on ties) does not depend on `exec`.
pub fn multi_bit_decode_with(
    seq: &TokenSequence,
    keyset: &KeySet,
    delta: f64,
    mode: CountMode,
    exec: ExecMode,
) -> Result<DetectionReport> {
    check_delta(delta)?;
    if keyset.is_empty() {
        return Err(Error::Empty("key set"));
    }
    if seq.is_empty() {
        return Err(Error::Undecidable("no in-vocabulary tokens to test"));
    }
    let hist = histogram(&seq.ids);
    let scored: Vec<(KeywordCount, f64)> = exec.try_map(keyset.len(), |i| {
        let partition = keyset.partition(i, delta, seq.vocab_version)?;
        let count = count_from_histogram(&hist, &partition, mode);
        Ok::<_, Error>((count, binomial_sf(count.t, count.n, delta)?))
    })?;

    let mut best = 0;
    for (i, (_, sf)) in scored.iter().enumerate() {
        if *sf < scored[best].1 {
            best = i;
        }
    }
    let (count, sf) = scored[best];
    let per_key = keyset
        .keys()
        .iter()
        .zip(&scored)
        .map(|(k, &(_, sf))| KeyScore {
            key: k.fingerprint(),
            sf,
        })
        .collect();
    Ok(DetectionReport {
        n: count.n,
        t: count.t,
        sf,
        theta: None,
        decision: Decision::Symbol(best),
        per_key,
        count_mode: mode,
    })
}
