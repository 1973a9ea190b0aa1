use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::generator::NgramModel;
use crate::text_codec::{TokenId, TokenSequence};
use crate::{Error, Result};

/// Below this many tokens the log-log fit is not attempted.
pub const ZIPF_MIN_TOKENS: u64 = 1000;

/// Exp of the mean negative log-likelihood of every token after the first
/// `order - 1`, each scored with its full preceding context.
pub fn perplexity(seq: &TokenSequence, model: &NgramModel) -> Result<f64> {
    let skip = model.order() - 1;
    if seq.len() < model.order() {
        return Err(Error::out_of_range(
            "sequence length",
            seq.len() as f64,
            "[order, inf)",
        ));
    }
    let nll: f64 = (skip..seq.len())
        .map(|i| -model.log_prob(&seq.ids[..i], seq.ids[i]))
        .sum();
    Ok((nll / (seq.len() - skip) as f64).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipfStats {
    pub total_tokens: u64,
    /// (rank, frequency), ranks from 1, frequencies nonincreasing.
    pub rank_freq: Vec<(usize, u64)>,
    /// Least-squares slope of ln(frequency) on ln(rank).
    pub log_log_slope: Option<f64>,
    pub pearson_r: Option<f64>,
}

pub fn zipf_stats(corpus: &[TokenSequence]) -> ZipfStats {
    let mut counts: HashMap<TokenId, u64> = HashMap::new();
    for seq in corpus {
        for &id in &seq.ids {
            *counts.entry(id).or_default() += 1;
        }
    }
    let mut freqs: Vec<(TokenId, u64)> = counts.into_iter().collect();
    // ties broken by id so the table is reproducible
    freqs.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let rank_freq: Vec<(usize, u64)> = freqs
        .iter()
        .enumerate()
        .map(|(i, &(_, f))| (i + 1, f))
        .collect();
    let total_tokens = rank_freq.iter().map(|&(_, f)| f).sum();

    let fit = if total_tokens >= ZIPF_MIN_TOKENS && rank_freq.len() >= 2 {
        let xs: Vec<f64> = rank_freq.iter().map(|&(r, _)| (r as f64).ln()).collect();
        let ys: Vec<f64> = rank_freq.iter().map(|&(_, f)| (f as f64).ln()).collect();
        least_squares(&xs, &ys)
    } else {
        None
    };
    ZipfStats {
        total_tokens,
        rank_freq,
        log_log_slope: fit.map(|f| f.0),
        pearson_r: fit.map(|f| f.1),
    }
}

/// (slope, pearson r), or `None` when either variable is constant.
fn least_squares(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / sxx, sxy / (sxx * syy).sqrt()))
}

/// Bits that differ between the binary indices of two symbols.
pub fn bit_errors(sent: usize, decoded: usize) -> u32 {
    (sent ^ decoded).count_ones()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn overlaps(&self, other: &Quartiles) -> bool {
        self.q1 <= other.q3 && other.q1 <= self.q3
    }
}

/// Linear interpolation between order statistics.
pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some(Quartiles {
        q1: at(0.25),
        median: at(0.5),
        q3: at(0.75),
    })
}
