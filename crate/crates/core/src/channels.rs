//! Transcript-level transmission channels.
//!
//! Audiovisual attacks that leave the spoken words intact (re-encoding at a
//! lower resolution, face or voice replacement) are modeled by what they do
//! to the transcript: `resample` normalizes it the way a speech recognizer
//! would, `deepfake` leaves it verbatim, `hybrid` is both. `noise` adds
//! random word deletions, substitutions and insertions to find where
//! detection stops working.

use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;
use crate::text_codec::{normalize, NormalizeFlags, Vocabulary};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Identity,
    Resample,
    Deepfake,
    Hybrid,
    Noise,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 5] = [
        ChannelKind::Identity,
        ChannelKind::Resample,
        ChannelKind::Deepfake,
        ChannelKind::Hybrid,
        ChannelKind::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Identity => "identity",
            ChannelKind::Resample => "resample",
            ChannelKind::Deepfake => "deepfake",
            ChannelKind::Hybrid => "hybrid",
            ChannelKind::Noise => "noise",
        }
    }

    /// True when the channel cannot change which words are spoken.
    pub fn preserves_words(self) -> bool {
        self != ChannelKind::Noise
    }

    fn default_flags(self) -> NormalizeFlags {
        match self {
            ChannelKind::Identity | ChannelKind::Deepfake => NormalizeFlags::NONE,
            _ => NormalizeFlags::ALL,
        }
    }
}

impl std::fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChannelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidChannel(format!("unknown channel kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    #[serde(default)]
    pub p_del: f64,
    #[serde(default)]
    pub p_sub: f64,
    #[serde(default)]
    pub p_ins: f64,
    /// Defaults by kind: none for identity and deepfake, all otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize: Option<NormalizeFlags>,
    #[serde(default)]
    pub rng_seed: u64,
}

impl ChannelSpec {
    pub fn new(kind: ChannelKind) -> Self {
        Self {
            kind,
            p_del: 0.0,
            p_sub: 0.0,
            p_ins: 0.0,
            normalize: None,
            rng_seed: 0,
        }
    }

    pub fn identity() -> Self {
        Self::new(ChannelKind::Identity)
    }

    pub fn resample() -> Self {
        Self::new(ChannelKind::Resample)
    }

    pub fn deepfake() -> Self {
        Self::new(ChannelKind::Deepfake)
    }

    pub fn hybrid() -> Self {
        Self::new(ChannelKind::Hybrid)
    }

    pub fn noise(p_del: f64, p_sub: f64, p_ins: f64, rng_seed: u64) -> Self {
        Self {
            p_del,
            p_sub,
            p_ins,
            rng_seed,
            ..Self::new(ChannelKind::Noise)
        }
    }

    pub fn with_seed(mut self, rng_seed: u64) -> Self {
        self.rng_seed = rng_seed;
        self
    }

    pub fn flags(&self) -> NormalizeFlags {
        self.normalize.unwrap_or_else(|| self.kind.default_flags())
    }

    /// Short human-readable label, e.g. `noise(del=0,sub=0.5,ins=0)`.
    pub fn label(&self) -> String {
        match self.kind {
            ChannelKind::Noise => format!(
                "noise(del={},sub={},ins={})",
                self.p_del, self.p_sub, self.p_ins
            ),
            k => k.name().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_del", self.p_del),
            ("p_sub", self.p_sub),
            ("p_ins", self.p_ins),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidChannel(format!(
                    "{name} = {p} is outside [0, 1]"
                )));
            }
        }
        if self.p_del + self.p_sub > 1.0 {
            return Err(Error::InvalidChannel(format!(
                "p_del + p_sub = {} exceeds 1",
                self.p_del + self.p_sub
            )));
        }
        let has_rates = self.p_del > 0.0 || self.p_sub > 0.0 || self.p_ins > 0.0;
        if has_rates && self.kind != ChannelKind::Noise {
            return Err(Error::InvalidChannel(format!(
                "{} channel takes no error rates",
                self.kind
            )));
        }
        let flags = self.flags();
        match self.kind {
            ChannelKind::Identity | ChannelKind::Deepfake if !flags.is_none() => Err(
                Error::InvalidChannel(format!("{} channel takes no normalization", self.kind)),
            ),
            _ => Ok(()),
        }
    }
}

pub fn apply_channel(text: &str, spec: &ChannelSpec, vocab: &Vocabulary) -> Result<String> {
    spec.validate()?;
    Ok(match spec.kind {
        ChannelKind::Identity | ChannelKind::Deepfake => text.to_string(),
        ChannelKind::Resample | ChannelKind::Hybrid => normalize(text, spec.flags()),
        ChannelKind::Noise => perturb(&normalize(text, spec.flags()), spec, vocab)?,
    })
}

/// Per word: delete with `p_del`, else substitute a uniform vocabulary word
/// with `p_sub`; independently, insert a uniform vocabulary word after it
/// with `p_ins`.
fn perturb(text: &str, spec: &ChannelSpec, vocab: &Vocabulary) -> Result<String> {
    if vocab.is_empty() && (spec.p_sub > 0.0 || spec.p_ins > 0.0) {
        return Err(Error::Empty("vocabulary"));
    }
    let mut rng = SplitMix64::new(spec.rng_seed);
    let random_word = |rng: &mut SplitMix64| {
        let id = rng.below(vocab.len() as u64) as u32;
        vocab.token(id).expect("id below vocabulary size")
    };
    let mut out: Vec<&str> = Vec::new();
    for word in text.split_whitespace() {
        let u = rng.next_f64();
        if u >= spec.p_del + spec.p_sub {
            out.push(word);
        } else if u >= spec.p_del {
            out.push(random_word(&mut rng));
        }
        if rng.next_f64() < spec.p_ins {
            out.push(random_word(&mut rng));
        }
    }
    Ok(out.join(" "))
}

/// Expected `(n', t')` after a noise channel, counting occurrences, for a
/// text with `n` in-vocabulary tokens of which `t` are keywords.
///
/// Survivors keep their label, and each substituted or inserted word is a
/// keyword with probability `delta`:
/// `E[t'] = (1 - p_del - p_sub) t + p_sub delta n + p_ins delta n`,
/// `E[n'] = (1 - p_del + p_ins) n`.
pub fn expected_counts(n: u64, t: u64, spec: &ChannelSpec, delta: f64) -> Result<(f64, f64)> {
    spec.validate()?;
    if spec.kind != ChannelKind::Noise {
        return Err(Error::InvalidChannel(format!(
            "expected counts are defined for noise channels, not {}",
            spec.kind
        )));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::out_of_range("delta", delta, "[0, 1]"));
    }
    if t > n {
        return Err(Error::out_of_range("t", t as f64, "[0, n]"));
    }
    let (n, t) = (n as f64, t as f64);
    let n_out = (1.0 - spec.p_del + spec.p_ins) * n;
    let t_out = (1.0 - spec.p_del - spec.p_sub) * t + (spec.p_sub + spec.p_ins) * delta * n;
    Ok((n_out, t_out))
}

pub fn expected_t_shift(n: u64, t: u64, spec: &ChannelSpec, delta: f64) -> Result<f64> {
    expected_counts(n, t, spec, delta).map(|(_, t)| t)
}
