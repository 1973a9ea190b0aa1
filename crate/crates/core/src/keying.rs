//! Stego keys and the keyed vocabulary partition.
//!
//! A token is a keyword for a key iff `SipHash-2-4(key, id_le64) / 2^64 < delta`.
//! Membership is computed per token, so no keyword set is ever stored and the
//! partition of an id does not depend on the rest of the vocabulary.
//!
//! Multi-bit key sets are expanded from a 32-byte master seed with
//! `key_i = HMAC-SHA256(seed, "stegochain/key" || u32_le(i))[..16]`.

use std::fmt;
use std::hash::Hasher;
use std::path::Path;

use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use siphasher::sip::SipHasher24;

use crate::text_codec::{TokenId, Vocabulary};
use crate::{Error, Result};

pub const MAX_CAPACITY: u32 = 16;
pub const DEFAULT_DELTA: f64 = 0.5;

const KEY_DOMAIN: &[u8] = b"stegochain/key";
const CHILD_DOMAIN: &[u8] = b"stegochain/child";

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StegoKey {
    #[serde(with = "hex_bytes")]
    bytes: [u8; 16],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl StegoKey {
    pub fn new(bytes: [u8; 16]) -> Self {
        Self { bytes, label: None }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn bytes(&self) -> &[u8; 16] {
        &self.bytes
    }

    /// First 8 hex characters of the key bytes.
    pub fn fingerprint(&self) -> String {
        hex::encode(&self.bytes[..4])
    }

    /// Raw 64-bit SipHash-2-4 of the little-endian token id.
    pub fn token_hash(&self, id: TokenId) -> u64 {
        let mut h = SipHasher24::new_with_key(&self.bytes);
        h.write(&u64::from(id).to_le_bytes());
        h.finish()
    }
}

impl fmt::Debug for StegoKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // never print full key material
        f.debug_struct("StegoKey")
            .field("fingerprint", &self.fingerprint())
            .field("label", &self.label)
            .finish()
    }
}

/// 256-bit secret from which key sets are expanded.
#[derive(Clone, PartialEq, Eq)]
pub struct MasterSeed([u8; 32]);

impl MasterSeed {
    pub fn new(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let raw = hex::decode(s.trim()).map_err(|e| Error::InvalidKey(e.to_string()))?;
        Self::from_slice(&raw)
    }

    fn from_slice(raw: &[u8]) -> Result<Self> {
        let bytes: [u8; 32] = raw
            .try_into()
            .map_err(|_| Error::InvalidKey(format!("expected 32 bytes, got {}", raw.len())))?;
        Ok(Self(bytes))
    }

    /// Seed from a small integer, for tests and `--seed`-style reproducibility.
    pub fn from_u64(seed: u64) -> Self {
        let mut mac = hmac_for(b"stegochain/seed");
        mac.update(&seed.to_le_bytes());
        Self(mac.finalize().into_bytes().into())
    }

    /// Key files hold either 32 raw bytes or 64 hex characters.
    pub fn from_file_bytes(raw: &[u8]) -> Result<Self> {
        if raw.len() == 32 {
            return Self::from_slice(raw);
        }
        let text = std::str::from_utf8(raw).map_err(|_| {
            Error::InvalidKey("key file is neither 32 raw bytes nor hex text".into())
        })?;
        Self::from_hex(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file_bytes(&std::fs::read(path)?)
    }

    /// Independent seed for a named sub-experiment.
    pub fn child(&self, label: &str, index: u64) -> MasterSeed {
        let mut mac = hmac_for(&self.0);
        mac.update(CHILD_DOMAIN);
        mac.update(&(label.len() as u64).to_le_bytes());
        mac.update(label.as_bytes());
        mac.update(&index.to_le_bytes());
        MasterSeed(mac.finalize().into_bytes().into())
    }

    /// 64-bit seed for the sampling and channel generators.
    pub fn rng_seed(&self) -> u64 {
        u64::from_le_bytes(self.0[..8].try_into().expect("8 bytes"))
    }

    pub fn derive_key(&self, index: u32) -> StegoKey {
        let mut mac = hmac_for(&self.0);
        mac.update(KEY_DOMAIN);
        mac.update(&index.to_le_bytes());
        let out = mac.finalize().into_bytes();
        let mut bytes = [0u8; 16];
        bytes.copy_from_slice(&out[..16]);
        StegoKey::new(bytes)
    }
}

impl fmt::Debug for MasterSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MasterSeed(..)")
    }
}

fn hmac_for(key: &[u8]) -> Hmac<Sha256> {
    Hmac::<Sha256>::new_from_slice(key).expect("HMAC accepts any key length")
}

/// Keyed predicate over token ids selecting a `delta` fraction of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordPartition {
    key: StegoKey,
    delta: f64,
    vocab_version: u64,
}

impl KeywordPartition {
    pub fn new(key: StegoKey, delta: f64, vocab_version: u64) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self {
            key,
            delta,
            vocab_version,
        })
    }

    pub fn key(&self) -> &StegoKey {
        &self.key
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn vocab_version(&self) -> u64 {
        self.vocab_version
    }

    pub fn is_keyword(&self, id: TokenId) -> bool {
        below_threshold(self.key.token_hash(id), self.delta)
    }

    /// Membership of every id in `0..vocab_size`.
    pub fn mask(&self, vocab_size: usize) -> Vec<bool> {
        (0..vocab_size as u64)
            .map(|id| self.is_keyword(id as TokenId))
            .collect()
    }

    pub fn keyword_ids(&self, vocab_size: usize) -> Vec<TokenId> {
        (0..vocab_size as TokenId)
            .filter(|&id| self.is_keyword(id))
            .collect()
    }

    pub fn ratio(&self, vocab: &Vocabulary) -> Result<f64> {
        vocab.check_version(self.vocab_version)?;
        if vocab.is_empty() {
            return Err(Error::Empty("vocabulary"));
        }
        let hits = (0..vocab.len() as TokenId)
            .filter(|&id| self.is_keyword(id))
            .count();
        Ok(hits as f64 / vocab.len() as f64)
    }
}

/// Exact test of `h / 2^64 < delta`.
fn below_threshold(h: u64, delta: f64) -> bool {
    // delta * 2^64 is exact in f64 (power-of-two scaling); compare via the
    // ceiling so every h strictly below the real threshold passes.
    let scaled = delta * 18_446_744_073_709_551_616.0;
    if scaled >= 18_446_744_073_709_551_616.0 {
        return true;
    }
    let floor = scaled.floor();
    let int = floor as u64;
    if scaled == floor {
        h < int
    } else {
        h <= int
    }
}

pub fn is_keyword(partition: &KeywordPartition, id: TokenId) -> bool {
    partition.is_keyword(id)
}

pub fn partition_ratio(partition: &KeywordPartition, vocab: &Vocabulary) -> Result<f64> {
    partition.ratio(vocab)
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::out_of_range("delta", delta, "(0, 1)"))
    }
}

/// `2^capacity` distinct keys; message symbol `s` is carried by `keys[s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeySet {
    keys: Vec<StegoKey>,
    capacity: u32,
}

impl KeySet {
    pub fn from_keys(keys: Vec<StegoKey>) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::Empty("key set"));
        }
        if !keys.len().is_power_of_two() {
            return Err(Error::InvalidKey(format!(
                "key set size {} is not a power of two",
                keys.len()
            )));
        }
        let mut sorted: Vec<&[u8; 16]> = keys.iter().map(StegoKey::bytes).collect();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidKey("duplicate key in key set".into()));
        }
        let capacity = keys.len().trailing_zeros();
        Ok(Self { keys, capacity })
    }

    pub fn keys(&self) -> &[StegoKey] {
        &self.keys
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key(&self, symbol: usize) -> Result<&StegoKey> {
        self.keys.get(symbol).ok_or(Error::out_of_range(
            "symbol",
            symbol as f64,
            "[0, 2^capacity)",
        ))
    }

    pub fn partition(
        &self,
        symbol: usize,
        delta: f64,
        vocab_version: u64,
    ) -> Result<KeywordPartition> {
        KeywordPartition::new(self.key(symbol)?.clone(), delta, vocab_version)
    }

    pub fn fingerprints(&self) -> Vec<String> {
        self.keys.iter().map(StegoKey::fingerprint).collect()
    }
}

pub fn derive_keyset(master: &MasterSeed, capacity: u32) -> Result<KeySet> {
    if !(1..=MAX_CAPACITY).contains(&capacity) {
        return Err(Error::out_of_range("capacity", capacity as f64, "[1, 16]"));
    }
    let keys = (0..1u32 << capacity)
        .map(|i| master.derive_key(i).with_label(format!("symbol-{i}")))
        .collect();
    KeySet::from_keys(keys)
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 16], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 16], D::Error> {
        let s = String::deserialize(d)?;
        let raw = hex::decode(s).map_err(serde::de::Error::custom)?;
        raw.try_into()
            .map_err(|_| serde::de::Error::custom("expected 16 key bytes"))
    }
}
