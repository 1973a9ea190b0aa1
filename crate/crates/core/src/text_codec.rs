//! Vocabulary, normalization and the word-level tokenizer shared by the
//! encoder and the detector.
//!
//! Tokens are whole words from a closed vocabulary. Words that survive
//! normalization but are not in the vocabulary are dropped and counted in
//! [`TokenSequence::oov_count`]; they carry no partition membership.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hasher;
use std::io::{BufRead, Write};
use std::path::Path;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type TokenId = u32;

/// First line of every vocabulary file.
pub const VOCAB_HEADER: &str = "#stegochain-vocab v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizeFlags {
    pub lowercase: bool,
    /// Drop punctuation and symbols, keeping apostrophes between two
    /// alphanumerics ("don't").
    pub strip_punctuation: bool,
    pub collapse_whitespace: bool,
}

impl NormalizeFlags {
    pub const ALL: Self = Self {
        lowercase: true,
        strip_punctuation: true,
        collapse_whitespace: true,
    };
    pub const NONE: Self = Self {
        lowercase: false,
        strip_punctuation: false,
        collapse_whitespace: false,
    };

    pub fn is_none(&self) -> bool {
        *self == Self::NONE
    }
}

impl Default for NormalizeFlags {
    fn default() -> Self {
        Self::ALL
    }
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

pub fn normalize(text: &str, flags: NormalizeFlags) -> String {
    let mut out: String = if flags.lowercase {
        text.to_lowercase()
    } else {
        text.to_owned()
    };

    if flags.strip_punctuation {
        let chars: Vec<char> = out.chars().collect();
        let mut kept = String::with_capacity(out.len());
        for (i, &c) in chars.iter().enumerate() {
            if c.is_alphanumeric() || c.is_whitespace() {
                kept.push(c);
            } else if is_apostrophe(c) {
                let before = i.checked_sub(1).map(|j| chars[j].is_alphanumeric());
                let after = chars.get(i + 1).map(|n| n.is_alphanumeric());
                if before == Some(true) && after == Some(true) {
                    kept.push('\'');
                }
            }
        }
        out = kept;
    }

    if flags.collapse_whitespace {
        out = out.split_whitespace().collect::<Vec<_>>().join(" ");
    }
    out
}

/// Normalized, tokenized text bound to one vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<TokenId>,
    pub oov_count: usize,
    pub source_len: usize,
    pub vocab_version: u64,
}

impl TokenSequence {
    /// A sequence with no OOV words, e.g. generator output.
    pub fn from_ids(ids: Vec<TokenId>, vocab_version: u64) -> Self {
        let source_len = ids.len();
        Self {
            ids,
            oov_count: 0,
            source_len,
            vocab_version,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    version_tag: u64,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Eq for Vocabulary {}

impl Vocabulary {
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.len() > TokenId::MAX as usize {
            return Err(Error::InvalidVocabulary("too many tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::InvalidVocabulary(format!("empty token at id {i}")));
            }
            if tok.chars().any(char::is_whitespace) {
                return Err(Error::InvalidVocabulary(format!(
                    "token {tok:?} at id {i} contains whitespace"
                )));
            }
            if index.insert(tok.clone(), i as TokenId).is_some() {
                return Err(Error::InvalidVocabulary(format!("duplicate token {tok:?}")));
            }
        }
        let version_tag = version_tag(&tokens);
        Ok(Self {
            tokens,
            index,
            version_tag,
        })
    }

    /// Collects the distinct words of `text` after normalization, in order of
    /// first appearance.
    pub fn from_text(text: &str, flags: NormalizeFlags) -> Result<Self> {
        let normalized = normalize(text, flags);
        let mut seen = HashMap::new();
        let mut tokens = Vec::new();
        for word in normalized.split_whitespace() {
            if !seen.contains_key(word) {
                seen.insert(word.to_owned(), ());
                tokens.push(word.to_owned());
            }
        }
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn version_tag(&self) -> u64 {
        self.version_tag
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn token_id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn check_id(&self, id: TokenId) -> Result<()> {
        if (id as usize) < self.len() {
            Ok(())
        } else {
            Err(Error::IdOutOfRange {
                id,
                size: self.len(),
            })
        }
    }

    pub fn check_version(&self, found: u64) -> Result<()> {
        if found == self.version_tag {
            Ok(())
        } else {
            Err(Error::VersionMismatch {
                expected: self.version_tag,
                found,
            })
        }
    }

    /// Expects already-normalized text.
    pub fn tokenize(&self, text: &str) -> TokenSequence {
        let mut ids = Vec::new();
        let mut source_len = 0;
        for word in text.split_whitespace() {
            source_len += 1;
            if let Some(id) = self.token_id(word) {
                ids.push(id);
            }
        }
        TokenSequence {
            oov_count: source_len - ids.len(),
            ids,
            source_len,
            vocab_version: self.version_tag,
        }
    }

    /// `normalize` followed by `tokenize`.
    pub fn encode_text(&self, text: &str, flags: NormalizeFlags) -> TokenSequence {
        self.tokenize(&normalize(text, flags))
    }

    pub fn detokenize(&self, seq: &TokenSequence) -> Result<String> {
        self.check_version(seq.vocab_version)?;
        self.render(&seq.ids)
    }

    pub fn render(&self, ids: &[TokenId]) -> Result<String> {
        let mut out = String::new();
        for (i, &id) in ids.iter().enumerate() {
            let tok = self.token(id).ok_or(Error::IdOutOfRange {
                id,
                size: self.len(),
            })?;
            if i > 0 {
                out.push(' ');
            }
            out.push_str(tok);
        }
        Ok(out)
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines.next().transpose()?;
        if header.as_deref().map(|h| h.trim_end_matches('\r')) != Some(VOCAB_HEADER) {
            return Err(Error::InvalidVocabulary(format!(
                "missing header line {VOCAB_HEADER:?}"
            )));
        }
        let mut tokens = Vec::new();
        for line in lines {
            let line = line?;
            tokens.push(line.trim_end_matches('\r').to_owned());
        }
        // tolerate a trailing blank line at EOF only
        if tokens.last().is_some_and(String::is_empty) {
            tokens.pop();
        }
        Self::from_tokens(tokens)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "{VOCAB_HEADER}")?;
        for tok in &self.tokens {
            writeln!(writer, "{tok}")?;
        }
        Ok(())
    }

    pub fn to_file_string(&self) -> String {
        let mut s = String::with_capacity(self.tokens.iter().map(|t| t.len() + 1).sum());
        let _ = writeln!(s, "{VOCAB_HEADER}");
        for tok in &self.tokens {
            s.push_str(tok);
            s.push('\n');
        }
        s
    }
}

/// FNV-1a 64 over each token followed by a newline.
fn version_tag(tokens: &[String]) -> u64 {
    let mut h = FnvHasher::default();
    for tok in tokens {
        h.write(tok.as_bytes());
        h.write(b"\n");
    }
    h.finish()
}
