//! Client side of the newline-delimited JSON logit-source protocol.
//!
//! One JSON object per line in each direction. The first exchange is a
//! handshake carrying the vocabulary version tag as 16 lowercase hex digits:
//!
//! ```text
//! > {"op":"hello","version_tag":"8c3f...","vocab_size":1234}
//! < {"op":"hello","version_tag":"8c3f..."}
//! > {"op":"logits","context":[4,17]}
//! < {"logits":[...]}
//! > {"op":"generate","context":[4,17],"bias_ids":[0,3],"alpha":4.0,"temperature":0.1,"max_tokens":50}
//! < {"ids":[...]}
//! < {"error":"..."}          (any request may be answered with an error frame)
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{LogitSource, SamplerConfig};
use crate::keying::KeywordPartition;
use crate::text_codec::{TokenId, Vocabulary};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Hello {
        version_tag: String,
        vocab_size: usize,
    },
    Logits {
        context: Vec<TokenId>,
    },
    Generate {
        context: Vec<TokenId>,
        bias_ids: Vec<TokenId>,
        alpha: f64,
        temperature: f64,
        max_tokens: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Error { error: String },
    Hello { op: String, version_tag: String },
    Logits { logits: Vec<f64> },
    Ids { ids: Vec<TokenId> },
}

struct Pipe {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
}

pub struct ExternalSource {
    pipe: Mutex<Pipe>,
    vocab_version: u64,
    vocab_size: usize,
    seed_len: usize,
    child: Option<Child>,
}

impl std::fmt::Debug for ExternalSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalSource")
            .field(
                "vocab_version",
                &format_args!("{:016x}", self.vocab_version),
            )
            .field("vocab_size", &self.vocab_size)
            .finish_non_exhaustive()
    }
}

impl ExternalSource {
    /// Wraps an established byte stream and performs the handshake.
    pub fn connect<R, W>(reader: R, writer: W, vocab: &Vocabulary) -> Result<Self>
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let source = Self {
            pipe: Mutex::new(Pipe {
                reader: Box::new(reader),
                writer: Box::new(writer),
            }),
            vocab_version: vocab.version_tag(),
            vocab_size: vocab.len(),
            seed_len: usize::MAX,
            child: None,
        };
        source.handshake()?;
        Ok(source)
    }

    /// Launches `program` with piped stdio and performs the handshake.
    pub fn spawn(program: &str, args: &[String], vocab: &Vocabulary) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        match Self::connect(BufReader::new(stdout), stdin, vocab) {
            Ok(mut source) => {
                source.child = Some(child);
                Ok(source)
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }

    /// Number of leading cover tokens sent as initial context
    /// (default: the whole cover).
    pub fn with_seed_len(mut self, seed_len: usize) -> Self {
        self.seed_len = seed_len;
        self
    }

    fn handshake(&self) -> Result<()> {
        let tag = format!("{:016x}", self.vocab_version);
        let reply = self.call(&Request::Hello {
            version_tag: tag.clone(),
            vocab_size: self.vocab_size,
        })?;
        match reply {
            Response::Hello { op, version_tag } if op == "hello" => {
                if version_tag == tag {
                    Ok(())
                } else {
                    Err(Error::Protocol(format!(
                        "vocabulary version mismatch: local {tag}, remote {version_tag}"
                    )))
                }
            }
            other => Err(Error::Protocol(format!(
                "unexpected handshake reply {other:?}"
            ))),
        }
    }

    fn call(&self, request: &Request) -> Result<Response> {
        let mut pipe = self.pipe.lock().unwrap_or_else(|e| e.into_inner());
        let line = serde_json::to_string(request)?;
        pipe.writer.write_all(line.as_bytes())?;
        pipe.writer.write_all(b"\n")?;
        pipe.writer.flush()?;

        let mut reply = String::new();
        if pipe.reader.read_line(&mut reply)? == 0 {
            return Err(Error::Protocol("logit source closed the stream".into()));
        }
        match serde_json::from_str(reply.trim_end())? {
            Response::Error { error } => Err(Error::Protocol(error)),
            r => Ok(r),
        }
    }

    /// Asks a source that samples internally for `max_tokens` ids, biased
    /// toward the keywords of `partition`.
    pub fn generate(
        &self,
        context: &[TokenId],
        partition: &KeywordPartition,
        config: &SamplerConfig,
    ) -> Result<Vec<TokenId>> {
        config.validate()?;
        if partition.vocab_version() != self.vocab_version {
            return Err(Error::VersionMismatch {
                expected: self.vocab_version,
                found: partition.vocab_version(),
            });
        }
        let reply = self.call(&Request::Generate {
            context: context.to_vec(),
            bias_ids: partition.keyword_ids(self.vocab_size),
            alpha: config.alpha,
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            seed: Some(config.rng_seed),
        })?;
        match reply {
            Response::Ids { ids } => {
                if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.vocab_size) {
                    return Err(Error::IdOutOfRange {
                        id: bad,
                        size: self.vocab_size,
                    });
                }
                Ok(ids)
            }
            other => Err(Error::Protocol(format!("expected ids, got {other:?}"))),
        }
    }
}

impl LogitSource for ExternalSource {
    fn vocab_version(&self) -> u64 {
        self.vocab_version
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logits(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        match self.call(&Request::Logits {
            context: context.to_vec(),
        })? {
            Response::Logits { logits } => {
                if logits.len() != self.vocab_size {
                    return Err(Error::LengthMismatch {
                        expected: self.vocab_size,
                        found: logits.len(),
                    });
                }
                Ok(logits)
            }
            other => Err(Error::Protocol(format!("expected logits, got {other:?}"))),
        }
    }

    fn seed_len(&self) -> usize {
        self.seed_len
    }
}

impl Drop for ExternalSource {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
