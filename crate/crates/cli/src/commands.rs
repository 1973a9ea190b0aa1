use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;
use stegochain::channels::apply_channel;
use stegochain::detector::{
    binomial_sf, count_keywords, multi_bit_decode, zero_bit_decide, DetectionReport,
};
use stegochain::evalkit::{split_paragraphs, BUNDLED_CORPUS};
use stegochain::generator::{
    encode, train_ngram, ExternalSource, LogitSource, NgramModel, SamplerConfig, DEFAULT_ORDER,
    DEFAULT_SMOOTHING,
};
use stegochain::keying::{derive_keyset, KeySet, KeywordPartition, MasterSeed};
use stegochain::text_codec::{NormalizeFlags, TokenSequence, Vocabulary};

use crate::config::RunConfig;

/// Vocabulary, corpus paragraphs and language model for one invocation.
pub struct Resources {
    pub vocab: Vocabulary,
    pub paragraphs: Vec<TokenSequence>,
    pub model: NgramModel,
    source: Option<ExternalSource>,
}

fn corpus_text(cfg: &RunConfig) -> Result<String> {
    match &cfg.corpus {
        Some(path) => {
            fs::read_to_string(path).with_context(|| format!("reading corpus {}", path.display()))
        }
        None => Ok(BUNDLED_CORPUS.to_string()),
    }
}

fn load_vocab(cfg: &RunConfig, corpus: &str) -> Result<Vocabulary> {
    match &cfg.vocab {
        Some(path) => {
            Vocabulary::load(path).with_context(|| format!("reading vocabulary {}", path.display()))
        }
        None => Ok(Vocabulary::from_text(corpus, NormalizeFlags::ALL)?),
    }
}

fn tokenize_paragraphs(vocab: &Vocabulary, corpus: &str) -> Vec<TokenSequence> {
    split_paragraphs(corpus)
        .into_iter()
        .map(|p| vocab.encode_text(p, NormalizeFlags::ALL))
        .filter(|s| !s.is_empty())
        .collect()
}

impl Resources {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let corpus = corpus_text(cfg)?;
        let vocab = load_vocab(cfg, &corpus)?;
        let paragraphs = tokenize_paragraphs(&vocab, &corpus);
        let model = match &cfg.model {
            Some(path) => {
                let m = NgramModel::load(path)
                    .with_context(|| format!("reading model {}", path.display()))?;
                vocab
                    .check_version(m.vocab_version())
                    .context("model was trained on a different vocabulary")?;
                m
            }
            None => train_ngram(&paragraphs, &vocab, DEFAULT_ORDER, DEFAULT_SMOOTHING)?,
        };
        let source = match &cfg.source_cmd {
            Some(cmd) => {
                let mut parts = cmd.split_whitespace().map(str::to_string);
                let program = parts.next().ok_or_else(|| anyhow!("empty --source-cmd"))?;
                let args: Vec<String> = parts.collect();
                Some(
                    ExternalSource::spawn(&program, &args, &vocab)
                        .with_context(|| format!("starting logit source {cmd:?}"))?,
                )
            }
            None => None,
        };
        Ok(Self {
            vocab,
            paragraphs,
            model,
            source,
        })
    }

    pub fn source(&self) -> &dyn LogitSource {
        match &self.source {
            Some(s) => s,
            None => &self.model,
        }
    }

    fn read_text(&self, path: &Path) -> Result<TokenSequence> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(self.vocab.encode_text(&text, NormalizeFlags::ALL))
    }
}

pub fn load_master(cfg: &RunConfig) -> Result<MasterSeed> {
    let path = cfg
        .key
        .as_ref()
        .ok_or_else(|| anyhow!("--key is required"))?;
    MasterSeed::load(path).with_context(|| format!("reading key file {}", path.display()))
}

/// Key set of `capacity`, or the single zero-bit key when it is absent.
fn keys_for(master: &MasterSeed, capacity: Option<u32>) -> Result<KeySet> {
    Ok(match capacity {
        Some(c) => derive_keyset(master, c)?,
        None => KeySet::from_keys(vec![master.derive_key(0)])?,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Writes to stdout; a closed pipe is not an error.
pub fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn print_json(value: &impl serde::Serialize) -> Result<()> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"))
}

pub fn keygen(cfg: &RunConfig) -> Result<()> {
    let out = cfg
        .out
        .as_ref()
        .or(cfg.key.as_ref())
        .ok_or_else(|| anyhow!("keygen needs --out (or --key) for the seed file"))?;
    let master = match cfg.seed {
        Some(seed) => MasterSeed::from_u64(seed),
        None => {
            let mut bytes = [0u8; 32];
            getrandom::getrandom(&mut bytes).map_err(|e| anyhow!("system randomness: {e}"))?;
            MasterSeed::new(bytes)
        }
    };
    write_file(out, &format!("{}\n", master.to_hex()))?;
    let keys = keys_for(&master, cfg.capacity)?;
    print_json(&json!({
        "key_file": out,
        "capacity": cfg.capacity,
        "fingerprints": keys.fingerprints(),
    }))
}

pub fn embed(cfg: &RunConfig, cover_path: &Path, symbol: u64) -> Result<()> {
    let out = cfg
        .out
        .as_ref()
        .ok_or_else(|| anyhow!("embed needs --out for the stego text"))?;
    let master = load_master(cfg)?;
    let keys = keys_for(&master, cfg.capacity)?;
    if symbol >= keys.len() as u64 {
        bail!(
            "symbol {symbol} does not fit in {} key(s); raise --capacity",
            keys.len()
        );
    }
    let res = Resources::load(cfg)?;
    let cover = res.read_text(cover_path)?;
    if cover.is_empty() {
        bail!("cover {} has no in-vocabulary words", cover_path.display());
    }
    let partition = keys.partition(symbol as usize, cfg.delta, res.vocab.version_tag())?;
    let sampler = SamplerConfig {
        alpha: cfg.alpha,
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
        rng_seed: cfg.rng_seed(),
        slack: 0,
    };
    let stego = encode(&cover, res.source(), &partition, &sampler)?;
    write_file(out, &format!("{}\n", res.vocab.detokenize(&stego)?))?;

    let count = count_keywords(&stego, &partition, cfg.count_mode)?;
    let sf = if count.n == 0 {
        None
    } else {
        Some(binomial_sf(count.t, count.n, cfg.delta)?)
    };
    print_json(&json!({
        "stego_file": out,
        "symbol": symbol,
        "capacity": cfg.capacity,
        "key": partition.key().fingerprint(),
        "alpha": cfg.alpha,
        "delta": cfg.delta,
        "temperature": cfg.temperature,
        "seed": cfg.rng_seed(),
        "unmarked_baseline": cfg.alpha == 0.0,
        "cover_tokens": cover.len(),
        "cover_oov": cover.oov_count,
        "tokens": stego.len(),
        "n": count.n,
        "t": count.t,
        "sf": sf,
        "count_mode": cfg.count_mode,
    }))
}

/// Returns whether the mark is present.
pub fn detect(cfg: &RunConfig, input: &Path) -> Result<bool> {
    let master = load_master(cfg)?;
    let res = Resources::load(cfg)?;
    let seq = res.read_text(input)?;
    let partition =
        KeywordPartition::new(master.derive_key(0), cfg.delta, res.vocab.version_tag())?;
    let report: DetectionReport = zero_bit_decide(&seq, &partition, cfg.theta, cfg.count_mode)?;
    print_json(&report)?;
    Ok(report.is_present() == Some(true))
}

pub fn decode(cfg: &RunConfig, input: &Path) -> Result<()> {
    let capacity = cfg
        .capacity
        .ok_or_else(|| anyhow!("decode needs --capacity"))?;
    let master = load_master(cfg)?;
    let keys = derive_keyset(&master, capacity)?;
    let res = Resources::load(cfg)?;
    let seq = res.read_text(input)?;
    print_json(&multi_bit_decode(&seq, &keys, cfg.delta, cfg.count_mode)?)
}

pub fn channel(cfg: &RunConfig, input: &Path) -> Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let corpus = corpus_text(cfg)?;
    let vocab = load_vocab(cfg, &corpus)?;
    let out = apply_channel(&text, &cfg.channel, &vocab)?;
    match &cfg.out {
        Some(path) => write_file(path, &format!("{out}\n")),
        None => emit(&format!("{out}\n")),
    }
}

pub fn train_model(
    cfg: &RunConfig,
    order: usize,
    smoothing: f64,
    vocab_out: Option<&PathBuf>,
) -> Result<()> {
    let out = cfg
        .out
        .as_ref()
        .ok_or_else(|| anyhow!("train-model needs --out for the model file"))?;
    let corpus = corpus_text(cfg)?;
    let vocab = load_vocab(cfg, &corpus)?;
    let paragraphs = tokenize_paragraphs(&vocab, &corpus);
    let model = train_ngram(&paragraphs, &vocab, order, smoothing)?;
    model.save(out)?;
    if let Some(path) = vocab_out {
        write_file(path, &vocab.to_file_string())?;
    }
    print_json(&json!({
        "model_file": out,
        "vocab_file": vocab_out,
        "order": order,
        "smoothing": smoothing,
        "vocab_size": vocab.len(),
        "version_tag": format!("{:016x}", vocab.version_tag()),
        "contexts": model.context_count(),
        "paragraphs": paragraphs.len(),
    }))
}
