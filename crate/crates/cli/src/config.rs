use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use stegochain::channels::{ChannelKind, ChannelSpec};
use stegochain::detector::{CountMode, DEFAULT_THETA};
use stegochain::generator::{DEFAULT_ALPHA, DEFAULT_TEMPERATURE};
use stegochain::keying::{DEFAULT_DELTA, MAX_CAPACITY};

use crate::args::Settings;

/// Fully resolved settings. Also the schema of `--config` files, where every
/// field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub vocab: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub key: Option<PathBuf>,
    pub seed: Option<u64>,
    pub capacity: Option<u32>,
    pub alpha: f64,
    pub delta: f64,
    pub temperature: f64,
    pub theta: f64,
    pub max_tokens: usize,
    pub count_mode: CountMode,
    pub channel: ChannelSpec,
    pub out: Option<PathBuf>,
    pub source_cmd: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            vocab: None,
            corpus: None,
            model: None,
            key: None,
            seed: None,
            capacity: None,
            alpha: DEFAULT_ALPHA,
            delta: DEFAULT_DELTA,
            temperature: DEFAULT_TEMPERATURE,
            theta: DEFAULT_THETA,
            max_tokens: 1024,
            count_mode: CountMode::default(),
            channel: ChannelSpec::identity(),
            out: None,
            source_cmd: None,
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }

    /// Config file (if any) overlaid with flags and environment variables.
    pub fn resolve(s: &Settings) -> anyhow::Result<Self> {
        let mut cfg = match &s.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        set_opt(&mut cfg.vocab, s.vocab.clone());
        set_opt(&mut cfg.corpus, s.corpus.clone());
        set_opt(&mut cfg.model, s.model.clone());
        set_opt(&mut cfg.key, s.key.clone());
        set_opt(&mut cfg.seed, s.seed);
        set_opt(&mut cfg.capacity, s.capacity);
        set(&mut cfg.alpha, s.alpha);
        set(&mut cfg.delta, s.delta);
        set(&mut cfg.temperature, s.temperature);
        set(&mut cfg.theta, s.theta);
        set(&mut cfg.max_tokens, s.max_tokens);
        set(&mut cfg.count_mode, s.count_mode);
        set_opt(&mut cfg.out, s.out.clone());
        set_opt(&mut cfg.source_cmd, s.source_cmd.clone());

        if let Some(kind) = s.channel {
            if kind != cfg.channel.kind {
                cfg.channel = ChannelSpec::new(kind);
            }
        }
        set(&mut cfg.channel.p_del, s.p_del);
        set(&mut cfg.channel.p_sub, s.p_sub);
        set(&mut cfg.channel.p_ins, s.p_ins);
        if let Some(seed) = cfg.seed {
            cfg.channel.rng_seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if let Some(c) = self.capacity {
            if !(1..=MAX_CAPACITY).contains(&c) {
                bail!("capacity {c} is outside 1..={MAX_CAPACITY}");
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            bail!("alpha {} must be finite and non-negative", self.alpha);
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            bail!("delta {} is outside (0, 1)", self.delta);
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            bail!("temperature {} must be positive", self.temperature);
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            bail!("theta {} is outside (0, 1)", self.theta);
        }
        if self.max_tokens == 0 {
            bail!("max_tokens must be at least 1");
        }
        if self.channel.kind != ChannelKind::Noise
            && (self.channel.p_del > 0.0 || self.channel.p_sub > 0.0 || self.channel.p_ins > 0.0)
        {
            bail!("--p-del/--p-sub/--p-ins require --channel noise");
        }
        self.channel.validate()?;
        Ok(())
    }

    pub fn rng_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig {
            capacity: Some(3),
            seed: Some(9),
            ..RunConfig::default()
        };
        cfg.channel = ChannelSpec::noise(0.1, 0.2, 0.0, 9);
        let text = cfg.to_toml().unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("alpah = 3.0").is_err());
    }
}
