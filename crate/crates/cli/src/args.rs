use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stegochain::channels::ChannelKind;
use stegochain::detector::CountMode;

#[derive(Debug, Parser)]
#[command(
    name = "stegochain",
    version,
    about = "Keyed logit-bias text steganography"
)]
#[command(
    after_help = "Exit codes: 0 success (detect: mark present), 1 detect: mark absent, 2 error.\n\
Every setting can also come from a STEGOCHAIN_* environment variable or a --config TOML file;\n\
flags override the environment, which overrides the config file."
)]
pub struct Cli {
    #[command(flatten)]
    pub settings: Settings,

    /// Print the resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    /// TOML file with default settings.
    #[arg(long, global = true, env = "STEGOCHAIN_CONFIG")]
    pub config: Option<PathBuf>,

    /// Vocabulary file (built from the corpus when absent).
    #[arg(long, global = true, env = "STEGOCHAIN_VOCAB")]
    pub vocab: Option<PathBuf>,

    /// Plain-text corpus, paragraphs separated by blank lines (bundled corpus when absent).
    #[arg(long, global = true, env = "STEGOCHAIN_CORPUS")]
    pub corpus: Option<PathBuf>,

    /// Model written by `train-model` (trained from the corpus when absent).
    #[arg(long, global = true, env = "STEGOCHAIN_MODEL")]
    pub model: Option<PathBuf>,

    /// Master seed file written by `keygen`.
    #[arg(long, global = true, env = "STEGOCHAIN_KEY")]
    pub key: Option<PathBuf>,

    /// Bits per message; omit for zero-bit marking.
    #[arg(long, global = true, env = "STEGOCHAIN_CAPACITY",
          value_parser = clap::value_parser!(u32).range(1..=16))]
    pub capacity: Option<u32>,

    #[arg(
        long,
        global = true,
        env = "STEGOCHAIN_ALPHA",
        help = "Logit bias added to keywords [default: 4]"
    )]
    pub alpha: Option<f64>,

    #[arg(
        long,
        global = true,
        env = "STEGOCHAIN_DELTA",
        help = "Keyword fraction of the vocabulary [default: 0.5]"
    )]
    pub delta: Option<f64>,

    #[arg(
        long,
        global = true,
        env = "STEGOCHAIN_TEMPERATURE",
        help = "Sampling temperature [default: 0.1]"
    )]
    pub temperature: Option<f64>,

    #[arg(
        long,
        global = true,
        env = "STEGOCHAIN_THETA",
        help = "Detection threshold on the survival probability [default: 0.03]"
    )]
    pub theta: Option<f64>,

    #[arg(long, global = true, env = "STEGOCHAIN_MAX_TOKENS")]
    pub max_tokens: Option<usize>,

    #[arg(long, global = true, env = "STEGOCHAIN_COUNT_MODE", value_parser = parse_count_mode)]
    pub count_mode: Option<CountMode>,

    /// identity | resample | deepfake | hybrid | noise
    #[arg(long, global = true, env = "STEGOCHAIN_CHANNEL")]
    pub channel: Option<ChannelKind>,

    #[arg(long, global = true, env = "STEGOCHAIN_P_DEL")]
    pub p_del: Option<f64>,

    #[arg(long, global = true, env = "STEGOCHAIN_P_SUB")]
    pub p_sub: Option<f64>,

    #[arg(long, global = true, env = "STEGOCHAIN_P_INS")]
    pub p_ins: Option<f64>,

    /// Seed for key generation, sampling and channels.
    #[arg(long, global = true, env = "STEGOCHAIN_SEED")]
    pub seed: Option<u64>,

    /// Output file (directory for `eval`).
    #[arg(long, short, global = true, env = "STEGOCHAIN_OUT")]
    pub out: Option<PathBuf>,

    /// External logit source speaking the JSON-lines protocol, e.g. "python3 adapter.py".
    #[arg(long, global = true, env = "STEGOCHAIN_SOURCE_CMD")]
    pub source_cmd: Option<String>,
}

fn parse_count_mode(s: &str) -> Result<CountMode, String> {
    match s {
        "distinct" => Ok(CountMode::Distinct),
        "occurrences" => Ok(CountMode::Occurrences),
        _ => Err(format!("expected distinct or occurrences, got {s:?}")),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a master seed file and print the derived key fingerprints.
    Keygen,
    /// Regenerate a cover text so that it carries a symbol.
    Embed {
        cover: PathBuf,
        /// Message symbol, below 2^capacity.
        #[arg(long, default_value_t = 0)]
        symbol: u64,
    },
    /// Zero-bit test; exits 0 when the mark is present and 1 when it is not.
    Detect { input: PathBuf },
    /// Multi-bit decoding with the key set of --capacity.
    Decode { input: PathBuf },
    /// Pass a text through a transmission channel.
    Channel { input: PathBuf },
    /// Run an evaluation experiment.
    Eval(EvalArgs),
    /// Train the n-gram model and write it (and optionally the vocabulary).
    TrainModel {
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 0.001)]
        smoothing: f64,
        #[arg(long)]
        vocab_out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Roc,
    Capacity,
    Zipf,
    Perplexity,
    Robustness,
    Null,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Roc => "roc",
            Experiment::Capacity => "capacity",
            Experiment::Zipf => "zipf",
            Experiment::Perplexity => "perplexity",
            Experiment::Robustness => "robustness",
            Experiment::Null => "null",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub experiment: Experiment,
    /// Capacities for `capacity`: a range "1..10" or a list "1,2,4".
    #[arg(long, default_value = "1..10", value_parser = parse_bits)]
    pub bits: Bits,
    /// Trials per class (`roc`), per channel (`robustness`) or texts (`null`).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Cover paragraphs for `capacity`, `zipf` and `perplexity`.
    #[arg(long)]
    pub paragraphs: Option<usize>,
    /// Tokens per cover (`roc`, `robustness`) or per text (`null`).
    #[arg(long)]
    pub length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bits(pub Vec<u32>);

fn parse_bits(s: &str) -> Result<Bits, String> {
    let parse = |x: &str| x.trim().parse::<u32>().map_err(|e| format!("{x:?}: {e}"));
    let bits: Vec<u32> = match s.split_once("..") {
        Some((lo, hi)) => {
            let hi = hi.strip_prefix('=').unwrap_or(hi);
            (parse(lo)?..=parse(hi)?).collect()
        }
        None => s.split(',').map(parse).collect::<Result<_, _>>()?,
    };
    if bits.is_empty() || bits.iter().any(|b| !(1..=16).contains(b)) {
        return Err(format!("capacities must lie in 1..=16, got {s:?}"));
    }
    Ok(Bits(bits))
}
