use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use stegochain::channels::ChannelKind;
use stegochain::evalkit::{
    run_capacity_sweep, run_null_calibration, run_robustness_matrix, run_secrecy_analysis,
    run_zero_bit_experiment, write_capacity_csv, write_rank_frequency_csv, write_robustness_csv,
    write_roc_csv, CapacityParams, EvalConfig, NullParams, RobustnessParams, SecrecyParams,
    ZeroBitParams,
};
use stegochain::generator::SamplerConfig;
use stegochain::keying::{derive_keyset, MasterSeed};
use stegochain::text_codec::TokenSequence;

use crate::args::{EvalArgs, Experiment};
use crate::commands::{load_master, print_json, Resources};
use crate::config::RunConfig;

const DEFAULT_COVER_LEN: usize = 100;

fn eval_config(cfg: &RunConfig) -> EvalConfig {
    EvalConfig {
        master_seed: cfg.rng_seed(),
        delta: cfg.delta,
        theta: cfg.theta,
        count_mode: cfg.count_mode,
        sampler: SamplerConfig {
            alpha: cfg.alpha,
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
            ..SamplerConfig::default()
        },
        ..EvalConfig::default()
    }
}

fn opening(res: &Resources, len: usize) -> TokenSequence {
    let ids = res
        .paragraphs
        .iter()
        .flat_map(|p| p.ids.iter().copied())
        .take(len)
        .collect();
    TokenSequence::from_ids(ids, res.vocab.version_tag())
}

/// Full report and CSV tables under `dir`.
struct Output<'a> {
    dir: Option<&'a Path>,
}

impl Output<'_> {
    fn json(&self, name: &str, report: &impl Serialize) -> Result<()> {
        if let Some(dir) = self.dir {
            let path = dir.join(format!("{name}.json"));
            fs::write(&path, serde_json::to_string_pretty(report)? + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }

    fn csv(
        &self,
        name: &str,
        write: impl FnOnce(BufWriter<File>) -> stegochain::Result<()>,
    ) -> Result<()> {
        if let Some(dir) = self.dir {
            let path = dir.join(format!("{name}.csv"));
            let file =
                File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write(BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

pub fn run(cfg: &RunConfig, args: &EvalArgs) -> Result<()> {
    let res = Resources::load(cfg)?;
    let eval = eval_config(cfg);
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let out = Output {
        dir: cfg.out.as_deref(),
    };
    let name = args.experiment.name();
    let len = args.length.unwrap_or(DEFAULT_COVER_LEN);

    let summary: Value = match args.experiment {
        Experiment::Roc => {
            let trials = args.trials.unwrap_or(100);
            let params = ZeroBitParams {
                eval,
                n_marked: trials,
                n_unmarked: trials,
            };
            let r = run_zero_bit_experiment(&opening(&res, len), res.source(), &params)?;
            out.json(name, &r)?;
            out.csv(name, |w| write_roc_csv(&r.roc, w))?;
            json!({
                "text_len": r.text_len,
                "trials_per_class": trials,
                "auc": r.auc,
                "tpr": r.tpr,
                "fpr": r.fpr,
                "theta": cfg.theta,
            })
        }
        Experiment::Capacity => {
            let params = CapacityParams {
                eval,
                capacities: args.bits.0.clone(),
                paragraphs: args.paragraphs.unwrap_or(100),
            };
            let r = run_capacity_sweep(&res.paragraphs, res.source(), &params)?;
            out.json(name, &r)?;
            out.csv(name, |w| write_capacity_csv(&r, w))?;
            json!({ "entries": r.entries })
        }
        Experiment::Zipf | Experiment::Perplexity => {
            let params = SecrecyParams {
                eval,
                paragraphs: args.paragraphs.unwrap_or(100),
            };
            let r = run_secrecy_analysis(&res.paragraphs, &res.model, &params)?;
            out.json(name, &r)?;
            if args.experiment == Experiment::Zipf {
                out.csv(name, |w| {
                    write_rank_frequency_csv(
                        &[("cover", &r.cover_zipf), ("stego", &r.stego_zipf)],
                        w,
                    )
                })?;
                json!({
                    "cover": { "tokens": r.cover_zipf.total_tokens, "slope": r.cover_zipf.log_log_slope, "pearson_r": r.cover_zipf.pearson_r },
                    "stego": { "tokens": r.stego_zipf.total_tokens, "slope": r.stego_zipf.log_log_slope, "pearson_r": r.stego_zipf.pearson_r },
                    "slope_difference": r.slope_difference,
                })
            } else {
                out.csv(name, |w| {
                    let mut w = csv::Writer::from_writer(w);
                    w.write_record(["text", "cover", "stego"])?;
                    for (i, (c, s)) in r
                        .cover_perplexities
                        .iter()
                        .zip(&r.stego_perplexities)
                        .enumerate()
                    {
                        w.write_record([i.to_string(), c.to_string(), s.to_string()])?;
                    }
                    w.flush()?;
                    Ok(())
                })?;
                json!({
                    "cover": r.cover_perplexity,
                    "stego": r.stego_perplexity,
                    "iqr_overlap": r.iqr_overlap,
                })
            }
        }
        Experiment::Robustness => {
            let capacity = cfg.capacity.unwrap_or(1);
            let master = match &cfg.key {
                Some(_) => load_master(cfg)?,
                None => MasterSeed::from_u64(cfg.rng_seed()).child("robustness/keys", 0),
            };
            let keys = derive_keyset(&master, capacity)?;
            let mut params = RobustnessParams {
                eval,
                trials: args.trials.unwrap_or(100),
                ..RobustnessParams::default()
            };
            if cfg.channel.kind == ChannelKind::Noise {
                params.channels.push(cfg.channel.clone());
            }
            let r = run_robustness_matrix(
                &[opening(&res, len)],
                res.source(),
                &res.vocab,
                &keys,
                &params,
            )?;
            out.json(name, &r)?;
            out.csv(name, |w| write_robustness_csv(&r, w))?;
            json!({ "capacity": capacity, "rows": r.rows })
        }
        Experiment::Null => {
            let params = NullParams {
                eval,
                texts: args.trials.unwrap_or(1000),
                text_len: args.length.unwrap_or(200),
            };
            let r = run_null_calibration(&res.paragraphs, res.source(), &params)?;
            out.json(name, &r)?;
            json!({
                "texts": r.trials.len(),
                "theta": cfg.theta,
                "positive_rate": r.positive_rate,
                "upper_band": r.upper_band,
                "occurrence_positive_rate": r.occurrence_positive_rate,
            })
        }
    };

    let mut summary = summary;
    let fields = summary.as_object_mut().expect("summary is an object");
    fields.insert("experiment".into(), json!(name));
    fields.insert("seed".into(), json!(cfg.rng_seed()));
    if let Some(dir) = &cfg.out {
        fields.insert("output_dir".into(), json!(dir));
    }
    print_json(&summary)
}
