//! End-to-end acceptance gates. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any gate fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, ToPrimitive, Zero};
use serde_json::Value;
use stegochain::channels::ChannelSpec;
use stegochain::detector::binomial_sf;
use stegochain::evalkit::{
    run_capacity_sweep, run_null_calibration, run_robustness_matrix, run_secrecy_analysis,
    run_zero_bit_experiment, CapacityParams, NullParams, RobustnessParams, SecrecyParams,
    Workbench, ZeroBitParams,
};
use stegochain::keying::{derive_keyset, MasterSeed};

struct Gate {
    name: &'static str,
    limit: Option<Duration>,
    check: fn(&Workbench) -> Result<String, String>,
}

fn main() -> ExitCode {
    let wb = Workbench::bundled().expect("bundled corpus");
    let gates = [
        Gate {
            name: "sf-numerics",
            limit: Some(Duration::from_secs(5)),
            check: sf_numerics,
        },
        Gate {
            name: "zero-bit",
            limit: Some(Duration::from_secs(120)),
            check: zero_bit,
        },
        Gate {
            name: "capacity",
            limit: Some(Duration::from_secs(600)),
            check: capacity,
        },
        Gate {
            name: "robustness",
            limit: Some(Duration::from_secs(300)),
            check: robustness,
        },
        Gate {
            name: "null-calibration",
            limit: None,
            check: null_calibration,
        },
        Gate {
            name: "secrecy",
            limit: None,
            check: secrecy,
        },
        Gate {
            name: "determinism",
            limit: None,
            check: determinism,
        },
    ];
    let mut failed = 0;
    for gate in &gates {
        let start = Instant::now();
        let mut result = (gate.check)(&wb);
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(limit)) = (&result, gate.limit) {
            if elapsed > limit {
                result = Err(format!("{detail}; took {elapsed:.1?}, limit {limit:?}"));
            }
        }
        match result {
            Ok(detail) => println!("PASS {:<17} {detail} ({elapsed:.1?})", gate.name),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:<17} {detail} ({elapsed:.1?})", gate.name);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        gates.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Exact SF(t; n, num/den) for every t, as integer numerators over den^n.
fn exact_sf_row(n: u64, num: u64, den: u64) -> Vec<BigRational> {
    let mut choose = BigInt::one();
    let mut terms = Vec::with_capacity(n as usize + 1);
    for k in 0..=n {
        terms.push(
            &choose * BigInt::from(num).pow(k as u32) * BigInt::from(den - num).pow((n - k) as u32),
        );
        choose = choose * BigInt::from(n - k) / BigInt::from(k + 1);
    }
    let scale = BigInt::from(den).pow(n as u32);
    let mut tail = BigInt::zero();
    let mut row = vec![BigRational::zero(); n as usize + 1];
    for t in (0..=n as usize).rev() {
        row[t] = BigRational::new(tail.clone(), scale.clone());
        tail += &terms[t];
    }
    row
}

fn sf_numerics(_: &Workbench) -> Result<String, String> {
    let spot = binomial_sf(7, 10, 0.5).map_err(|e| e.to_string())?;
    if ((spot - 0.0546875) / 0.0546875).abs() > 1e-9 {
        return Err(format!("SF(7;10,0.5) = {spot}"));
    }
    let mut worst = 0.0f64;
    let mut cases = 0;
    for (num, den) in [(1, 4), (1, 2), (3, 4)] {
        let delta = num as f64 / den as f64;
        for n in 0..=64u64 {
            let row = exact_sf_row(n, num, den);
            for t in 0..=n {
                let exact = row[t as usize].to_f64().expect("finite");
                let got = binomial_sf(t, n, delta).map_err(|e| e.to_string())?;
                let rel = if exact == 0.0 {
                    got.abs()
                } else {
                    ((got - exact) / exact).abs()
                };
                if rel.is_nan() || rel > 1e-9 {
                    return Err(format!("SF({t};{n},{delta}) = {got}, exact {exact}"));
                }
                worst = worst.max(rel);
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} cases, max relative error {worst:.2e}"))
}

fn zero_bit(wb: &Workbench) -> Result<String, String> {
    let params = ZeroBitParams::default();
    let r =
        run_zero_bit_experiment(&wb.opening(100), &wb.model, &params).map_err(|e| e.to_string())?;
    ensure(
        r.auc >= 0.95 && r.fpr <= 0.08 && r.tpr >= 0.85,
        format!(
            "AUC {:.4} (>= 0.95), TPR {:.2} (>= 0.85), FPR {:.2} (<= 0.08)",
            r.auc, r.tpr, r.fpr
        ),
    )
}

fn capacity(wb: &Workbench) -> Result<String, String> {
    let covers: Vec<_> = wb
        .paragraphs
        .iter()
        .filter(|p| p.len() >= 50)
        .cloned()
        .collect();
    let params = CapacityParams::default();
    if covers.len() < params.paragraphs {
        return Err(format!("only {} paragraphs of >= 50 tokens", covers.len()));
    }
    let curve = run_capacity_sweep(&covers, &wb.model, &params).map_err(|e| e.to_string())?;
    let ber = |c| curve.ber(c).expect("swept");
    let low = (1..=4).map(ber).fold(0.0, f64::max);
    let table: Vec<String> = curve
        .entries
        .iter()
        .map(|e| format!("{}:{:.3}", e.capacity, e.ber))
        .collect();
    ensure(
        low <= 0.10 && ber(10) > ber(4),
        format!(
            "max BER(1..4) {low:.3} (<= 0.10), BER(10) {:.3} > BER(4) {:.3}; [{}]",
            ber(10),
            ber(4),
            table.join(" ")
        ),
    )
}

fn robustness(wb: &Workbench) -> Result<String, String> {
    let keys = derive_keyset(&MasterSeed::from_u64(0).child("robustness/keys", 0), 1)
        .map_err(|e| e.to_string())?;
    let mut params = RobustnessParams::default();
    let noise = ChannelSpec::noise(0.0, 0.5, 0.0, 0);
    params.channels.push(noise.clone());
    let r = run_robustness_matrix(&[wb.opening(100)], &wb.model, &wb.vocab, &keys, &params)
        .map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut cells = Vec::new();
    for row in &r.rows {
        let pass = if row.channel == noise.label() {
            row.accuracy < 1.0
        } else {
            row.accuracy == 1.0
        };
        ok &= pass && row.trials == 100;
        cells.push(format!("{} {:.2}", row.channel, row.accuracy));
    }
    ensure(ok, cells.join(", "))
}

fn null_calibration(wb: &Workbench) -> Result<String, String> {
    let params = NullParams::default();
    let r = run_null_calibration(&wb.paragraphs, &wb.model, &params).map_err(|e| e.to_string())?;
    ensure(
        r.trials.len() == 1000 && (0.0..=0.06).contains(&r.positive_rate),
        format!(
            "positive rate {:.3} in [0, 0.06] over {} texts; occurrence counting would give {:.3}",
            r.positive_rate,
            r.trials.len(),
            r.occurrence_positive_rate
        ),
    )
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn secrecy(wb: &Workbench) -> Result<String, String> {
    let r = run_secrecy_analysis(&wb.paragraphs, &wb.model, &SecrecyParams::default())
        .map_err(|e| e.to_string())?;
    let measured = serde_json::json!({
        "cover_slope": r.cover_zipf.log_log_slope,
        "cover_r": r.cover_zipf.pearson_r,
        "stego_slope": r.stego_zipf.log_log_slope,
        "stego_r": r.stego_zipf.pearson_r,
        "cover_iqr": [r.cover_perplexity.q1, r.cover_perplexity.q3],
        "stego_iqr": [r.stego_perplexity.q1, r.stego_perplexity.q3],
    });
    let frozen: Value = serde_json::from_str(
        &fs::read_to_string(fixture("secrecy_gates.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;

    let (Some(cr), Some(sr), Some(diff)) = (
        r.cover_zipf.pearson_r,
        r.stego_zipf.pearson_r,
        r.slope_difference,
    ) else {
        return Err("Zipf fit unavailable".into());
    };
    let detail = format!(
        "Zipf r cover {cr:.3} stego {sr:.3} (<= -0.9), slope difference {diff:.3} (<= 0.3), \
         perplexity IQR cover [{:.2}, {:.2}] stego [{:.2}, {:.2}] overlap {}",
        r.cover_perplexity.q1,
        r.cover_perplexity.q3,
        r.stego_perplexity.q1,
        r.stego_perplexity.q3,
        r.iqr_overlap
    );
    if !(cr <= -0.9 && sr <= -0.9 && diff <= 0.3 && r.iqr_overlap) {
        return Err(detail);
    }
    let drift = |a: &Value, b: &Value| -> bool {
        match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => (x - y).abs() > 1e-9 * y.abs().max(1.0),
            _ => match (a.as_array(), b.as_array()) {
                (Some(xs), Some(ys)) => {
                    xs.len() != ys.len()
                        || xs.iter().zip(ys).any(|(x, y)| {
                            (x.as_f64().unwrap() - y.as_f64().unwrap()).abs()
                                > 1e-9 * y.as_f64().unwrap().abs().max(1.0)
                        })
                }
                _ => true,
            },
        }
    };
    for (key, value) in measured.as_object().unwrap() {
        if drift(value, &frozen[key]) {
            return Err(format!(
                "{detail}; {key} = {value} differs from frozen {}",
                frozen[key]
            ));
        }
    }
    Ok(format!("{detail}; matches frozen fixture"))
}

fn stegochain(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stegochain"));
    cmd.current_dir(dir).args(args);
    for (key, _) in std::env::vars() {
        if key.starts_with("STEGOCHAIN_") {
            cmd.env_remove(key);
        }
    }
    cmd.output().expect("spawn stegochain")
}

fn determinism(_: &Workbench) -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    fs::copy(fixture("cover.txt"), d.join("cover.txt")).map_err(|e| e.to_string())?;
    let steps: &[&[&str]] = &[
        &["keygen", "--seed", "21", "--capacity", "4", "-o", "key.hex"],
        &[
            "embed",
            "cover.txt",
            "--key",
            "key.hex",
            "--capacity",
            "4",
            "--symbol",
            "11",
            "--seed",
            "5",
            "-o",
            "stego.txt",
        ],
        &["decode", "stego.txt", "--key", "key.hex", "--capacity", "4"],
        &[
            "embed",
            "cover.txt",
            "--key",
            "key.hex",
            "--seed",
            "5",
            "-o",
            "zero.txt",
        ],
        &["detect", "zero.txt", "--key", "key.hex"],
        &[
            "channel",
            "stego.txt",
            "--channel",
            "noise",
            "--p-del",
            "0.1",
            "--p-sub",
            "0.2",
            "--p-ins",
            "0.1",
            "--seed",
            "6",
            "-o",
            "noisy.txt",
        ],
        &[
            "channel",
            "stego.txt",
            "--channel",
            "hybrid",
            "-o",
            "hybrid.txt",
        ],
        &[
            "train-model",
            "-o",
            "model.json",
            "--vocab-out",
            "vocab.txt",
        ],
        &[
            "eval", "roc", "--trials", "5", "--length", "60", "--seed", "3", "-o", "ev",
        ],
        &[
            "eval",
            "capacity",
            "--bits",
            "1,2,3",
            "--paragraphs",
            "4",
            "--seed",
            "3",
            "-o",
            "ev",
        ],
        &[
            "eval",
            "zipf",
            "--paragraphs",
            "4",
            "--seed",
            "3",
            "-o",
            "ev",
        ],
        &[
            "eval",
            "perplexity",
            "--paragraphs",
            "4",
            "--seed",
            "3",
            "-o",
            "ev",
        ],
        &[
            "eval",
            "robustness",
            "--trials",
            "3",
            "--length",
            "60",
            "--channel",
            "noise",
            "--p-sub",
            "0.5",
            "--seed",
            "3",
            "-o",
            "ev",
        ],
        &[
            "eval", "null", "--trials", "10", "--length", "60", "--seed", "3", "-o", "ev",
        ],
    ];
    let files = [
        "key.hex",
        "stego.txt",
        "zero.txt",
        "noisy.txt",
        "hybrid.txt",
        "model.json",
        "vocab.txt",
        "ev/roc.json",
        "ev/roc.csv",
        "ev/capacity.json",
        "ev/capacity.csv",
        "ev/zipf.json",
        "ev/zipf.csv",
        "ev/perplexity.json",
        "ev/perplexity.csv",
        "ev/robustness.json",
        "ev/robustness.csv",
        "ev/null.json",
    ];
    let round = || -> Result<(Vec<Vec<u8>>, Vec<Output>), String> {
        let outs: Vec<Output> = steps.iter().map(|args| stegochain(d, args)).collect();
        for (args, out) in steps.iter().zip(&outs) {
            if !out.status.success() {
                return Err(format!(
                    "{args:?} exited {:?}: {}",
                    out.status.code(),
                    String::from_utf8_lossy(&out.stderr)
                ));
            }
        }
        let mut bytes: Vec<Vec<u8>> = outs.iter().map(|o| o.stdout.clone()).collect();
        for f in files {
            bytes.push(fs::read(d.join(f)).map_err(|e| format!("{f}: {e}"))?);
        }
        Ok((bytes, outs))
    };
    let (first, outs) = round()?;
    let (second, _) = round()?;
    if first != second {
        return Err("a rerun produced different bytes".into());
    }
    let decoded: Value = serde_json::from_slice(&outs[2].stdout).map_err(|e| e.to_string())?;
    let detected: Value = serde_json::from_slice(&outs[4].stdout).map_err(|e| e.to_string())?;
    ensure(
        decoded["decision"] == 11 && detected["decision"] == true,
        format!(
            "{} commands rerun byte-identical ({} outputs compared); decoded symbol {} (sent 11), zero-bit decision {}",
            steps.len(),
            first.len(),
            decoded["decision"],
            detected["decision"]
        ),
    )
}
