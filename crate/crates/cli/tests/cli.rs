use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use jsonschema::JSONSchema;
use serde_json::Value;
use tempfile::TempDir;

const SETTINGS: &[&str] = &[
    "CONFIG",
    "VOCAB",
    "CORPUS",
    "MODEL",
    "KEY",
    "CAPACITY",
    "ALPHA",
    "DELTA",
    "TEMPERATURE",
    "THETA",
    "MAX_TOKENS",
    "COUNT_MODE",
    "CHANNEL",
    "P_DEL",
    "P_SUB",
    "P_INS",
    "SEED",
    "OUT",
    "SOURCE_CMD",
];

const COVER: &str = "The clockmaker opened his shop early that morning and set the kettle on the \
stove. Margaret watched from the bench by the window while the old man wound the clocks one by \
one and the street outside slowly filled with carts and voices.";

fn cli(dir: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stegochain"));
    cmd.current_dir(dir);
    for name in SETTINGS {
        cmd.env_remove(format!("STEGOCHAIN_{name}"));
    }
    cmd
}

fn run(dir: &Path, args: &[&str]) -> Output {
    cli(dir).args(args).output().unwrap()
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn assert_schema(name: &str, instance: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let compiled = JSONSchema::compile(&schema).unwrap();
    let msgs: Vec<String> = match compiled.validate(instance) {
        Ok(()) => return,
        Err(errors) => errors
            .map(|e| format!("{} at {}", e, e.instance_path))
            .collect(),
    };
    panic!("{name} output violates its schema: {msgs:?}\n{instance:#}");
}

fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cover.txt"), COVER).unwrap();
    dir
}

#[test]
fn zero_bit_round_trip() {
    let tmp = workspace();
    let d = tmp.path();
    let keygen = ok_json(d, &["keygen", "--seed", "11", "--out", "key.hex"]);
    assert_schema("keygen", &keygen);
    assert_eq!(keygen["fingerprints"].as_array().unwrap().len(), 1);

    let embed = ok_json(
        d,
        &[
            "embed",
            "cover.txt",
            "--key",
            "key.hex",
            "--seed",
            "3",
            "-o",
            "stego.txt",
        ],
    );
    assert_schema("embed", &embed);
    assert_eq!(embed["unmarked_baseline"], false);

    let out = run(d, &["detect", "stego.txt", "--key", "key.hex"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_schema("detection", &report);
    assert_eq!(report["decision"], true);
    assert_eq!(report["sf"], embed["sf"]);

    let out = run(d, &["detect", "cover.txt", "--key", "key.hex"]);
    assert_eq!(out.status.code(), Some(1));
    assert_schema("detection", &serde_json::from_slice(&out.stdout).unwrap());
}

#[test]
fn multi_bit_round_trip() {
    let tmp = workspace();
    let d = tmp.path();
    let keygen = ok_json(
        d,
        &[
            "keygen",
            "--seed",
            "5",
            "--capacity",
            "3",
            "--out",
            "key.hex",
        ],
    );
    assert_schema("keygen", &keygen);
    assert_eq!(keygen["fingerprints"].as_array().unwrap().len(), 8);
    for symbol in [0u64, 6] {
        let s = symbol.to_string();
        let embed = ok_json(
            d,
            &[
                "embed",
                "cover.txt",
                "--key",
                "key.hex",
                "--capacity",
                "3",
                "--symbol",
                &s,
                "-o",
                "stego.txt",
            ],
        );
        assert_schema("embed", &embed);
        let report = ok_json(
            d,
            &["decode", "stego.txt", "--key", "key.hex", "--capacity", "3"],
        );
        assert_schema("detection", &report);
        assert_eq!(report["decision"], symbol);
        assert_eq!(report["theta"], Value::Null);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = workspace();
    let d = tmp.path();
    let steps: &[&[&str]] = &[
        &[
            "keygen",
            "--seed",
            "9",
            "--capacity",
            "2",
            "--out",
            "key.hex",
        ],
        &[
            "embed",
            "cover.txt",
            "--key",
            "key.hex",
            "--capacity",
            "2",
            "--symbol",
            "3",
            "--seed",
            "4",
            "-o",
            "stego.txt",
        ],
        &[
            "channel",
            "stego.txt",
            "--channel",
            "noise",
            "--p-sub",
            "0.3",
            "--p-ins",
            "0.1",
            "--seed",
            "8",
            "-o",
            "noisy.txt",
        ],
        &["decode", "noisy.txt", "--key", "key.hex", "--capacity", "2"],
        &[
            "eval", "roc", "--trials", "4", "--length", "40", "--seed", "2", "-o", "ev",
        ],
    ];
    let files = [
        "key.hex",
        "stego.txt",
        "noisy.txt",
        "ev/roc.json",
        "ev/roc.csv",
    ];
    let mut first = Vec::new();
    for round in 0..2 {
        let mut outputs = Vec::new();
        for args in steps {
            let out = run(d, args);
            assert!(
                out.status.success(),
                "{args:?}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            outputs.push(out.stdout);
        }
        for f in files {
            outputs.push(fs::read(d.join(f)).unwrap());
        }
        if round == 0 {
            first = outputs;
        } else {
            assert_eq!(first, outputs);
        }
    }
}

#[test]
fn exit_codes() {
    let tmp = workspace();
    let d = tmp.path();
    ok_json(d, &["keygen", "--seed", "1", "--out", "key.hex"]);
    fs::write(d.join("empty.txt"), "").unwrap();
    fs::write(d.join("oov.txt"), "zzqx qqzv").unwrap();

    let cases: &[(&[&str], &str)] = &[
        (&["keygen", "--capacity", "17", "--out", "k.hex"], "17"),
        (&["detect", "cover.txt"], "--key"),
        (
            &["detect", "cover.txt", "--key", "missing.hex"],
            "missing.hex",
        ),
        (&["detect", "empty.txt", "--key", "key.hex"], "undecidable"),
        (&["detect", "oov.txt", "--key", "key.hex"], "undecidable"),
        (&["decode", "cover.txt", "--key", "key.hex"], "--capacity"),
        (
            &[
                "embed",
                "cover.txt",
                "--key",
                "key.hex",
                "--symbol",
                "1",
                "-o",
                "s.txt",
            ],
            "symbol",
        ),
        (&["--delta", "1.5", "keygen", "--out", "k.hex"], "delta"),
        (&["--p-sub", "0.2", "keygen", "--out", "k.hex"], "noise"),
        (&["eval", "capacity", "--bits", "0..3"], "1..=16"),
        (&[], "no command"),
    ];
    for (args, needle) in cases {
        let out = run(d, args);
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {stderr}");
        assert!(stderr.contains(needle), "{args:?}: {stderr}");
    }
}

#[test]
fn capacity_eval_writes_one_row_per_capacity() {
    let tmp = workspace();
    let d = tmp.path();
    let summary = ok_json(d, &["eval", "capacity", "--paragraphs", "3", "-o", "ev"]);
    assert_schema("eval", &summary);
    assert_eq!(summary["entries"].as_array().unwrap().len(), 10);
    let csv = fs::read_to_string(d.join("ev/capacity.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 11);
    assert_eq!(lines[0], "capacity,ber,symbol_error_rate,trials");
    for (i, line) in lines[1..].iter().enumerate() {
        assert!(line.starts_with(&format!("{},", i + 1)), "{line}");
    }
    let full: Value =
        serde_json::from_str(&fs::read_to_string(d.join("ev/capacity.json")).unwrap()).unwrap();
    assert_eq!(full["entries"], summary["entries"]);
}

#[test]
fn every_eval_summary_matches_schema() {
    let tmp = workspace();
    let d = tmp.path();
    let runs: &[&[&str]] = &[
        &["eval", "roc", "--trials", "3", "--length", "40"],
        &["eval", "capacity", "--bits", "1,2", "--paragraphs", "2"],
        &["eval", "zipf", "--paragraphs", "3"],
        &["eval", "perplexity", "--paragraphs", "3"],
        &[
            "eval",
            "robustness",
            "--trials",
            "2",
            "--length",
            "40",
            "--channel",
            "noise",
            "--p-del",
            "0.1",
        ],
        &["eval", "null", "--trials", "5", "--length", "40"],
    ];
    for args in runs {
        let summary = ok_json(d, args);
        assert_eq!(summary["experiment"], args[1]);
        assert_schema("eval", &summary);
    }
}

#[test]
fn train_model_output_is_reusable() {
    let tmp = workspace();
    let d = tmp.path();
    let summary = ok_json(
        d,
        &[
            "train-model",
            "-o",
            "model.json",
            "--vocab-out",
            "vocab.txt",
        ],
    );
    assert_schema("train-model", &summary);
    assert_eq!(summary["order"], 3);
    ok_json(d, &["keygen", "--seed", "2", "--out", "key.hex"]);

    let with_files = ["--model", "model.json", "--vocab", "vocab.txt"];
    let mut args = vec!["embed", "cover.txt", "--key", "key.hex", "-o", "a.txt"];
    args.extend(with_files);
    let a = ok_json(d, &args);
    let b = ok_json(
        d,
        &["embed", "cover.txt", "--key", "key.hex", "-o", "b.txt"],
    );
    assert_eq!(
        fs::read(d.join("a.txt")).unwrap(),
        fs::read(d.join("b.txt")).unwrap()
    );
    assert_eq!(a["sf"], b["sf"]);

    // a model trained on another vocabulary is refused
    fs::write(d.join("tiny.txt"), "one two three\n\nthree two one\n").unwrap();
    ok_json(
        d,
        &["train-model", "--corpus", "tiny.txt", "-o", "tiny.json"],
    );
    let out = run(
        d,
        &[
            "detect",
            "cover.txt",
            "--key",
            "key.hex",
            "--model",
            "tiny.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different vocabulary"));
}

#[test]
fn settings_precedence() {
    let tmp = workspace();
    let d = tmp.path();
    fs::write(
        d.join("run.toml"),
        "alpha = 2.5\ndelta = 0.25\nseed = 3\n\n[channel]\nkind = \"noise\"\np_sub = 0.1\n",
    )
    .unwrap();
    let print = |extra: &[&str], env: &[(&str, &str)]| -> toml::Value {
        let mut cmd = cli(d);
        cmd.args(["--print-config", "--config", "run.toml"])
            .args(extra);
        for (k, v) in env {
            cmd.env(k, v);
        }
        let out = cmd.output().unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        toml::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap()
    };

    let file_only = print(&[], &[]);
    assert_eq!(file_only["alpha"].as_float(), Some(2.5));
    assert_eq!(file_only["delta"].as_float(), Some(0.25));
    assert_eq!(file_only["theta"].as_float(), Some(0.03));
    assert_eq!(file_only["channel"]["p_sub"].as_float(), Some(0.1));
    assert_eq!(file_only["channel"]["rng_seed"].as_integer(), Some(3));

    let env = print(
        &[],
        &[("STEGOCHAIN_ALPHA", "1.5"), ("STEGOCHAIN_P_SUB", "0.4")],
    );
    assert_eq!(env["alpha"].as_float(), Some(1.5));
    assert_eq!(env["channel"]["p_sub"].as_float(), Some(0.4));

    let flag = print(
        &["--alpha", "6", "--seed", "8"],
        &[("STEGOCHAIN_ALPHA", "1.5")],
    );
    assert_eq!(flag["alpha"].as_float(), Some(6.0));
    assert_eq!(flag["delta"].as_float(), Some(0.25));
    assert_eq!(flag["channel"]["rng_seed"].as_integer(), Some(8));

    let switched = print(&["--channel", "resample"], &[]);
    assert_eq!(switched["channel"]["kind"].as_str(), Some("resample"));
    assert_eq!(switched["channel"]["p_sub"].as_float(), Some(0.0));

    fs::write(d.join("bad.toml"), "alpah = 1.0\n").unwrap();
    let out = run(d, &["--config", "bad.toml", "--print-config"]);
    assert_eq!(out.status.code(), Some(2));
}
