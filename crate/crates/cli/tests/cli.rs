use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::CommandFactory;
use loracomp_cli::Cli;
use serde_json::Value;

fn loracomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loracomp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = loracomp(args);
    assert!(
        out.status.success(),
        "loracomp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

#[test]
fn help_output_matches_golden_files() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
    names.push("loracomp".into());
    for name in names {
        let args: Vec<&str> = if name == "loracomp" { vec!["--help"] } else { vec![&name, "--help"] };
        let help = ok(&args);
        let path = golden_dir().join(format!("{name}.txt"));
        if update {
            fs::write(&path, &help).unwrap();
            continue;
        }
        let expected = fs::read_to_string(&path).unwrap_or_else(|_| panic!("no golden file {}", path.display()));
        assert_eq!(help, expected, "help of {name} changed; rerun with UPDATE_GOLDEN=1 if intended");
    }
}

#[test]
fn every_flag_has_help_text() {
    let cli = Cli::command();
    for sub in cli.get_subcommands() {
        for arg in sub.get_arguments() {
            let id = arg.get_id().as_str();
            if id == "help" || id == "version" {
                continue;
            }
            let help = arg.get_help().map(|h| h.to_string()).unwrap_or_default();
            assert!(!help.trim().is_empty(), "{} --{id} has no help", sub.get_name());
        }
    }
}

const TINY_MODEL: &str = "d_model = 16\nn_layers = 1\nn_heads = 2\nn_kv_heads = 1\nmlp_dim = 32\n";

/// Runs the whole chain at toy size into `dir`.
fn tiny_pipeline(dir: &Path, seed: &str) {
    let model = dir.join("model.toml");
    fs::create_dir_all(dir).unwrap();
    fs::write(&model, TINY_MODEL).unwrap();
    let a = dir.to_str().unwrap();
    let common = ["--artifacts", a, "--seed", seed];
    let run = |args: &[&str]| ok(&[&common[..], args].concat());
    run(&["gen-data", "--n", "12", "--validation", "4", "--test", "120"]);
    run(&[
        "pretrain",
        "--model-config",
        model.to_str().unwrap(),
        "--epochs",
        "1",
        "--max-examples",
        "24",
        "--target-accuracy",
        "0",
    ]);
    let lora = ["--rank", "2", "--epochs", "1", "--max-examples", "6"];
    run(&[&["train-lora", "--task", "sum"][..], &lora].concat());
    run(&[&["train-lora", "--task", "trans-es"][..], &lora].concat());
    run(&[&["train-joint", "--lang", "es"][..], &lora].concat());
    run(&["train-projection", "--rank", "2", "--epochs", "1", "--max-examples", "6"]);
    run(&["fit-lorahub", "--budget", "4", "--examples", "2"]);
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    files
}

#[test]
fn pipeline_runs_end_to_end_and_repeats_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let (first, second) = (tmp.path().join("a"), tmp.path().join("b"));
    tiny_pipeline(&first, "5");
    tiny_pipeline(&second, "5");
    let (a, b) = (snapshot(&first), snapshot(&second));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert!(bytes == &b[name], "{name} differs between identical runs");
    }
    let other = tmp.path().join("c");
    ok(&["--artifacts", other.to_str().unwrap(), "--seed", "6", "gen-data", "--n", "12", "--validation", "4", "--test", "120"]);
    assert_ne!(a["data/comp-es.jsonl"], fs::read(other.join("data/comp-es.jsonl")).unwrap());

    let dir = first.to_str().unwrap();
    let report = first.join("report.json");
    let table = ok(&[
        "--artifacts",
        dir,
        "eval",
        "--methods",
        "projection,linear",
        "--out",
        report.to_str().unwrap(),
    ]);
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let rows: Vec<&str> = v["rows"].as_array().unwrap().iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(rows, ["linear", "projection"]);
    assert_eq!(v["meta"]["n_examples"], 120);
    assert!(table.contains("Projection merge") && table.contains("Linear merge"));

    let all = ok(&["--artifacts", dir, "eval", "--methods", "all"]);
    assert_eq!(all.lines().count(), 12, "header, ten methods and a footer:\n{all}");

    let bench = ok(&["--artifacts", dir, "bench", "--methods", "projection,two-step"]);
    assert!(bench.starts_with("timed 24 of 120 examples"), "{bench}");

    let inspect: Value = serde_json::from_str(&ok(&["--artifacts", dir, "inspect"])).unwrap();
    assert!(inspect["files"].as_array().unwrap().iter().all(|f| f["present"] == true));
    let proj: Value = serde_json::from_str(&ok(&["inspect", first.join("projection-es.bin").to_str().unwrap()])).unwrap();
    assert_eq!(proj["kind"], "projection");
    assert_eq!(proj["rank"], 2);
}

#[test]
fn missing_adapter_exits_2_and_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    tiny_pipeline(tmp.path(), "1");
    let missing = tmp.path().join("projection-es.bin");
    fs::remove_file(&missing).unwrap();
    let out = loracomp(&["--artifacts", tmp.path().to_str().unwrap(), "eval", "--methods", "projection"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(&missing.display().to_string()), "{stderr}");
}

#[test]
fn stages_refuse_to_start_without_their_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    for args in [
        vec!["train-lora", "--task", "sum"],
        vec!["train-joint"],
        vec!["train-projection"],
        vec!["fit-lorahub"],
        vec!["bench"],
    ] {
        let out = loracomp(&[&["--artifacts", dir][..], &args].concat());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("missing artifact"), "{args:?}");
    }
}

#[test]
fn invalid_input_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    for args in [
        vec!["eval", "--methods", "nope"],
        vec!["eval", "--split", "dev"],
        vec!["gen-data", "--task", "shout"],
        vec!["gen-data", "--out", "x.jsonl"],
        vec!["train-lora", "--task", "comp-es"],
        vec!["pretrain", "--target-accuracy", "2"],
        vec!["bench", "--bogus"],
    ] {
        let out = loracomp(&[&["--artifacts", dir][..], &args].concat());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
