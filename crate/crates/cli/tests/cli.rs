use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_linsketch"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn parity_reduce_gives_one_parity() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("parity_reduce.toml");
    let o = run(&["reduce", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(out.path());
    assert_eq!(r["passed"], true);
    let red = &r["result"]["reduction"];
    assert_eq!(red["k"], 1);
    assert!(red["success"].as_f64().unwrap() >= 0.99);
    let table = std::fs::read_to_string(out.path().join("per_x.csv")).unwrap();
    assert_eq!(table.lines().count(), 257);
    assert!(table.starts_with("x,coords,f,output,success,sq_error"));
}

#[test]
fn zero_players_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "[function]\nname = \"parity\"\nparams = { n = 4 }\n[protocol]\nname = \"parity-chain\"\n[reduction]\nplayers = 0\n",
    );
    let o = run(&["reduce", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 1"));
}

#[test]
fn unknown_zoo_name_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"function": {"name": "no-such", "params": {"n": 3}}, "protocol": {"name": "constant"}, "reduction": {"players": 4}}"#,
    );
    let o = run(&["reduce", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no-such"));
}

#[test]
fn kind_must_match_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("prg_check.toml");
    let o = run(&["reduce", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn reduce_then_evaluate_the_stored_sketch() {
    let dir = tempfile::tempdir().unwrap();
    let red_out = dir.path().join("red");
    let cfg = configs().join("mod3_reduce.toml");
    let o = run(&["reduce", "--config", cfg.to_str().unwrap(), "--out", red_out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(report(&red_out)["result"]["reduction"]["complexity"].as_u64().unwrap() <= 3);
    let eval_cfg = write(
        dir.path(),
        "eval.toml",
        "kind = \"sketch-eval\"\nsketch = \"red/sketch.json\"\n[function]\nname = \"mod-p-sum-zero\"\nparams = { n = 4, p = 3 }\n",
    );
    let eval_out = dir.path().join("eval");
    let o = run(&["sketch-eval", "--config", eval_cfg.to_str().unwrap(), "--out", eval_out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&eval_out);
    assert_eq!(r["result"]["success"]["min"], 1.0);
    let table = std::fs::read_to_string(eval_out.join("per_x.csv")).unwrap();
    assert_eq!(table.lines().count(), 82);

    // the same sketch against a different function fails with status 1
    let wrong = write(
        dir.path(),
        "wrong.toml",
        "sketch = \"red/sketch.json\"\n[function]\nname = \"constant\"\nparams = { n = 4, p = 3, value = 1.0 }\n",
    );
    let o = run(&["sketch-eval", "--config", wrong.to_str().unwrap(), "--out", dir.path().join("w").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_stream_with_cancellation() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.stream", "n=4 p=2\n0 1\n0 1\n2 1\n");
    let cfg = write(
        dir.path(),
        "sim.toml",
        "stream = \"s.stream\"\n[function]\nname = \"dictator\"\nparams = { n = 4, index = 2 }\n[protocol]\nname = \"parity-chain\"\nparams = { n = 4, coords = [2] }\nplayers = 3\n",
    );
    let out = dir.path().join("o");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["result"]["x"], serde_json::json!([0, 0, 1, 0]));
    assert_eq!(r["result"]["protocol"]["output"], 1.0);
}

#[test]
fn prg_check_passes_and_reports_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "prg.toml",
        "[prg]\nblock_bits = 4\nblock_count = 4\nstates = 4\nsamples = 1000\n[prg.sketch]\nn = 16\ns = 4\np = 3\ngenerator_seed = \"01234567890b\"\npermutations = 10\n",
    );
    let out = dir.path().join("o");
    let args = ["prg-check", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "ff"];
    // with 4-bit blocks the exact distance is 1/16, over the default 0.05
    assert_eq!(run(&args).status.code(), Some(1));
    assert_eq!(report(&out)["result"]["distance"]["distance"], 0.0625);
    let o = run(&[&args[..], &["--tolerance", "0.1"]].concat());
    assert_eq!(o.status.code(), Some(0), "{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["seed"], "ff");
    // 4-bit blocks, 4 of them: seed of 4 * (2 * 2 + 1) bits, small enough to enumerate
    assert_eq!(r["result"]["seed_bits"], 20);
    assert_eq!(r["result"]["distance"]["exact"], true);
    assert_eq!(r["result"]["template"]["order_invariant"], true);
    assert_eq!(r["result"]["template"]["matches_explicit"], true);
}

#[test]
fn reports_are_reproducible_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("approx_reduce.toml");
    let mut texts = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&["reduce", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "c0ffee"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let mut r = report(&out);
        let again: Value = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(again, r);
        r["elapsed_ms"] = Value::Null;
        r["result"]["reduction"]["elapsed_ms"] = Value::Null;
        texts.push(r.to_string());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn zoo_list_names_the_registry() {
    let o = run(&["zoo-list"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["parity", "dictator", "k-junta-parity", "mod-p-sum-zero", "majority", "parity-chain", "running-sum-mod-p", "state-passing"] {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn bad_seed_and_tolerance_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("parity_reduce.toml");
    let o = run(&["reduce", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed", "xyz"]);
    assert!(!o.status.success());
    let o = run(&["reduce", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--tolerance", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}
