mod common;

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use warpbench::report::read_manifest;

fn warpbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_warpbench"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn config(dir: &Path) -> String {
    config_with(dir, "space = { l2 = [50.0, 500.0] }")
}

fn config_with(dir: &Path, ease: &str) -> String {
    common::write_config(
        dir,
        "run.toml",
        &format!(
            r#"
[split]
strategy = "holdout"
mode = "random"
ratios = [0.8, 0.2]

[models.pop]
family = "mostpop"

[models.ease]
family = "ease"
{ease}
"#
        ),
    )
    .display()
    .to_string()
}

#[test]
fn train_then_eval_succeed_and_honour_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let out = dir.path().join("out");
    let o = warpbench(&[
        "train",
        "--config",
        &cfg,
        "--output",
        out.to_str().unwrap(),
        "--seed",
        "99",
        "--workers",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("ease\t") && stdout.contains("nDCG@10="), "{stdout}");
    let manifest = read_manifest(&out).unwrap();
    assert_eq!(manifest.run.seed, 99);
    assert_eq!(manifest.run.pipeline, "train");

    let o = warpbench(&[
        "eval",
        "--config",
        &cfg,
        "--output",
        out.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_manifest(&out.join("eval")).unwrap().run.pipeline, "eval");

    let fixed = config_with(dir.path(), "params = { l2 = 200.0 }");
    let o = warpbench(&[
        "design",
        "--config",
        &fixed,
        "--output",
        dir.path().join("design").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&warpbench(&["train", "--config", "/no/such/file.toml"])), 1);
    let bad = common::write_config(dir.path(), "bad.toml", "[split]\nstrategy = \"sideways\"\n");
    let o = warpbench(&["train", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));
    let cfg = config(dir.path());
    assert_eq!(code(&warpbench(&["design", "--config", &cfg, "--workers", "0"])), 1);
    assert_eq!(code(&warpbench(&["serve", "--config", "/no/such/serve.toml"])), 1);
    // clap rejects malformed arguments on its own
    assert_ne!(code(&warpbench(&["train", "--config", &cfg, "--seed", "minus-one"])), 0);
}

#[test]
fn runtime_failures_exit_with_two_and_leave_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let out = dir.path().join("never-trained");
    // eval without checkpoints: the load fails after ingest and split
    let o = warpbench(&["eval", "--config", &cfg, "--output", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = read_manifest(&out.join("eval")).unwrap();
    assert_eq!(manifest.run.failures.len(), 1);
}

#[test]
fn serve_over_stdio_answers_each_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let out = dir.path().join("out");
    assert_eq!(
        code(&warpbench(&[
            "train",
            "--config",
            &cfg,
            "--output",
            out.to_str().unwrap()
        ])),
        0
    );
    let serve = dir.path().join("serve.toml");
    std::fs::write(
        &serve,
        "transport = \"stdio\"\n\n[models]\nease = \"out/checkpoints/ease.wbck\"\n",
    )
    .unwrap();

    let mut child = Command::new(env!("CARGO_BIN_EXE_warpbench"))
        .args(["serve", "--config", serve.to_str().unwrap()])
        .env("RUST_LOG", "warn")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let script = [
        r#"{"jsonrpc":"2.0","id":1,"method":"initialize","params":{}}"#,
        r#"{"jsonrpc":"2.0","method":"notifications/initialized"}"#,
        r#"{"jsonrpc":"2.0","id":2,"method":"tools/list"}"#,
        r#"{"jsonrpc":"2.0","id":3,"method":"tools/call","params":{"name":"recommend","arguments":{"user_id":"u1","top_k":3}}}"#,
        "not json",
    ];
    child
        .stdin
        .take()
        .unwrap()
        .write_all((script.join("\n") + "\n").as_bytes())
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0);
    let replies: Vec<serde_json::Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(replies.len(), 4);
    assert_eq!(replies[0]["id"], 1);
    assert_eq!(replies[1]["result"]["tools"][0]["name"], "recommend");
    assert_eq!(
        replies[2]["result"]["structuredContent"]["items"]
            .as_array()
            .unwrap()
            .len(),
        3
    );
    assert_eq!(replies[3]["error"]["code"], -32700);
}
