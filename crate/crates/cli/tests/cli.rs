//! Drives the `tcpa` binary the way the three parties would.

use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use tempfile::TempDir;

fn tcpa() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tcpa"));
    c.env("TCPA_SEED", "7").env_remove("RUST_LOG");
    c
}

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn tcpa")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Writes x.bin and b.bin into `dir`.
fn params(dir: &Path, extra: &[&str]) {
    let o = run(tcpa().arg("params").arg("--out-dir").arg(dir).args(extra));
    assert!(o.status.success(), "{o:?}");
}

fn images(dir: &Path, props: &Path) -> Vec<String> {
    vec![
        "--x".into(),
        dir.join("x.bin").display().to_string(),
        "--b".into(),
        dir.join("b.bin").display().to_string(),
        "--props".into(),
        props.display().to_string(),
    ]
}

/// Starts a listening subcommand on an ephemeral port and returns it with the
/// address it announced.
fn spawn_listening(cmd: &mut Command) -> (Child, String) {
    let mut child = cmd.stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.as_mut().unwrap()).read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap_or_else(|| panic!("unexpected first line {line:?}"))
        .to_string();
    (child, addr)
}

fn ic(dir: &Path, props: &Path) -> (Child, String) {
    spawn_listening(tcpa().args(["ic", "--listen", "127.0.0.1:0"]).args(images(dir, props)))
}

fn provider(dir: &Path, addr: &str, props: &Path, source: &Path, extra: &[&str]) -> Output {
    run(tcpa()
        .args(["provider", "--connect", addr])
        .args(images(dir, props))
        .arg("--source")
        .arg(source)
        .arg("--out")
        .arg(dir.join("chain.tcpc"))
        .args(extra))
}

fn consumer(dir: &Path, props: &Path, extra: &[&str]) -> Output {
    run(tcpa()
        .arg("consumer")
        .arg("--chain")
        .arg(dir.join("chain.tcpc"))
        .args(images(dir, props))
        .args(extra))
}

#[test]
fn assemble_parse_and_run() {
    let dir = TempDir::new().unwrap();
    let wasm = dir.path().join("div.wasm");
    let o = run(tcpa().arg("assemble").arg(corpus("div_bug.wat")).arg("-o").arg(&wasm));
    assert!(o.status.success(), "{o:?}");
    let o = run(tcpa().arg("parse").arg(&wasm));
    assert!(stdout(&o).contains("instructions 8"), "{}", stdout(&o));

    let o = run(tcpa().arg("run").arg(&wasm).args(["quot", "10", "3"]));
    assert_eq!(stdout(&o).trim(), "returned [3:i32]");
    let o = run(tcpa().arg("run").arg(&wasm).args(["quot", "10", "256"]));
    assert!(stdout(&o).starts_with("trapped div_by_zero"), "{}", stdout(&o));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ic_rejects_unreadable_props_and_busy_port() {
    let dir = TempDir::new().unwrap();
    params(dir.path(), &[]);
    let o = run(tcpa()
        .args(["ic", "--listen", "127.0.0.1:0"])
        .args(images(dir.path(), &dir.path().join("missing.props"))));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.props"));

    let busy = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = busy.local_addr().unwrap().to_string();
    let o = run(tcpa()
        .args(["ic", "--listen", &addr])
        .args(images(dir.path(), &corpus("clamp.props"))));
    assert_eq!(o.status.code(), Some(3), "{o:?}");
}

#[test]
fn honest_pipeline_is_accepted() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    params(d, &[]);
    let props = corpus("fib.props");
    let key = d.join("origin.key");
    let o = run(tcpa().arg("keygen").arg("-o").arg(&key));
    let origin_pub = stdout(&o).trim().to_string();

    let (mut ic_proc, addr) = ic(d, &props);
    let (consumer_proc, consumer_addr) = spawn_listening(
        tcpa()
            .args(["consumer", "--listen", "127.0.0.1:0", "--origin-pub", &origin_pub])
            .args(images(d, &props)),
    );
    let key_arg = key.display().to_string();
    let o = provider(
        d,
        &addr,
        &props,
        &corpus("fib.wat"),
        &["--origin-key", &key_arg, "--forward", &consumer_addr],
    );
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("eo true"));
    assert!(ic_proc.wait().unwrap().success());
    let verdict = consumer_proc.wait_with_output().unwrap();
    assert_eq!(verdict.status.code(), Some(0));
    assert_eq!(stdout(&verdict).trim(), "accepted");

    // The chain written to disk verifies the same way.
    let o = consumer(d, &props, &["--origin-pub", &origin_pub]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
}

#[test]
fn mismatched_executable_is_rejected_at_report() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    params(d, &[]);
    let props = corpus("clamp.props");
    let other = d.join("other.wasm");
    assert!(run(tcpa().arg("assemble").arg(corpus("abs_diff.wat")).arg("-o").arg(&other))
        .status
        .success());

    let (mut ic_proc, addr) = ic(d, &props);
    let other_arg = other.display().to_string();
    let o = provider(d, &addr, &props, &corpus("clamp.wat"), &["--executable", &other_arg]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("eo false"));
    ic_proc.wait().unwrap();

    let o = consumer(d, &props, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("step=report"), "{}", stdout(&o));
}

#[test]
fn wrong_props_fail_measurement() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    params(d, &[]);
    let props = corpus("clamp.props");
    let (mut ic_proc, addr) = ic(d, &props);
    let o = provider(d, &addr, &props, &corpus("clamp.wat"), &[]);
    assert!(o.status.success(), "{o:?}");
    ic_proc.wait().unwrap();

    let weaker = d.join("weaker.props");
    std::fs::write(&weaker, "in_range no_trap clamp\n").unwrap();
    let o = consumer(d, &weaker, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("step=measurement"), "{}", stdout(&o));
}

#[test]
fn provider_refuses_an_ic_with_other_images() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    params(d, &[]);
    let (mut ic_proc, addr) = ic(d, &corpus("fib.props"));
    let o = provider(d, &addr, &corpus("clamp.props"), &corpus("clamp.wat"), &[]);
    assert_eq!(o.status.code(), Some(4), "{o:?}");
    assert!(!d.join("chain.tcpc").exists());
    let _ = ic_proc.wait();
}

#[test]
fn bench_reports_one_row_per_file_and_an_average() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("inc.wat"),
        "(module (func (export \"inc\") (param i32) (result i32) local.get 0 i32.const 1 i32.add))\n",
    )
    .unwrap();
    std::fs::write(d.join("inc.props"), "ok no_trap inc\n").unwrap();
    let report = d.join("report.txt");
    let o = run(tcpa().arg("bench").arg(d).args(["--reps", "1", "--out"]).arg(&report));
    assert!(o.status.success(), "{o:?}");
    let text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(text, stdout(&o));
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("file"));
    assert!(lines[1].starts_with("inc.wat"));
    assert!(lines[2].starts_with("average"));
    assert!(lines[3].starts_with("record file=inc.wat"));
    assert_eq!(lines.len(), 4);

    // Plain mode twice gives the same verdict column.
    let verdicts = |o: &Output| stdout(o).lines().nth(1).unwrap().split_whitespace().rev().nth(1).map(String::from);
    let a = run(tcpa().arg("bench").arg(d).args(["--mode", "plain", "--reps", "1"]));
    let b = run(tcpa().arg("bench").arg(d).args(["--mode", "plain", "--reps", "1"]));
    assert_eq!(verdicts(&a), verdicts(&b));
}
