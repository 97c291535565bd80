use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn golden() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

fn aaosa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aaosa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn running_the_golden_script_reproduces_its_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("ambiguous_zoom.trace");
    let script = golden().join("ambiguous_zoom.script");
    let out = aaosa(&["run", path(&script), "--trace", path(&trace)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("query: Do you mean magnification or shifting?"));
    assert!(stdout.contains("ok line"));
    assert_eq!(
        fs::read(&trace).unwrap(),
        fs::read(golden().join("ambiguous_zoom.trace")).unwrap()
    );
}

#[test]
fn failed_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("bad.script");
    fs::write(&script, "say zoom in\nexpect-output zoom out\n").unwrap();
    let out = aaosa(&["run", path(&script)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL line 2"));
}

#[test]
fn malformed_script_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("bad.script");
    fs::write(&script, "say hi\nanswer yes\n").unwrap();
    let out = aaosa(&["run", path(&script)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn replaying_the_golden_suite_matches() {
    let out = aaosa(&["replay-golden", path(&golden())]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().all(|l| l.ends_with(": match")), "{stdout}");
}

#[test]
fn a_stale_golden_trace_fails_replay() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(golden().join("unknown.script"), dir.path().join("unknown.script")).unwrap();
    let trace = fs::read_to_string(golden().join("unknown.trace")).unwrap();
    fs::write(dir.path().join("unknown.trace"), trace.replace("bananas", "apples")).unwrap();
    let out = aaosa(&["replay-golden", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("differs at line"));

    let out = aaosa(&["replay-golden", path(dir.path()), "--bless"]);
    assert_eq!(out.status.code(), Some(0));
    let out = aaosa(&["replay-golden", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(aaosa(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(aaosa(&["reset"]).status.code(), Some(2));
}

#[test]
fn learned_knowledge_survives_a_round_trip_and_a_reset() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("u1.kb");
    let teach = dir.path().join("teach.script");
    fs::write(
        &teach,
        "say move it closer\nexpect-query Do you mean magnification or shifting?\nanswer magnification\npause 6\n",
    )
    .unwrap();
    let out = aaosa(&["run", path(&teach), "--kb-out", path(&kb)]);
    assert_eq!(out.status.code(), Some(0));

    let recall = dir.path().join("recall.script");
    fs::write(&recall, "say move it closer\nexpect-output zoom in\n").unwrap();
    let out = aaosa(&["run", path(&recall), "--kb-in", path(&kb)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let out = aaosa(&["reset", "--user", "u2", "--kb", path(&kb)]);
    assert_eq!(out.status.code(), Some(0));
    let out = aaosa(&["run", path(&recall), "--kb-in", path(&kb)]);
    assert_eq!(out.status.code(), Some(0));

    let out = aaosa(&["reset", "--system", "--kb", path(&kb)]);
    assert_eq!(out.status.code(), Some(0));
    let ask = dir.path().join("ask.script");
    fs::write(&ask, "say move it closer\nexpect-query Do you mean magnification or shifting?\n").unwrap();
    let out = aaosa(&["run", path(&ask), "--kb-in", path(&kb)]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn same_seed_same_trace() {
    let dir = tempfile::tempdir().unwrap();
    let script = golden().join("users.script");
    let run = |n: &str| {
        let t = dir.path().join(n);
        let out = aaosa(&["run", path(&script), "--seed", "42", "--trace", path(&t)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        fs::read(t).unwrap()
    };
    assert_eq!(run("a.trace"), run("b.trace"));
}
