use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tee-ledger"))
        .args(args)
        .output()
        .expect("spawn")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

const CONFIG: &str = r#"
seed = 2
clients = 3

[[contracts]]
kind = "token"
label = "tok"
accounts = 6

[workload]
requests = 30
"#;

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_writes_report_and_transcript_that_audit_accepts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "s.toml", CONFIG);
    let report = dir.path().join("r.tsv");
    let transcript = dir.path().join("t.txt");
    let out = cli(&[
        "run",
        &config,
        "--report",
        report.to_str().unwrap(),
        "--transcript",
        transcript.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let r = fs::read_to_string(&report).unwrap();
    assert!(r.contains("run\trequests\t30"), "{r}");
    assert!(!r.contains("FAIL"));

    let out = cli(&["audit", transcript.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("pass"));

    // Swap in another attestation root: every chain fails and the exit code says so.
    let t = fs::read_to_string(&transcript).unwrap();
    let (_, body) = t.split_once('\n').unwrap();
    let forged = write(
        dir.path(),
        "f.txt",
        &format!("# attestation-root {}\n{body}", "33".repeat(32)),
    );
    let out = cli(&["audit", &forged]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stdout).contains("FAIL"));
}

#[test]
fn config_errors_exit_with_two_and_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "seed = 1\nnodes = 0\n");
    let out = cli(&["run", &bad]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("nodes") && err.contains("line 2"), "{err}");

    let out = cli(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let junk = write(dir.path(), "junk.txt", "hello\n");
    assert_eq!(cli(&["audit", &junk]).status.code(), Some(2));
}

#[test]
fn pop_sweep_needs_a_pop_section() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "s.toml", CONFIG);
    let out = cli(&["pop-sweep", &config]);
    assert_eq!(out.status.code(), Some(2));

    let pop = write(
        dir.path(),
        "p.toml",
        "seed = 3\n[pop]\nn_c = 10\ntau = 1.0\nepsilons = [1.5, 2.0]\np = 0.1\ntrials = 200\n",
    );
    let out = cli(&["pop-sweep", &pop]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = text(&out.stdout);
    assert_eq!(
        csv.lines().filter(|l| !l.starts_with('#')).count(),
        3,
        "{csv}"
    );
    assert!(csv.contains("n_c=30 eps=2"), "{csv}");

    // Four confirmations with a loose window are forgeable; the sweep says so.
    let weak = write(
        dir.path(),
        "w.toml",
        "seed = 3\n[pop]\nn_c = 4\ntau = 1.0\nepsilons = [3.0]\np = 0.1\ntrials = 200\n",
    );
    assert_eq!(cli(&["pop-sweep", &weak]).status.code(), Some(1));
}

#[test]
fn bench_reports_each_batch_size() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "b.toml",
        "seed = 4\nclients = 4\n[[contracts]]\nkind = \"token\"\nlabel = \"b\"\naccounts = 8\n[workload]\nrequests = 100\nread_fraction = 0.0\n",
    );
    let out = cli(&["bench", &config]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let s = text(&out.stdout);
    for (b, w) in [("1", "100"), ("10", "10"), ("100", "1")] {
        assert!(
            s.lines()
                .any(|l| l.starts_with(&format!("{b}\t100\t100\t{w}\t"))),
            "batch {b}: {s}"
        );
    }
    assert!(s.contains("ratio="));
}
