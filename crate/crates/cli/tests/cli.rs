use std::path::PathBuf;
use std::process::{Command, Output};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blindpir")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

#[test]
fn plan_from_flags() {
    let o = run(&["plan", "--n", "4", "--m", "2", "--k", "2", "--t", "1", "--q", "11"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("achievable rate: 1/2"), "{text}");
    assert!(text.contains("two-user asymptotic capacity: 1/2"));
    assert!(text.contains("100% higher"));
}

#[test]
fn plan_records_parse_back() {
    let o = run(&["plan", "--config", &config("three_user_secure.toml"), "--format", "records"]);
    assert!(o.status.success());
    let r = blindpir::harness::PlanReport::parse(&stdout(&o)).unwrap();
    assert_eq!(r.rates.achievable_rate.to_string(), "1/4");
    assert_eq!(r.l, 2);
}

#[test]
fn flags_override_config() {
    let o = run(&["plan", "--config", &config("two_user.toml"), "--n", "5", "--q", "11"]);
    assert!(stdout(&o).contains("N=5 M=2 K=[3, 3] T=[1, 1] X=0 q=11 L=3"), "{}", stdout(&o));
}

#[test]
fn infeasible_parameters_exit_nonzero() {
    let o = run(&["plan", "--n", "2", "--k", "2,2", "--t", "1,1", "--q", "7"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("must be at least 1"), "{err}");
    let o = run(&["plan", "--n", "4", "--k", "2,2", "--t", "1,1", "--q", "4"]);
    assert!(!o.status.success());
}

#[test]
fn retrieve_transcripts_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for path in [&a, &b] {
        let o = run(&["retrieve", "--config", &config("two_user_t12.toml"), "--out", path.to_str().unwrap()]);
        assert!(o.status.success());
        assert!(stdout(&o).contains("verified: yes"));
        assert!(stdout(&o).contains("rate: 2/5"));
    }
    let (a, b) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(a, b);
    let t = blindpir::transcript::from_jsonl(std::str::from_utf8(&a).unwrap()).unwrap();
    assert_eq!(t.blocks.len(), 5);
}

#[test]
fn seed_changes_the_transcript() {
    let cfg = config("two_user.toml");
    let a = run(&["retrieve", "--config", &cfg, "--format", "records"]);
    let b = run(&["retrieve", "--config", &cfg, "--format", "records", "--seed", "99"]);
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn corrupted_answer_exits_nonzero_after_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.jsonl");
    let o = run(&[
        "retrieve",
        "--config",
        &config("two_user.toml"),
        "--corrupt-answer",
        "1:2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("verification failed"));
    let t = blindpir::transcript::read_file(&out).unwrap();
    assert_eq!(t.verified, Some(false));
}

#[test]
fn empty_message_retrieves_nothing() {
    let o = run(&["retrieve", "--config", &config("two_user.toml"), "--symbols", "0"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("blocks: 0"));
}

#[test]
fn audit_tiny_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("audit.jsonl");
    let o = run(&[
        "audit",
        "--config",
        &config("audit_tiny.toml"),
        "--format",
        "records",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let r = blindpir::harness::AuditReport::from_jsonl(&text).unwrap();
    assert!(r.unexpected().is_empty());
    assert!(r.entries.iter().any(|e| e.audit.starts_with("t-privacy") && !e.passed));
}

#[test]
fn audit_over_budget_without_sampling_fails() {
    let o = run(&["audit", "--n", "3", "--k", "2,2", "--t", "1,1", "--q", "31", "--budget", "1000"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}

#[test]
fn bench_reports_counts() {
    let o = run(&["bench", "--config", &config("three_user_secure.toml"), "--blocks", "20", "--format", "records"]);
    assert!(o.status.success());
    let r = blindpir::harness::BenchReport::parse(&stdout(&o)).unwrap();
    assert_eq!((r.symbols_retrieved, r.symbols_downloaded), (40, 160));
    assert_eq!(r.rate, "1/4");
}
