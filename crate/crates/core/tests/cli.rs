use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use leakaudit::cli::{run_with_seed, EXIT_INPUT, EXIT_LEAK, EXIT_OK, EXIT_ORACLE};
use leakaudit::interchange::TUTOR_DOCUMENT;
use leakaudit::report::{from_json, Outcome};
use tempfile::TempDir;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("leakaudit").chain(args.iter().copied());
    let code = run_with_seed(argv, None, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn tutor(dir: &TempDir) -> String {
    write(dir, "tutor.json", TUTOR_DOCUMENT)
        .display()
        .to_string()
}

fn constant(dir: &TempDir) -> String {
    let doc = r#"{"features": ["a", "b", "s"], "open": ["a"], "private": ["b", "s"],
        "sensitive": {"feature": "s", "value": true}, "labels": [0, 1],
        "model": {"kind": "formula", "body": {"op": "const", "value": true}}}"#;
    write(dir, "const.json", doc).display().to_string()
}

const TATA: &str = "E=1,D=0,S=1,H=1";
const TONTON: &str = "E=1,D=1,S=1,H=0";

#[test]
fn tata_leaks() {
    let d = TempDir::new().unwrap();
    let r = run(&[
        "--deterministic",
        "audit-individual",
        "--model",
        &tutor(&d),
        "--assign",
        TATA,
    ]);
    assert_eq!(r.code, EXIT_LEAK, "{}", r.err);
    assert!(r.out.contains("verdict: LEAKS"));
    // Private literals stay hidden by default.
    assert!(r.out.contains("[private redacted]"));
    assert!(!r.out.contains("S ∧ H"));
}

#[test]
fn tonton_has_lppae() {
    let d = TempDir::new().unwrap();
    let m = tutor(&d);
    let r = run(&[
        "--deterministic",
        "--format",
        "json",
        "audit-individual",
        "--model",
        &m,
        "--assign",
        TONTON,
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let report = from_json(&r.out).unwrap();
    assert_eq!(report.verdict.outcome, Outcome::NoLeak);
    let lppae = report.witnesses.lppae.unwrap();
    assert_eq!(lppae.literals, "D ∧ H");
    assert!(lppae.non_unique);
    assert!(report.witnesses.shield.is_some());
    let text = run(&[
        "--deterministic",
        "audit-individual",
        "--model",
        &m,
        "--assign",
        TONTON,
    ]);
    assert!(text.out.contains("lppae: D ∧ H"));
    assert!(text.out.contains("not necessarily unique"));
}

#[test]
fn reveal_private_shows_the_private_profile() {
    let d = TempDir::new().unwrap();
    let r = run(&[
        "--reveal-private",
        "audit-individual",
        "--model",
        &tutor(&d),
        "--assign",
        TATA,
    ]);
    assert!(r.out.contains("private S ∧ H"), "{}", r.out);
}

#[test]
fn malformed_or_partial_assignment() {
    let d = TempDir::new().unwrap();
    let m = tutor(&d);
    for bad in [
        "E=1,D=0",
        "E=1,D=0,S=1,H=2",
        "E:1,D=0,S=1,H=1",
        "E=1,D=0,S=1,H=1,Z=0",
    ] {
        let r = run(&["audit-individual", "--model", &m, "--assign", bad]);
        assert_eq!(r.code, EXIT_INPUT, "{bad}");
    }
    let r = run(&["audit-individual", "--model", &m, "--assign", "E=1,D=0"]);
    assert!(r.err.contains("missing S, H"), "{}", r.err);
}

#[test]
fn model_audit_of_tutor_and_constant() {
    let d = TempDir::new().unwrap();
    let r = run(&[
        "--deterministic",
        "--format",
        "json",
        "audit-model",
        "--model",
        &tutor(&d),
    ]);
    assert_eq!(r.code, EXIT_LEAK);
    let report = from_json(&r.out).unwrap();
    assert_eq!(report.witnesses.counterexample.unwrap().open, "E ∧ ¬D");
    assert_eq!(report.stats.elapsed_us, None);

    let r = run(&["--format", "json", "audit-model", "--model", &constant(&d)]);
    assert_eq!(r.code, EXIT_OK);
    let report = from_json(&r.out).unwrap();
    assert_eq!(report.stats.iterations, Some(1));
    assert_eq!(report.witnesses.cover.len(), 1);
    assert_eq!(report.witnesses.cover[0].open_literals, "⊤");
    assert!(report.stats.elapsed_us.is_some());
}

#[test]
fn iteration_cap_breach_is_exit_two() {
    let d = TempDir::new().unwrap();
    let r = run(&[
        "audit-model",
        "--model",
        &constant(&d),
        "--iteration-cap",
        "0",
    ]);
    assert_eq!(r.code, EXIT_ORACLE);
    assert!(r.err.contains("iteration"), "{}", r.err);
}

#[test]
fn oracle_check_agrees_on_tutor_and_refuses_over_budget() {
    let d = TempDir::new().unwrap();
    let m = tutor(&d);
    for mode in ["theorem", "strict"] {
        let r = run(&["--mode", mode, "oracle-check", "--model", &m]);
        assert_eq!(r.code, EXIT_OK, "{}", r.out);
        assert!(r.out.contains("verdict: AGREE"));
    }
    let r = run(&["--oracle-budget", "3", "oracle-check", "--model", &m]);
    assert_eq!(r.code, EXIT_INPUT);
    assert!(r.err.contains("refuses"), "{}", r.err);
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let d = TempDir::new().unwrap();
    let m = tutor(&d);
    for fmt in ["text", "json"] {
        let args = [
            "--deterministic",
            "--format",
            fmt,
            "audit-model",
            "--model",
            m.as_str(),
        ];
        let a = run(&args);
        let b = run(&args);
        assert_eq!(a.out, b.out);
    }
}

#[test]
fn bad_inputs_exit_one() {
    let d = TempDir::new().unwrap();
    let r = run(&["audit-model", "--model", "/nonexistent/model.json"]);
    assert_eq!(r.code, EXIT_INPUT);
    let dangling = TUTOR_DOCUMENT.replace(
        r#"{"op": "var", "name": "H"}"#,
        r#"{"op": "var", "name": "Q"}"#,
    );
    let p = write(&d, "bad.json", &dangling);
    let r = run(&["audit-model", "--model", p.to_str().unwrap()]);
    assert_eq!(r.code, EXIT_INPUT);
    assert!(r.err.contains("Q"), "{}", r.err);
    let r = run(&[
        "--conflict-budget",
        "0",
        "audit-model",
        "--model",
        &tutor(&d),
    ]);
    assert_eq!(r.code, EXIT_INPUT);
    let r = run(&["no-such-command"]);
    assert_eq!(r.code, EXIT_INPUT);
}

#[test]
fn dump_cnf_writes_dimacs_and_map() {
    let d = TempDir::new().unwrap();
    let out = d.path().join("tutor.cnf");
    let r = run(&[
        "dump-cnf",
        "--model",
        &tutor(&d),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let cnf = fs::read_to_string(&out).unwrap();
    let header = cnf.lines().find(|l| l.starts_with("p cnf")).unwrap();
    let clauses = cnf
        .lines()
        .filter(|l| !l.starts_with('c') && !l.starts_with('p'))
        .count();
    assert_eq!(
        header
            .split_whitespace()
            .nth(3)
            .unwrap()
            .parse::<usize>()
            .unwrap(),
        clauses
    );
    let map: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("tutor.cnf.map.json")).unwrap())
            .unwrap();
    assert_eq!(map["features"].as_array().unwrap().len(), 4);

    // The global flag does the same alongside an audit.
    let side = d.path().join("side.cnf");
    let r = run(&[
        "--dump-cnf",
        side.to_str().unwrap(),
        "audit-model",
        "--model",
        &tutor(&d),
    ]);
    assert_eq!(r.code, EXIT_LEAK);
    assert_eq!(fs::read_to_string(side).unwrap(), cnf);
}

#[test]
fn gen_emits_parseable_documents() {
    let d = TempDir::new().unwrap();
    for kind in ["formula", "tree", "threshold"] {
        let r = run(&["gen", "--seed", "5", "--features", "6", "--kind", kind]);
        assert_eq!(r.code, EXIT_OK, "{}", r.err);
        assert!(leakaudit::parse_model(&r.out).is_ok());
        let again = run(&["gen", "--seed", "5", "--features", "6", "--kind", kind]);
        assert_eq!(r.out, again.out);
    }
    let q = write(&d, "q.qbf", "exists y; forall z;\ny | z\n");
    let out = d.path().join("q.json");
    let r = run(&[
        "gen",
        "--from-qbf",
        q.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.err.contains("expected audit-model verdict: LEAKS"));
    let r = run(&["audit-model", "--model", out.to_str().unwrap()]);
    assert_eq!(r.code, EXIT_LEAK);

    let q = write(&d, "f.qbf", "exists y; forall z;\ny & z\n");
    let r = run(&[
        "gen",
        "--from-qbf",
        q.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(r.err.contains("NO LEAK"));
    let r = run(&["audit-model", "--model", out.to_str().unwrap()]);
    assert_eq!(r.code, EXIT_OK);

    let bad = write(&d, "bad.qbf", "exists y;\ny & \n");
    assert_eq!(
        run(&["gen", "--from-qbf", bad.to_str().unwrap()]).code,
        EXIT_INPUT
    );
}

#[test]
fn explain_redacts_own_private_literals() {
    let d = TempDir::new().unwrap();
    let m = tutor(&d);
    let r = run(&[
        "--format", "json", "explain", "--model", &m, "--assign", TATA,
    ]);
    assert_eq!(r.code, EXIT_OK);
    let report = from_json(&r.out).unwrap();
    assert_eq!(report.verdict.fully_open, Some(false));
    let e = report.witnesses.explanation.unwrap();
    assert_eq!(e.redacted_literals, 1);
    assert!(!e.literals.contains('S'));
    let r = run(&[
        "--format",
        "json",
        "--deletion-order",
        "private-first",
        "explain",
        "--model",
        &m,
        "--assign",
        "E=1,D=1,S=1,H=1",
    ]);
    let report = from_json(&r.out).unwrap();
    assert_eq!(report.verdict.fully_open, Some(true));
    assert_eq!(report.witnesses.explanation.unwrap().literals, "E ∧ D");
}

#[test]
fn output_flag_writes_file() {
    let d = TempDir::new().unwrap();
    let out = d.path().join("report.json");
    let r = run(&[
        "--format",
        "json",
        "--output",
        out.to_str().unwrap(),
        "audit-model",
        "--model",
        &tutor(&d),
    ]);
    assert_eq!(r.code, EXIT_LEAK);
    assert!(r.out.is_empty());
    assert!(from_json(&fs::read_to_string(out).unwrap()).is_ok());
}

fn binary() -> &'static Path {
    Path::new(env!("CARGO_BIN_EXE_leakaudit"))
}

#[test]
fn binary_exit_codes_and_seed_env() {
    let d = TempDir::new().unwrap();
    let m = tutor(&d);
    let status = Command::new(binary())
        .args(["audit-individual", "--model", &m, "--assign", TATA])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_LEAK));
    let out = Command::new(binary())
        .env("LEAKAUDIT_SEED", "1234")
        .args([
            "--deterministic",
            "--format",
            "json",
            "audit-model",
            "--model",
            &m,
        ])
        .output()
        .unwrap();
    let report = from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(report.config_echo.seed, 1234);
    let help = Command::new(binary()).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(EXIT_OK));
}
