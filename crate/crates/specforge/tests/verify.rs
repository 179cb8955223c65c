use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use specforge::corpus::{base_gadgets, data_dir};
use specforge::stages::{verified, verify};
use specforge::toolchain::{assembly_unit, harness_argv, Toolchain};
use specforge::Error;
use specforge_core::fuzz::{GadgetRecord, Status};
use specforge_core::lexer::{Token, TokenKind};
use specforge_core::verify::{
    parse_byte_csv, verify_candidate, AttackMode, BackendError, HarnessExit, OracleMode, Outcome, VerifyConfig, BYTE_CSV_HEADER,
};

fn base(id: &str) -> GadgetRecord {
    let s = base_gadgets(&data_dir()).unwrap().into_iter().find(|s| s.source_id == id).unwrap();
    GadgetRecord::seed(s)
}

/// A stand-in harness: logs its argv, answers the bounds probe with
/// `oob_exit` and the leak probe with `leak_exit` and `csv`.
fn fake_harness(dir: &Path, oob_exit: i32, leak_exit: i32, csv: &str) -> PathBuf {
    let p = dir.join("harness.sh");
    let log = dir.join("argv.log");
    let script = format!(
        "#!/bin/sh\necho \"$@\" >> {log}\nif [ \"$4\" = oob_only ]; then exit {oob_exit}; fi\nprintf '%s' '{csv}'\nexit {leak_exit}\n",
        log = log.display()
    );
    std::fs::write(&p, script).unwrap();
    std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
    p
}

const FULL_CSV: &str = "index,expected,recovered,hits\n0,84,84,97\n1,104,104,99\n";

#[test]
fn harness_interface() {
    let argv = harness_argv(Path::new("/opt/poc"), 7, AttackMode::TrainAndLeak, 100, "g.o");
    assert_eq!(argv, ["/opt/poc", "--template", "7", "--mode", "train_and_leak", "--trials", "100", "g.o"]);
    assert_eq!(AttackMode::OobOnly.as_str(), "oob_only");
    let codes: Vec<i32> = HarnessExit::ALL.iter().map(|e| e.code()).collect();
    assert_eq!(codes, [0, 10, 20, 30]);
    assert_eq!(HarnessExit::from_code(5), None);
    assert_eq!(BYTE_CSV_HEADER, "index,expected,recovered,hits");
    let rows = parse_byte_csv("index,expected,recovered,hits\n0,83,,3\n1,101,101,88\n").unwrap();
    assert_eq!(rows[0].recovered, None);
    assert_eq!(rows[1].hits, 88);
    assert!(parse_byte_csv("0,1,2\n").is_err());
}

#[test]
fn mock_verifies_seed_with_gcc() {
    let m = verify(vec![base("ex01_gcc_O0")], &VerifyConfig::default(), None, "x86_64", 1).unwrap();
    assert_eq!(m.counts.verified, 1, "{:?}", m.records[0].verdict);
    let v = m.records[0].verdict.as_ref().unwrap();
    assert!(v.mock);
    assert!(m.is_consistent());
    let cmd = &m.provenance.commands["ex01_gcc_O0"];
    assert_eq!(cmd[0], "gcc");
    assert!(cmd.iter().all(|a| !a.starts_with('/')), "{cmd:?}");
    assert!(m.provenance.tool_versions.iter().any(|v| v.contains("gcc")));
}

#[test]
fn placeholder_tokens_are_not_emittable() {
    let mut r = base("ex01_gcc_O0");
    r.tokens.tokens.push(Token::new(TokenKind::Unknown, "<UNK>"));
    assert!(matches!(assembly_unit(&r), Err(BackendError::NotEmittable(_))));
    let mut tc = Toolchain::new(None).unwrap();
    let v = verify_candidate(&mut tc, &mut r, &VerifyConfig::default());
    assert_eq!(v.outcome, Outcome::CompileFail);
    assert!(matches!(r.status, Status::Rejected { .. }));
}

#[test]
fn broken_assembly_is_compile_fail() {
    let mut r = base("ex01_gcc_O0");
    r.tokens.tokens.insert(1, Token::new(TokenKind::Instruction, "frobnicate"));
    let m = verify(vec![r], &VerifyConfig::default(), None, "x86_64", 1).unwrap();
    assert_eq!(m.records[0].verdict.as_ref().unwrap().outcome, Outcome::CompileFail);
    assert_eq!((m.counts.compiled_ok, m.success_rate), (0, None));
}

#[test]
fn hardware_needs_x86_and_harness() {
    let dir = tempfile::tempdir().unwrap();
    let h = fake_harness(dir.path(), 20, 0, FULL_CSV);
    let cfg = VerifyConfig { oracle_mode: OracleMode::Hardware, ..VerifyConfig::default() };
    let e = verify(vec![base("ex01_gcc_O0")], &cfg, Some(&h), "aarch64", 1).unwrap_err();
    assert!(matches!(e, Error::HostUnsupported(_)));
    assert_eq!(e.exit_code(), 3);
    let e = verify(vec![base("ex01_gcc_O0")], &cfg, None, "x86_64", 1).unwrap_err();
    assert!(matches!(e, Error::HostUnsupported(_)));
    let e = verify(vec![base("ex01_gcc_O0")], &cfg, Some(&dir.path().join("missing")), "x86_64", 1).unwrap_err();
    assert!(matches!(e, Error::HostUnsupported(_)));
}

#[test]
fn hardware_verdicts_follow_harness() {
    let cases = [
        (20, 0, FULL_CSV, Outcome::Verified),
        (0, 0, FULL_CSV, Outcome::BrokenBounds),
        (20, 20, "0,84,,1\n", Outcome::NoLeak),
        (20, 10, "0,84,84,50\n1,104,,2\n", Outcome::Inconclusive),
        (30, 0, FULL_CSV, Outcome::Inconclusive),
    ];
    for (oob, leak, csv, want) in cases {
        let dir = tempfile::tempdir().unwrap();
        let h = fake_harness(dir.path(), oob, leak, csv);
        let cfg = VerifyConfig { oracle_mode: OracleMode::Hardware, trials: 7, ..VerifyConfig::default() };
        let m = verify(vec![base("ex03_clang_O2")], &cfg, Some(&h), "x86_64", 1).unwrap();
        let v = m.records[0].verdict.as_ref().unwrap();
        assert_eq!(v.outcome, want, "oob {oob} leak {leak}: {v:?}");
        assert!(!v.mock);
        let log = std::fs::read_to_string(dir.path().join("argv.log")).unwrap();
        let first: Vec<&str> = log.lines().next().unwrap().split(' ').collect();
        assert_eq!(first[..6], ["--template", "3", "--mode", "oob_only", "--trials", "7"]);
        assert!(first[6].ends_with(".o"));
        if oob == 20 {
            assert!(log.lines().nth(1).unwrap().contains("--mode train_and_leak"));
        }
    }
    let m = {
        let dir = tempfile::tempdir().unwrap();
        let h = fake_harness(dir.path(), 20, 0, FULL_CSV);
        let cfg = VerifyConfig { oracle_mode: OracleMode::Hardware, ..VerifyConfig::default() };
        verify(vec![base("ex01_gcc_O0"), base("ex02_clang_O0")], &cfg, Some(&h), "x86_64", 2).unwrap()
    };
    assert_eq!(verified(&m).len(), 2);
    assert_eq!(m.records[0].verdict.as_ref().unwrap().recovered_bytes, Some(1.0));
}
