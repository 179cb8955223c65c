//! Verification verdicts and the compile / bounds-probe / leak-probe driver.
//!
//! Backends that actually assemble code and run harness binaries live in the
//! `specforge` crate; this module fixes the ordering rules and the harness
//! exit-code contract so that every backend obeys them.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzz::{Compiler, GadgetRecord, OptLevel, Status};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Verified,
    BrokenBounds,
    NoLeak,
    CompileFail,
    Inconclusive,
    HostUnsupported,
}

impl Outcome {
    pub const ALL: [Outcome; 6] = [
        Outcome::Verified,
        Outcome::BrokenBounds,
        Outcome::NoLeak,
        Outcome::CompileFail,
        Outcome::Inconclusive,
        Outcome::HostUnsupported,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Verified => "verified",
            Outcome::BrokenBounds => "broken_bounds",
            Outcome::NoLeak => "no_leak",
            Outcome::CompileFail => "compile_fail",
            Outcome::Inconclusive => "inconclusive",
            Outcome::HostUnsupported => "host_unsupported",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    /// Fraction of the planted secret recovered; `None` when not measured.
    pub recovered_bytes: Option<f64>,
    pub trials: u32,
    /// Set when the verdict came from the mock oracle.
    #[serde(default)]
    pub mock: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Verdict {
    pub fn new(outcome: Outcome, recovered_bytes: Option<f64>, trials: u32) -> Self {
        Verdict { outcome, recovered_bytes, trials, mock: false, detail: String::new() }
    }

    pub fn mock_verified() -> Self {
        Verdict { mock: true, ..Verdict::new(Outcome::Verified, None, 0) }
    }

    pub fn with_detail(mut self, detail: impl ToString) -> Self {
        self.detail = detail.to_string();
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    Hardware,
    Mock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub compiler: Compiler,
    pub opt: OptLevel,
    /// Harness template 1..=17; matches the candidate's base example.
    pub attacker_template_id: u8,
    pub timeout_s: f64,
    pub cpu_isolation: Option<u32>,
    pub oracle_mode: OracleMode,
    pub trials: u32,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            compiler: Compiler::Gcc,
            opt: OptLevel::O0,
            attacker_template_id: 1,
            timeout_s: 30.0,
            cpu_isolation: None,
            oracle_mode: OracleMode::Mock,
            trials: DEFAULT_TRIALS,
        }
    }
}

/// Flush+Reload rounds per secret byte, decided by majority vote.
pub const DEFAULT_TRIALS: u32 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("timeout must be positive, got {0}")]
    Timeout(f64),
    #[error("template id {0} outside 1..=17")]
    Template(u8),
    #[error("trials must be positive")]
    Trials,
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.timeout_s > 0.0) {
            return Err(ConfigError::Timeout(self.timeout_s));
        }
        if !(1..=17).contains(&self.attacker_template_id) {
            return Err(ConfigError::Template(self.attacker_template_id));
        }
        if self.trials == 0 {
            return Err(ConfigError::Trials);
        }
        Ok(())
    }

    /// Copy of this config with compiler, opt level and template taken from
    /// the record's lineage when it has one.
    pub fn for_record(&self, rec: &GadgetRecord) -> VerifyConfig {
        let mut cfg = self.clone();
        if let Some(l) = rec.lineage {
            cfg.compiler = l.compiler;
            cfg.opt = l.opt;
            cfg.attacker_template_id = l.base_example;
        }
        cfg
    }
}

/// Exit codes of the proof-of-concept harness binaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarnessExit {
    Full,
    Partial,
    NoneRecovered,
    CalibrationFailure,
}

impl HarnessExit {
    pub const ALL: [HarnessExit; 4] =
        [HarnessExit::Full, HarnessExit::Partial, HarnessExit::NoneRecovered, HarnessExit::CalibrationFailure];

    pub fn code(self) -> i32 {
        match self {
            HarnessExit::Full => 0,
            HarnessExit::Partial => 10,
            HarnessExit::NoneRecovered => 20,
            HarnessExit::CalibrationFailure => 30,
        }
    }

    pub fn from_code(code: i32) -> Option<HarnessExit> {
        HarnessExit::ALL.into_iter().find(|e| e.code() == code)
    }

    /// Whether any secret byte was recovered.
    pub fn leaked(self) -> bool {
        matches!(self, HarnessExit::Full | HarnessExit::Partial)
    }
}

/// Harness run mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    TrainAndLeak,
    OobOnly,
}

impl AttackMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackMode::TrainAndLeak => "train_and_leak",
            AttackMode::OobOnly => "oob_only",
        }
    }
}

/// One row of the harness per-byte CSV (`index,expected,recovered,hits`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteRecovery {
    pub index: usize,
    pub expected: u8,
    pub recovered: Option<u8>,
    pub hits: u32,
}

pub const BYTE_CSV_HEADER: &str = "index,expected,recovered,hits";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct CsvError {
    pub line: usize,
    pub msg: String,
}

/// Parses the harness stdout. The header line is optional; an empty
/// `recovered` field means the byte was not decoded.
pub fn parse_byte_csv(text: &str) -> Result<Vec<ByteRecovery>, CsvError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == BYTE_CSV_HEADER {
            continue;
        }
        let err = |msg: &str| CsvError { line: i + 1, msg: msg.to_string() };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(err("expected 4 fields"));
        }
        let recovered = if f[2].is_empty() { None } else { Some(f[2].parse().map_err(|_| err("bad recovered byte"))?) };
        out.push(ByteRecovery {
            index: f[0].parse().map_err(|_| err("bad index"))?,
            expected: f[1].parse().map_err(|_| err("bad expected byte"))?,
            recovered,
            hits: f[3].parse().map_err(|_| err("bad hit count"))?,
        });
    }
    Ok(out)
}

/// Fraction of rows whose recovered byte equals the expected one.
pub fn recovered_fraction(rows: &[ByteRecovery]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let ok = rows.iter().filter(|r| r.recovered == Some(r.expected)).count();
    ok as f64 / rows.len() as f64
}

/// Result of the bounds-safety probe.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundsResult {
    Pass,
    /// Bytes leaked without mistraining.
    Fail,
    Inconclusive(String),
}

/// Maps a bounds-probe harness exit to a result.
pub fn bounds_from_exit(exit: HarnessExit) -> BoundsResult {
    match exit {
        HarnessExit::NoneRecovered => BoundsResult::Pass,
        HarnessExit::Full | HarnessExit::Partial => BoundsResult::Fail,
        HarnessExit::CalibrationFailure => BoundsResult::Inconclusive("calibration failure".into()),
    }
}

/// Maps a leak-probe harness run to a verdict.
pub fn leak_verdict(exit: HarnessExit, rows: &[ByteRecovery], trials: u32) -> Verdict {
    let frac = recovered_fraction(rows);
    match exit {
        HarnessExit::Full if frac == 1.0 => Verdict::new(Outcome::Verified, Some(1.0), trials),
        HarnessExit::Full => Verdict::new(Outcome::Inconclusive, Some(frac), trials)
            .with_detail("harness reported full recovery but CSV disagrees"),
        HarnessExit::Partial => Verdict::new(Outcome::Inconclusive, Some(frac), trials).with_detail("partial recovery"),
        HarnessExit::NoneRecovered => Verdict::new(Outcome::NoLeak, Some(frac), trials),
        HarnessExit::CalibrationFailure => {
            Verdict::new(Outcome::Inconclusive, None, trials).with_detail("calibration failure")
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("not emittable: {0}")]
    NotEmittable(String),
    #[error("compile failed: {0}")]
    CompileFail(String),
    #[error("timed out")]
    Timeout,
    #[error("host unsupported: {0}")]
    HostUnsupported(String),
    #[error("{0}")]
    Other(String),
}

/// A built candidate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    /// Compiler command lines used to produce the artifact.
    pub argv: Vec<Vec<String>>,
}

/// Compiles candidates and runs the two probes.
pub trait VerifyBackend {
    fn compile(&mut self, rec: &GadgetRecord, cfg: &VerifyConfig) -> Result<Artifact, BackendError>;
    fn bounds_probe(&mut self, art: &Artifact, cfg: &VerifyConfig) -> Result<BoundsResult, BackendError>;
    fn leak_probe(&mut self, art: &Artifact, cfg: &VerifyConfig) -> Result<Verdict, BackendError>;
}

/// Runs compile, bounds probe, then leak probe, advancing `rec.status` and
/// storing the verdict. The leak probe only runs after a passing bounds
/// probe. Errors become verdicts; the function itself never fails.
pub fn verify_candidate(backend: &mut dyn VerifyBackend, rec: &mut GadgetRecord, cfg: &VerifyConfig) -> Verdict {
    let cfg = cfg.for_record(rec);
    let verdict = run_stages(backend, rec, &cfg);
    let status = match verdict.outcome {
        Outcome::Verified => Status::Verified,
        o => Status::Rejected { reason: o.as_str().to_string() },
    };
    let _ = rec.advance(status);
    rec.verdict = Some(verdict.clone());
    verdict
}

fn host_error(e: BackendError, trials: u32) -> Verdict {
    match e {
        BackendError::HostUnsupported(m) => Verdict::new(Outcome::HostUnsupported, None, 0).with_detail(m),
        BackendError::Timeout => Verdict::new(Outcome::Inconclusive, None, trials).with_detail("timeout"),
        BackendError::NotEmittable(m) | BackendError::CompileFail(m) => {
            Verdict::new(Outcome::CompileFail, None, 0).with_detail(m)
        }
        BackendError::Other(m) => Verdict::new(Outcome::Inconclusive, None, trials).with_detail(m),
    }
}

fn run_stages(backend: &mut dyn VerifyBackend, rec: &mut GadgetRecord, cfg: &VerifyConfig) -> Verdict {
    if let Err(e) = cfg.validate() {
        return Verdict::new(Outcome::Inconclusive, None, 0).with_detail(e);
    }
    let art = match backend.compile(rec, cfg) {
        Ok(a) => a,
        Err(e) => return host_error(e, 0),
    };
    let _ = rec.advance(Status::Compiled);
    match backend.bounds_probe(&art, cfg) {
        Ok(BoundsResult::Pass) => {}
        Ok(BoundsResult::Fail) => return Verdict::new(Outcome::BrokenBounds, None, cfg.trials),
        Ok(BoundsResult::Inconclusive(m)) => return Verdict::new(Outcome::Inconclusive, None, cfg.trials).with_detail(m),
        Err(e) => return host_error(e, cfg.trials),
    }
    match backend.leak_probe(&art, cfg) {
        Ok(v) if v.outcome == Outcome::Verified && !v.mock && v.recovered_bytes != Some(1.0) => {
            Verdict::new(Outcome::Inconclusive, v.recovered_bytes, v.trials)
                .with_detail("verified without full recovery")
        }
        Ok(v) => v,
        Err(e) => host_error(e, cfg.trials),
    }
}
