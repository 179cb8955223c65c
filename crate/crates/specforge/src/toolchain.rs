//! Compiler and proof-of-concept harness drivers behind `VerifyBackend`.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use specforge_core::fuzz::{Compiler, GadgetRecord};
use specforge_core::lexer::detokenize;
use specforge_core::verify::{
    bounds_from_exit, leak_verdict, parse_byte_csv, Artifact, AttackMode, BackendError, BoundsResult, HarnessExit,
    OracleMode, Verdict, VerifyBackend, VerifyConfig,
};
use tempfile::TempDir;

/// Architecture the hardware probes need.
pub const HARDWARE_ARCH: &str = "x86_64";

pub fn compiler_program(c: Compiler) -> &'static str {
    c.as_str()
}

/// Assembly file handed to the compiler: the candidate as a global text
/// symbol.
pub fn assembly_unit(rec: &GadgetRecord) -> Result<String, BackendError> {
    let body = detokenize(&rec.tokens.tokens).map_err(|e| BackendError::NotEmittable(e.to_string()))?;
    let mut s = String::from("\t.text\n");
    if let Some(name) = rec.tokens.tokens.first().and_then(|t| t.label_name()) {
        if !name.starts_with('.') {
            s.push_str(&format!("\t.globl\t{name}\n"));
        }
    }
    s.push_str(&body);
    s.push('\n');
    Ok(s)
}

/// Command line of one harness run.
pub fn harness_argv(harness: &Path, template: u8, mode: AttackMode, trials: u32, object: &str) -> Vec<String> {
    vec![
        harness.display().to_string(),
        "--template".into(),
        template.to_string(),
        "--mode".into(),
        mode.as_str().into(),
        "--trials".into(),
        trials.to_string(),
        object.into(),
    ]
}

pub struct RunOutput {
    pub code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
}

/// Runs `argv`, killing it after `timeout`.
pub fn run_with_timeout(argv: &[String], timeout: Duration) -> Result<RunOutput, BackendError> {
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => BackendError::HostUnsupported(format!("{} not found", argv[0])),
            _ => BackendError::Other(format!("{}: {e}", argv[0])),
        })?;
    let mut out = child.stdout.take().unwrap();
    let mut err = child.stderr.take().unwrap();
    let t_out = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = out.read_to_string(&mut s);
        s
    });
    let t_err = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = err.read_to_string(&mut s);
        s
    });
    let deadline = Instant::now() + timeout;
    let status = loop {
        match child.try_wait() {
            Ok(Some(st)) => break st,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(BackendError::Timeout);
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(BackendError::Other(e.to_string())),
        }
    };
    Ok(RunOutput { code: status.code(), stdout: t_out.join().unwrap_or_default(), stderr: t_err.join().unwrap_or_default() })
}

/// Local toolchain backend. In mock mode candidates are still assembled;
/// both probes then pass without running anything.
pub struct Toolchain {
    work: TempDir,
    harness: Option<PathBuf>,
    arch: String,
    /// Compiler argv per record id, paths relative to the work directory.
    pub commands: std::collections::BTreeMap<String, Vec<String>>,
}

impl Toolchain {
    pub fn new(harness: Option<PathBuf>) -> std::io::Result<Self> {
        Self::with_arch(harness, std::env::consts::ARCH)
    }

    /// Backend that believes it runs on `arch`.
    pub fn with_arch(harness: Option<PathBuf>, arch: &str) -> std::io::Result<Self> {
        Ok(Toolchain { work: tempfile::tempdir()?, harness, arch: arch.to_string(), commands: Default::default() })
    }

    pub fn work_dir(&self) -> &Path {
        self.work.path()
    }

    /// Checks that hardware probes can run here.
    pub fn hardware_ready(&self) -> Result<&Path, BackendError> {
        if self.arch != HARDWARE_ARCH {
            return Err(BackendError::HostUnsupported(format!("hardware verification needs {HARDWARE_ARCH}, host is {}", self.arch)));
        }
        match &self.harness {
            Some(h) if h.exists() => Ok(h),
            Some(h) => Err(BackendError::HostUnsupported(format!("harness {} not found", h.display()))),
            None => Err(BackendError::HostUnsupported("no harness configured".into())),
        }
    }

    fn run_harness(&self, art: &Artifact, cfg: &VerifyConfig, mode: AttackMode) -> Result<(HarnessExit, String), BackendError> {
        let h = self.hardware_ready()?;
        let mut argv = harness_argv(h, cfg.attacker_template_id, mode, cfg.trials, &art.path);
        if let Some(core) = cfg.cpu_isolation {
            argv.splice(0..0, ["taskset".to_string(), "-c".into(), core.to_string()]);
        }
        let out = run_with_timeout(&argv, Duration::from_secs_f64(cfg.timeout_s))?;
        let code = out.code.ok_or_else(|| BackendError::Other("harness killed by signal".into()))?;
        let exit = HarnessExit::from_code(code).ok_or_else(|| BackendError::Other(format!("harness exit code {code}")))?;
        Ok((exit, out.stdout))
    }
}

impl VerifyBackend for Toolchain {
    fn compile(&mut self, rec: &GadgetRecord, cfg: &VerifyConfig) -> Result<Artifact, BackendError> {
        let unit = assembly_unit(rec)?;
        let stem: String = rec.id.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
        let src = self.work.path().join(format!("{stem}.s"));
        let obj = self.work.path().join(format!("{stem}.o"));
        std::fs::write(&src, unit).map_err(|e| BackendError::Other(e.to_string()))?;
        let argv: Vec<String> = vec![
            compiler_program(cfg.compiler).into(),
            "-c".into(),
            cfg.opt.flag().into(),
            "-x".into(),
            "assembler".into(),
            src.display().to_string(),
            "-o".into(),
            obj.display().to_string(),
        ];
        let out = run_with_timeout(&argv, Duration::from_secs_f64(cfg.timeout_s))?;
        let root = format!("{}/", self.work.path().display());
        self.commands.insert(rec.id.clone(), argv.iter().map(|a| a.replace(&root, "")).collect());
        if out.code != Some(0) {
            return Err(BackendError::CompileFail(out.stderr.replace(&root, "").trim().to_string()));
        }
        Ok(Artifact { path: obj.display().to_string(), argv: vec![argv] })
    }

    fn bounds_probe(&mut self, art: &Artifact, cfg: &VerifyConfig) -> Result<BoundsResult, BackendError> {
        if cfg.oracle_mode == OracleMode::Mock {
            return Ok(BoundsResult::Pass);
        }
        let (exit, _) = self.run_harness(art, cfg, AttackMode::OobOnly)?;
        Ok(bounds_from_exit(exit))
    }

    fn leak_probe(&mut self, art: &Artifact, cfg: &VerifyConfig) -> Result<Verdict, BackendError> {
        if cfg.oracle_mode == OracleMode::Mock {
            return Ok(Verdict::mock_verified());
        }
        let (exit, stdout) = self.run_harness(art, cfg, AttackMode::TrainAndLeak)?;
        let rows = parse_byte_csv(&stdout).map_err(|e| BackendError::Other(format!("harness CSV: {e}")))?;
        Ok(leak_verdict(exit, &rows, cfg.trials))
    }
}
