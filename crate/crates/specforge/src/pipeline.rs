//! Resumable multi-stage runs. Every stage writes into `<out>/<stage>/`;
//! `<out>/state.json` maps each finished stage to a hash of its settings
//! and inputs, and a stage whose hash is unchanged is skipped.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use specforge_core::dataset::DatasetManifest;
use specforge_core::fuzz::{GadgetRecord, InsertionOptions, InsertionTables, MutationParams};
use specforge_core::verify::VerifyConfig;
use specforge_core::TokenSeq;

use crate::config::{PipelineConfig, Stage};
use crate::corpus::{base_gadgets, benign_functions, data_dir, read_text};
use crate::error::{Error, Result};
use crate::io::{ensure_dir, read_bytes, read_json, read_jsonl, write_bytes, write_json, write_jsonl};
use crate::models::{Detector, GanBundle};
use crate::report::{emit_curves, emit_manifest, emit_scan, roc_svg, ScanSummary};
use crate::stages;

/// Facts about the machine a run executes on.
#[derive(Clone, Debug)]
pub struct Host {
    pub arch: String,
    pub data: PathBuf,
}

impl Host {
    pub fn current() -> Self {
        Host { arch: std::env::consts::ARCH.to_string(), data: data_dir() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ran,
    Skipped,
}

#[derive(Default, Serialize, Deserialize)]
struct State {
    stages: BTreeMap<String, String>,
}

const STATE: &str = "state.json";

pub struct Pipeline<'a> {
    cfg: &'a PipelineConfig,
    host: &'a Host,
}

fn hash_path(h: &mut Sha256, p: &Path) -> Result<()> {
    h.update(p.display().to_string().as_bytes());
    if p.is_dir() {
        let mut entries: Vec<PathBuf> =
            fs::read_dir(p).map_err(|e| Error::io(p, e))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for e in entries {
            hash_path(h, &e)?;
        }
    } else if p.exists() {
        h.update(read_bytes(p)?);
    } else {
        h.update(b"<absent>");
    }
    h.update(b"\0");
    Ok(())
}

fn first_existing(paths: &[PathBuf]) -> Option<PathBuf> {
    paths.iter().find(|p| p.exists()).cloned()
}

fn records(path: &Path) -> Result<Vec<GadgetRecord>> {
    read_jsonl(path)
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a PipelineConfig, host: &'a Host) -> Self {
        Pipeline { cfg, host }
    }

    pub fn dir(&self, stage: Stage) -> PathBuf {
        self.cfg.out.join(stage.name())
    }

    fn file(&self, stage: Stage, name: &str) -> PathBuf {
        self.dir(stage).join(name)
    }

    fn seeds_path(&self) -> PathBuf {
        self.cfg.fuzz.seeds.clone().unwrap_or_else(|| self.host.data.join("base"))
    }

    fn benign_path(&self) -> PathBuf {
        self.host.data.join("benign")
    }

    fn scan_input(&self) -> PathBuf {
        self.cfg.scan.input.clone().unwrap_or_else(|| self.host.data.join("sample").join("sample.objdump"))
    }

    fn labels_path(&self) -> Option<PathBuf> {
        match (&self.cfg.scan.labels, &self.cfg.scan.input) {
            (Some(l), _) => Some(l.clone()),
            (None, None) => Some(self.host.data.join("sample").join("labels.csv")),
            (None, Some(_)) => None,
        }
    }

    fn gan_checkpoint(&self) -> PathBuf {
        first_existing(&[self.file(Stage::GanAdv, "gan.fspc")]).unwrap_or_else(|| self.file(Stage::GanPretrain, "gan.fspc"))
    }

    fn detector_checkpoint(&self) -> PathBuf {
        self.cfg.scan.checkpoint.clone().unwrap_or_else(|| self.file(Stage::BertFinetune, "detector.fspc"))
    }

    /// Files and directories a stage reads.
    pub fn inputs(&self, stage: Stage) -> Vec<PathBuf> {
        let verified = self.file(Stage::Verify, "verified.jsonl");
        let generated = self.file(Stage::GanGenerate, "verified.jsonl");
        let mut v = match stage {
            Stage::Fuzz => vec![self.seeds_path()],
            Stage::Verify => vec![self.file(Stage::Fuzz, "records.jsonl"), self.file(Stage::Fuzz, "params.json")],
            Stage::GanPretrain => vec![verified],
            Stage::GanAdv => vec![verified, self.file(Stage::GanPretrain, "gan.fspc")],
            Stage::GanGenerate => vec![verified, self.gan_checkpoint()],
            Stage::BertPretrain => vec![verified, generated, self.benign_path()],
            Stage::BertFinetune => vec![verified, generated, self.benign_path(), self.file(Stage::BertPretrain, "bert.fspc")],
            Stage::Scan => vec![self.scan_input(), self.detector_checkpoint()],
            Stage::Eval => vec![self.file(Stage::Scan, "scan.json")],
            Stage::Diversity => vec![
                self.seeds_path(),
                self.file(Stage::Fuzz, "records.jsonl"),
                verified,
                self.file(Stage::GanGenerate, "records.jsonl"),
                generated,
            ],
        };
        if stage == Stage::Fuzz {
            v.extend(self.cfg.fuzz.table.clone());
        }
        if stage == Stage::Eval {
            v.extend(self.labels_path());
        }
        v
    }

    /// Files a finished stage leaves behind.
    pub fn outputs(&self, stage: Stage) -> Vec<PathBuf> {
        let names: &[&str] = match stage {
            Stage::Fuzz => &["records.jsonl", "params.json"],
            Stage::Verify | Stage::GanGenerate => &["manifest.json", "manifest.csv", "verified.jsonl"],
            Stage::GanPretrain | Stage::GanAdv => &["gan.fspc", "loss.csv", "loss.svg"],
            Stage::BertPretrain => &["bert.fspc", "loss.csv", "loss.svg"],
            Stage::BertFinetune => &["detector.fspc", "loss.csv", "loss.svg", "metrics.json", "roc.svg"],
            Stage::Scan => &["scan.json", "scan.csv"],
            Stage::Eval => &["scan.json", "scan.csv", "metrics.json", "roc.svg"],
            Stage::Diversity => &["diversity.json", "diversity.csv"],
        };
        names.iter().map(|n| self.file(stage, n)).collect()
    }

    /// Hash of a stage's settings and current inputs.
    pub fn stage_hash(&self, stage: Stage) -> Result<String> {
        let mut h = Sha256::new();
        h.update(stage.name().as_bytes());
        h.update(self.cfg.section(stage).as_bytes());
        for p in self.inputs(stage) {
            hash_path(&mut h, &p)?;
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    fn load_state(&self) -> Result<State> {
        let p = self.cfg.out.join(STATE);
        if p.exists() {
            read_json(&p)
        } else {
            Ok(State::default())
        }
    }

    /// Runs the configured stages in order.
    pub fn run(&self) -> Result<Vec<(Stage, Outcome)>> {
        let mut done = Vec::new();
        if self.cfg.stages.is_empty() {
            return Ok(done);
        }
        ensure_dir(&self.cfg.out)?;
        let mut state = self.load_state()?;
        for &stage in &self.cfg.stages {
            let hash = self.stage_hash(stage)?;
            let fresh = state.stages.get(stage.name()) == Some(&hash) && self.outputs(stage).iter().all(|p| p.exists());
            if fresh {
                done.push((stage, Outcome::Skipped));
                continue;
            }
            state.stages.remove(stage.name());
            ensure_dir(&self.dir(stage))?;
            self.run_stage(stage).map_err(|e| match e {
                Error::Data(msg) => Error::stage(stage.name(), msg),
                e => e,
            })?;
            state.stages.insert(stage.name().to_string(), hash);
            write_json(&self.cfg.out.join(STATE), &state)?;
            done.push((stage, Outcome::Ran));
        }
        Ok(done)
    }

    fn need(&self, p: &Path, stage: Stage) -> Result<()> {
        if p.exists() {
            Ok(())
        } else {
            Err(Error::stage(stage.name(), format!("missing input {}", p.display())))
        }
    }

    fn verify_config(&self) -> VerifyConfig {
        let v = &self.cfg.verify;
        VerifyConfig {
            timeout_s: v.timeout_s,
            cpu_isolation: v.cpu,
            oracle_mode: v.mode,
            trials: v.trials,
            ..VerifyConfig::default()
        }
    }

    fn verify_into(&self, stage: Stage, recs: Vec<GadgetRecord>) -> Result<DatasetManifest> {
        let m = stages::verify(recs, &self.verify_config(), self.cfg.verify.harness.as_deref(), &self.host.arch, self.cfg.jobs)?;
        emit_manifest(&self.dir(stage), &m)?;
        write_jsonl(&self.file(stage, "verified.jsonl"), &stages::verified(&m))?;
        Ok(m)
    }

    fn verified_seqs(&self) -> Result<Vec<TokenSeq>> {
        let p = self.file(Stage::Verify, "verified.jsonl");
        let mut v = if p.exists() { stages::record_seqs(&records(&p)?) } else { Vec::new() };
        let g = self.file(Stage::GanGenerate, "verified.jsonl");
        if g.exists() {
            v.extend(stages::record_seqs(&records(&g)?));
        }
        Ok(v)
    }

    fn gan_corpus(&self, stage: Stage) -> Result<Vec<TokenSeq>> {
        let p = self.file(Stage::Verify, "verified.jsonl");
        self.need(&p, stage)?;
        let v = stages::record_seqs(&records(&p)?);
        if v.is_empty() {
            return Err(Error::stage(stage.name(), "no verified gadgets to train on"));
        }
        Ok(v)
    }

    fn run_stage(&self, stage: Stage) -> Result<()> {
        let cfg = self.cfg;
        let dir = self.dir(stage);
        match stage {
            Stage::Fuzz => {
                let mut seeds = match &cfg.fuzz.seeds {
                    Some(p) => stages::read_seeds(p)?,
                    None => base_gadgets(&self.host.data)?,
                };
                if let Some(n) = cfg.fuzz.limit {
                    seeds.truncate(n);
                }
                let tables = match &cfg.fuzz.table {
                    Some(p) => InsertionTables::parse(&read_text(p)?).map_err(|e| Error::Usage(format!("{}: {e}", p.display())))?,
                    None => InsertionTables::builtin(),
                };
                let opts = match &cfg.fuzz.immediates {
                    Some(v) => InsertionOptions { immediates: v.clone() },
                    None => InsertionOptions::default(),
                };
                let params = MutationParams { diversity: cfg.fuzz.diversity, max_offset: cfg.fuzz.max_offset, rng_seed: cfg.seed };
                let recs = stages::fuzz(&seeds, &params, &tables, &opts, cfg.jobs)?;
                write_jsonl(&dir.join("records.jsonl"), &recs)?;
                write_json(&dir.join("params.json"), &params)
            }
            Stage::Verify => {
                let src = self.file(Stage::Fuzz, "records.jsonl");
                self.need(&src, stage)?;
                let mut m = self.verify_into(stage, records(&src)?)?;
                let params = self.file(Stage::Fuzz, "params.json");
                if params.exists() {
                    m.provenance.params = Some(read_json(&params)?);
                    emit_manifest(&dir, &m)?;
                }
                Ok(())
            }
            Stage::GanPretrain => {
                let corpus = self.gan_corpus(stage)?;
                let (bundle, losses) = stages::gan_pretrain(&corpus, &cfg.gan, cfg.seed)?;
                write_bytes(&dir.join("gan.fspc"), &bundle.to_bytes(losses.len() as u64))?;
                emit_curves(&dir, "loss", "generator pre-training", &[("nll", &losses)])
            }
            Stage::GanAdv => {
                let corpus = self.gan_corpus(stage)?;
                let ckpt = self.file(Stage::GanPretrain, "gan.fspc");
                self.need(&ckpt, stage)?;
                let mut bundle = GanBundle::from_bytes(&read_bytes(&ckpt)?)?;
                let l = stages::gan_adversarial(&mut bundle, &corpus, cfg.gan.adversarial_steps, cfg.seed)?;
                write_bytes(&dir.join("gan.fspc"), &bundle.to_bytes(l.len() as u64))?;
                let col = |f: fn(&specforge_core::gan::AdvLosses) -> f64| l.iter().map(f).collect::<Vec<f64>>();
                let (g, d, c, r) = (col(|x| x.g_loss), col(|x| x.d_loss), col(|x| x.c_loss), col(|x| x.mean_reward));
                emit_curves(&dir, "loss", "adversarial training", &[("generator", &g), ("discriminator", &d), ("critic", &c), ("reward", &r)])
            }
            Stage::GanGenerate => {
                let corpus = self.gan_corpus(stage)?;
                let ckpt = self.gan_checkpoint();
                self.need(&ckpt, stage)?;
                let bundle = GanBundle::from_bytes(&read_bytes(&ckpt)?)?;
                let recs = stages::gan_generate(&bundle, &corpus, cfg.gan.generate, cfg.gan.temperature, cfg.seed)?;
                write_jsonl(&dir.join("records.jsonl"), &recs)?;
                self.verify_into(stage, recs).map(|_| ())
            }
            Stage::BertPretrain => {
                let mut corpus = benign_functions(&self.host.data)?;
                corpus.extend(self.verified_seqs()?);
                let (det, losses) = stages::bert_pretrain(&corpus, &cfg.bert, cfg.seed)?;
                write_bytes(&dir.join("bert.fspc"), &det.to_bytes(losses.len() as u64))?;
                let mlm: Vec<f64> = losses.iter().map(|l| l.mlm).collect();
                let nsp: Vec<f64> = losses.iter().map(|l| l.nsp).collect();
                emit_curves(&dir, "loss", "transformer pre-training", &[("mlm", &mlm), ("nsp", &nsp)])
            }
            Stage::BertFinetune => {
                let gadgets = self.verified_seqs()?;
                let benign = benign_functions(&self.host.data)?;
                let split = stages::balanced_split(&gadgets, &benign, cfg.bert.train_per_class, cfg.bert.test_per_class, cfg.seed)?;
                let pre = self.file(Stage::BertPretrain, "bert.fspc");
                let mut det = if pre.exists() {
                    Detector::from_bytes(&read_bytes(&pre)?)?
                } else {
                    let corpus: Vec<TokenSeq> = split.train.iter().map(|(s, _)| s.clone()).collect();
                    stages::new_detector(&corpus, &cfg.bert, cfg.seed)?
                };
                let losses = stages::bert_finetune(&mut det, &split.train, &cfg.bert, cfg.seed)?;
                write_bytes(&dir.join("detector.fspc"), &det.to_bytes(losses.len() as u64))?;
                emit_curves(&dir, "loss", "fine-tuning", &[("loss", &losses)])?;
                let test = if split.test.is_empty() { &split.train } else { &split.test };
                let m = stages::holdout_metrics(&det, test, cfg.scan.threshold)?;
                write_json(&dir.join("metrics.json"), &m)?;
                write_bytes(&dir.join("roc.svg"), roc_svg(&m.roc, m.auc).as_bytes())
            }
            Stage::Scan => {
                let ckpt = self.detector_checkpoint();
                self.need(&ckpt, stage)?;
                let det = Detector::from_bytes(&read_bytes(&ckpt)?)?;
                let functions = stages::read_functions(&self.scan_input())?;
                let summary = stages::scan(&det, &functions, None, &cfg.scan, cfg.jobs)?;
                emit_scan(&dir, &summary)
            }
            Stage::Eval => {
                let src = self.file(Stage::Scan, "scan.json");
                self.need(&src, stage)?;
                let labels = self.labels_path().ok_or_else(|| Error::Usage("eval needs scan.labels".into()))?;
                let labels = stages::parse_labels(&read_text(&labels)?)?;
                let mut summary: ScanSummary = read_json(&src)?;
                stages::evaluate_summary(&mut summary, &labels)?;
                emit_scan(&dir, &summary)
            }
            Stage::Diversity => {
                let base = match &cfg.fuzz.seeds {
                    Some(p) => stages::read_seeds(p)?,
                    None => base_gadgets(&self.host.data)?,
                };
                let pick = |a: Stage, b: Stage, name: &str| -> Result<Vec<TokenSeq>> {
                    match first_existing(&[self.file(a, "verified.jsonl"), self.file(b, name)]) {
                        Some(p) => Ok(stages::record_seqs(&records(&p)?)),
                        None => Ok(Vec::new()),
                    }
                };
                let fuzz = pick(Stage::Verify, Stage::Fuzz, "records.jsonl")?;
                let gan = pick(Stage::GanGenerate, Stage::GanGenerate, "records.jsonl")?;
                let stats = stages::diversity(&base, &fuzz, &gan, &cfg.diversity.n)?;
                crate::report::emit_diversity(&dir, &stats)
            }
        }
    }
}
