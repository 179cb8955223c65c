//! Command line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use specforge_core::fuzz::{GadgetRecord, InsertionOptions, InsertionTables, MutationParams};
use specforge_core::verify::{OracleMode, VerifyConfig};
use specforge_core::TokenSeq;

use crate::config::{PipelineConfig, Stage};
use crate::corpus::{base_gadgets, benign_functions, read_text};
use crate::error::{Error, Result};
use crate::io::{read_bytes, read_json, read_jsonl, write_bytes, write_json, write_jsonl, write_token_records};
use crate::models::{Detector, GanBundle};
use crate::pipeline::{Host, Outcome, Pipeline};
use crate::report::{emit_curves, emit_diversity, emit_manifest, emit_scan, roc_svg, ScanSummary};
use crate::stages;

#[derive(Parser, Debug)]
#[command(name = "specforge", version, about = "Spectre gadget fuzzing, generation and detection")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Master random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root; subcommands write into `<out>/<stage>/` unless told otherwise.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Mock,
    Hardware,
}

impl From<Mode> for OracleMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Mock => OracleMode::Mock,
            Mode::Hardware => OracleMode::Hardware,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tokenize `.s` or disassembly files into token records.
    Tokenize {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Mutate seed gadgets by instruction insertion.
    Fuzz {
        /// `.s` file, directory of `.s` files or JSONL records; bundled base gadgets by default.
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long)]
        diversity: Option<u32>,
        #[arg(long)]
        max_offset: Option<usize>,
        /// Custom insertion table.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        immediates: Option<Vec<u32>>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compile and verify candidate records.
    Verify {
        records: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        harness: Option<PathBuf>,
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long)]
        trials: Option<u32>,
        #[arg(long)]
        cpu: Option<u32>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Maximum-likelihood pre-training of the generator.
    GanPretrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Adversarial training from a pre-trained generator.
    GanAdv {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate candidate gadgets by regenerating a block of each seed.
    GanGenerate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Masked-token and next-piece pre-training of the detector.
    BertPretrain {
        #[arg(long, required = true)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fine-tune the detector on gadgets against benign functions.
    BertFinetune {
        #[arg(long)]
        gadgets: PathBuf,
        /// Benign functions; the bundled benign corpus by default.
        #[arg(long)]
        benign: Option<PathBuf>,
        /// Pre-trained detector to start from.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Sliding-window scan of assembly or disassembly.
    Scan {
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Score a scan against ground-truth labels.
    Eval {
        scan: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Distinct n-gram counts of base, fuzzed and generated gadgets.
    Diversity {
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long)]
        fuzz: Option<PathBuf>,
        #[arg(long)]
        gan: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the configured stages, skipping those already up to date.
    Pipeline {
        #[arg(long, value_enum, value_delimiter = ',')]
        stages: Option<Vec<Stage>>,
    },
}

/// Configuration from `--config` with the global flags applied.
pub fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    if let Some(j) = g.jobs {
        if j == 0 {
            return Err(Error::Usage("--jobs must be positive".into()));
        }
        cfg.jobs = j;
    }
    Ok(cfg)
}

fn out_dir(cfg: &PipelineConfig, output: &Option<PathBuf>, stage: &str) -> PathBuf {
    output.clone().unwrap_or_else(|| cfg.out.join(stage))
}

fn out_file(cfg: &PipelineConfig, output: &Option<PathBuf>, stage: &str, name: &str) -> PathBuf {
    output.clone().unwrap_or_else(|| cfg.out.join(stage).join(name))
}

fn load_detector(p: &Path) -> Result<Detector> {
    Detector::from_bytes(&read_bytes(p)?)
}

fn load_gan(p: &Path) -> Result<GanBundle> {
    GanBundle::from_bytes(&read_bytes(p)?)
}

/// Runs one parsed invocation.
pub fn run(cli: Cli, host: &Host) -> Result<()> {
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Tokenize { inputs, output } => {
            let mut seqs: Vec<TokenSeq> = Vec::new();
            for p in &inputs {
                seqs.extend(stages::read_functions(p)?);
            }
            let out = out_file(&cfg, &output, "tokenize", "tokens.jsonl");
            write_token_records(&out, &seqs)?;
            println!("tokenize: {} functions -> {}", seqs.len(), out.display());
        }
        Command::Fuzz { seeds, diversity, max_offset, table, immediates, limit, output } => {
            let mut s = match seeds.or(cfg.fuzz.seeds.clone()) {
                Some(p) => stages::read_seeds(&p)?,
                None => base_gadgets(&host.data)?,
            };
            if let Some(n) = limit.or(cfg.fuzz.limit) {
                s.truncate(n);
            }
            let tables = match table.or(cfg.fuzz.table.clone()) {
                Some(p) => InsertionTables::parse(&read_text(&p)?).map_err(|e| Error::Usage(format!("{}: {e}", p.display())))?,
                None => InsertionTables::builtin(),
            };
            let opts = match immediates.or(cfg.fuzz.immediates.clone()) {
                Some(v) => InsertionOptions { immediates: v },
                None => InsertionOptions::default(),
            };
            let params = MutationParams {
                diversity: diversity.unwrap_or(cfg.fuzz.diversity),
                max_offset: max_offset.or(cfg.fuzz.max_offset),
                rng_seed: cfg.seed,
            };
            let recs = stages::fuzz(&s, &params, &tables, &opts, cfg.jobs)?;
            let out = out_file(&cfg, &output, "fuzz", "records.jsonl");
            write_jsonl(&out, &recs)?;
            write_json(&out.with_file_name("params.json"), &params)?;
            println!("fuzz: {} seeds -> {} candidates -> {}", s.len(), recs.len(), out.display());
        }
        Command::Verify { records, mode, harness, timeout, trials, cpu, output } => {
            let v = &mut cfg.verify;
            if let Some(m) = mode {
                v.mode = m.into();
            }
            v.harness = harness.or(v.harness.take());
            v.timeout_s = timeout.unwrap_or(v.timeout_s);
            v.trials = trials.unwrap_or(v.trials);
            v.cpu = cpu.or(v.cpu);
            let vc = VerifyConfig {
                timeout_s: v.timeout_s,
                cpu_isolation: v.cpu,
                oracle_mode: v.mode,
                trials: v.trials,
                ..VerifyConfig::default()
            };
            let recs: Vec<GadgetRecord> = read_jsonl(&records)?;
            let mut m = stages::verify(recs, &vc, v.harness.as_deref(), &host.arch, cfg.jobs)?;
            let params = records.with_file_name("params.json");
            if params.exists() {
                m.provenance.params = read_json(&params).ok();
            }
            let dir = out_dir(&cfg, &output, "verify");
            emit_manifest(&dir, &m)?;
            write_jsonl(&dir.join("verified.jsonl"), &stages::verified(&m))?;
            println!(
                "verify: {} records, {} verified, {} rejected -> {}",
                m.counts.total,
                m.counts.verified,
                m.counts.rejected,
                dir.display()
            );
        }
        Command::GanPretrain { corpus, steps, output } => {
            if let Some(s) = steps {
                cfg.gan.pretrain_steps = s;
            }
            let c = stages::read_functions(&corpus)?;
            let (bundle, losses) = stages::gan_pretrain(&c, &cfg.gan, cfg.seed)?;
            let dir = out_dir(&cfg, &output, Stage::GanPretrain.name());
            write_bytes(&dir.join("gan.fspc"), &bundle.to_bytes(losses.len() as u64))?;
            emit_curves(&dir, "loss", "generator pre-training", &[("nll", &losses)])?;
            println!("gan-pretrain: {} steps, final loss {:.4} -> {}", losses.len(), losses.last().copied().unwrap_or(f64::NAN), dir.display());
        }
        Command::GanAdv { checkpoint, corpus, steps, output } => {
            let mut bundle = load_gan(&checkpoint)?;
            let c = stages::read_functions(&corpus)?;
            let l = stages::gan_adversarial(&mut bundle, &c, steps.unwrap_or(cfg.gan.adversarial_steps), cfg.seed)?;
            let dir = out_dir(&cfg, &output, Stage::GanAdv.name());
            write_bytes(&dir.join("gan.fspc"), &bundle.to_bytes(l.len() as u64))?;
            let g: Vec<f64> = l.iter().map(|x| x.g_loss).collect();
            let d: Vec<f64> = l.iter().map(|x| x.d_loss).collect();
            let cl: Vec<f64> = l.iter().map(|x| x.c_loss).collect();
            let r: Vec<f64> = l.iter().map(|x| x.mean_reward).collect();
            emit_curves(&dir, "loss", "adversarial training", &[("generator", &g), ("discriminator", &d), ("critic", &cl), ("reward", &r)])?;
            println!("gan-adv: {} rounds -> {}", l.len(), dir.display());
        }
        Command::GanGenerate { checkpoint, corpus, count, temperature, output } => {
            let bundle = load_gan(&checkpoint)?;
            let c = stages::read_functions(&corpus)?;
            let recs = stages::gan_generate(
                &bundle,
                &c,
                count.unwrap_or(cfg.gan.generate),
                temperature.unwrap_or(cfg.gan.temperature),
                cfg.seed,
            )?;
            let out = out_file(&cfg, &output, Stage::GanGenerate.name(), "records.jsonl");
            write_jsonl(&out, &recs)?;
            println!("gan-generate: {} candidates -> {}", recs.len(), out.display());
        }
        Command::BertPretrain { corpus, steps, output } => {
            if let Some(s) = steps {
                cfg.bert.pretrain_steps = s;
            }
            let mut c = Vec::new();
            for p in &corpus {
                c.extend(stages::read_functions(p)?);
            }
            let (det, losses) = stages::bert_pretrain(&c, &cfg.bert, cfg.seed)?;
            let dir = out_dir(&cfg, &output, Stage::BertPretrain.name());
            write_bytes(&dir.join("bert.fspc"), &det.to_bytes(losses.len() as u64))?;
            let mlm: Vec<f64> = losses.iter().map(|l| l.mlm).collect();
            let nsp: Vec<f64> = losses.iter().map(|l| l.nsp).collect();
            emit_curves(&dir, "loss", "transformer pre-training", &[("mlm", &mlm), ("nsp", &nsp)])?;
            println!("bert-pretrain: {} steps, vocabulary {} -> {}", losses.len(), det.vocab.len(), dir.display());
        }
        Command::BertFinetune { gadgets, benign, checkpoint, epochs, output } => {
            if let Some(e) = epochs {
                cfg.bert.finetune_epochs = e;
            }
            let g = stages::read_functions(&gadgets)?;
            let b = match benign {
                Some(p) => stages::read_functions(&p)?,
                None => benign_functions(&host.data)?,
            };
            let split = stages::balanced_split(&g, &b, cfg.bert.train_per_class, cfg.bert.test_per_class, cfg.seed)?;
            let mut det = match checkpoint {
                Some(p) => load_detector(&p)?,
                None => {
                    let corpus: Vec<TokenSeq> = split.train.iter().map(|(s, _)| s.clone()).collect();
                    stages::new_detector(&corpus, &cfg.bert, cfg.seed)?
                }
            };
            let losses = stages::bert_finetune(&mut det, &split.train, &cfg.bert, cfg.seed)?;
            let dir = out_dir(&cfg, &output, Stage::BertFinetune.name());
            write_bytes(&dir.join("detector.fspc"), &det.to_bytes(losses.len() as u64))?;
            emit_curves(&dir, "loss", "fine-tuning", &[("loss", &losses)])?;
            let test = if split.test.is_empty() { &split.train } else { &split.test };
            let m = stages::holdout_metrics(&det, test, cfg.scan.threshold)?;
            write_json(&dir.join("metrics.json"), &m)?;
            write_bytes(&dir.join("roc.svg"), roc_svg(&m.roc, m.auc).as_bytes())?;
            println!(
                "bert-finetune: {} train, {} held out, accuracy {:.3}, auc {} -> {}",
                split.train.len(),
                test.len(),
                m.accuracy,
                m.auc.map_or("n/a".into(), |a| format!("{a:.3}")),
                dir.display()
            );
        }
        Command::Scan { input, checkpoint, window, stride, threshold, labels, output } => {
            let s = &mut cfg.scan;
            s.window = window.unwrap_or(s.window);
            s.stride = stride.unwrap_or(s.stride);
            s.threshold = threshold.unwrap_or(s.threshold);
            let det = load_detector(&checkpoint)?;
            let functions = stages::read_functions(&input)?;
            let labels = labels.map(|p| read_text(&p).and_then(|t| stages::parse_labels(&t))).transpose()?;
            let summary = stages::scan(&det, &functions, labels.as_ref(), &cfg.scan, cfg.jobs)?;
            let dir = out_dir(&cfg, &output, Stage::Scan.name());
            emit_scan(&dir, &summary)?;
            let flagged = summary.functions.iter().filter(|f| f.report.flagged).count();
            println!("scan: {} functions, {} flagged -> {}", summary.functions.len(), flagged, dir.display());
        }
        Command::Eval { scan, labels, threshold, output } => {
            let mut summary: ScanSummary = read_json(&scan)?;
            if let Some(t) = threshold {
                summary.threshold = t;
                for f in &mut summary.functions {
                    f.report.threshold = t;
                    f.report.flagged = f.report.score >= t;
                }
            }
            let labels = stages::parse_labels(&read_text(&labels)?)?;
            stages::evaluate_summary(&mut summary, &labels)?;
            let dir = out_dir(&cfg, &output, Stage::Eval.name());
            emit_scan(&dir, &summary)?;
            let m = summary.metrics.as_ref().unwrap();
            println!(
                "eval: precision {:.3} recall {:.3} f1 {:.3} auc {} -> {}",
                m.precision,
                m.recall,
                m.f1,
                m.auc.map_or("n/a".into(), |a| format!("{a:.3}")),
                dir.display()
            );
        }
        Command::Diversity { base, fuzz, gan, n, output } => {
            let b = match base.or(cfg.fuzz.seeds.clone()) {
                Some(p) => stages::read_seeds(&p)?,
                None => base_gadgets(&host.data)?,
            };
            let read = |p: Option<PathBuf>| p.map(|p| stages::read_functions(&p)).transpose().map(Option::unwrap_or_default);
            let stats = stages::diversity(&b, &read(fuzz)?, &read(gan)?, &n.unwrap_or(cfg.diversity.n.clone()))?;
            let dir = out_dir(&cfg, &output, Stage::Diversity.name());
            emit_diversity(&dir, &stats)?;
            for d in &stats {
                println!("diversity n={}: base {} fuzzing {} gan {} total {}", d.n, d.base, d.fuzzing, d.gan, d.total);
            }
        }
        Command::Pipeline { stages } => {
            if let Some(s) = stages {
                cfg.stages = s;
            }
            for (stage, outcome) in Pipeline::new(&cfg, host).run()? {
                let word = match outcome {
                    Outcome::Ran => "done",
                    Outcome::Skipped => "up to date",
                };
                println!("{}: {word}", stage.name());
            }
        }
    }
    Ok(())
}
