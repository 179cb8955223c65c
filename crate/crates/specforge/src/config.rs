//! Pipeline configuration (TOML: top-level keys plus one table per stage).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use specforge_core::fuzz::DEFAULT_DIVERSITY;
use specforge_core::verify::{OracleMode, DEFAULT_TRIALS};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Fuzz,
    Verify,
    GanPretrain,
    GanAdv,
    GanGenerate,
    BertPretrain,
    BertFinetune,
    Scan,
    Eval,
    Diversity,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Fuzz,
        Stage::Verify,
        Stage::GanPretrain,
        Stage::GanAdv,
        Stage::GanGenerate,
        Stage::BertPretrain,
        Stage::BertFinetune,
        Stage::Scan,
        Stage::Eval,
        Stage::Diversity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Fuzz => "fuzz",
            Stage::Verify => "verify",
            Stage::GanPretrain => "gan-pretrain",
            Stage::GanAdv => "gan-adv",
            Stage::GanGenerate => "gan-generate",
            Stage::BertPretrain => "bert-pretrain",
            Stage::BertFinetune => "bert-finetune",
            Stage::Scan => "scan",
            Stage::Eval => "eval",
            Stage::Diversity => "diversity",
        }
    }

    pub fn index(self) -> u64 {
        Stage::ALL.iter().position(|&s| s == self).unwrap() as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuzzSection {
    /// Directory of `.s` files or a JSONL file of token records; the bundled
    /// base gadgets when unset.
    pub seeds: Option<PathBuf>,
    pub diversity: u32,
    pub max_offset: Option<usize>,
    /// Custom insertion table.
    pub table: Option<PathBuf>,
    pub immediates: Option<Vec<u32>>,
    /// Use only the first `n` seeds.
    pub limit: Option<usize>,
}

impl Default for FuzzSection {
    fn default() -> Self {
        FuzzSection { seeds: None, diversity: DEFAULT_DIVERSITY, max_offset: None, table: None, immediates: None, limit: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub mode: OracleMode,
    pub harness: Option<PathBuf>,
    pub timeout_s: f64,
    pub trials: u32,
    pub cpu: Option<u32>,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection { mode: OracleMode::Mock, harness: None, timeout_s: 30.0, trials: DEFAULT_TRIALS, cpu: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanSection {
    pub hidden: usize,
    pub layers: usize,
    pub mask_rate: f64,
    pub gamma: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub lr_c: f64,
    pub batch: usize,
    pub max_len: usize,
    pub pretrain_steps: usize,
    pub adversarial_steps: usize,
    /// Candidates produced by `gan-generate`.
    pub generate: usize,
    pub temperature: f64,
}

impl Default for GanSection {
    fn default() -> Self {
        let d = specforge_core::gan::GanConfig::desk(0);
        GanSection {
            hidden: d.hidden,
            layers: d.layers,
            mask_rate: d.mask_rate,
            gamma: d.gamma,
            lr_g: d.lr_g,
            lr_d: d.lr_d,
            lr_c: d.lr_c,
            batch: d.batch,
            max_len: d.max_len,
            pretrain_steps: 200,
            adversarial_steps: 50,
            generate: 100,
            temperature: 1.0,
        }
    }
}

impl GanSection {
    pub fn gan_config(&self) -> specforge_core::gan::GanConfig {
        specforge_core::gan::GanConfig {
            vocab_size: 0,
            hidden: self.hidden,
            layers: self.layers,
            mask_rate: self.mask_rate,
            gamma: self.gamma,
            lr_g: self.lr_g,
            lr_d: self.lr_d,
            lr_c: self.lr_c,
            batch: self.batch,
            max_len: self.max_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BertSection {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub pretrain_steps: usize,
    pub finetune_epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Gadgets and benign functions per class used for fine-tuning; the
    /// next `test_per_class` of each class are held out.
    pub train_per_class: usize,
    pub test_per_class: usize,
}

impl Default for BertSection {
    fn default() -> Self {
        BertSection {
            layers: 3,
            hidden: 64,
            heads: 2,
            pretrain_steps: 50,
            finetune_epochs: 10,
            batch: 10,
            lr: 1e-3,
            train_per_class: 50,
            test_per_class: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    /// Disassembly (`objdump -d`) or `.s` file; the bundled sample when unset.
    pub input: Option<PathBuf>,
    /// `function,label` CSV for evaluation.
    pub labels: Option<PathBuf>,
    /// Detector checkpoint; the `bert-finetune` output when unset.
    pub checkpoint: Option<PathBuf>,
    pub window: usize,
    pub stride: usize,
    pub threshold: f64,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection { input: None, labels: None, checkpoint: None, window: 80, stride: 16, threshold: 0.48 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiversitySection {
    pub n: Vec<usize>,
}

impl Default for DiversitySection {
    fn default() -> Self {
        DiversitySection { n: vec![2, 3, 4, 5] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    pub stages: Vec<Stage>,
    pub fuzz: FuzzSection,
    pub verify: VerifySection,
    pub gan: GanSection,
    pub bert: BertSection,
    pub scan: ScanSection,
    pub diversity: DiversitySection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            out: PathBuf::from("specforge-out"),
            jobs: 1,
            stages: Vec::new(),
            fuzz: FuzzSection::default(),
            verify: VerifySection::default(),
            gan: GanSection::default(),
            bert: BertSection::default(),
            scan: ScanSection::default(),
            diversity: DiversitySection::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(x) = p.as_mut() {
        if x.is_relative() {
            *x = base.join(&*x);
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))
    }

    /// Reads a config file; relative paths in it are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&crate::corpus::read_text(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        rebase(base, &mut cfg.fuzz.seeds);
        rebase(base, &mut cfg.fuzz.table);
        rebase(base, &mut cfg.verify.harness);
        rebase(base, &mut cfg.scan.input);
        rebase(base, &mut cfg.scan.labels);
        rebase(base, &mut cfg.scan.checkpoint);
        Ok(cfg)
    }

    /// Serialized form of the settings `stage` depends on.
    pub fn section(&self, stage: Stage) -> String {
        let v = match stage {
            Stage::Fuzz => serde_json::to_value(&self.fuzz),
            Stage::Verify | Stage::GanGenerate => serde_json::to_value((&self.verify, &self.gan)),
            Stage::GanPretrain | Stage::GanAdv => serde_json::to_value(&self.gan),
            Stage::BertPretrain | Stage::BertFinetune => serde_json::to_value(&self.bert),
            Stage::Scan | Stage::Eval => serde_json::to_value(&self.scan),
            Stage::Diversity => serde_json::to_value(&self.diversity),
        };
        format!("{}|{}", self.seed, v.unwrap())
    }
}
