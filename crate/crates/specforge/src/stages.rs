//! Stage implementations shared by the subcommands and the pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use specforge_core::bert::{confidences, fit_classifier, pretrain_corpus, LabeledSeq, MlmPolicy, PretrainLoss, TransformerConfig};
use specforge_core::dataset::{DatasetManifest, Provenance};
use specforge_core::fuzz::{mutate_function, GadgetRecord, InsertionOptions, InsertionTables, MutationParams, Status};
use specforge_core::gan::{self, make_mask, AdvLosses, GanOptimizers, MaskPhase, RewardSource, Sampling};
use specforge_core::lexer::disasm::{objdump_functions, split_functions};
use specforge_core::lexer::{normalize, simplify_labels, tokenize_seq, NormalizationConfig, OovPolicy};
use specforge_core::metrics::{evaluate, Metrics};
use specforge_core::ngram::{ngram_diversity, DiversityStat};
use specforge_core::nn::Optimizer;
use specforge_core::verify::{verify_candidate, OracleMode, VerifyConfig};
use specforge_core::{seeded_rng, TokenSeq, Vocabulary};

use crate::config::{BertSection, GanSection, ScanSection};
use crate::corpus::{asm_files, read_text};
use crate::error::{Error, Result};
use crate::io::{read_jsonl, read_token_records};
use crate::models::{vocab_for, Detector, GanBundle};
use crate::report::{FunctionScan, ScanSummary};
use crate::toolchain::{compiler_program, Toolchain};

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn is_objdump(path: &Path, text: &str) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("objdump" | "dump" | "dis"))
        || text.contains("Disassembly of section")
}

/// Functions of one assembly or disassembly file. Disassembled functions
/// keep their symbol name as id; `.s` functions are `<file>/<function>`.
pub fn file_functions(path: &Path) -> Result<Vec<TokenSeq>> {
    let text = read_text(path)?;
    if is_objdump(path, &text) {
        return Ok(objdump_functions(&text).into_iter().map(|f| tokenize_seq(&f.name, &f.text)).collect());
    }
    let file = stem(path);
    Ok(split_functions(&file, &text)
        .into_iter()
        .map(|f| tokenize_seq(&format!("{file}/{}", f.name), &f.text))
        .collect())
}

/// Functions from a directory of `.s` files, a single assembly or
/// disassembly file, or a JSONL file of gadget or token records.
pub fn read_functions(path: &Path) -> Result<Vec<TokenSeq>> {
    if path.is_dir() {
        let mut out = Vec::new();
        for f in asm_files(path)? {
            out.extend(file_functions(&f)?);
        }
        return Ok(out);
    }
    if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
        return match read_jsonl::<GadgetRecord>(path) {
            Ok(recs) => Ok(recs.into_iter().map(|r| TokenSeq::new(r.id, r.tokens.tokens)).collect()),
            Err(_) => read_token_records(path),
        };
    }
    file_functions(path)
}

/// Fuzzing seeds from `path`: the `victim_function` of each `.s` file when
/// it has one (id = file stem), otherwise every function. Local labels are
/// renamed. JSONL inputs are taken as they are.
pub fn read_seeds(path: &Path) -> Result<Vec<TokenSeq>> {
    if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
        return read_functions(path);
    }
    let files = if path.is_dir() { asm_files(path)? } else { vec![path.to_path_buf()] };
    let mut out = Vec::new();
    for f in files {
        let text = read_text(&f)?;
        let id = stem(&f);
        let funcs = split_functions(&id, &text);
        let chosen: Vec<(String, &str)> = match funcs.iter().find(|x| x.name == "victim_function") {
            Some(v) => vec![(id.clone(), v.text.as_str())],
            None if funcs.len() == 1 => vec![(id.clone(), funcs[0].text.as_str())],
            None => funcs.iter().map(|x| (format!("{id}/{}", x.name), x.text.as_str())).collect(),
        };
        for (sid, body) in chosen {
            let mut seq = simplify_labels(&tokenize_seq(&sid, body)).seq;
            seq.source_id = sid;
            out.push(seq);
        }
    }
    Ok(out)
}

/// Every mutant of every seed, in seed order.
pub fn fuzz(
    seeds: &[TokenSeq],
    params: &MutationParams,
    tables: &InsertionTables,
    opts: &InsertionOptions,
    jobs: usize,
) -> Result<Vec<GadgetRecord>> {
    let per_seed: Vec<Result<Vec<GadgetRecord>>> = pool(jobs)?.install(|| {
        seeds
            .par_iter()
            .map(|s| {
                mutate_function(s, params, tables, opts.clone())
                    .map(|m| m.collect())
                    .map_err(|e| Error::Data(format!("{}: {e}", s.source_id)))
            })
            .collect()
    });
    let mut out = Vec::new();
    for r in per_seed {
        out.extend(r?);
    }
    Ok(out)
}

/// First line of `<program> --version`.
pub fn tool_version(program: &str) -> Option<String> {
    let out = std::process::Command::new(program).arg("--version").output().ok()?;
    String::from_utf8_lossy(&out.stdout).lines().next().map(str::to_string)
}

/// Verifies `records` on `jobs` workers, each with its own scratch
/// directory. Hardware mode on an unsuitable host fails before any record
/// is touched.
pub fn verify(
    mut records: Vec<GadgetRecord>,
    cfg: &VerifyConfig,
    harness: Option<&Path>,
    arch: &str,
    jobs: usize,
) -> Result<DatasetManifest> {
    cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let make = || Toolchain::with_arch(harness.map(Path::to_path_buf), arch).map_err(|e| Error::Data(format!("scratch directory: {e}")));
    if cfg.oracle_mode == OracleMode::Hardware {
        make()?.hardware_ready().map_err(|e| Error::HostUnsupported(e.to_string()))?;
    }
    let jobs = jobs.max(1);
    let chunk = records.len().div_ceil(jobs).max(1);
    let commands: Vec<Result<BTreeMap<String, Vec<String>>>> = pool(jobs)?.install(|| {
        records
            .par_chunks_mut(chunk)
            .map(|part| {
                let mut tc = make()?;
                for r in part.iter_mut() {
                    verify_candidate(&mut tc, r, cfg);
                }
                Ok(std::mem::take(&mut tc.commands))
            })
            .collect()
    });
    let mut all = BTreeMap::new();
    for c in commands {
        all.extend(c?);
    }
    let mut compilers: BTreeSet<&str> = records.iter().filter_map(|r| r.lineage).map(|l| compiler_program(l.compiler)).collect();
    if records.iter().any(|r| r.lineage.is_none()) {
        compilers.insert(compiler_program(cfg.compiler));
    }
    let mut seeds: Vec<String> = records.iter().map(|r| r.tokens.source_id.clone()).collect();
    seeds.dedup();
    let provenance = Provenance {
        seeds,
        params: None,
        tool_versions: compilers.into_iter().filter_map(tool_version).collect(),
        verify: Some(cfg.clone()),
        commands: all,
    };
    Ok(DatasetManifest::from_records(records, provenance))
}

pub fn verified(m: &DatasetManifest) -> Vec<GadgetRecord> {
    m.records.iter().filter(|r| r.status == Status::Verified).cloned().collect()
}

pub fn record_seqs(records: &[GadgetRecord]) -> Vec<TokenSeq> {
    records.iter().map(|r| TokenSeq::new(r.id.clone(), r.tokens.tokens.clone())).collect()
}

fn gan_err(e: gan::GanError) -> Error {
    Error::Data(format!("gan: {e}"))
}

/// Fresh generator stack trained by maximum likelihood on `corpus`.
pub fn gan_pretrain(corpus: &[TokenSeq], sec: &GanSection, seed: u64) -> Result<(GanBundle, Vec<f64>)> {
    let mut rng = seeded_rng(seed);
    let mut bundle = GanBundle::for_corpus(corpus, sec.gan_config(), &mut rng)?;
    let ids: Vec<Vec<usize>> = corpus.iter().map(|s| bundle.encode(s)).collect();
    let mut opt = Optimizer::adam(sec.lr_g);
    let losses = gan::pretrain(&mut bundle.gan, &mut opt, &ids, sec.pretrain_steps, &mut rng).map_err(gan_err)?;
    Ok((bundle, losses))
}

/// Adversarial rounds with discriminator rewards.
pub fn gan_adversarial(bundle: &mut GanBundle, corpus: &[TokenSeq], steps: usize, seed: u64) -> Result<Vec<AdvLosses>> {
    let mut rng = seeded_rng(seed);
    let ids: Vec<Vec<usize>> = corpus.iter().map(|s| bundle.encode(s)).collect();
    let mut opts = GanOptimizers::adam(&bundle.gan.config);
    gan::adversarial(&mut bundle.gan, &mut opts, &ids, steps, &RewardSource::Discriminator, Sampling::default(), &mut rng)
        .map_err(gan_err)
}

/// `count` candidates, each a seed with one contiguous block regenerated.
/// Seeds are used round robin; ids are `<seed>/gan<i>`.
pub fn gan_generate(bundle: &GanBundle, seeds: &[TokenSeq], count: usize, temperature: f64, seed: u64) -> Result<Vec<GadgetRecord>> {
    let usable: Vec<&TokenSeq> = seeds.iter().filter(|s| s.len() >= 2).collect();
    if usable.is_empty() && count > 0 {
        return Err(Error::Data("no seed with at least two tokens".into()));
    }
    if !(temperature > 0.0) {
        return Err(Error::Usage(format!("temperature must be positive, got {temperature}")));
    }
    let mut rng = seeded_rng(seed);
    let cfg = &bundle.gan.config;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let base = usable[i % usable.len()];
        let mut ids = bundle.encode(base);
        ids.truncate(cfg.max_len);
        let mask = make_mask(ids.len(), cfg.mask_rate, MaskPhase::AdversarialBlock, &mut rng).map_err(|e| Error::Data(e.to_string()))?;
        let gen = bundle.gan.generate_emittable(&ids, &mask, Sampling::Temperature(temperature), &mut rng);
        let mut rec = GadgetRecord::seed(bundle.decode(&base.source_id, &gen));
        rec.id = format!("{}/gan{i}", base.source_id);
        out.push(rec);
    }
    Ok(out)
}

pub fn transformer_config(sec: &BertSection, vocab_size: usize) -> TransformerConfig {
    TransformerConfig { layers: sec.layers, hidden: sec.hidden, heads: sec.heads, ..TransformerConfig::full(vocab_size) }
}

/// Fresh detector with a vocabulary over `corpus`.
pub fn new_detector(corpus: &[TokenSeq], sec: &BertSection, seed: u64) -> Result<Detector> {
    let vocab = vocab_for(corpus, NormalizationConfig::detector())?;
    let cfg = transformer_config(sec, vocab.len());
    Detector::new(cfg, vocab, &mut seeded_rng(seed))
}

fn bert_err(e: specforge_core::bert::BertError) -> Error {
    Error::Data(format!("transformer: {e}"))
}

/// Masked-token and next-piece pre-training of a fresh detector.
pub fn bert_pretrain(corpus: &[TokenSeq], sec: &BertSection, seed: u64) -> Result<(Detector, Vec<PretrainLoss>)> {
    let mut det = new_detector(corpus, sec, seed)?;
    let mut rng = seeded_rng(seed ^ 1);
    let ids: Vec<Vec<usize>> = corpus.iter().map(|s| det.encode(s)).collect();
    let mut opt = Optimizer::adam(sec.lr);
    let losses = pretrain_corpus(&mut det.model, &mut opt, &ids, sec.pretrain_steps, sec.batch, MlmPolicy::default(), &mut rng)
        .map_err(bert_err)?;
    Ok((det, losses))
}

/// Labeled functions (`true` = gadget).
pub type Labeled = Vec<(TokenSeq, bool)>;

fn labeled_ids(det: &Detector, data: &[(TokenSeq, bool)]) -> Vec<LabeledSeq> {
    data.iter().map(|(s, l)| LabeledSeq { ids: det.encode(s), label: Some(*l as usize) }).collect()
}

/// Fine-tunes the classification head and encoder; returns mean loss per
/// epoch.
pub fn bert_finetune(det: &mut Detector, train: &[(TokenSeq, bool)], sec: &BertSection, seed: u64) -> Result<Vec<f64>> {
    let data = labeled_ids(det, train);
    let mut opt = Optimizer::adam(sec.lr);
    fit_classifier(&mut det.model, &mut opt, &data, sec.finetune_epochs, sec.batch, &mut seeded_rng(seed)).map_err(bert_err)
}

/// Whole-function confidences on `test` scored against its labels.
pub fn holdout_metrics(det: &Detector, test: &[(TokenSeq, bool)], threshold: f64) -> Result<Metrics> {
    let scores = confidences(&det.model, &labeled_ids(det, test));
    let labels: Vec<bool> = test.iter().map(|(_, l)| *l).collect();
    evaluate(&scores, &labels, threshold).map_err(|e| Error::Data(e.to_string()))
}

pub struct Split {
    pub train: Labeled,
    pub test: Labeled,
}

/// Balanced train/test split. With fewer functions than requested both
/// parts shrink in proportion.
pub fn balanced_split(gadgets: &[TokenSeq], benign: &[TokenSeq], train: usize, test: usize, seed: u64) -> Result<Split> {
    let want = train + test;
    let n = want.min(gadgets.len()).min(benign.len());
    let test_n = if want == 0 { 0 } else { (n * test + want / 2) / want };
    let train_n = n - test_n;
    if train_n == 0 {
        return Err(Error::Data(format!("not enough data: {} gadgets, {} benign", gadgets.len(), benign.len())));
    }
    let mut rng = seeded_rng(seed);
    let mut g: Vec<&TokenSeq> = gadgets.iter().collect();
    let mut b: Vec<&TokenSeq> = benign.iter().collect();
    g.shuffle(&mut rng);
    b.shuffle(&mut rng);
    let part = |lo: usize, hi: usize| -> Labeled {
        g[lo..hi].iter().map(|s| ((*s).clone(), true)).chain(b[lo..hi].iter().map(|s| ((*s).clone(), false))).collect()
    };
    Ok(Split { train: part(0, train_n), test: part(train_n, n) })
}

/// `function,label` CSV; labels are `0`/`1`, `true`/`false` or
/// `benign`/`gadget`.
pub fn parse_labels(text: &str) -> Result<BTreeMap<String, bool>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("function")) {
            continue;
        }
        let (f, l) = line.rsplit_once(',').ok_or_else(|| Error::Data(format!("labels line {}: expected function,label", i + 1)))?;
        let l = match l.trim() {
            "1" | "true" | "gadget" => true,
            "0" | "false" | "benign" => false,
            x => return Err(Error::Data(format!("labels line {}: bad label {x:?}", i + 1))),
        };
        out.insert(f.trim().trim_matches('"').to_string(), l);
    }
    Ok(out)
}

/// Label of `function`, matched on the full id or its last path segment.
pub fn label_of(labels: &BTreeMap<String, bool>, function: &str) -> Option<bool> {
    labels
        .get(function)
        .or_else(|| function.rsplit('/').next().and_then(|n| labels.get(n)))
        .copied()
}

/// Window scan of every function; metrics when labels are given.
pub fn scan(det: &Detector, functions: &[TokenSeq], labels: Option<&BTreeMap<String, bool>>, sec: &ScanSection, jobs: usize) -> Result<ScanSummary> {
    if sec.window == 0 || sec.stride == 0 {
        return Err(Error::Usage("window and stride must be positive".into()));
    }
    if sec.window + 1 > det.model.config.max_len {
        return Err(Error::Usage(format!("window {} exceeds the model's length {}", sec.window, det.model.config.max_len - 1)));
    }
    let reports: Vec<_> = pool(jobs)?.install(|| {
        functions.par_iter().map(|f| det.scan(f, sec.window, sec.stride, sec.threshold)).collect()
    });
    let functions = functions
        .iter()
        .zip(reports)
        .map(|(f, report)| FunctionScan {
            function: f.source_id.clone(),
            label: labels.and_then(|l| label_of(l, &f.source_id)),
            report,
        })
        .collect();
    let mut s = ScanSummary { window: sec.window, stride: sec.stride, threshold: sec.threshold, functions, metrics: None };
    if let Some(l) = labels {
        evaluate_summary(&mut s, l)?;
    }
    Ok(s)
}

/// Attaches labels and metrics over the labeled functions of `s`.
pub fn evaluate_summary(s: &mut ScanSummary, labels: &BTreeMap<String, bool>) -> Result<()> {
    for f in &mut s.functions {
        f.label = label_of(labels, &f.function);
    }
    let (scores, truth): (Vec<f64>, Vec<bool>) =
        s.functions.iter().filter_map(|f| f.label.map(|l| (f.report.score, l))).unzip();
    if scores.is_empty() {
        return Err(Error::Data("no scanned function has a label".into()));
    }
    s.metrics = Some(evaluate(&scores, &truth, s.threshold).map_err(|e| Error::Data(e.to_string()))?);
    Ok(())
}

/// Token texts with labels and immediates collapsed.
pub fn diversity_texts(seqs: &[TokenSeq]) -> Vec<Vec<String>> {
    let cfg = NormalizationConfig { oov_policy: OovPolicy::Keep, ..NormalizationConfig::detector() };
    let empty = Vocabulary::specials_only();
    seqs.iter().map(|s| normalize(s, &cfg, &empty).tokens.into_iter().map(|t| t.text).collect()).collect()
}

pub fn diversity(base: &[TokenSeq], fuzz: &[TokenSeq], gan: &[TokenSeq], orders: &[usize]) -> Result<Vec<DiversityStat>> {
    let (b, f, g) = (diversity_texts(base), diversity_texts(fuzz), diversity_texts(gan));
    orders
        .iter()
        .map(|&n| ngram_diversity(&b, &f, &g, n).map_err(|e| Error::Usage(e.to_string())))
        .collect()
}
