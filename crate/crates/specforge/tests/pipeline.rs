use std::path::Path;

use specforge::config::{PipelineConfig, Stage};
use specforge::io::read_json;
use specforge::pipeline::{Host, Outcome, Pipeline};
use specforge::report::ScanSummary;
use specforge::Error;

const SMALL: &str = r#"
seed = 7
jobs = 2
stages = ["fuzz", "verify", "gan-pretrain", "gan-adv", "gan-generate", "bert-pretrain", "bert-finetune", "scan", "eval", "diversity"]

[fuzz]
diversity = 2
max_offset = 2
limit = 4

[gan]
hidden = 8
layers = 1
pretrain_steps = 3
adversarial_steps = 2
generate = 3
batch = 4

[bert]
layers = 1
hidden = 16
pretrain_steps = 2
finetune_epochs = 1
train_per_class = 4
test_per_class = 2
"#;

fn config(out: &Path, text: &str) -> PipelineConfig {
    PipelineConfig { out: out.to_path_buf(), ..PipelineConfig::parse(text).unwrap() }
}

#[test]
fn empty_stage_list_does_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir.path().join("o"), "");
    assert!(Pipeline::new(&cfg, &Host::current()).run().unwrap().is_empty());
    assert!(!dir.path().join("o").exists());
}

#[test]
fn small_run_then_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let host = Host::current();
    let p = Pipeline::new(&cfg, &host);
    let first = p.run().unwrap();
    assert_eq!(first.len(), 10);
    assert!(first.iter().all(|(_, o)| *o == Outcome::Ran));
    for s in Stage::ALL {
        for f in p.outputs(s) {
            assert!(f.exists(), "{}", f.display());
        }
    }
    let hashes: Vec<String> = Stage::ALL.iter().map(|&s| p.stage_hash(s).unwrap()).collect();
    let second = p.run().unwrap();
    assert!(second.iter().all(|(_, o)| *o == Outcome::Skipped), "{second:?}");
    assert_eq!(hashes, Stage::ALL.iter().map(|&s| p.stage_hash(s).unwrap()).collect::<Vec<_>>());

    let eval: ScanSummary = read_json(&p.dir(Stage::Eval).join("scan.json")).unwrap();
    let m = eval.metrics.unwrap();
    assert_eq!(m.tp + m.fp + m.tn + m.fn_, eval.functions.len());

    // Changing one section reruns that stage and everything reading its outputs.
    let cfg2 = PipelineConfig { diversity: specforge::config::DiversitySection { n: vec![2, 3] }, ..cfg.clone() };
    let third = Pipeline::new(&cfg2, &host).run().unwrap();
    let ran: Vec<Stage> = third.iter().filter(|(_, o)| *o == Outcome::Ran).map(|(s, _)| *s).collect();
    assert_eq!(ran, [Stage::Diversity]);

    // Scan-only run reusing the trained detector.
    let out2 = dir.path().join("scan-only");
    let mut cfg3 = config(&out2, "stages = [\"scan\"]");
    cfg3.scan.checkpoint = Some(p.dir(Stage::BertFinetune).join("detector.fspc"));
    cfg3.scan.input = Some(host.data.join("listings/xorb.s"));
    let r = Pipeline::new(&cfg3, &host).run().unwrap();
    assert_eq!(r, [(Stage::Scan, Outcome::Ran)]);
    let s: ScanSummary = read_json(&out2.join("scan/scan.json")).unwrap();
    assert_eq!(s.functions.len(), 1);
    assert!(s.metrics.is_none());
}

#[test]
fn hardware_on_foreign_host_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), "stages = [\"fuzz\", \"verify\"]\n[fuzz]\ndiversity = 1\nmax_offset = 1\nlimit = 1\n[verify]\nmode = \"hardware\"\n");
    cfg.verify.harness = Some(dir.path().join("harness"));
    std::fs::write(dir.path().join("harness"), "").unwrap();
    let host = Host { arch: "aarch64".into(), ..Host::current() };
    let e = Pipeline::new(&cfg, &host).run().unwrap_err();
    assert!(matches!(e, Error::HostUnsupported(_)), "{e}");
    assert_eq!(e.exit_code(), 3);
    assert!(dir.path().join("fuzz/records.jsonl").exists());
}

#[test]
fn missing_inputs_fail_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "stages = [\"gan-pretrain\"]");
    let e = Pipeline::new(&cfg, &Host::current()).run().unwrap_err();
    assert!(matches!(e, Error::Stage { .. }), "{e}");
    assert_eq!(e.exit_code(), 4);
}
