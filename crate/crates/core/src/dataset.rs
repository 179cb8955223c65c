//! Dataset manifests: verified/rejected tallies and a content hash.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fuzz::{mutate_function, GadgetRecord, InsertionOptions, InsertionTables, MutationError, MutationParams, Status};
use crate::verify::{verify_candidate, Outcome, VerifyBackend, VerifyConfig};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub total: usize,
    pub candidate: usize,
    pub compiled: usize,
    pub verified: usize,
    pub rejected: usize,
    /// Records that assembled successfully, whatever their final state.
    pub compiled_ok: usize,
}

impl StatusCounts {
    pub fn tally(records: &[GadgetRecord]) -> Self {
        let mut c = StatusCounts { total: records.len(), ..Default::default() };
        for r in records {
            match r.status {
                Status::Candidate => c.candidate += 1,
                Status::Compiled => c.compiled += 1,
                Status::Verified => c.verified += 1,
                Status::Rejected { .. } => c.rejected += 1,
            }
            if was_compiled(r) {
                c.compiled_ok += 1;
            }
        }
        c
    }

    /// Verified over successfully compiled; `None` if nothing compiled.
    pub fn success_rate(&self) -> Option<f64> {
        (self.compiled_ok > 0).then(|| self.verified as f64 / self.compiled_ok as f64)
    }
}

fn was_compiled(r: &GadgetRecord) -> bool {
    match (&r.status, &r.verdict) {
        (Status::Compiled | Status::Verified, _) => true,
        (Status::Rejected { .. }, Some(v)) => v.outcome != Outcome::CompileFail,
        _ => false,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seeds: Vec<String>,
    pub params: Option<MutationParams>,
    pub tool_versions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    /// Compiler command line per record id, with paths relative to the
    /// build directory.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub commands: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<GadgetRecord>,
    pub counts: StatusCounts,
    pub success_rate: Option<f64>,
    pub provenance: Provenance,
    /// Hex SHA-256 over the JSON lines of all records.
    pub content_hash: String,
}

impl DatasetManifest {
    pub fn from_records(records: Vec<GadgetRecord>, provenance: Provenance) -> Self {
        let counts = StatusCounts::tally(&records);
        let content_hash = content_hash(&records);
        DatasetManifest { success_rate: counts.success_rate(), records, counts, provenance, content_hash }
    }

    /// Recomputes tallies and hash and compares with the stored ones.
    pub fn is_consistent(&self) -> bool {
        self.counts == StatusCounts::tally(&self.records) && self.content_hash == content_hash(&self.records)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    const DIGITS: &[u8; 16] = b"0123456789abcdef";
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push(DIGITS[(b >> 4) as usize] as char);
        s.push(DIGITS[(b & 15) as usize] as char);
    }
    s
}

/// Hex SHA-256 of the records serialized one JSON object per line.
pub fn content_hash(records: &[GadgetRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update(serde_json::to_vec(r).expect("records serialize"));
        h.update(b"\n");
    }
    hex(&h.finalize())
}

/// Mutates every seed and verifies each mutant with `backend`. Backend
/// failures are recorded per record and never abort the batch.
pub fn generate_dataset(
    seeds: &[GadgetRecord],
    params: &MutationParams,
    tables: &InsertionTables,
    opts: &InsertionOptions,
    backend: &mut dyn VerifyBackend,
    cfg: &VerifyConfig,
) -> Result<DatasetManifest, MutationError> {
    let mut records = Vec::new();
    for seed in seeds {
        for mut rec in mutate_function(&seed.tokens, params, tables, opts.clone())? {
            if rec.lineage.is_none() {
                rec.lineage = seed.lineage;
            }
            verify_candidate(backend, &mut rec, cfg);
            records.push(rec);
        }
    }
    let provenance = Provenance {
        seeds: seeds.iter().map(|s| s.id.to_string()).collect(),
        params: Some(params.clone()),
        tool_versions: Vec::new(),
        verify: Some(cfg.clone()),
        commands: BTreeMap::new(),
    };
    Ok(DatasetManifest::from_records(records, provenance))
}
