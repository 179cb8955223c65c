use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexer::{Token, TokenSeq};
use crate::verify::Verdict;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compiler {
    Gcc,
    Clang,
    Icc,
}

impl Compiler {
    pub const ALL: [Compiler; 3] = [Compiler::Gcc, Compiler::Clang, Compiler::Icc];

    pub fn as_str(self) -> &'static str {
        match self {
            Compiler::Gcc => "gcc",
            Compiler::Clang => "clang",
            Compiler::Icc => "icc",
        }
    }
}

impl fmt::Display for Compiler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Compiler {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Compiler::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown compiler {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OptLevel {
    O0,
    O2,
}

impl OptLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            OptLevel::O0 => "O0",
            OptLevel::O2 => "O2",
        }
    }

    /// Compiler flag, e.g. `-O2`.
    pub fn flag(self) -> &'static str {
        match self {
            OptLevel::O0 => "-O0",
            OptLevel::O2 => "-O2",
        }
    }
}

impl fmt::Display for OptLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim_start_matches('-').to_ascii_uppercase().as_str() {
            "O0" => Ok(OptLevel::O0),
            "O2" => Ok(OptLevel::O2),
            _ => Err(format!("unknown optimization level {s:?}")),
        }
    }
}

/// Which base example a gadget descends from and how it was compiled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Lineage {
    pub base_example: u8,
    pub compiler: Compiler,
    pub opt: OptLevel,
}

impl Lineage {
    pub const MAX_EXAMPLE: u8 = 17;

    pub fn new(base_example: u8, compiler: Compiler, opt: OptLevel) -> Result<Self, String> {
        if !(1..=Self::MAX_EXAMPLE).contains(&base_example) {
            return Err(format!("base example {base_example} outside 1..={}", Self::MAX_EXAMPLE));
        }
        Ok(Lineage { base_example, compiler, opt })
    }

    /// Parses names of the form `ex01_gcc_O0` (any extension or directory
    /// prefix is ignored).
    pub fn from_source_id(id: &str) -> Option<Lineage> {
        let stem = id.rsplit(['/', '\\']).next()?;
        let stem = stem.split('.').next()?;
        let mut parts = stem.split('_');
        let ex = parts.next()?.strip_prefix("ex")?.parse().ok()?;
        let compiler = parts.next()?.parse().ok()?;
        let opt = parts.next()?.parse().ok()?;
        Lineage::new(ex, compiler, opt).ok()
    }

    pub fn source_id(&self) -> String {
        format!("ex{:02}_{}_{}", self.base_example, self.compiler, self.opt)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Status {
    Candidate,
    Compiled,
    Verified,
    Rejected { reason: String },
}

impl Status {
    fn rank(&self) -> u8 {
        match self {
            Status::Candidate => 0,
            Status::Compiled => 1,
            Status::Verified | Status::Rejected { .. } => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Status::Candidate => "candidate",
            Status::Compiled => "compiled",
            Status::Verified => "verified",
            Status::Rejected { .. } => "rejected",
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.rank() == 2
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("illegal status transition {from} -> {to}")]
pub struct StatusError {
    pub from: &'static str,
    pub to: &'static str,
}

/// One inserted instruction: its first token index in the mutated sequence
/// and the tokens inserted there.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insertion {
    pub position: usize,
    pub tokens: Vec<Token>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GadgetRecord {
    pub id: String,
    pub lineage: Option<Lineage>,
    pub tokens: TokenSeq,
    pub inserted: Vec<Insertion>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

impl GadgetRecord {
    /// A seed record with no insertions.
    pub fn seed(tokens: TokenSeq) -> Self {
        let lineage = Lineage::from_source_id(&tokens.source_id);
        GadgetRecord {
            id: tokens.source_id.clone(),
            lineage,
            tokens,
            inserted: Vec::new(),
            status: Status::Candidate,
            verdict: None,
        }
    }

    /// Moves the status forward. Candidates may be compiled or rejected,
    /// compiled records may be verified or rejected; terminal states stay put.
    pub fn advance(&mut self, to: Status) -> Result<(), StatusError> {
        let ok = match (&self.status, &to) {
            (Status::Candidate, Status::Compiled | Status::Rejected { .. }) => true,
            (Status::Compiled, Status::Verified | Status::Rejected { .. }) => true,
            _ => false,
        };
        if !ok {
            return Err(StatusError { from: self.status.name(), to: to.name() });
        }
        self.status = to;
        Ok(())
    }

    pub fn reject(&mut self, reason: impl ToString) -> Result<(), StatusError> {
        self.advance(Status::Rejected { reason: reason.to_string() })
    }

    /// The sequence with every insertion removed.
    pub fn without_insertions(&self) -> Vec<Token> {
        let mut drop = alloc::vec![false; self.tokens.len()];
        for ins in &self.inserted {
            for d in drop.iter_mut().skip(ins.position).take(ins.tokens.len()) {
                *d = true;
            }
        }
        self.tokens
            .tokens
            .iter()
            .zip(drop)
            .filter(|(_, d)| !d)
            .map(|(t, _)| t.clone())
            .collect()
    }
}
