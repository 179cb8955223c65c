//! Instruction and register tables for insertion mutations.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The table shipped with the crate.
pub const DEFAULT_TABLE: &str = include_str!("../../data/insertion_table.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Width {
    B8,
    B16,
    B32,
    B64,
    B128,
    B256,
}

impl Width {
    pub const ALL: [Width; 6] = [Width::B8, Width::B16, Width::B32, Width::B64, Width::B128, Width::B256];

    pub fn bits(self) -> u32 {
        match self {
            Width::B8 => 8,
            Width::B16 => 16,
            Width::B32 => 32,
            Width::B64 => 64,
            Width::B128 => 128,
            Width::B256 => 256,
        }
    }

    pub fn from_bits(bits: u32) -> Option<Width> {
        Width::ALL.into_iter().find(|w| w.bits() == bits)
    }
}

impl fmt::Display for Width {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

/// One operand slot of an instruction signature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    Reg(Width),
    Imm,
    Mem,
    Target,
}

impl FromStr for Slot {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "i" => Slot::Imm,
            "m" => Slot::Mem,
            "t" => Slot::Target,
            "r8" => Slot::Reg(Width::B8),
            "r16" => Slot::Reg(Width::B16),
            "r32" => Slot::Reg(Width::B32),
            "r64" => Slot::Reg(Width::B64),
            "x128" => Slot::Reg(Width::B128),
            "y256" => Slot::Reg(Width::B256),
            other => return Err(alloc::format!("unknown operand slot {other:?}")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub slots: Vec<Slot>,
}

impl Signature {
    /// Register widths used by this signature.
    pub fn widths(&self) -> impl Iterator<Item = Width> + '_ {
        self.slots.iter().filter_map(|s| match s {
            Slot::Reg(w) => Some(*w),
            _ => None,
        })
    }

    /// A signature with no register slot fits every width class.
    pub fn accepts_width(&self, width: Width) -> bool {
        let mut widths = self.widths().peekable();
        widths.peek().is_none() || self.widths().any(|w| w == width)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionEntry {
    pub mnemonic: String,
    /// Empty for zero-operand mnemonics.
    pub signatures: Vec<Signature>,
}

impl InstructionEntry {
    pub fn takes_operands(&self) -> bool {
        !self.signatures.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTable {
    pub entries: Vec<InstructionEntry>,
}

impl InstructionTable {
    pub fn get(&self, mnemonic: &str) -> Option<&InstructionEntry> {
        self.entries.iter().find(|e| e.mnemonic == mnemonic)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterTable {
    pub groups: BTreeMap<Width, Vec<String>>,
}

impl RegisterTable {
    pub fn group(&self, width: Width) -> &[String] {
        self.groups.get(&width).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Width of a register name, with or without the leading `%`.
    pub fn width_of(&self, name: &str) -> Option<Width> {
        let name = name.strip_prefix('%').unwrap_or(name);
        self.groups
            .iter()
            .find(|(_, regs)| regs.iter().any(|r| r == name))
            .map(|(w, _)| *w)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionTables {
    pub instructions: InstructionTable,
    pub registers: RegisterTable,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("register {0:?} appears in more than one width group")]
    DuplicateRegister(String),
    #[error("mnemonic {0:?} listed twice")]
    DuplicateMnemonic(String),
    #[error("signature of {mnemonic:?} needs {width}-bit registers but that group is empty")]
    EmptyGroup { mnemonic: String, width: Width },
    #[error("table has no instructions")]
    Empty,
}

impl InsertionTables {
    /// The built-in table.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_TABLE).expect("built-in insertion table parses")
    }

    /// Parses the plain-text table format (see `data/insertion_table.txt`).
    pub fn parse(text: &str) -> Result<Self, TableError> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Registers,
            Instructions,
        }
        let mut section = Section::None;
        let mut groups: BTreeMap<Width, Vec<String>> = BTreeMap::new();
        let mut entries: Vec<InstructionEntry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |msg: String| TableError::Syntax { line: line_no, msg };
            match line {
                "[registers]" => {
                    section = Section::Registers;
                    continue;
                }
                "[instructions]" => {
                    section = Section::Instructions;
                    continue;
                }
                _ => {}
            }
            let (head, rest) = line
                .split_once(':')
                .ok_or_else(|| syntax("expected `name: ...`".to_string()))?;
            let head = head.trim();
            match section {
                Section::None => return Err(syntax("entry outside a section".to_string())),
                Section::Registers => {
                    let bits: u32 = head
                        .parse()
                        .map_err(|_| syntax(alloc::format!("bad width {head:?}")))?;
                    let width = Width::from_bits(bits)
                        .ok_or_else(|| syntax(alloc::format!("unsupported width {bits}")))?;
                    let regs = groups.entry(width).or_default();
                    regs.extend(rest.split_whitespace().map(|r| r.trim_start_matches('%').to_string()));
                }
                Section::Instructions => {
                    if entries.iter().any(|e| e.mnemonic == head) {
                        return Err(TableError::DuplicateMnemonic(head.to_string()));
                    }
                    let mut signatures = Vec::new();
                    if !rest.trim().is_empty() {
                        for sig in rest.split('|') {
                            let slots = sig
                                .split_whitespace()
                                .map(str::parse)
                                .collect::<Result<Vec<Slot>, _>>()
                                .map_err(syntax)?;
                            if slots.is_empty() {
                                return Err(syntax("empty signature".to_string()));
                            }
                            signatures.push(Signature { slots });
                        }
                    }
                    entries.push(InstructionEntry { mnemonic: head.to_string(), signatures });
                }
            }
        }
        if entries.is_empty() {
            return Err(TableError::Empty);
        }
        let mut seen: Vec<&str> = Vec::new();
        for regs in groups.values() {
            for r in regs {
                if seen.contains(&r.as_str()) {
                    return Err(TableError::DuplicateRegister(r.clone()));
                }
                seen.push(r);
            }
        }
        for e in &entries {
            for s in &e.signatures {
                for w in s.widths() {
                    if groups.get(&w).is_none_or(|g| g.is_empty()) {
                        return Err(TableError::EmptyGroup { mnemonic: e.mnemonic.clone(), width: w });
                    }
                }
            }
        }
        Ok(InsertionTables {
            instructions: InstructionTable { entries },
            registers: RegisterTable { groups },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_parses() {
        let t = InsertionTables::builtin();
        assert_eq!(t.instructions.len(), 95);
        for w in Width::ALL {
            assert_eq!(t.registers.group(w).len(), 16, "{w}");
        }
        assert_eq!(t.registers.width_of("%r15b"), Some(Width::B8));
        assert_eq!(t.registers.width_of("ymm3"), Some(Width::B256));
        assert!(!t.instructions.get("lfence").unwrap().takes_operands());
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(matches!(InsertionTables::parse("[registers]\n64: rax\n32: rax\n[instructions]\nnop:\n"), Err(TableError::DuplicateRegister(_))));
        assert!(matches!(InsertionTables::parse("[instructions]\nnop:\nnop:\n"), Err(TableError::DuplicateMnemonic(_))));
        assert!(matches!(InsertionTables::parse("[instructions]\naddq: r64 r64\n"), Err(TableError::EmptyGroup { .. })));
        assert!(matches!(InsertionTables::parse("[instructions]\naddq: q9\n"), Err(TableError::Syntax { line: 2, .. })));
        assert_eq!(InsertionTables::parse("[registers]\n8: al\n"), Err(TableError::Empty));
    }

    #[test]
    fn width_free_signatures() {
        let sig = Signature { slots: alloc::vec![Slot::Mem] };
        assert!(Width::ALL.iter().all(|&w| sig.accepts_width(w)));
        let sig = Signature { slots: alloc::vec![Slot::Reg(Width::B8), Slot::Reg(Width::B32)] };
        assert!(sig.accepts_width(Width::B8) && sig.accepts_width(Width::B32) && !sig.accepts_width(Width::B64));
    }
}
