use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::record::{GadgetRecord, Insertion};
use super::tables::{InsertionTables, InstructionEntry, Signature, Slot, Width};
use crate::lexer::{statement_ranges, tokenize, Token, TokenSeq};
use crate::Rng;

pub const DEFAULT_DIVERSITY: u32 = 10;

/// Immediate values drawn for `i` slots and memory displacements.
pub const DEFAULT_IMMEDIATES: [u32; 10] = [0, 1, 2, 4, 8, 9, 12, 16, 512, 4096];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationParams {
    pub diversity: u32,
    /// `None` means the statement count of the input function.
    pub max_offset: Option<usize>,
    pub rng_seed: u64,
}

impl Default for MutationParams {
    fn default() -> Self {
        MutationParams { diversity: DEFAULT_DIVERSITY, max_offset: None, rng_seed: 0 }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MutationError {
    #[error("max_offset must be at least 1")]
    ZeroMaxOffset,
    #[error("cannot mutate an empty function")]
    EmptyFunction,
    #[error("immediate pool is empty")]
    NoImmediates,
}

/// Operand value pools.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionOptions {
    pub immediates: Vec<u32>,
}

impl Default for InsertionOptions {
    fn default() -> Self {
        InsertionOptions { immediates: DEFAULT_IMMEDIATES.to_vec() }
    }
}

fn render_operand(
    slot: Slot,
    tables: &InsertionTables,
    opts: &InsertionOptions,
    byte_imm: bool,
    targets: &[String],
    rng: &mut Rng,
) -> String {
    match slot {
        Slot::Reg(w) => format!("%{}", tables.registers.group(w).choose(rng).unwrap()),
        Slot::Imm => {
            let pool: Vec<u32> = if byte_imm {
                opts.immediates.iter().copied().filter(|&v| v <= 255).collect()
            } else {
                opts.immediates.clone()
            };
            let v = pool.choose(rng).copied().unwrap_or(0);
            format!("${v}")
        }
        Slot::Mem => {
            let base = tables.registers.group(Width::B64).choose(rng).unwrap();
            if rng.gen_bool(0.5) {
                format!("(%{base})")
            } else {
                format!("{}(%{base})", opts.immediates.choose(rng).unwrap())
            }
        }
        Slot::Target => targets.choose(rng).cloned().unwrap_or_else(|| ".".to_string()),
    }
}

fn render(
    entry: &InstructionEntry,
    sig: Option<&Signature>,
    tables: &InsertionTables,
    opts: &InsertionOptions,
    targets: &[String],
    rng: &mut Rng,
) -> Vec<Token> {
    let mut text = entry.mnemonic.clone();
    if let Some(sig) = sig {
        let byte_imm = sig.widths().any(|w| w == Width::B8);
        for (i, slot) in sig.slots.iter().enumerate() {
            text.push_str(if i == 0 { " " } else { ", " });
            text.push_str(&render_operand(*slot, tables, opts, byte_imm, targets, rng));
        }
    }
    tokenize(&text)
}

/// Draws operands for a given table entry. Register slots use their own
/// width group. `width` restricts the signature choice to ones accepting it.
pub fn sample_for_entry(
    entry: &InstructionEntry,
    width: Option<Width>,
    tables: &InsertionTables,
    opts: &InsertionOptions,
    targets: &[String],
    rng: &mut Rng,
) -> Option<Vec<Token>> {
    if !entry.takes_operands() {
        return Some(tokenize(&entry.mnemonic));
    }
    let sigs: Vec<&Signature> = entry
        .signatures
        .iter()
        .filter(|s| width.is_none_or(|w| s.accepts_width(w)))
        .collect();
    let sig = *sigs.choose(rng)?;
    Some(render(entry, Some(sig), tables, opts, targets, rng))
}

/// Picks a mnemonic compatible with `width` uniformly, then a compatible
/// signature, then operands. Branch targets fall back to `.`.
pub fn sample_insertion(width: Width, tables: &InsertionTables, rng: &mut Rng) -> Vec<Token> {
    let opts = InsertionOptions::default();
    let fits: Vec<&InstructionEntry> = tables
        .instructions
        .entries
        .iter()
        .filter(|e| !e.takes_operands() || e.signatures.iter().any(|s| s.accepts_width(width)))
        .collect();
    let entry = fits.choose(rng).expect("zero-operand entries fit every width");
    sample_for_entry(entry, Some(width), tables, &opts, &[], rng).unwrap()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG for one output record, independent of how work is split across
/// workers.
pub fn record_rng(seed: u64, source_id: &str, offset: usize, repetition: u32) -> Rng {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in source_id.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mixed = splitmix(seed ^ splitmix(h ^ splitmix(((offset as u64) << 32) | repetition as u64)));
    Rng::seed_from_u64(mixed)
}

fn defined_labels(tokens: &[Token]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in tokens {
        if let Some(name) = t.is_label_def().then(|| t.label_name()).flatten() {
            if !out.iter().any(|n| n == name) {
                out.push(name.to_string());
            }
        }
    }
    out
}

/// Lazily produces the mutants of one function, ordered by
/// `(offset, repetition)`.
pub struct Mutator<'t> {
    base: TokenSeq,
    tables: &'t InsertionTables,
    opts: InsertionOptions,
    seed: u64,
    diversity: u32,
    max_offset: usize,
    offset: usize,
    repetition: u32,
}

impl Mutator<'_> {
    pub fn len(&self) -> usize {
        self.max_offset * self.diversity as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds the mutant for one `(offset, repetition)` pair.
    pub fn mutant(&self, offset: usize, repetition: u32) -> GadgetRecord {
        let mut rng = record_rng(self.seed, &self.base.source_id, offset, repetition);
        let targets = defined_labels(&self.base.tokens);
        let mut tokens = self.base.tokens.clone();
        let mut inserted: Vec<Insertion> = Vec::with_capacity(offset);
        let entries = &self.tables.instructions.entries;
        for _ in 0..offset {
            let entry = entries.choose(&mut rng).unwrap();
            let group = sample_for_entry(entry, None, self.tables, &self.opts, &targets, &mut rng).unwrap();
            let stmts = statement_ranges(&tokens);
            let line = rng.gen_range(0..=stmts.len());
            let at = stmts.get(line).map_or(tokens.len(), |r| r.start);
            for ins in &mut inserted {
                if ins.position >= at {
                    ins.position += group.len();
                }
            }
            tokens.splice(at..at, group.iter().cloned());
            inserted.push(Insertion { position: at, tokens: group });
        }
        inserted.sort_by_key(|i| i.position);
        let id = format!("{}/o{offset}/r{repetition}", self.base.source_id);
        let mut rec = GadgetRecord::seed(TokenSeq::new(self.base.source_id.clone(), tokens));
        rec.id = id;
        rec.inserted = inserted;
        rec
    }
}

impl Iterator for Mutator<'_> {
    type Item = GadgetRecord;

    fn next(&mut self) -> Option<GadgetRecord> {
        if self.diversity == 0 || self.offset > self.max_offset {
            return None;
        }
        let rec = self.mutant(self.offset, self.repetition);
        self.repetition += 1;
        if self.repetition == self.diversity {
            self.repetition = 0;
            self.offset += 1;
        }
        Some(rec)
    }
}

/// Mutates `base`: for every offset in `1..=max_offset` and every repetition
/// in `0..diversity`, one copy with exactly `offset` instructions inserted at
/// uniformly random statement boundaries.
pub fn mutate_function<'t>(
    base: &TokenSeq,
    params: &MutationParams,
    tables: &'t InsertionTables,
    opts: InsertionOptions,
) -> Result<Mutator<'t>, MutationError> {
    if base.is_empty() {
        return Err(MutationError::EmptyFunction);
    }
    if opts.immediates.is_empty() {
        return Err(MutationError::NoImmediates);
    }
    let max_offset = match params.max_offset {
        Some(0) => return Err(MutationError::ZeroMaxOffset),
        Some(m) => m,
        None => base.statements().len(),
    };
    Ok(Mutator {
        base: base.clone(),
        tables,
        opts,
        seed: params.rng_seed,
        diversity: params.diversity,
        max_offset,
        offset: 1,
        repetition: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::{detokenize, tokenize_seq, TokenKind};
    use crate::seeded_rng;

    const GADGET: &str = "victim_function:\n movl size(%rip), %eax\n cmpq %rax, %rdi\n jae .L0\n movzbl array1(%rdi), %eax\n shlq $9, %rax\n movb array2(%rax), %dl\n andb %dl, temp(%rip)\n.L0:\n ret\n";

    fn tables() -> InsertionTables {
        InsertionTables::builtin()
    }

    #[test]
    fn zero_diversity_is_empty() {
        let t = tables();
        let base = tokenize_seq("ex01_gcc_O0", GADGET);
        let p = MutationParams { diversity: 0, max_offset: None, rng_seed: 1 };
        assert_eq!(mutate_function(&base, &p, &t, Default::default()).unwrap().count(), 0);
    }

    #[test]
    fn one_by_one() {
        let t = tables();
        let base = tokenize_seq("ex01_gcc_O0", GADGET);
        let p = MutationParams { diversity: 1, max_offset: Some(1), rng_seed: 1 };
        let recs: Vec<_> = mutate_function(&base, &p, &t, Default::default()).unwrap().collect();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].inserted.len(), 1);
        assert_eq!(recs[0].lineage.unwrap().base_example, 1);
    }

    #[test]
    fn removal_restores_base_and_text_roundtrips() {
        let t = tables();
        let base = tokenize_seq("ex01_gcc_O0", GADGET);
        let p = MutationParams { diversity: 3, max_offset: None, rng_seed: 9 };
        let m = mutate_function(&base, &p, &t, Default::default()).unwrap();
        assert_eq!(m.len(), 3 * base.statements().len());
        for rec in m {
            assert_eq!(rec.without_insertions(), base.tokens, "{}", rec.id);
            let text = detokenize(&rec.tokens.tokens).unwrap();
            assert_eq!(tokenize(&text), rec.tokens.tokens, "{text}");
            for ins in &rec.inserted {
                assert_eq!(rec.tokens.tokens[ins.position..ins.position + ins.tokens.len()], ins.tokens[..]);
            }
        }
    }

    #[test]
    fn deterministic() {
        let t = tables();
        let base = tokenize_seq("ex01_gcc_O0", GADGET);
        let p = MutationParams { diversity: 2, max_offset: Some(5), rng_seed: 42 };
        let a: Vec<_> = mutate_function(&base, &p, &t, Default::default()).unwrap().collect();
        let b: Vec<_> = mutate_function(&base, &p, &t, Default::default()).unwrap().collect();
        assert_eq!(a, b);
        let p2 = MutationParams { rng_seed: 43, ..p };
        let c: Vec<_> = mutate_function(&base, &p2, &t, Default::default()).unwrap().collect();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_operand_and_width_samples() {
        let t = tables();
        let mut rng = seeded_rng(3);
        let lfence = t.instructions.get("lfence").unwrap();
        let toks = sample_for_entry(lfence, None, &t, &Default::default(), &[], &mut rng).unwrap();
        assert_eq!(toks, alloc::vec![Token::new(TokenKind::Instruction, "lfence")]);

        let add = &t.instructions.entries[0];
        for _ in 0..50 {
            let toks = sample_for_entry(add, Some(Width::B64), &t, &Default::default(), &[], &mut rng).unwrap();
            assert_eq!(toks[0].text, "add");
            for r in toks.iter().filter(|t| t.kind == TokenKind::Register) {
                assert_eq!(t.registers.width_of(&r.text), Some(Width::B64));
            }
        }
        for _ in 0..200 {
            let toks = sample_insertion(Width::B8, &t, &mut rng);
            let regs: Vec<_> = toks.iter().filter(|t| t.kind == TokenKind::Register).collect();
            let entry = t.instructions.get(&toks[0].text).unwrap();
            if !regs.is_empty() {
                assert!(entry.signatures.iter().any(|s| s.accepts_width(Width::B8)));
            }
        }
    }

    #[test]
    fn byte_immediates_fit() {
        let t = tables();
        let mut rng = seeded_rng(5);
        let e = t.instructions.get("xorb").unwrap();
        for _ in 0..200 {
            let toks = sample_for_entry(e, None, &t, &Default::default(), &[], &mut rng).unwrap();
            for tok in toks.iter().filter(|t| t.text.starts_with('$')) {
                assert!(tok.text[1..].parse::<u32>().unwrap() <= 255);
            }
        }
    }

    #[test]
    fn zero_max_offset_rejected() {
        let t = tables();
        let base = tokenize_seq("x", "ret");
        let p = MutationParams { diversity: 1, max_offset: Some(0), rng_seed: 0 };
        assert!(matches!(mutate_function(&base, &p, &t, Default::default()), Err(MutationError::ZeroMaxOffset)));
    }
}
