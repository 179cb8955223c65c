//! AT&T x86 assembly lexer.
//!
//! A function becomes a flat token list: mnemonics, registers, immediates,
//! labels (definitions keep their trailing colon), the punctuation `(`, `)`
//! and `,`, and whole directive statements. Comments are dropped and
//! whitespace carries no information, so [`detokenize`] can rebuild text that
//! retokenizes to the same list.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{self, Vocabulary};

pub mod disasm;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Instruction,
    Register,
    Immediate,
    Label,
    Punct,
    Directive,
    Unknown,
}

impl TokenKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenKind::Instruction => "instruction",
            TokenKind::Register => "register",
            TokenKind::Immediate => "immediate",
            TokenKind::Label => "label",
            TokenKind::Punct => "punct",
            TokenKind::Directive => "directive",
            TokenKind::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<TokenKind> {
        Some(match s {
            "instruction" => TokenKind::Instruction,
            "register" => TokenKind::Register,
            "immediate" => TokenKind::Immediate,
            "label" => TokenKind::Label,
            "punct" => TokenKind::Punct,
            "directive" => TokenKind::Directive,
            "unknown" => TokenKind::Unknown,
            _ => return None,
        })
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
}

impl Token {
    pub fn new(kind: TokenKind, text: impl Into<String>) -> Self {
        Token { kind, text: text.into() }
    }

    /// `name:` at the start of a statement.
    pub fn is_label_def(&self) -> bool {
        self.kind == TokenKind::Label && self.text.ends_with(':')
    }

    /// Label name without the definition colon.
    pub fn label_name(&self) -> Option<&str> {
        if self.kind != TokenKind::Label {
            return None;
        }
        Some(self.text.strip_suffix(':').unwrap_or(&self.text))
    }

    fn is_prefix(&self) -> bool {
        self.kind == TokenKind::Instruction && is_prefix_mnemonic(&self.text)
    }

    /// True if this token begins a new statement when emitted.
    fn starts_statement(&self, prev: Option<&Token>) -> bool {
        match self.kind {
            TokenKind::Directive => true,
            TokenKind::Label => self.is_label_def(),
            TokenKind::Instruction => !prev.is_some_and(Token::is_prefix),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<Token>,
    pub source_id: String,
}

impl TokenSeq {
    pub fn new(source_id: impl Into<String>, tokens: Vec<Token>) -> Self {
        TokenSeq { tokens, source_id: source_id.into() }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// Token index ranges of each statement (one per emitted line).
    pub fn statements(&self) -> Vec<core::ops::Range<usize>> {
        statement_ranges(&self.tokens)
    }
}

pub(crate) fn statement_ranges(tokens: &[Token]) -> Vec<core::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..tokens.len() {
        if tokens[i].starts_statement(Some(&tokens[i - 1])) {
            out.push(start..i);
            start = i;
        }
    }
    if !tokens.is_empty() {
        out.push(start..tokens.len());
    }
    out
}

const PREFIXES: &[&str] = &[
    "lock", "rep", "repe", "repz", "repne", "repnz", "data16", "addr32", "notrack", "bnd",
];

pub fn is_prefix_mnemonic(s: &str) -> bool {
    PREFIXES.contains(&s)
}

/// Decimal, hex, binary or octal integer literal with an optional sign.
pub fn is_numeric_literal(s: &str) -> bool {
    let body = s.strip_prefix(['-', '+']).unwrap_or(s);
    if body.is_empty() {
        return false;
    }
    if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        return !hex.is_empty() && hex.bytes().all(|b| b.is_ascii_hexdigit());
    }
    if let Some(bin) = body.strip_prefix("0b").or_else(|| body.strip_prefix("0B")) {
        return !bin.is_empty() && bin.bytes().all(|b| b == b'0' || b == b'1');
    }
    body.bytes().all(|b| b.is_ascii_digit())
}

fn is_symbol_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$' | '@')
}

fn is_operand_delim(c: char) -> bool {
    c.is_whitespace() || matches!(c, ',' | '(' | ')')
}

/// Splits source text into statements, dropping `#` and `/* */` comments.
/// Newlines and `;` separate statements; quoted strings are kept intact.
fn statements_of(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    let mut in_str = false;
    while let Some(c) = chars.next() {
        if in_str {
            cur.push(c);
            if c == '\\' {
                if let Some(n) = chars.next() {
                    cur.push(n);
                }
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_str = true;
                cur.push(c);
            }
            '#' => {
                for n in chars.by_ref() {
                    if n == '\n' {
                        break;
                    }
                }
                out.push(core::mem::take(&mut cur));
            }
            '/' if chars.peek() == Some(&'*') => {
                chars.next();
                let mut prev = '\0';
                for n in chars.by_ref() {
                    if prev == '*' && n == '/' {
                        break;
                    }
                    prev = n;
                }
                cur.push(' ');
            }
            '\n' | ';' => out.push(core::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out.retain(|s| !s.trim().is_empty());
    out
}

/// Collapses whitespace runs outside quotes to one space.
fn canonical_spaces(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_str = false;
    let mut escaped = false;
    let mut pending_space = false;
    for c in s.trim().chars() {
        if in_str {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        if c.is_whitespace() {
            pending_space = true;
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        if c == '"' {
            in_str = true;
        }
        out.push(c);
    }
    out
}

fn tokenize_statement(stmt: &str, out: &mut Vec<Token>) {
    let s = stmt.trim();
    let mut rest = s;

    // Label definitions, possibly several on one line.
    loop {
        rest = rest.trim_start();
        let sym_len = rest.find(|c: char| !is_symbol_char(c)).unwrap_or(rest.len());
        if sym_len > 0 && rest[sym_len..].starts_with(':') {
            out.push(Token::new(TokenKind::Label, &rest[..=sym_len]));
            rest = &rest[sym_len + 1..];
        } else {
            break;
        }
    }
    rest = rest.trim_start();
    if rest.is_empty() {
        return;
    }
    if rest.starts_with('.') {
        out.push(Token::new(TokenKind::Directive, canonical_spaces(rest)));
        return;
    }

    // Mnemonic, plus the following mnemonic after a prefix.
    loop {
        let first = rest.chars().next().unwrap();
        if !(first.is_ascii_alphabetic() || first == '_') {
            break;
        }
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let word = &rest[..end];
        out.push(Token::new(TokenKind::Instruction, word));
        rest = rest[end..].trim_start();
        if rest.is_empty() || !is_prefix_mnemonic(word) {
            break;
        }
    }

    // Operands.
    let mut chars = rest.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if matches!(c, '(' | ')' | ',') {
            out.push(Token::new(TokenKind::Punct, c.to_string()));
            chars.next();
            continue;
        }
        if c == '*' {
            out.push(Token::new(TokenKind::Unknown, "*"));
            chars.next();
            continue;
        }
        let mut end = rest.len();
        chars.next();
        while let Some(&(j, d)) = chars.peek() {
            if is_operand_delim(d) {
                end = j;
                break;
            }
            chars.next();
        }
        let lexeme = &rest[i..end];
        out.push(Token::new(operand_kind(lexeme), lexeme));
    }
}

fn operand_kind(lexeme: &str) -> TokenKind {
    let first = lexeme.chars().next().unwrap_or(' ');
    if first == '$' {
        TokenKind::Immediate
    } else if first == '%' {
        TokenKind::Register
    } else if is_numeric_literal(lexeme) {
        TokenKind::Immediate
    } else if first.is_ascii_alphanumeric() || first == '_' || first == '.' {
        TokenKind::Label
    } else {
        TokenKind::Unknown
    }
}

/// Tokenizes AT&T assembly text. Never fails; unrecognized lexemes become
/// [`TokenKind::Unknown`] tokens.
pub fn tokenize(asm_text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for stmt in statements_of(asm_text) {
        tokenize_statement(&stmt, &mut out);
    }
    out
}

/// [`tokenize`] wrapped into a [`TokenSeq`].
pub fn tokenize_seq(source_id: &str, asm_text: &str) -> TokenSeq {
    TokenSeq::new(source_id, tokenize(asm_text))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LexError {
    #[error("not emittable: token {index} is the placeholder {text:?}")]
    NotEmittable { index: usize, text: String },
}

/// Rebuilds assembler text, one statement per line.
///
/// Canonical spacing: one space between tokens, none before `,` or `)`,
/// none after `(` or `*`, and a displacement or symbol is glued to the `(`
/// that follows it.
pub fn detokenize(tokens: &[Token]) -> Result<String, LexError> {
    if let Some((index, t)) = tokens
        .iter()
        .enumerate()
        .find(|(_, t)| vocab::is_special(&t.text))
    {
        return Err(LexError::NotEmittable { index, text: t.text.clone() });
    }
    let mut out = String::new();
    let mut prev: Option<&Token> = None;
    for tok in tokens {
        let new_stmt = tok.starts_statement(prev);
        match prev {
            None => {}
            Some(_) if new_stmt => out.push('\n'),
            Some(p) => {
                let glue = tok.text == ","
                    || tok.text == ")"
                    || p.text == "("
                    || p.text == "*"
                    || (tok.text == "("
                        && p.kind != TokenKind::Instruction
                        && p.text != ","
                        && !p.is_label_def());
                if !glue {
                    out.push(' ');
                }
            }
        }
        out.push_str(&tok.text);
        prev = Some(tok);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    ToUnk,
    Keep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationConfig {
    pub replace_labels: bool,
    pub replace_immediates: bool,
    pub oov_policy: OovPolicy,
    /// Rename local labels to `.L0`, `.L1`, ... before any replacement.
    pub label_canonicalize: bool,
}

impl NormalizationConfig {
    /// Labels, immediates and out-of-vocabulary tokens all collapsed.
    pub fn detector() -> Self {
        NormalizationConfig {
            replace_labels: true,
            replace_immediates: true,
            oov_policy: OovPolicy::ToUnk,
            label_canonicalize: false,
        }
    }

    /// Only local labels renamed; everything else kept.
    pub fn generator() -> Self {
        NormalizationConfig {
            replace_labels: false,
            replace_immediates: false,
            oov_policy: OovPolicy::Keep,
            label_canonicalize: true,
        }
    }

    pub fn is_noop(&self) -> bool {
        !self.replace_labels
            && !self.replace_immediates
            && self.oov_policy == OovPolicy::Keep
            && !self.label_canonicalize
    }
}

/// Collapses labels, immediates and unknown tokens into placeholder tokens.
/// Length and token kinds are preserved.
pub fn normalize(seq: &TokenSeq, cfg: &NormalizationConfig, vocab: &Vocabulary) -> TokenSeq {
    let base = if cfg.label_canonicalize && !cfg.replace_labels {
        simplify_labels(seq).seq
    } else {
        seq.clone()
    };
    let tokens = base
        .tokens
        .into_iter()
        .map(|mut t| {
            if cfg.replace_labels && t.kind == TokenKind::Label {
                t.text = vocab::LABEL.into();
            } else if cfg.replace_immediates && t.kind == TokenKind::Immediate {
                t.text = vocab::IMM.into();
            }
            if cfg.oov_policy == OovPolicy::ToUnk && !vocab.contains(&t.text) {
                t.text = vocab::UNK.into();
            }
            t
        })
        .collect();
    TokenSeq { tokens, source_id: base.source_id }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimplifiedLabels {
    pub seq: TokenSeq,
    /// Local label references with no definition in the sequence.
    pub warnings: Vec<String>,
}

fn is_local_label(name: &str) -> bool {
    name.starts_with('.') && name.len() > 1
}

/// Splits `sym+8` into (`sym`, `+8`).
fn split_symbol(text: &str) -> (&str, &str) {
    let end = text
        .char_indices()
        .find(|&(_, c)| !(c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$')))
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    text.split_at(end)
}

/// Renames the locally defined labels to `.L0`, `.L1`, ... in order of first
/// appearance (definition or use). Global symbols are left alone.
pub fn simplify_labels(seq: &TokenSeq) -> SimplifiedLabels {
    let defined: Vec<&str> = seq
        .tokens
        .iter()
        .filter(|t| t.is_label_def())
        .filter_map(Token::label_name)
        .filter(|n| is_local_label(n))
        .collect();

    let mut mapping: BTreeMap<String, String> = BTreeMap::new();
    let mut warnings = Vec::new();
    for t in &seq.tokens {
        if t.kind != TokenKind::Label {
            continue;
        }
        let name = if t.is_label_def() {
            t.label_name().unwrap()
        } else {
            split_symbol(&t.text).0
        };
        if !is_local_label(name) || mapping.contains_key(name) {
            continue;
        }
        if defined.contains(&name) {
            let fresh = alloc::format!(".L{}", mapping.len());
            mapping.insert(name.to_string(), fresh);
        } else if !warnings.iter().any(|w: &String| w == name) {
            warnings.push(name.to_string());
        }
    }

    let tokens = seq
        .tokens
        .iter()
        .map(|t| {
            if t.kind != TokenKind::Label {
                return t.clone();
            }
            if t.is_label_def() {
                let name = t.label_name().unwrap();
                return match mapping.get(name) {
                    Some(new) => Token::new(TokenKind::Label, alloc::format!("{new}:")),
                    None => t.clone(),
                };
            }
            let (sym, tail) = split_symbol(&t.text);
            match mapping.get(sym) {
                Some(new) => Token::new(TokenKind::Label, alloc::format!("{new}{tail}")),
                None => t.clone(),
            }
        })
        .collect();
    SimplifiedLabels {
        seq: TokenSeq { tokens, source_id: seq.source_id.clone() },
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn splits_memory_operand() {
        let toks = tokenize("movq (%rax), %rdx");
        assert_eq!(texts(&toks), ["movq", "(", "%rax", ")", ",", "%rdx"]);
        assert_eq!(toks[0].kind, TokenKind::Instruction);
        assert_eq!(toks[2].kind, TokenKind::Register);
        assert_eq!(toks[1].kind, TokenKind::Punct);
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   # only a comment\n\n").is_empty());
        assert_eq!(detokenize(&[]).unwrap(), "");
    }

    #[test]
    fn kinds_of_operands() {
        let toks = tokenize("victim_function: .cfi_startproc\n  shlq $9, %rax\n movq -8(%rbp), %rdi\n jae .B1.2 # cmt\n.B1.2:\n ret");
        let kinds: Vec<_> = toks.iter().map(|t| (t.text.as_str(), t.kind)).collect();
        assert_eq!(
            kinds,
            vec![
                ("victim_function:", TokenKind::Label),
                (".cfi_startproc", TokenKind::Directive),
                ("shlq", TokenKind::Instruction),
                ("$9", TokenKind::Immediate),
                (",", TokenKind::Punct),
                ("%rax", TokenKind::Register),
                ("movq", TokenKind::Instruction),
                ("-8", TokenKind::Immediate),
                ("(", TokenKind::Punct),
                ("%rbp", TokenKind::Register),
                (")", TokenKind::Punct),
                (",", TokenKind::Punct),
                ("%rdi", TokenKind::Register),
                ("jae", TokenKind::Instruction),
                (".B1.2", TokenKind::Label),
                (".B1.2:", TokenKind::Label),
                ("ret", TokenKind::Instruction),
            ]
        );
    }

    #[test]
    fn directive_is_one_token() {
        let toks = tokenize("\t.p2align 4,,10\n\t.size\tf,   .-f");
        assert_eq!(texts(&toks), [".p2align 4,,10", ".size f, .-f"]);
    }

    #[test]
    fn prefix_and_indirect() {
        let toks = tokenize("lock addq %rax, (%rbx)\ncall *%rax\njmp *.L4(,%rax,8)");
        assert_eq!(toks[0].kind, TokenKind::Instruction);
        assert_eq!(toks[1].kind, TokenKind::Instruction);
        let text = detokenize(&toks).unwrap();
        assert_eq!(text, "lock addq %rax, (%rbx)\ncall *%rax\njmp *.L4(, %rax, 8)");
        assert_eq!(tokenize(&text), toks);
    }

    #[test]
    fn detokenize_canonical() {
        let toks = tokenize("movq   (%rax) ,%rdx");
        assert_eq!(detokenize(&toks).unwrap(), "movq (%rax), %rdx");
        let toks = tokenize("movl size(%rip), %eax\nmovq %rdi, -8(%rbp)");
        assert_eq!(detokenize(&toks).unwrap(), "movl size(%rip), %eax\nmovq %rdi, -8(%rbp)");
    }

    #[test]
    fn detokenize_rejects_placeholders() {
        let toks = vec![Token::new(TokenKind::Instruction, "movq"), Token::new(TokenKind::Unknown, "<UNK>")];
        assert!(matches!(detokenize(&toks), Err(LexError::NotEmittable { index: 1, .. })));
    }

    #[test]
    fn semicolons_and_block_comments() {
        let toks = tokenize("nop; ret /* tail */\n");
        assert_eq!(texts(&toks), ["nop", "ret"]);
    }

    #[test]
    fn quoted_hash_survives() {
        let toks = tokenize(".string \"a#b\"  # real comment");
        assert_eq!(texts(&toks), [".string \"a#b\""]);
    }

    #[test]
    fn numeric_literals() {
        for ok in ["0", "-8", "+12", "0x1F", "0b101", "4096"] {
            assert!(is_numeric_literal(ok), "{ok}");
        }
        for bad in ["", "-", "1f", "0x", "abc", "1.5"] {
            assert!(!is_numeric_literal(bad), "{bad}");
        }
    }

    #[test]
    fn simplify_renames_in_first_appearance_order() {
        let seq = tokenize_seq("t", "jne .LBB1_1\nja .L1324337\nnop\n.L1324337:\nnop\n.LBB1_1:\nret");
        let out = simplify_labels(&seq);
        assert!(out.warnings.is_empty());
        assert_eq!(
            out.seq.texts(),
            ["jne", ".L0", "ja", ".L1", "nop", ".L1:", "nop", ".L0:", "ret"]
        );
    }

    #[test]
    fn simplify_without_labels_is_identity() {
        let seq = tokenize_seq("t", "movq (%rax), %rdx\nret");
        assert_eq!(simplify_labels(&seq).seq, seq);
    }

    #[test]
    fn simplify_keeps_undefined_and_globals() {
        let seq = tokenize_seq("t", "victim_function:\njmp .Lmissing\nmovq .LC0+8(%rip), %rax\n.LC0:\nret");
        let out = simplify_labels(&seq);
        assert_eq!(out.warnings, [".Lmissing".to_string()]);
        assert_eq!(
            out.seq.texts(),
            ["victim_function:", "jmp", ".Lmissing", "movq", ".L0+8", "(", "%rip", ")", ",", "%rax", ".L0:", "ret"]
        );
    }

    #[test]
    fn normalize_replaces_immediates_and_labels() {
        let vocab = crate::vocab::build_vocab(&[tokenize_seq("v", "shlq %rax\nretq")], 1).unwrap();
        let cfg = NormalizationConfig::detector();
        let seq = tokenize_seq("t", "shlq $9, %rax");
        assert_eq!(normalize(&seq, &cfg, &vocab).texts(), ["shlq", "<imm>", "<UNK>", "%rax"]);

        let vocab = crate::vocab::build_vocab(&[tokenize_seq("v", "shlq $9, %rax\nretq")], 1).unwrap();
        assert_eq!(normalize(&seq, &cfg, &vocab).texts(), ["shlq", "<imm>", ",", "%rax"]);
        let seq = tokenize_seq("t", ".L0:\nretq");
        assert_eq!(normalize(&seq, &cfg, &vocab).texts(), ["<label>", "retq"]);
    }

    #[test]
    fn normalize_fixed_point() {
        let seq = tokenize_seq("t", "movq (%rax), %rdx\nret");
        let vocab = crate::vocab::build_vocab(&[seq.clone()], 1).unwrap();
        let out = normalize(&seq, &NormalizationConfig::detector(), &vocab);
        assert_eq!(out, seq);
    }

    #[test]
    fn statements_follow_lines() {
        let seq = tokenize_seq("t", "f:\nlock\naddq %rax, %rbx\n.p2align 4\nret");
        let st = seq.statements();
        assert_eq!(st, vec![0..1, 1..6, 6..7, 7..8]);
    }
}
