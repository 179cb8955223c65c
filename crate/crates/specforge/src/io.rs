//! JSON, JSONL and checkpoint files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use specforge_core::lexer::{Token, TokenKind};
use specforge_core::TokenSeq;

use crate::error::{Error, Result};

/// One tokenized function as written by `tokenize`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub kinds: Vec<String>,
}

impl From<&TokenSeq> for TokenRecord {
    fn from(s: &TokenSeq) -> Self {
        TokenRecord {
            id: s.source_id.clone(),
            tokens: s.tokens.iter().map(|t| t.text.clone()).collect(),
            kinds: s.tokens.iter().map(|t| t.kind.as_str().to_string()).collect(),
        }
    }
}

impl TryFrom<TokenRecord> for TokenSeq {
    type Error = Error;

    fn try_from(r: TokenRecord) -> Result<Self> {
        if r.tokens.len() != r.kinds.len() {
            return Err(Error::Data(format!("{}: {} tokens but {} kinds", r.id, r.tokens.len(), r.kinds.len())));
        }
        let tokens = r
            .tokens
            .into_iter()
            .zip(&r.kinds)
            .map(|(text, k)| {
                let kind = TokenKind::parse(k).ok_or_else(|| Error::Data(format!("unknown token kind {k:?}")))?;
                Ok(Token::new(kind, text))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TokenSeq::new(r.id, tokens))
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(p)?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for it in items {
        serde_json::to_writer(&mut buf, it).map_err(|e| Error::Data(e.to_string()))?;
        buf.write_all(b"\n").unwrap();
    }
    write_bytes(path, &buf)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

pub fn write_token_records(path: &Path, seqs: &[TokenSeq]) -> Result<()> {
    let recs: Vec<TokenRecord> = seqs.iter().map(TokenRecord::from).collect();
    write_jsonl(path, &recs)
}

pub fn read_token_records(path: &Path) -> Result<Vec<TokenSeq>> {
    read_jsonl::<TokenRecord>(path)?.into_iter().map(TokenSeq::try_from).collect()
}
