//! Bundled assembly corpora and the data directory.

use std::fs;
use std::path::{Path, PathBuf};

use specforge_core::lexer::disasm::split_functions;
use specforge_core::lexer::{simplify_labels, tokenize_seq};
use specforge_core::TokenSeq;

use crate::error::{Error, Result};

pub const DATA_DIR_ENV: &str = "SPECFORGE_DATA_DIR";

/// Size of the bundled round-trip corpus.
pub const BUNDLED_FUNCTIONS: usize = 100;

/// `$SPECFORGE_DATA_DIR`, or the `data/` directory shipped with the crate.
pub fn data_dir() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data")),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Sorted `*.s` files directly under `dir`.
pub fn asm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "s"))
        .collect();
    v.sort();
    Ok(v)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Every function of every `.s` file in `dir`, ids `<file>/<function>`.
pub fn functions_in(dir: &Path) -> Result<Vec<TokenSeq>> {
    let mut out = Vec::new();
    for f in asm_files(dir)? {
        let text = read_text(&f)?;
        let file = stem(&f);
        for func in split_functions(&file, &text) {
            out.push(tokenize_seq(&format!("{file}/{}", func.name), &func.text));
        }
    }
    Ok(out)
}

/// The label-simplified `victim_function` of every base example, with the
/// file stem (`ex01_gcc_O0`, ...) as source id.
pub fn base_gadgets(data: &Path) -> Result<Vec<TokenSeq>> {
    let mut out = Vec::new();
    for f in asm_files(&data.join("base"))? {
        let id = stem(&f);
        let text = read_text(&f)?;
        let func = split_functions(&id, &text)
            .into_iter()
            .find(|x| x.name == "victim_function")
            .ok_or_else(|| Error::Data(format!("{} has no victim_function", f.display())))?;
        let mut seq = simplify_labels(&tokenize_seq(&id, &func.text)).seq;
        seq.source_id = id;
        out.push(seq);
    }
    Ok(out)
}

pub fn benign_functions(data: &Path) -> Result<Vec<TokenSeq>> {
    functions_in(&data.join("benign"))
}

/// The fixed 100-function corpus: all base victim functions followed by
/// benign functions in file order.
pub fn bundled_corpus(data: &Path) -> Result<Vec<TokenSeq>> {
    let mut v = base_gadgets(data)?;
    v.extend(benign_functions(data)?);
    if v.len() < BUNDLED_FUNCTIONS {
        return Err(Error::Data(format!("bundled corpus has only {} functions", v.len())));
    }
    v.truncate(BUNDLED_FUNCTIONS);
    Ok(v)
}
