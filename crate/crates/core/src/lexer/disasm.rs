//! Function extraction from compiler `.s` output and `objdump -d` listings.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AsmFunction {
    pub name: String,
    pub text: String,
}

fn function_type_name(line: &str) -> Option<&str> {
    let rest = line.trim().strip_prefix(".type")?;
    let (name, kind) = rest.split_once(',')?;
    let kind = kind.trim();
    if kind == "@function" || kind == "%function" || kind == "STT_FUNC" {
        Some(name.trim())
    } else {
        None
    }
}

fn label_def(line: &str) -> Option<&str> {
    let t = line.trim_start();
    let end = t.find(':')?;
    let name = &t[..end];
    if !name.is_empty() && !name.contains(char::is_whitespace) {
        Some(name)
    } else {
        None
    }
}

/// Splits compiler assembly output into functions.
///
/// Functions are the symbols declared with `.type name, @function`; each body
/// runs from its label to the matching `.size` directive (exclusive). Text
/// with no such declarations is returned as a single function named `id`.
pub fn split_functions(id: &str, text: &str) -> Vec<AsmFunction> {
    let names: Vec<&str> = text.lines().filter_map(function_type_name).collect();
    if names.is_empty() {
        return alloc::vec![AsmFunction { name: id.to_string(), text: text.to_string() }];
    }
    let mut out = Vec::new();
    let mut current: Option<(String, String)> = None;
    for line in text.lines() {
        if let Some(name) = label_def(line).filter(|n| names.contains(n)) {
            if let Some((n, body)) = current.take() {
                out.push(AsmFunction { name: n, text: body });
            }
            current = Some((name.to_string(), String::new()));
        }
        let Some((name, body)) = current.as_mut() else { continue };
        let trimmed = line.trim();
        if trimmed.starts_with(".size") && trimmed[5..].trim_start().starts_with(name.as_str()) {
            let (n, b) = current.take().unwrap();
            out.push(AsmFunction { name: n, text: b });
            continue;
        }
        body.push_str(line);
        body.push('\n');
    }
    if let Some((n, b)) = current {
        out.push(AsmFunction { name: n, text: b });
    }
    out
}

fn is_byte_column(s: &str) -> bool {
    let s = s.trim();
    !s.is_empty()
        && s.split_whitespace()
            .all(|b| b.len() == 2 && b.bytes().all(|c| c.is_ascii_hexdigit()))
}

/// Converts `objdump -d` output (AT&T syntax, with or without raw bytes)
/// into one assembly text per function. Addresses, encodings and `<sym+off>`
/// annotations are dropped.
pub fn objdump_functions(text: &str) -> Vec<AsmFunction> {
    let mut out = Vec::new();
    let mut current: Option<AsmFunction> = None;
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_suffix(">:") {
            if let Some((addr, name)) = rest.split_once(" <") {
                if addr.bytes().all(|c| c.is_ascii_hexdigit()) {
                    if let Some(f) = current.take() {
                        out.push(f);
                    }
                    let mut f = AsmFunction { name: name.to_string(), text: String::new() };
                    f.text.push_str(name);
                    f.text.push_str(":\n");
                    current = Some(f);
                    continue;
                }
            }
        }
        let Some(f) = current.as_mut() else { continue };
        let mut cols = line.split('\t');
        let Some(addr) = cols.next() else { continue };
        let addr = addr.trim();
        if !addr.ends_with(':') || !addr[..addr.len() - 1].bytes().all(|c| c.is_ascii_hexdigit()) {
            continue;
        }
        let rest: Vec<&str> = cols.collect();
        let insn = match rest.as_slice() {
            [] => continue,
            [only] if is_byte_column(only) => continue,
            [only] => *only,
            [bytes, insn @ ..] if is_byte_column(bytes) => {
                if insn.is_empty() {
                    continue;
                }
                insn[0]
            }
            [first, ..] => *first,
        };
        let mut insn = insn.trim().to_string();
        if let Some(pos) = insn.find('#') {
            insn.truncate(pos);
        }
        if let Some(pos) = insn.find(" <") {
            insn.truncate(pos);
        }
        if insn.is_empty() || insn == "(bad)" {
            continue;
        }
        f.text.push_str(insn.trim_end());
        f.text.push('\n');
    }
    if let Some(f) = current {
        out.push(f);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_gcc_output() {
        let src = "\t.text\n\t.globl\tf\n\t.type\tf, @function\nf:\n\tret\n\t.size\tf, .-f\n\t.type\tg, @function\ng:\n.L2:\n\tnop\n\tjmp .L2\n\t.size\tg, .-g\n\t.data\nx:\n\t.long 1\n";
        let fs = split_functions("unit", src);
        assert_eq!(fs.len(), 2);
        assert_eq!(fs[0].name, "f");
        assert_eq!(fs[0].text, "f:\n\tret\n");
        assert_eq!(fs[1].text, "g:\n.L2:\n\tnop\n\tjmp .L2\n");
    }

    #[test]
    fn no_type_info_is_one_function() {
        let fs = split_functions("x", "movq (%rax), %rdx\n");
        assert_eq!(fs.len(), 1);
        assert_eq!(fs[0].name, "x");
    }

    #[test]
    fn objdump_listing() {
        let src = "\nDisassembly of section .text:\n\n0000000000001139 <victim_function>:\n    1139:\tf3 0f 1e fa          \tendbr64\n    113d:\t48 39 3d cc 2e 00 00 \tcmp    %rdi,0x2ecc(%rip)        # 4010 <array1_size>\n    1144:\t76 1a                \tjbe    1160 <victim_function+0x27>\n    1146:\t0f b6 87 20 40 00 00 \tmovzbl 0x4020(%rdi),%eax\n    114d:\t00 00 \n    1160:\tc3                   \tret\n\n0000000000001170 <main>:\n    1170:\tret\n";
        let fs = objdump_functions(src);
        assert_eq!(fs.len(), 2);
        assert_eq!(fs[0].name, "victim_function");
        assert_eq!(
            fs[0].text,
            "victim_function:\nendbr64\ncmp    %rdi,0x2ecc(%rip)\njbe    1160\nmovzbl 0x4020(%rdi),%eax\nret\n"
        );
        assert_eq!(fs[1].text, "main:\nret\n");
    }
}
