use specforge::corpus::{base_gadgets, benign_functions, bundled_corpus, data_dir, read_text, BUNDLED_FUNCTIONS};
use specforge::io::{read_token_records, write_token_records};
use specforge::stages::{file_functions, parse_labels, read_seeds};
use specforge_core::lexer::{detokenize, tokenize, tokenize_seq};
use specforge_core::TokenKind;

#[test]
fn listing_token_count() {
    let text = read_text(&data_dir().join("listings/xorb.s")).unwrap();
    let toks = tokenize(&text);
    assert_eq!(toks.len(), 45);
    assert_eq!(toks.iter().filter(|t| t.kind == TokenKind::Instruction).count(), 9);
    assert_eq!(toks.iter().filter(|t| t.is_label_def()).count(), 2);
}

#[test]
fn memory_operand_tokens() {
    let texts: Vec<String> = tokenize("movq (%rax), %rdx").into_iter().map(|t| t.text).collect();
    assert_eq!(texts, ["movq", "(", "%rax", ")", ",", "%rdx"]);
}

#[test]
fn bundled_corpus_round_trips() {
    let corpus = bundled_corpus(&data_dir()).unwrap();
    assert_eq!(corpus.len(), BUNDLED_FUNCTIONS);
    for f in &corpus {
        let text = detokenize(&f.tokens).unwrap();
        assert_eq!(tokenize(&text), f.tokens, "{}", f.source_id);
    }
}

#[test]
fn base_set_covers_every_example() {
    let bases = base_gadgets(&data_dir()).unwrap();
    assert_eq!(bases.len(), 68);
    for b in &bases {
        assert!(b.tokens.iter().any(|t| t.text == "victim_function:"), "{}", b.source_id);
    }
    assert!(benign_functions(&data_dir()).unwrap().len() >= 70);
}

#[test]
fn seeds_from_single_file() {
    let seeds = read_seeds(&data_dir().join("base/ex01_gcc_O0.s")).unwrap();
    assert_eq!(seeds.len(), 1);
    assert_eq!(seeds[0].source_id, "ex01_gcc_O0");
}

#[test]
fn objdump_sample_functions_have_labels() {
    let d = data_dir().join("sample");
    let fs = file_functions(&d.join("sample.objdump")).unwrap();
    let labels = parse_labels(&read_text(&d.join("labels.csv")).unwrap()).unwrap();
    assert!(fs.len() >= 5);
    for f in &fs {
        assert!(labels.contains_key(&f.source_id), "{}", f.source_id);
    }
    assert_eq!(labels.get("victim_function"), Some(&true));
}

#[test]
fn token_records_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.jsonl");
    let seqs = vec![tokenize_seq("a", "movq (%rax), %rdx\nret"), tokenize_seq("b", ".L2:\n\tjmp .L2")];
    write_token_records(&p, &seqs).unwrap();
    assert_eq!(read_token_records(&p).unwrap(), seqs);
}

#[test]
fn labels_accept_several_spellings() {
    let l = parse_labels("function,label\na,1\nb,false\nc,gadget\nd,benign\n").unwrap();
    assert_eq!(l.values().copied().collect::<Vec<_>>(), [true, false, true, false]);
    assert!(parse_labels("function,label\na,maybe\n").is_err());
}
