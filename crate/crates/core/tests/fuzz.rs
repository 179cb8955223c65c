mod support;

use specforge_core::fuzz::*;
use specforge_core::lexer::{detokenize, tokenize, tokenize_seq};
use specforge_core::TokenSeq;
use support::InsertionOracle;

const VICTIM: &str = "victim_function:
	pushq	%rbp
	movq	%rsp, %rbp
	movq	%rdi, -8(%rbp)
	movl	array1_size(%rip), %eax
	movl	%eax, %eax
	cmpq	%rax, -8(%rbp)
	jnb	.L3
	movq	-8(%rbp), %rax
	leaq	array1(%rip), %rdx
	movzbl	(%rax,%rdx), %eax
	movzbl	%al, %eax
	sall	$9, %eax
	cltq
	leaq	array2(%rip), %rdx
	movzbl	(%rax,%rdx), %edx
	movzbl	temp(%rip), %eax
	andl	%edx, %eax
	movb	%al, temp(%rip)
.L3:
	nop
	popq	%rbp
	ret
";

fn base() -> TokenSeq {
    tokenize_seq("ex01_gcc_O0", VICTIM)
}

fn mutants(seed: u64, diversity: u32, max_offset: usize) -> Vec<GadgetRecord> {
    let tables = InsertionTables::builtin();
    let params = MutationParams { diversity, max_offset: Some(max_offset), rng_seed: seed };
    mutate_function(&base(), &params, &tables, InsertionOptions::default()).unwrap().collect()
}

#[test]
fn insertions_obey_the_table() {
    let oracle = InsertionOracle::parse(DEFAULT_TABLE);
    let labels = vec!["victim_function".to_string(), ".L3".to_string()];
    let recs = mutants(11, 10, 25);
    assert_eq!(recs.len(), 250);
    for r in &recs {
        for ins in &r.inserted {
            if let Err(e) = oracle.check(&ins.tokens, &labels, &DEFAULT_IMMEDIATES) {
                panic!("{}: {e}", r.id);
            }
            assert_eq!(r.tokens.tokens[ins.position..ins.position + ins.tokens.len()], ins.tokens[..]);
        }
    }
}

#[test]
fn removing_insertions_restores_the_seed() {
    let b = base();
    for r in mutants(3, 4, 15) {
        assert_eq!(r.without_insertions(), b.tokens, "{}", r.id);
    }
}

#[test]
fn counts_and_ids() {
    let recs = mutants(5, 3, 4);
    assert_eq!(recs.len(), 12);
    for (k, r) in recs.iter().enumerate() {
        let (offset, rep) = (k / 3 + 1, k % 3);
        assert_eq!(r.id, format!("ex01_gcc_O0/o{offset}/r{rep}"));
        assert_eq!(r.inserted.len(), offset);
        assert_eq!(r.tokens.source_id, "ex01_gcc_O0");
    }
}

#[test]
fn default_offset_is_statement_count() {
    let tables = InsertionTables::builtin();
    let params = MutationParams { diversity: 2, max_offset: None, rng_seed: 0 };
    let m = mutate_function(&base(), &params, &tables, InsertionOptions::default()).unwrap();
    assert_eq!(m.len(), 2 * base().statements().len());
}

#[test]
fn seeded_runs_repeat() {
    assert_eq!(mutants(9, 5, 8), mutants(9, 5, 8));
    assert_ne!(mutants(9, 5, 8), mutants(10, 5, 8));
}

#[test]
fn single_mutant_matches_stream() {
    let tables = InsertionTables::builtin();
    let params = MutationParams { diversity: 4, max_offset: Some(6), rng_seed: 2 };
    let m = mutate_function(&base(), &params, &tables, InsertionOptions::default()).unwrap();
    let all: Vec<GadgetRecord> = mutate_function(&base(), &params, &tables, InsertionOptions::default()).unwrap().collect();
    assert_eq!(m.mutant(5, 2), all[4 * 4 + 2]);
}

#[test]
fn mutants_reassemble_to_same_tokens() {
    for r in mutants(4, 3, 10) {
        let text = detokenize(&r.tokens.tokens).unwrap();
        assert_eq!(tokenize(&text), r.tokens.tokens, "{}", r.id);
    }
}

#[test]
fn rejects_bad_parameters() {
    let tables = InsertionTables::builtin();
    let zero = MutationParams { max_offset: Some(0), ..MutationParams::default() };
    assert_eq!(mutate_function(&base(), &zero, &tables, InsertionOptions::default()).err(), Some(MutationError::ZeroMaxOffset));
    let empty = TokenSeq::new("e", vec![]);
    assert_eq!(
        mutate_function(&empty, &MutationParams::default(), &tables, InsertionOptions::default()).err(),
        Some(MutationError::EmptyFunction)
    );
    let none = InsertionOptions { immediates: vec![] };
    assert_eq!(mutate_function(&base(), &MutationParams::default(), &tables, none).err(), Some(MutationError::NoImmediates));
}

#[test]
fn restricted_table_is_respected() {
    let tables = InsertionTables::parse("[registers]\n64: rax rbx\n[instructions]\nnop:\nincq: r64\n").unwrap();
    let params = MutationParams { diversity: 5, max_offset: Some(5), rng_seed: 1 };
    for r in mutate_function(&base(), &params, &tables, InsertionOptions::default()).unwrap() {
        for ins in &r.inserted {
            let t: Vec<&str> = ins.tokens.iter().map(|t| t.text.as_str()).collect();
            assert!(t == ["nop"] || t == ["incq", "%rax"] || t == ["incq", "%rbx"], "{t:?}");
        }
    }
}
