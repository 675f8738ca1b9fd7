use std::path::Path;

use hgt::formats::*;
use hgt::Error;

mod common;

#[test]
fn kb_parse_reports_line() {
    let p = Path::new("kb.tsv");
    let kb = parse_kb_tsv("a\tr\tb\n\nb\ts\tc\n", p, false).unwrap();
    assert_eq!(kb.facts().len(), 2);
    match parse_kb_tsv("a\tr\tb\na\tr\n", p, false) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected parse error, got {other:?}"),
    }
    assert!(matches!(parse_kb_tsv("a\t\tb\n", p, false), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn add_inverse_doubles_facts() {
    let p = Path::new("kb.tsv");
    let kb = parse_kb_tsv("a\tr\tb\nb\ts\tc\n", p, true).unwrap();
    assert_eq!(kb.facts().len(), 4);
    let b = kb.entity("b").unwrap();
    assert_eq!(kb.neighbors(b).unwrap().len(), 2);
}

#[test]
fn minimal_bundle_loads() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(KB_FILE), "paris\tcapital of\tfrance\n").unwrap();
    std::fs::write(dir.path().join(QA_FILE), "{\"qid\":\"q0\",\"question\":\"paris is the capital of what\",\"answer\":\"france\"}\n").unwrap();
    let b = load_bundle(dir.path(), false).unwrap();
    assert_eq!(b.pairs.len(), 1);
    assert_eq!(b.kb.facts().len(), 1);
    assert_eq!(b.provenance.split_spec, "8:1:1");
}

#[test]
fn bundle_round_trip() {
    let s = common::small_synth(2, 3);
    let dir = tempfile::tempdir().unwrap();
    write_bundle(dir.path(), &s.bundle, Some(&s.oracle_links)).unwrap();
    let back = load_bundle(dir.path(), false).unwrap();
    assert_eq!(back.pairs, s.bundle.pairs);
    assert_eq!(back.kb.facts(), s.bundle.kb.facts());
    assert_eq!(back.provenance, s.bundle.provenance);
    assert_eq!(back.answer_vocab, s.bundle.answer_vocab);
}

#[test]
fn links_override_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(KB_FILE), "a\tr\tb\nc\tr\tb\n").unwrap();
    std::fs::write(dir.path().join(QA_FILE), "{\"qid\":\"q0\",\"question\":\"r of a\",\"answer\":\"b\",\"seeds\":[\"a\"]}\n").unwrap();
    std::fs::write(dir.path().join(LINKS_FILE), "q0\tc\n").unwrap();
    let b = load_bundle(dir.path(), false).unwrap();
    assert_eq!(b.pairs[0].seeds.as_deref(), Some(&["c".to_string()][..]));

    std::fs::write(dir.path().join(LINKS_FILE), "nope\tc\n").unwrap();
    assert!(matches!(load_bundle(dir.path(), false), Err(Error::Parse { .. })));
    std::fs::write(dir.path().join(LINKS_FILE), "q0\tnot-an-entity\n").unwrap();
    assert!(load_bundle(dir.path(), false).is_err());
}

#[test]
fn qa_jsonl_rejects_unknown_answer() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(KB_FILE), "a\tr\tb\n").unwrap();
    std::fs::write(dir.path().join(QA_FILE), "{\"qid\":\"q0\",\"question\":\"r of a\",\"answer\":\"zzz\"}\n").unwrap();
    assert!(load_bundle(dir.path(), false).is_err());
    std::fs::write(dir.path().join(QA_FILE), "{\"qid\":\"q0\"\n").unwrap();
    assert!(matches!(load_bundle(dir.path(), false), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn word_vectors_check_dimension() {
    let p = Path::new("vec.txt");
    let v = parse_word_vectors("paris 1 2 3\nfrance 0.5 0 -1\n", p, 3).unwrap();
    assert_eq!(v.len(), 2);
    assert_eq!(v.get("france").unwrap(), &[0.5, 0.0, -1.0]);
    assert!(matches!(parse_word_vectors("paris 1 2\n", p, 3), Err(Error::Parse { line: 1, .. })));
    assert!(parse_word_vectors("paris 1 x 3\n", p, 3).is_err());
}
