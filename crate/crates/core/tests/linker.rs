use hgt_core::kb::KnowledgeBase;
use hgt_core::linker::{link_question, QuestionUnit};
use proptest::prelude::*;

proptest! {
    // Planted entities separated by filler words are recovered in order, and
    // seeds plus residual tokens partition the question.
    #[test]
    fn planted_entities_recovered(plan in proptest::collection::vec((0usize..6, 0usize..3), 1..8)) {
        let names = ["alpha", "beta gamma", "delta", "epsilon zeta eta", "theta", "iota kappa"];
        let facts: Vec<(&str, &str, &str)> = names.iter().map(|n| (*n, "rel", "sink")).collect();
        let kb = KnowledgeBase::from_triples(facts).unwrap();
        let mut tokens = Vec::new();
        let mut expect = Vec::new();
        for &(ent, filler) in &plan {
            for _ in 0..filler {
                tokens.push("filler".to_string());
            }
            tokens.extend(names[ent].split(' ').map(String::from));
            expect.push(kb.entity(names[ent]).unwrap());
        }
        let r = link_question(&kb, &tokens);
        prop_assert_eq!(&r.seeds, &expect);
        let covered: usize = r.spans.iter().map(|(s, e)| e - s).sum::<usize>() + r.residual_tokens.len();
        prop_assert_eq!(covered, tokens.len());
        let mut positions: Vec<usize> = r.spans.iter().flat_map(|&(s, e)| s..e).chain(r.residual_positions.iter().copied()).collect();
        positions.sort();
        prop_assert_eq!(positions, (0..tokens.len()).collect::<Vec<_>>());
        prop_assert!(r.residual_tokens.iter().all(|t| t == "filler"));
        prop_assert_eq!(r.units().iter().filter(|u| matches!(u, QuestionUnit::Entity(_))).count(), expect.len());
    }
}

#[test]
fn longest_match_wins() {
    let kb = KnowledgeBase::from_triples([("new york", "in", "usa"), ("new", "is", "adjective")]).unwrap();
    let toks: Vec<String> = ["in", "new", "york"].iter().map(|s| s.to_string()).collect();
    let r = link_question(&kb, &toks);
    assert_eq!(r.seeds, [kb.entity("new york").unwrap()]);
    assert_eq!(r.residual_tokens, ["in"]);
}
