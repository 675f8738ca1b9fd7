//! Dataset carriers and the synthetic multi-hop generator.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kb::{EntityId, KbBuilder, KbError, KnowledgeBase, RelationId, Triplet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("{} question(s) failed validation: {}", .0.len(), summarize(.0))]
    Validation(Vec<(String, String)>),
    #[error("unsatisfiable synthetic spec: {0}")]
    Unsatisfiable(String),
    #[error(transparent)]
    Kb(#[from] KbError),
}

fn summarize(issues: &[(String, String)]) -> String {
    let mut s = String::new();
    for (i, (qid, why)) in issues.iter().take(5).enumerate() {
        if i > 0 {
            s.push_str("; ");
        }
        s.push_str(&format!("{qid}: {why}"));
    }
    if issues.len() > 5 {
        s.push_str(&format!("; and {} more", issues.len() - 5));
    }
    s
}

/// One question/answer pair. `path` is the gold reasoning path as surface
/// triples; it is only used for validation and attention analysis, never
/// for training.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct QAPair {
    pub qid: String,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<[String; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    pub name: String,
    pub split_spec: String,
    pub converter_version: String,
}

#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub kb: KnowledgeBase,
    pub pairs: Vec<QAPair>,
    /// Distinct answer entities, ordered by entity id.
    pub answer_vocab: Vec<EntityId>,
    pub provenance: Provenance,
}

impl DatasetBundle {
    /// Validate `pairs` against `kb` and collect the answer vocabulary.
    pub fn new(kb: KnowledgeBase, pairs: Vec<QAPair>, provenance: Provenance) -> Result<Self, DatasetError> {
        validate(&kb, &pairs)?;
        let answers: BTreeSet<EntityId> = pairs.iter().filter_map(|p| kb.entity(&p.answer)).collect();
        Ok(Self { kb, pairs, answer_vocab: answers.into_iter().collect(), provenance })
    }

    /// Gold path of a pair as resolved triplets.
    pub fn gold_path(&self, pair: &QAPair) -> Option<Vec<Triplet>> {
        resolve_path(&self.kb, pair.path.as_ref()?).ok()
    }
}

fn resolve_path(kb: &KnowledgeBase, path: &[[String; 3]]) -> Result<Vec<Triplet>, String> {
    path.iter()
        .map(|[h, r, t]| {
            let (Some(head), Some(predicate), Some(tail)) = (kb.entity(h), kb.relation(r), kb.entity(t)) else {
                return Err(format!("path step ({h}, {r}, {t}) names an unknown symbol"));
            };
            let f = Triplet { head, predicate, tail };
            if kb.contains(&f) {
                Ok(f)
            } else {
                Err(format!("path step ({h}, {r}, {t}) is not a fact"))
            }
        })
        .collect()
}

/// Check every pair: unique qid, answer and seeds resolve, gold path is a
/// chained sequence of KB facts ending at the answer.
pub fn validate(kb: &KnowledgeBase, pairs: &[QAPair]) -> Result<(), DatasetError> {
    let mut issues = Vec::new();
    let mut seen = BTreeSet::new();
    for p in pairs {
        if !seen.insert(p.qid.as_str()) {
            issues.push((p.qid.clone(), String::from("duplicate qid")));
        }
        let answer = kb.entity(&p.answer);
        if answer.is_none() {
            issues.push((p.qid.clone(), format!("answer {:?} is not a KB entity", p.answer)));
        }
        let mut seeds = Vec::new();
        for s in p.seeds.iter().flatten() {
            match kb.entity(s) {
                Some(e) => seeds.push(e),
                None => issues.push((p.qid.clone(), format!("seed {s:?} is not a KB entity"))),
            }
        }
        if let Some(path) = &p.path {
            match resolve_path(kb, path) {
                Err(why) => issues.push((p.qid.clone(), why)),
                Ok(steps) => {
                    let chained = steps.windows(2).all(|w| w[0].tail == w[1].head);
                    if steps.is_empty() || !chained {
                        issues.push((p.qid.clone(), String::from("gold path is empty or not chained")));
                    } else if answer.is_some() && steps.last().map(|f| f.tail) != answer {
                        issues.push((p.qid.clone(), String::from("gold path does not end at the answer")));
                    } else if !seeds.is_empty() && !seeds.contains(&steps[0].head) {
                        issues.push((p.qid.clone(), String::from("gold path does not start at a seed")));
                    }
                }
            }
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(DatasetError::Validation(issues))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_entities: usize,
    pub n_relations: usize,
    /// Hops in every gold path.
    pub depth: usize,
    pub n_questions: usize,
    /// Outgoing facts per non-terminal entity, each with a distinct relation.
    pub branching: usize,
    pub seed: u64,
}

/// Generated bundle plus the generator's ground truth.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub bundle: DatasetBundle,
    /// `(qid, seed entity)` for the oracle-link file.
    pub oracle_links: Vec<(String, Vec<EntityId>)>,
    pub gold_paths: Vec<Vec<Triplet>>,
}

/// Random layered KB: entities are split into `depth + 1` layers and every
/// entity outside the last layer has `branching` facts into the next layer
/// with pairwise distinct relations. A question names a layer-0 seed and a
/// relation sequence, so exactly one path (and answer) is consistent with it,
/// while the seed alone reaches `branching^depth` terminals.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthOutput, DatasetError> {
    let unsat = |m: String| Err(DatasetError::Unsatisfiable(m));
    let layers = spec.depth + 1;
    if spec.depth == 0 || spec.branching == 0 || spec.n_questions == 0 {
        return unsat(String::from("depth, branching and n_questions must be positive"));
    }
    if spec.branching > spec.n_relations {
        return unsat(format!("branching {} exceeds {} relations", spec.branching, spec.n_relations));
    }
    if spec.n_entities < layers {
        return unsat(format!("{} entities cannot fill {layers} layers", spec.n_entities));
    }
    let layer_of = |e: usize| e * layers / spec.n_entities;
    let members: Vec<Vec<usize>> =
        (0..layers).map(|l| (0..spec.n_entities).filter(|&e| layer_of(e) == l).collect()).collect();
    let combos = (members[0].len() as u128).saturating_mul((spec.branching as u128).pow(spec.depth as u32));
    if combos < spec.n_questions as u128 {
        return unsat(format!("only {combos} distinct (seed, path) questions exist, {} requested", spec.n_questions));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ent = |e: usize| format!("e{e}");
    let rel = |r: usize| format!("r{r}");
    let relations: Vec<usize> = (0..spec.n_relations).collect();
    let mut builder = KbBuilder::new();
    for e in 0..spec.n_entities {
        if layer_of(e) < spec.depth {
            let mut rels: Vec<usize> = relations.choose_multiple(&mut rng, spec.branching).copied().collect();
            rels.sort_unstable();
            let next = &members[layer_of(e) + 1];
            for r in rels {
                let t = next[rng.random_range(0..next.len())];
                builder.insert(&ent(e), &rel(r), &ent(t))?;
            }
        }
    }
    let kb = builder.build(false)?;

    let per_seed = spec.branching.pow(spec.depth as u32);
    let picks = index::sample(&mut rng, combos as usize, spec.n_questions);
    let mut pairs = Vec::with_capacity(spec.n_questions);
    let mut oracle_links = Vec::with_capacity(spec.n_questions);
    let mut gold_paths = Vec::with_capacity(spec.n_questions);
    for (k, pick) in picks.into_iter().enumerate() {
        let seed_entity = kb.entity(&ent(members[0][pick / per_seed])).expect("seed has facts");
        let mut choice = pick % per_seed;
        let mut here = seed_entity;
        let mut path = Vec::with_capacity(spec.depth);
        for _ in 0..spec.depth {
            let nbrs = kb.neighbors(here)?;
            let (r, t) = nbrs[choice % spec.branching];
            choice /= spec.branching;
            path.push(Triplet { head: here, predicate: r, tail: t });
            here = t;
        }
        let rels: Vec<RelationId> = path.iter().map(|f| f.predicate).collect();
        let terminals = follow_relations(&kb, seed_entity, &rels);
        if terminals.len() != 1 {
            return unsat(format!("question {k} has {} consistent answers", terminals.len()));
        }
        let qid = format!("q{k}");
        let mut question = String::from("what is the");
        for r in rels.iter().rev() {
            question.push(' ');
            question.push_str(kb.relation_surface(*r));
        }
        question.push_str(" of ");
        question.push_str(kb.entity_surface(seed_entity));
        let path_surfaces = path
            .iter()
            .map(|f| {
                [
                    String::from(kb.entity_surface(f.head)),
                    String::from(kb.relation_surface(f.predicate)),
                    String::from(kb.entity_surface(f.tail)),
                ]
            })
            .collect();
        pairs.push(QAPair {
            qid: qid.clone(),
            question,
            answer: String::from(kb.entity_surface(here)),
            seeds: Some(alloc::vec![String::from(kb.entity_surface(seed_entity))]),
            path: Some(path_surfaces),
        });
        oracle_links.push((qid, alloc::vec![seed_entity]));
        gold_paths.push(path);
    }
    let provenance = Provenance {
        name: format!(
            "synthetic-e{}-r{}-d{}-q{}-b{}-s{}",
            spec.n_entities, spec.n_relations, spec.depth, spec.n_questions, spec.branching, spec.seed
        ),
        split_spec: String::from("8:1:1"),
        converter_version: String::from("synth-1"),
    };
    let bundle = DatasetBundle::new(kb, pairs, provenance)?;
    Ok(SynthOutput { bundle, oracle_links, gold_paths })
}

/// Every entity reachable from `start` by following `relations` in order.
pub fn follow_relations(kb: &KnowledgeBase, start: EntityId, relations: &[RelationId]) -> BTreeSet<EntityId> {
    let mut frontier = BTreeSet::from([start]);
    for &r in relations {
        frontier = frontier
            .iter()
            .flat_map(|&e| kb.neighbors(e).unwrap_or(&[]).iter().filter(move |(p, _)| *p == r).map(|&(_, t)| t))
            .collect();
    }
    frontier
}
