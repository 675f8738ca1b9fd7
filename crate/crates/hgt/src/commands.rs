//! One function per CLI subcommand. Each writes its artifacts plus a
//! manifest into the output directory and returns a JSON summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hgt_core::dataset::{synth_generate, DatasetBundle, SynthSpec};
use hgt_core::hypergraph::knowledge_walks;
use hgt_core::kb::KnowledgeBase;
use hgt_core::linker::Linker;
use hgt_core::model::{InputFormat, WordVectors};
use hgt_core::text::tokenize;
use hgt_core::train::{
    ablate, finish_report, gold_attention_hit, mean_accuracy, predict_traced, prepare_examples, question_hypergraph, run_experiment,
    split_dataset, EpochReport, EvalReport, ExperimentResult, Prepared, TrainObserver,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::score_sharded;
use crate::formats::{ensure_dir, load_bundle, load_kb, load_word_vectors, write_bundle, write_text};
use crate::outputs::*;

/// Prints one line per epoch to stderr and records wall time.
#[derive(Default)]
pub struct EpochLog {
    start: Option<Instant>,
    pub epoch_secs: Vec<f64>,
    pub quiet: bool,
}

impl TrainObserver for EpochLog {
    fn on_epoch(&mut self, r: &EpochReport) {
        let now = Instant::now();
        let start = self.start.replace(now).unwrap_or(now);
        let secs = now.duration_since(start).as_secs_f64();
        self.epoch_secs.push(secs);
        if !self.quiet {
            eprintln!("epoch {:>3}  lr {:.2e}  loss {:.4}  val@1 {:.4}", r.epoch, r.lr, r.mean_loss, r.validation_accuracy);
        }
    }
}

impl EpochLog {
    /// Call right before training starts so the first epoch is timed correctly.
    pub fn started() -> Self {
        Self { start: Some(Instant::now()), ..Self::default() }
    }
}

fn finish(out: &Path, command: &str, hash: String, start: Instant, epoch_secs: Vec<f64>, artifacts: &[&str]) -> Result<()> {
    let manifest = Manifest::new(command, hash, start.elapsed(), epoch_secs, artifacts);
    write_json(&out.join(MANIFEST_FILE), &manifest)
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("missing input: {what}")))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    ensure_dir(cfg.out_dir.as_deref().unwrap_or(Path::new("hgt-out")))
}

pub fn load_vectors(cfg: &RunConfig) -> Result<Option<WordVectors>> {
    cfg.vectors.as_deref().map(|p| load_word_vectors(p, cfg.model.w)).transpose()
}

pub fn kb_stats(cfg: &RunConfig, kb_path: &Path) -> Result<Value> {
    let start = Instant::now();
    let kb = load_kb(kb_path, cfg.add_inverse)?;
    let s = kb.stats();
    let summary = json!({
        "entities": s.entities,
        "relations": s.relations,
        "facts": s.facts,
        "duplicates_dropped": s.duplicates_dropped,
        "facts_per_relation": relation_histogram(&kb),
    });
    let out = out_dir(cfg)?;
    write_json(&out.join("kb_stats.json"), &summary)?;
    finish(&out, "kb stats", cfg.config_hash(), start, Vec::new(), &["kb_stats.json"])?;
    Ok(summary)
}

pub fn link(cfg: &RunConfig) -> Result<Value> {
    let start = Instant::now();
    let bundle = load_bundle(required(&cfg.bundle, "--bundle")?, cfg.add_inverse)?;
    let linker = Linker::new(&bundle.kb);
    let mut records = Vec::with_capacity(bundle.pairs.len());
    let mut recall_hits = 0usize;
    let mut with_seeds = 0usize;
    for p in &bundle.pairs {
        let link = linker.link(&tokenize(&p.question));
        if let Some(gold) = &p.seeds {
            with_seeds += 1;
            let found: Vec<&str> = link.seeds.iter().map(|&e| bundle.kb.entity_surface(e)).collect();
            if gold.iter().all(|g| found.contains(&g.as_str())) {
                recall_hits += 1;
            }
        }
        records.push(LinkRecord::new(&p.qid, &bundle.kb, &link));
    }
    let out = out_dir(cfg)?;
    write_json_lines(&out.join("links.jsonl"), &records)?;
    let unlinked = records.iter().filter(|r| r.seeds.is_empty()).count();
    let recall = (with_seeds > 0).then(|| recall_hits as f64 / with_seeds as f64);
    let summary = json!({ "questions": records.len(), "unlinked": unlinked, "seed_recall": recall });
    finish(&out, "link", cfg.config_hash(), start, Vec::new(), &["links.jsonl"])?;
    Ok(summary)
}

/// Walks from explicit entities (`from`) or the hypergraph pair of every question in the bundle.
pub fn walk(cfg: &RunConfig, kb_path: Option<&Path>, from: &[String]) -> Result<Value> {
    let start = Instant::now();
    let hg = &cfg.task.hypergraph;
    let out = out_dir(cfg)?;
    if !from.is_empty() {
        let kb_path = kb_path.ok_or_else(|| Error::Config("missing input: --kb".into()))?;
        let kb = load_kb(kb_path, cfg.add_inverse)?;
        let seeds = from
            .iter()
            .map(|s| kb.entity(s).ok_or_else(|| Error::Config(format!("unknown entity {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut edges = knowledge_walks(&kb, &seeds, hg.n_hops, hg.allow_revisit)?;
        if hg.exact_hops {
            edges.retain(|e| e.hops == hg.n_hops);
        }
        let records: Vec<EdgeRecord> = edges.iter().map(|e| EdgeRecord::new(&kb, e, None)).collect();
        write_json_lines(&out.join("walks.jsonl"), &records)?;
        finish(&out, "walk", cfg.config_hash(), start, Vec::new(), &["walks.jsonl"])?;
        return Ok(json!({ "seeds": from, "hyperedges": records.len() }));
    }
    let bundle = load_bundle(required(&cfg.bundle, "--bundle or --from")?, cfg.add_inverse)?;
    let vocab = hgt_core::train::build_vocab(&bundle.kb, &bundle.pairs);
    #[derive(Serialize)]
    struct PairRecord {
        qid: String,
        seeds: Vec<String>,
        question_edges: Vec<EdgeRecord>,
        knowledge_edges: Vec<EdgeRecord>,
        capped: (bool, bool),
    }
    let kb = &bundle.kb;
    let linker = Linker::new(kb);
    let mut records = Vec::with_capacity(bundle.pairs.len());
    for p in &bundle.pairs {
        let (pair, _) = question_hypergraph(kb, &linker, p, &vocab, &cfg.task)?;
        records.push(PairRecord {
            qid: p.qid.clone(),
            seeds: pair.seed_entities.iter().map(|&e| kb.entity_surface(e).to_string()).collect(),
            question_edges: pair.question_edges.iter().map(|e| EdgeRecord::new(kb, e, Some(&vocab))).collect(),
            knowledge_edges: pair.knowledge_edges.iter().map(|e| EdgeRecord::new(kb, e, Some(&vocab))).collect(),
            capped: pair.caps_applied,
        });
    }
    write_json_lines(&out.join("hypergraphs.jsonl"), &records)?;
    let edges: usize = records.iter().map(|r| r.knowledge_edges.len()).sum();
    finish(&out, "walk", cfg.config_hash(), start, Vec::new(), &["hypergraphs.jsonl"])?;
    Ok(json!({ "questions": records.len(), "knowledge_hyperedges": edges }))
}

pub fn synth(cfg: &RunConfig, spec: &SynthSpec) -> Result<Value> {
    let start = Instant::now();
    let generated = synth_generate(spec)?;
    let out = out_dir(cfg)?;
    write_bundle(&out, &generated.bundle, Some(&generated.oracle_links))?;
    let b = &generated.bundle;
    finish(&out, "synth", cfg.config_hash(), start, Vec::new(), &["kb.tsv", "qa.jsonl", "links.tsv", "meta.json"])?;
    Ok(json!({ "name": b.provenance.name, "facts": b.kb.facts().len(), "questions": b.pairs.len() }))
}

/// Training result plus the checkpoint built from it.
pub struct TrainRun {
    pub result: ExperimentResult,
    pub checkpoint: Checkpoint,
    pub epoch_secs: Vec<f64>,
}

pub fn train_bundle(cfg: &RunConfig, bundle: &DatasetBundle, vectors: Option<&WordVectors>, quiet: bool) -> Result<TrainRun> {
    cfg.validate()?;
    let mut log = EpochLog { quiet, ..EpochLog::started() };
    let result = run_experiment(bundle, vectors, &cfg.experiment(), &mut log)?;
    let o = &result.outcome;
    let checkpoint = Checkpoint::from_model(&o.params, &result.vocab, &result.answers, &bundle.kb, cfg, o.best_epoch);
    Ok(TrainRun { result, checkpoint, epoch_secs: log.epoch_secs })
}

pub fn train(cfg: &RunConfig) -> Result<Value> {
    let start = Instant::now();
    let bundle = load_bundle(required(&cfg.bundle, "--bundle")?, cfg.add_inverse)?;
    let vectors = load_vectors(cfg)?;
    let run = train_bundle(cfg, &bundle, vectors.as_ref(), false)?;
    let out = out_dir(cfg)?;
    let r = &run.result;
    let metrics = MetricsFile::new(&r.test, Some(r.outcome.best_epoch), &r.outcome.history);
    run.checkpoint.save(&out.join(CHECKPOINT_FILE))?;
    write_json(&out.join(METRICS_FILE), &metrics)?;
    write_text(&out.join(PREDICTIONS_FILE), &predictions_tsv(&r.test, &bundle.kb))?;
    cfg.save(&out.join(CONFIG_FILE))?;
    write_json(&out.join("coverage.json"), &r.coverage)?;
    let artifacts = [CHECKPOINT_FILE, METRICS_FILE, PREDICTIONS_FILE, CONFIG_FILE, "coverage.json"];
    finish(&out, "train", cfg.config_hash(), start, run.epoch_secs, &artifacts)?;
    Ok(json!({
        "accuracy_at_1": metrics.accuracy_at_1,
        "accuracy_at_3": metrics.accuracy_at_3,
        "best_epoch": r.outcome.best_epoch,
        "skipped_train": r.skipped_train,
        "checkpoint": out.join(CHECKPOINT_FILE),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Validation,
    Test,
    All,
}

/// Rebuild one split of `bundle` exactly as training saw it and encode it.
pub fn prepare_split(ckpt: &Checkpoint, bundle: &DatasetBundle, split: SplitName) -> Result<(Prepared, hgt_core::model::ModelParams, hgt_core::train::AnswerSpace, hgt_core::model::Vocab)> {
    ckpt.check_vocab(&bundle.kb)?;
    let (params, vocab, answers) = ckpt.restore()?;
    let c = &ckpt.header.config;
    let pairs = match split {
        SplitName::All => bundle.pairs.clone(),
        s => {
            let parts = split_dataset(&bundle.pairs, c.train.split, c.train.seed)?;
            match s {
                SplitName::Train => parts.train,
                SplitName::Validation => parts.validation,
                _ => parts.test,
            }
        }
    };
    let model_cfg = c.experiment().resolved_model();
    let data = prepare_examples(&bundle.kb, &pairs, &vocab, &answers, &c.task, &model_cfg)?;
    Ok((data, params, answers, vocab))
}

pub fn eval_checkpoint(ckpt: &Checkpoint, bundle: &DatasetBundle, split: SplitName, workers: usize) -> Result<EvalReport> {
    let (data, params, answers, _) = prepare_split(ckpt, bundle, split)?;
    let preds = score_sharded(&params, &data.examples, &answers, workers)?;
    Ok(finish_report(preds, &data))
}

fn load_checkpoint_and_bundle(cfg: &RunConfig, checkpoint: &Path) -> Result<(Checkpoint, DatasetBundle)> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let bundle = load_bundle(required(&cfg.bundle, "--bundle")?, ckpt.header.config.add_inverse)?;
    Ok((ckpt, bundle))
}

pub fn eval(cfg: &RunConfig, checkpoint: &Path, split: SplitName) -> Result<Value> {
    let start = Instant::now();
    let (ckpt, bundle) = load_checkpoint_and_bundle(cfg, checkpoint)?;
    let report = eval_checkpoint(&ckpt, &bundle, split, cfg.workers)?;
    let out = out_dir(cfg)?;
    let metrics = MetricsFile::new(&report, Some(ckpt.header.best_epoch), &[]);
    write_json(&out.join(METRICS_FILE), &metrics)?;
    write_text(&out.join(PREDICTIONS_FILE), &predictions_tsv(&report, &bundle.kb))?;
    finish(&out, "eval", ckpt.header.config_hash.clone(), start, Vec::new(), &[METRICS_FILE, PREDICTIONS_FILE])?;
    Ok(serde_json::to_value(&metrics).expect("metrics serialize"))
}

pub fn ablate_cmd(cfg: &RunConfig) -> Result<Value> {
    let start = Instant::now();
    cfg.validate()?;
    let bundle = load_bundle(required(&cfg.bundle, "--bundle")?, cfg.add_inverse)?;
    let vectors = load_vectors(cfg)?;
    let inputs = [InputFormat::HYPEREDGE, InputFormat::WORD_UNIT];
    let mut log = EpochLog::started();
    let rows = ablate(&bundle, vectors.as_ref(), &cfg.experiment(), &inputs, &cfg.ablation_seeds, &mut log)?;
    let summary = json!({
        "rows": rows,
        "mean_accuracy_at_1": {
            "hyperedge": mean_accuracy(&rows, InputFormat::HYPEREDGE),
            "word_unit": mean_accuracy(&rows, InputFormat::WORD_UNIT),
        },
    });
    let out = out_dir(cfg)?;
    write_json(&out.join("ablation.json"), &summary)?;
    finish(&out, "ablate", cfg.config_hash(), start, log.epoch_secs, &["ablation.json"])?;
    Ok(summary)
}

/// Share of correctly answered questions whose most-attended knowledge
/// hyperedge is the gold walk, over those where the gold walk was present.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GoldAttention {
    pub correct: usize,
    pub scored: usize,
    pub hits: usize,
    pub rate: Option<f64>,
}

pub fn gold_attention(ckpt: &Checkpoint, bundle: &DatasetBundle, split: SplitName) -> Result<GoldAttention> {
    let (data, params, answers, _) = prepare_split(ckpt, bundle, split)?;
    let by_qid: BTreeMap<&str, _> = bundle.pairs.iter().map(|p| (p.qid.as_str(), p)).collect();
    let mut g = GoldAttention::default();
    for ex in &data.examples {
        let (logits, trace) = predict_traced(&params, ex)?;
        let best = (0..logits.len()).max_by(|&a, &b| logits[a].total_cmp(&logits[b]).then(b.cmp(&a)));
        if best.map(|i| answers.answers()[i]) != Some(ex.answer) {
            continue;
        }
        g.correct += 1;
        let Some(path) = by_qid.get(ex.qid.as_str()).and_then(|p| bundle.gold_path(p)) else { continue };
        if let Some(hit) = gold_attention_hit(ex, &trace, &path) {
            g.scored += 1;
            g.hits += usize::from(hit);
        }
    }
    g.rate = (g.scored > 0).then(|| g.hits as f64 / g.scored as f64);
    Ok(g)
}

pub fn trace(cfg: &RunConfig, checkpoint: &Path, split: SplitName, qids: &[String], limit: usize, pgm: bool) -> Result<Value> {
    let start = Instant::now();
    let (ckpt, bundle) = load_checkpoint_and_bundle(cfg, checkpoint)?;
    let (data, params, _, vocab) = prepare_split(&ckpt, &bundle, split)?;
    let chosen: Vec<_> = if qids.is_empty() {
        data.examples.iter().take(limit).collect()
    } else {
        let missing: Vec<&String> = qids.iter().filter(|q| !data.examples.iter().any(|e| &e.qid == *q)).collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!("questions not encodable in this split: {missing:?}")));
        }
        data.examples.iter().filter(|e| qids.contains(&e.qid)).collect()
    };
    let mut records = Vec::new();
    for ex in chosen {
        let (_, t) = predict_traced(&params, ex)?;
        records.extend(trace_records(ex, &t, &vocab));
    }
    let out = out_dir(cfg)?;
    let path = out.join(TRACE_FILE);
    write_json_lines(&path, &records)?;
    // Re-read what was written so a malformed export fails here, not downstream.
    let loaded = load_traces(&path, 1e-9)?;
    let mut artifacts = vec![TRACE_FILE.to_string()];
    if pgm {
        for r in &loaded {
            let name = format!("{}_{}.pgm", r.qid, r.direction.as_str());
            std::fs::write(out.join(&name), heatmap_pgm(&r.matrix, 8)).map_err(crate::error::io_err(&out.join(&name)))?;
            artifacts.push(name);
        }
    }
    let gold = gold_attention(&ckpt, &bundle, split)?;
    write_json(&out.join("gold_attention.json"), &gold)?;
    artifacts.push("gold_attention.json".into());
    let names: Vec<&str> = artifacts.iter().map(String::as_str).collect();
    finish(&out, "trace", ckpt.header.config_hash.clone(), start, Vec::new(), &names)?;
    Ok(json!({ "records": loaded.len(), "gold_attention": gold }))
}

/// Answer surfaces for `kb`; used by tests that compare predictions.
pub fn entity_surfaces(kb: &KnowledgeBase) -> Vec<String> {
    kb.entities().iter().map(|(_, s)| s.to_string()).collect()
}
