//! Run artifacts: predictions, metrics, manifests and attention traces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use hgt_core::hypergraph::{Hyperedge, NodeKind, NodeToken};
use hgt_core::kb::KnowledgeBase;
use hgt_core::model::{AttentionTrace, Direction, HyperedgeBatch, Vocab};
use hgt_core::tensor::Matrix;
use hgt_core::train::{EpochReport, EvalReport, Example};
use hgt_core::LinkResult;
use serde::{Deserialize, Serialize};

use crate::error::{json_err, Error, Result};
use crate::formats::{read_text, write_text};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CONFIG_FILE: &str = "config.json";
pub const TRACE_FILE: &str = "trace.jsonl";

/// Serialize as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    write_text(path, &(text + "\n"))
}

pub fn write_json_lines<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).map_err(json_err(path))?);
        out.push('\n');
    }
    write_text(path, &out)
}

/// `qid  gold  pred  correct`, one row per question; `pred` is empty for skipped questions.
pub fn predictions_tsv(report: &EvalReport, kb: &KnowledgeBase) -> String {
    let mut out = String::from("qid\tgold\tpred\tcorrect\n");
    for p in &report.predictions {
        let pred = p.top.first().map(|&e| kb.entity_surface(e)).unwrap_or("");
        let _ = writeln!(out, "{}\t{}\t{}\t{}", p.qid, kb.entity_surface(p.gold), pred, u8::from(p.correct));
    }
    out
}

/// Everything a run reports that must be byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub accuracy_at_1: f64,
    pub accuracy_at_3: f64,
    pub evaluated: usize,
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<EpochReport>,
}

impl MetricsFile {
    pub fn new(report: &EvalReport, best_epoch: Option<usize>, history: &[EpochReport]) -> Self {
        let m = &report.metrics;
        Self {
            accuracy_at_1: m.accuracy_at_1,
            accuracy_at_3: m.accuracy_at_3,
            evaluated: m.evaluated,
            skipped: m.skipped,
            best_epoch,
            history: history.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub total_secs: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epoch_secs: Vec<f64>,
}

/// Per-run provenance. The only artifact allowed to differ between reruns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_hash: String,
    pub version: String,
    pub revision: String,
    pub timings: Timings,
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: String, elapsed: Duration, epoch_secs: Vec<f64>, artifacts: &[&str]) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            config_hash,
            version: env!("CARGO_PKG_VERSION").to_string(),
            revision: revision(),
            timings: Timings { total_secs: elapsed.as_secs_f64(), epoch_secs },
            artifacts: artifacts.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Current git commit, or `"unknown"` outside a checkout.
pub fn revision() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

pub fn token_surface(kb: &KnowledgeBase, t: NodeToken, vocab: Option<&Vocab>) -> String {
    match (t.kind, vocab) {
        (NodeKind::Entity, _) => kb.entity_surface(hgt_core::EntityId(t.id)).to_string(),
        (NodeKind::Relation, _) => kb.relation_surface(hgt_core::RelationId(t.id)).to_string(),
        (_, Some(v)) => v.surface(t).to_string(),
        (_, None) => format!("<word {}>", t.id),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub hops: usize,
    pub tokens: Vec<String>,
}

impl EdgeRecord {
    pub fn new(kb: &KnowledgeBase, e: &Hyperedge, vocab: Option<&Vocab>) -> Self {
        Self { hops: e.hops, tokens: e.tokens.iter().map(|&t| token_surface(kb, t, vocab)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub qid: String,
    pub seeds: Vec<String>,
    /// Token spans `[start, end)` of each mention.
    pub spans: Vec<(usize, usize)>,
    pub residual: Vec<String>,
}

impl LinkRecord {
    pub fn new(qid: &str, kb: &KnowledgeBase, link: &LinkResult) -> Self {
        Self {
            qid: qid.to_string(),
            seeds: link.seeds.iter().map(|&e| kb.entity_surface(e).to_string()).collect(),
            spans: link.spans.clone(),
            residual: link.residual_tokens.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub qid: String,
    pub direction: Direction,
    /// Rows are queries and columns keys, restricted to real (unpadded) hyperedges.
    pub matrix: Vec<Vec<f64>>,
    pub q_edge_tokens: Vec<Vec<String>>,
    pub k_edge_tokens: Vec<Vec<String>>,
}

fn batch_tokens(batch: &HyperedgeBatch, vocab: &Vocab) -> Vec<Vec<String>> {
    (0..batch.num_edges)
        .filter(|&i| batch.edge_mask[i])
        .map(|i| {
            let lo = i * batch.max_nodes;
            (lo..lo + batch.max_nodes)
                .filter(|&k| batch.node_mask[k])
                .map(|k| vocab.token(batch.token_ids[k]).map(|t| vocab.surface(t).to_string()).unwrap_or_else(|| "<unk>".into()))
                .collect()
        })
        .collect()
}

fn submatrix(m: &Matrix, rows: &[bool], cols: &[bool]) -> Vec<Vec<f64>> {
    (0..m.rows())
        .filter(|&i| rows[i])
        .map(|i| (0..m.cols()).filter(|&j| cols[j]).map(|j| m.get(i, j)).collect())
        .collect()
}

/// One record per direction present in `trace`.
pub fn trace_records(ex: &Example, trace: &AttentionTrace, vocab: &Vocab) -> Vec<TraceRecord> {
    let q_tokens = batch_tokens(&ex.question, vocab);
    let k_tokens = batch_tokens(&ex.knowledge, vocab);
    let (qm, km) = (&ex.question.edge_mask, &ex.knowledge.edge_mask);
    Direction::ALL
        .iter()
        .filter_map(|&dir| {
            let m = trace.export(dir)?;
            let (rows, cols, rt, ct) = match dir {
                Direction::QuestionToKnowledge => (qm, km, &q_tokens, &k_tokens),
                Direction::KnowledgeToQuestion => (km, qm, &k_tokens, &q_tokens),
                Direction::QuestionSelf => (qm, qm, &q_tokens, &q_tokens),
                Direction::KnowledgeSelf => (km, km, &k_tokens, &k_tokens),
            };
            let matrix = submatrix(&m, rows, cols);
            // The token lists are oriented to the matrix: q = rows, k = columns.
            Some(TraceRecord { qid: ex.qid.clone(), direction: dir, matrix, q_edge_tokens: rt.clone(), k_edge_tokens: ct.clone() })
        })
        .collect()
}

/// Every row must be a probability distribution.
pub fn validate_trace(record: &TraceRecord, tol: f64) -> Result<()> {
    let bad = |m: String| Error::Config(format!("trace {} {}: {m}", record.qid, record.direction.as_str()));
    if record.matrix.len() != record.q_edge_tokens.len() {
        return Err(bad(format!("{} rows for {} query edges", record.matrix.len(), record.q_edge_tokens.len())));
    }
    for (i, row) in record.matrix.iter().enumerate() {
        if row.len() != record.k_edge_tokens.len() {
            return Err(bad(format!("row {i} has {} columns for {} key edges", row.len(), record.k_edge_tokens.len())));
        }
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(bad(format!("row {i} has a negative or non-finite entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > tol {
            return Err(bad(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

/// Parse and validate a trace JSON-lines file.
pub fn load_traces(path: &Path, tol: f64) -> Result<Vec<TraceRecord>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: TraceRecord = serde_json::from_str(line)
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })?;
        validate_trace(&rec, tol)?;
        out.push(rec);
    }
    Ok(out)
}

/// Binary greyscale PGM, `cell` pixels per entry, black = 0, white = the matrix maximum.
pub fn heatmap_pgm(matrix: &[Vec<f64>], cell: usize) -> Vec<u8> {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    let max = matrix.iter().flatten().copied().fold(0.0f64, f64::max);
    let (h, w) = (rows * cell, cols * cell);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for i in 0..h {
        for j in 0..w {
            let v = matrix[i / cell][j / cell];
            let g = if max > 0.0 { (v / max * 255.0).round().clamp(0.0, 255.0) } else { 0.0 };
            out.push(g as u8);
        }
    }
    out
}

/// Summary counts printed to stdout by `kb stats`.
pub fn relation_histogram(kb: &KnowledgeBase) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for f in kb.facts() {
        *h.entry(kb.relation_surface(f.predicate).to_string()).or_insert(0) += 1;
    }
    h
}
