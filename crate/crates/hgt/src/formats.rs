//! On-disk carriers: triple TSV, oracle links, QA JSON lines, bundle
//! directories and text word vectors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hgt_core::dataset::{DatasetBundle, Provenance, QAPair};
use hgt_core::kb::{EntityId, KbBuilder, KbError, KnowledgeBase};
use hgt_core::model::WordVectors;

use crate::error::{io_err, json_err, Error, Result};

pub const KB_FILE: &str = "kb.tsv";
pub const QA_FILE: &str = "qa.jsonl";
pub const LINKS_FILE: &str = "links.tsv";
pub const META_FILE: &str = "meta.json";

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// Parse `head<TAB>relation<TAB>tail` lines. Blank lines are skipped;
/// duplicates are dropped and counted.
pub fn parse_kb_tsv(text: &str, path: &Path, add_inverse: bool) -> Result<KnowledgeBase> {
    let mut b = KbBuilder::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, i + 1, format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        b.insert(fields[0], fields[1], fields[2]).map_err(|e| match e {
            KbError::EmptyField { field } => parse_err(path, i + 1, format!("empty {field}")),
            other => Error::Kb(other),
        })?;
    }
    Ok(b.build(add_inverse)?)
}

pub fn load_kb(path: &Path, add_inverse: bool) -> Result<KnowledgeBase> {
    parse_kb_tsv(&read_text(path)?, path, add_inverse)
}

/// Parse `qid<TAB>entity[<TAB>entity...]` lines into seed lists.
pub fn parse_oracle_links(text: &str, path: &Path, kb: &KnowledgeBase) -> Result<BTreeMap<String, Vec<EntityId>>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let qid = fields.next().unwrap_or_default().trim();
        if qid.is_empty() {
            return Err(parse_err(path, i + 1, "empty qid"));
        }
        let mut seeds = Vec::new();
        for surface in fields {
            let e = kb
                .entity(surface)
                .ok_or_else(|| parse_err(path, i + 1, format!("{qid}: unknown entity {surface:?}")))?;
            seeds.push(e);
        }
        if out.insert(qid.to_string(), seeds).is_some() {
            return Err(parse_err(path, i + 1, format!("duplicate qid {qid}")));
        }
    }
    Ok(out)
}

pub fn oracle_links_tsv(kb: &KnowledgeBase, links: &[(String, Vec<EntityId>)]) -> String {
    let mut out = String::new();
    for (qid, seeds) in links {
        out.push_str(qid);
        for s in seeds {
            out.push('\t');
            out.push_str(kb.entity_surface(*s));
        }
        out.push('\n');
    }
    out
}

pub fn parse_qa_jsonl(text: &str, path: &Path) -> Result<Vec<QAPair>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| parse_err(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn qa_jsonl(pairs: &[QAPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&serde_json::to_string(p).expect("QAPair serializes"));
        out.push('\n');
    }
    out
}

/// Load `kb.tsv`, `qa.jsonl` and, when present, `links.tsv` (whose seeds
/// replace the pairs' own) and `meta.json`.
pub fn load_bundle(dir: &Path, add_inverse: bool) -> Result<DatasetBundle> {
    let kb = load_kb(&dir.join(KB_FILE), add_inverse)?;
    let qa_path = dir.join(QA_FILE);
    let mut pairs = parse_qa_jsonl(&read_text(&qa_path)?, &qa_path)?;
    let links_path = dir.join(LINKS_FILE);
    if links_path.exists() {
        let mut links = parse_oracle_links(&read_text(&links_path)?, &links_path, &kb)?;
        for p in &mut pairs {
            if let Some(seeds) = links.remove(&p.qid) {
                p.seeds = Some(seeds.iter().map(|&e| kb.entity_surface(e).to_string()).collect());
            }
        }
        if let Some(qid) = links.keys().next() {
            return Err(Error::Parse { path: links_path, line: 0, message: format!("link for unknown qid {qid}") });
        }
    }
    let meta_path = dir.join(META_FILE);
    let provenance = if meta_path.exists() {
        serde_json::from_str(&read_text(&meta_path)?).map_err(json_err(&meta_path))?
    } else {
        Provenance {
            name: dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            split_spec: "8:1:1".into(),
            converter_version: "unknown".into(),
        }
    };
    Ok(DatasetBundle::new(kb, pairs, provenance)?)
}

pub fn write_bundle(dir: &Path, bundle: &DatasetBundle, links: Option<&[(String, Vec<EntityId>)]>) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_text(&dir.join(KB_FILE), &bundle.kb.to_tsv())?;
    write_text(&dir.join(QA_FILE), &qa_jsonl(&bundle.pairs))?;
    if let Some(links) = links {
        write_text(&dir.join(LINKS_FILE), &oracle_links_tsv(&bundle.kb, links))?;
    }
    let meta = serde_json::to_string_pretty(&bundle.provenance).expect("provenance serializes");
    write_text(&dir.join(META_FILE), &(meta + "\n"))
}

/// Parse `word v1 ... vN` lines; every vector must have `dim` components.
pub fn parse_word_vectors(text: &str, path: &Path, dim: usize) -> Result<WordVectors> {
    let mut out = WordVectors::new(dim);
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| parse_err(path, i + 1, format!("bad number: {e}")))?;
        if values.len() != dim {
            return Err(parse_err(path, i + 1, format!("{word}: {} components, expected {dim}", values.len())));
        }
        out.insert(word, values)?;
    }
    Ok(out)
}

pub fn load_word_vectors(path: &Path, dim: usize) -> Result<WordVectors> {
    parse_word_vectors(&read_text(path)?, path, dim)
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(dir.to_path_buf())
}
