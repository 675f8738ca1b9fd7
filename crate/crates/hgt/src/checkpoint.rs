//! Binary parameter container: 8-byte magic, little-endian `u64` header
//! length, JSON header, then every tensor as row-major little-endian `f64`.

use std::path::Path;

use hgt_core::kb::{EntityId, KnowledgeBase};
use hgt_core::model::{ModelParams, Vocab};
use hgt_core::tensor::Matrix;
use hgt_core::train::AnswerSpace;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{io_err, Error, Result};

pub const MAGIC: &[u8; 8] = b"HGTCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabHeader {
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub dtype: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    pub tensors: Vec<TensorInfo>,
    pub vocab: VocabHeader,
    /// Answer surfaces in logit order.
    pub answers: Vec<String>,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub values: Vec<Matrix>,
}

impl Checkpoint {
    pub fn from_model(
        params: &ModelParams,
        vocab: &Vocab,
        answers: &AnswerSpace,
        kb: &KnowledgeBase,
        config: &RunConfig,
        best_epoch: usize,
    ) -> Self {
        let mut cfg = config.clone();
        // Paths are run-local; keep only what determines the model.
        cfg.bundle = None;
        cfg.vectors = None;
        cfg.out_dir = None;
        let tensors = params.store.iter().map(|(n, m)| TensorInfo { name: n.to_string(), shape: [m.rows(), m.cols()] }).collect();
        let header = CheckpointHeader {
            dtype: "f64-le".into(),
            seed: config.train.seed,
            config_hash: config.config_hash(),
            config: cfg,
            tensors,
            vocab: VocabHeader {
                entities: vocab.entity_surfaces().to_vec(),
                relations: vocab.relation_surfaces().to_vec(),
                words: vocab.word_surfaces(),
            },
            answers: answers.answers().iter().map(|&e| kb.entity_surface(e).to_string()).collect(),
            best_epoch,
        };
        Self { header, values: params.store.iter().map(|(_, m)| m.clone()).collect() }
    }

    pub fn payload_bytes(&self) -> Vec<u8> {
        let n: usize = self.values.iter().map(|m| m.data().len()).sum();
        let mut out = Vec::with_capacity(n * 8);
        for m in &self.values {
            for x in m.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&self.payload_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic bytes"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let header_end = 16usize.checked_add(len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[16..header_end]).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if header.dtype != "f64-le" {
            return Err(Error::Checkpoint(format!("unsupported dtype {}", header.dtype)));
        }
        let mut pos = header_end;
        let mut values = Vec::with_capacity(header.tensors.len());
        for t in &header.tensors {
            let [r, c] = t.shape;
            let end = pos + r * c * 8;
            if end > bytes.len() {
                return Err(Error::Checkpoint(format!("payload truncated in {}", t.name)));
            }
            let data = bytes[pos..end].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
            values.push(Matrix::from_vec(r, c, data)?);
            pos = end;
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self { header, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(io_err(path))?)
    }

    pub fn vocab(&self) -> Vocab {
        let v = &self.header.vocab;
        Vocab::from_parts(v.entities.clone(), v.relations.clone(), v.words.clone())
    }

    /// Rebuild the model, its vocabulary and answer space.
    pub fn restore(&self) -> Result<(ModelParams, Vocab, AnswerSpace)> {
        let vocab = self.vocab();
        let position = |s: &str| self.header.vocab.entities.iter().position(|e| e == s);
        let mut answers = Vec::with_capacity(self.header.answers.len());
        for a in &self.header.answers {
            let id = position(a).ok_or_else(|| Error::Checkpoint(format!("answer {a:?} is not in the entity vocabulary")))?;
            answers.push(EntityId(id as u32));
        }
        let answers = AnswerSpace::new(answers);
        let embedding_at = self.header.tensors.iter().position(|t| t.name == "embedding");
        let embedding = embedding_at.map(|i| self.values[i].clone()).ok_or_else(|| Error::Checkpoint("no embedding tensor".into()))?;
        let model_cfg = self.header.config.experiment().resolved_model();
        let mut params = ModelParams::new(model_cfg, embedding, answers.candidate_rows(&vocab))?;
        let named = self.header.tensors.iter().map(|t| t.name.clone()).zip(self.values.iter().cloned()).collect();
        params.store.load_values(named)?;
        Ok((params, vocab, answers))
    }

    /// The dataset KB must list the same entities and relations in the same order.
    pub fn check_vocab(&self, kb: &KnowledgeBase) -> Result<()> {
        let v = &self.header.vocab;
        let ents: Vec<&str> = kb.entities().iter().map(|(_, s)| s).collect();
        let rels: Vec<&str> = kb.relations().iter().map(|(_, s)| s).collect();
        if ents.len() != v.entities.len() || ents.iter().zip(&v.entities).any(|(a, b)| a != b) {
            return Err(Error::VocabMismatch(format!("{} dataset entities vs {} in checkpoint", ents.len(), v.entities.len())));
        }
        if rels.len() != v.relations.len() || rels.iter().zip(&v.relations).any(|(a, b)| a != b) {
            return Err(Error::VocabMismatch(format!("{} dataset relations vs {} in checkpoint", rels.len(), v.relations.len())));
        }
        Ok(())
    }
}
