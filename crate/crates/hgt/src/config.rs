use std::path::{Path, PathBuf};

use hgt_core::model::{InputFormat, ModelConfig, PredictorKind};
use hgt_core::train::{ExperimentConfig, TaskConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{json_err, Error, Result};
use crate::formats::read_text;

/// Everything a run needs. Unknown keys are rejected when parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub task: TaskConfig,
    /// Add a reverse fact `(t, "r inverse", h)` for every fact when loading a KB.
    pub add_inverse: bool,
    pub bundle: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub workers: usize,
    pub ablation_seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            task: TaskConfig::default(),
            add_inverse: false,
            bundle: None,
            vectors: None,
            out_dir: None,
            workers: 1,
            ablation_seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

/// The part of a [`RunConfig`] that determines results.
#[derive(Serialize)]
struct Hashed<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    task: &'a TaskConfig,
    add_inverse: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(json_err(path))?;
        crate::formats::write_text(path, &(text + "\n"))
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig { model: self.model.clone(), train: self.train.clone(), task: self.task.clone() }
    }

    /// Hex SHA-256 of the result-determining fields (paths and worker count excluded).
    pub fn config_hash(&self) -> String {
        let h = Hashed { model: &self.model, train: &self.train, task: &self.task, add_inverse: self.add_inverse };
        let bytes = serde_json::to_vec(&h).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let hops = self.task.hypergraph.n_hops;
        if !(1..=3).contains(&hops) {
            return Err(Error::Config(format!("hops must be 1, 2 or 3, got {hops}")));
        }
        if self.task.hypergraph.max_n == 0 {
            return Err(Error::Config("max n-gram size must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        self.experiment().resolved_model().validate()?;
        self.train.validate()?;
        Ok(())
    }
}

/// Flag overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub hops: Option<usize>,
    pub max_ngram: Option<usize>,
    pub predictor: Option<PredictorKind>,
    pub pos_emb: Option<bool>,
    pub exact_hops: bool,
    pub add_inverse: bool,
    pub seed: Option<u64>,
    pub cap: Option<usize>,
    pub mode: Option<InputFormat>,
    pub workers: Option<usize>,
    pub epochs: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let hg = &mut cfg.task.hypergraph;
        if let Some(h) = self.hops {
            hg.n_hops = h;
        }
        if let Some(n) = self.max_ngram {
            hg.max_n = n;
        }
        if self.exact_hops {
            hg.exact_hops = true;
        }
        if let Some(c) = self.cap {
            hg.knowledge_cap = Some(c);
        }
        if let Some(s) = self.seed {
            hg.cap_seed = s;
            cfg.train.seed = s;
            cfg.model.init_seed = s;
        }
        if let Some(p) = self.predictor {
            cfg.model.predictor = p;
        }
        if let Some(p) = self.pos_emb {
            cfg.model.positional_embeddings = p;
        }
        if let Some(m) = self.mode {
            cfg.model.input = m;
            if m.has_word_units() && self.pos_emb.is_none() {
                cfg.model.positional_embeddings = true;
            }
        }
        if self.add_inverse {
            cfg.add_inverse = true;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"model": {"w": 8}}"#).is_ok());
        assert!(matches!(RunConfig::from_json(r#"{"modle": {}}"#), Err(Error::Config(_))));
        assert!(RunConfig::from_json(r#"{"model": {"width": 8}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"task": {"hypergraph": {"hops": 2}}}"#).is_err());
    }

    #[test]
    fn hash_ignores_paths() {
        let a = RunConfig::default();
        let b = RunConfig { out_dir: Some("x".into()), workers: 4, ..RunConfig::default() };
        assert_eq!(a.config_hash(), b.config_hash());
        let c = RunConfig { add_inverse: true, ..RunConfig::default() };
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn seed_flag_sets_every_seed() {
        let mut c = RunConfig::default();
        Overrides { seed: Some(9), ..Default::default() }.apply(&mut c);
        assert_eq!((c.train.seed, c.model.init_seed, c.task.hypergraph.cap_seed), (9, 9, 9));
    }

    #[test]
    fn word_units_default_to_positions() {
        let mut c = RunConfig::default();
        c.model.positional_embeddings = false;
        Overrides { mode: Some(InputFormat::WORD_UNIT), ..Default::default() }.apply(&mut c);
        assert!(c.model.positional_embeddings);
        Overrides { mode: Some(InputFormat::WORD_UNIT), pos_emb: Some(false), ..Default::default() }.apply(&mut c);
        assert!(!c.model.positional_embeddings);
    }
}
