use std::path::{Path, PathBuf};

use evigraph::reasoner::{Mode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;

/// Everything a pipeline run needs. Defaults are the full-scale settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub claims: PathBuf,
    /// Claims to predict and score. The training claims (before
    /// augmentation) when absent.
    pub test_claims: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Overrides `train.mode`.
    pub mode: Mode,
    pub retrieval_k: usize,
    pub max_cells: usize,
    pub max_sentences: usize,
    pub mtl_nodes: usize,
    /// Recorded for parity with transformer providers; the hash provider
    /// ignores it.
    pub max_sequence_length: usize,
    pub provider: ProviderSpec,
    /// `mode` and `input_dim` are taken from the top level and the provider.
    pub train: TrainConfig,
    pub augmentation: AugmentationSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("corpus.jsonl"),
            claims: PathBuf::from("claims.jsonl"),
            test_claims: None,
            output_dir: PathBuf::from("out"),
            mode: Mode::Stl,
            retrieval_k: evigraph::retrieval::DEFAULT_K,
            max_cells: evigraph::evidence::MAX_CELLS,
            max_sentences: evigraph::evidence::MAX_SENTENCES,
            mtl_nodes: evigraph::evidence::MTL_NODES,
            max_sequence_length: 512,
            provider: ProviderSpec::default(),
            train: TrainConfig::default(),
            augmentation: AugmentationSettings::default(),
        }
    }
}

/// Where node features and evidence scores come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProviderSpec {
    /// Feature hashing: one provider for claim–evidence pairs, one scorer
    /// per seed in `score_seeds`.
    Hash {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        pair_seed: u64,
        #[serde(default = "default_score_seeds")]
        score_seeds: Vec<u64>,
    },
    /// Precomputed vector files.
    Vectors {
        dim: usize,
        pair_file: PathBuf,
        score_files: Vec<PathBuf>,
    },
}

fn default_dim() -> usize {
    evigraph::embedding::DEFAULT_DIM
}

fn default_score_seeds() -> Vec<u64> {
    vec![1, 2]
}

impl Default for ProviderSpec {
    fn default() -> Self {
        ProviderSpec::Hash {
            dim: default_dim(),
            pair_seed: 0,
            score_seeds: default_score_seeds(),
        }
    }
}

impl ProviderSpec {
    pub fn dim(&self) -> usize {
        match self {
            ProviderSpec::Hash { dim, .. } | ProviderSpec::Vectors { dim, .. } => *dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSettings {
    pub reduction: usize,
    pub mutation: usize,
    pub seed: u64,
    /// Substitution lexicon (TSV); the bundled one when absent.
    pub lexicon: Option<PathBuf>,
}

impl Default for AugmentationSettings {
    fn default() -> Self {
        Self {
            reduction: 15_000,
            mutation: 5_946,
            seed: 0,
            lexicon: None,
        }
    }
}

/// Keys holding paths, resolved against the config file's directory.
const PATH_KEYS: &[&str] = &[
    "corpus",
    "claims",
    "test_claims",
    "output_dir",
    "provider.pair_file",
    "provider.score_files",
    "augmentation.lexicon",
];

fn config_error(message: impl std::fmt::Display) -> PipelineError {
    PipelineError::config("config", message)
}

/// Parse a `KEY=VALUE` override. The value is read as a TOML value and
/// falls back to a plain string.
pub fn parse_override(s: &str) -> Result<(String, toml::Value), PipelineError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| config_error(format!("override {s:?} is not KEY=VALUE")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(config_error(format!("override {s:?} has an empty key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), PipelineError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_error(format!("{key}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn get_dotted_mut<'a>(table: &'a mut toml::Table, key: &str) -> Option<&'a mut toml::Value> {
    let mut parts = key.split('.');
    let mut cur = table.get_mut(parts.next()?)?;
    for p in parts {
        cur = cur.as_table_mut()?.get_mut(p)?;
    }
    Some(cur)
}

fn resolve_paths(table: &mut toml::Table, base: &Path) {
    let join = |v: &mut toml::Value| {
        if let toml::Value::String(s) = v {
            if Path::new(s.as_str()).is_relative() {
                *s = base.join(s.as_str()).to_string_lossy().into_owned();
            }
        }
    };
    for key in PATH_KEYS {
        match get_dotted_mut(table, key) {
            Some(toml::Value::Array(items)) => items.iter_mut().for_each(join),
            Some(v) => join(v),
            None => {}
        }
    }
}

impl PipelineConfig {
    /// Build a config from an optional file plus dotted-key overrides, which
    /// win over the file. Relative paths in the file are taken relative to
    /// the file; relative override paths stay relative to the working
    /// directory.
    pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self, PipelineError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_error(format!("{}: {e}", p.display())))?;
                let mut t: toml::Table =
                    toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
                let base = p.parent().unwrap_or(Path::new("."));
                resolve_paths(&mut t, base);
                t
            }
            None => toml::Table::new(),
        };
        for (key, value) in overrides {
            set_dotted(&mut table, key, value.clone())?;
        }
        // the hash provider is the default kind
        if let Some(toml::Value::Table(p)) = table.get_mut("provider") {
            p.entry("kind").or_insert_with(|| toml::Value::String("hash".into()));
        }
        let mut cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_error(e.to_string()))?;
        cfg.sync();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Push top-level settings into the training section.
    pub fn sync(&mut self) {
        self.train.mode = self.mode;
        self.train.input_dim = self.provider.dim();
    }

    /// Checks values and that every input file exists. Runs before any
    /// stage does work.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut inputs: Vec<(&str, &Path)> = vec![("corpus", &self.corpus), ("claims", &self.claims)];
        if let Some(p) = &self.test_claims {
            inputs.push(("test_claims", p));
        }
        if let Some(p) = &self.augmentation.lexicon {
            inputs.push(("augmentation.lexicon", p));
        }
        if let ProviderSpec::Vectors {
            pair_file, score_files, ..
        } = &self.provider
        {
            inputs.push(("provider.pair_file", pair_file));
            inputs.extend(score_files.iter().map(|p| ("provider.score_files", p.as_path())));
        }
        for (key, p) in inputs {
            if !p.is_file() {
                return Err(config_error(format!("{key}: no such file {}", p.display())));
            }
        }
        if self.retrieval_k == 0 || self.max_sequence_length == 0 {
            return Err(config_error("retrieval_k and max_sequence_length must be positive"));
        }
        if self.max_cells + self.max_sentences == 0 || self.mtl_nodes == 0 {
            return Err(config_error("evidence caps leave no room for nodes"));
        }
        match &self.provider {
            ProviderSpec::Hash { dim, score_seeds, .. } => {
                if *dim < 2 {
                    return Err(config_error("provider.dim must be at least 2"));
                }
                if score_seeds.is_empty() {
                    return Err(config_error("provider.score_seeds is empty"));
                }
            }
            ProviderSpec::Vectors { score_files, dim, .. } => {
                if score_files.is_empty() || *dim == 0 {
                    return Err(config_error("provider needs a positive dim and at least one score file"));
                }
            }
        }
        self.train
            .validate()
            .map_err(|e| config_error(e.to_string()))
    }

    /// Claims scored at prediction time.
    pub fn test_claims_path(&self) -> &Path {
        self.test_claims.as_deref().unwrap_or(&self.claims)
    }
}
