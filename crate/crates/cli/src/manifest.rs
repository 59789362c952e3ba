//! The experiment manifest: one JSON document naming the corpus, suite,
//! models, seeds and analyses of a run. Relative paths are resolved against
//! the manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trajlab::analysis::CorrelationMethod;
use trajlab::eval::{NormPolicy, SuiteFormat};
use trajlab::nlm::{AttentionMode, ModelConfig, TrainConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    /// Text files; give these or `synthetic_corpus`.
    #[serde(default)]
    pub corpus: Vec<PathBuf>,
    #[serde(default)]
    pub synthetic_corpus: Option<SyntheticCorpus>,
    pub vocab_size: usize,
    pub suite: SuiteSpec,
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub ngram_orders: Vec<usize>,
    /// Shared by every neural model; `data_seed` is replaced by each seed.
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub norm: NormPolicy,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub export_format: ExportFormat,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCorpus {
    pub seed: u64,
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    pub path: PathBuf,
    #[serde(default = "default_suite_format")]
    pub format: SuiteFormat,
}

fn default_suite_format() -> SuiteFormat {
    SuiteFormat::BlimpJsonl
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: String,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub seq_len: usize,
    #[serde(default = "default_attention")]
    pub attention: AttentionMode,
    pub seeds: Vec<u64>,
}

fn default_attention() -> AttentionMode {
    AttentionMode::Standard
}

impl ModelSpec {
    pub fn run_id(&self, seed: u64) -> String {
        format!("{}-s{seed}", self.id)
    }

    pub fn config(&self, vocab_size: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            width: self.width,
            layers: self.layers,
            heads: self.heads,
            seq_len: self.seq_len,
            vocab_size,
            attention: self.attention,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    SentenceLength,
    AnnotatedDepth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub k: usize,
    pub seed: u64,
    /// Run to cluster, e.g. `tiny-s1`; defaults to the first run.
    #[serde(default)]
    pub run: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default = "default_method")]
    pub method: CorrelationMethod,
    #[serde(default)]
    pub kappa: bool,
    #[serde(default)]
    pub align: bool,
    #[serde(default)]
    pub cluster: Option<ClusterSpec>,
    #[serde(default)]
    pub metrics: Vec<MetricName>,
    /// `challenge_uid,accuracy` files.
    #[serde(default)]
    pub references: Vec<PathBuf>,
}

fn default_method() -> CorrelationMethod {
    CorrelationMethod::Pearson
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            method: default_method(),
            kappa: false,
            align: false,
            cluster: None,
            metrics: Vec::new(),
            references: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    #[default]
    Csv,
    Json,
}

/// Parses and validates a manifest. Schema errors and missing paths come
/// back as [`CliError::Manifest`] with the offending field path.
pub fn load_manifest(path: &Path) -> Result<ExperimentManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
    parse_manifest(&text, path)
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<ExperimentManifest> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut m: ExperimentManifest = serde_path_to_error::deserialize(de).map_err(|e| CliError::Manifest {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    m.resolve(base);
    m.validate(path)?;
    Ok(m)
}

impl ExperimentManifest {
    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.corpus.iter_mut().for_each(join);
        join(&mut self.suite.path);
        self.analysis.references.iter_mut().for_each(join);
        if let Some(o) = self.output_dir.as_mut() {
            join(o);
        }
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let fail = |field: String, message: String| {
            Err(CliError::Manifest {
                path: path.to_path_buf(),
                field,
                message,
            })
        };
        match (self.corpus.is_empty(), &self.synthetic_corpus) {
            (true, None) => return fail("corpus".into(), "give corpus files or synthetic_corpus".into()),
            (false, Some(_)) => return fail("synthetic_corpus".into(), "conflicts with corpus".into()),
            _ => {}
        }
        for (i, p) in self.corpus.iter().enumerate() {
            if !p.is_file() {
                return fail(format!("corpus[{i}]"), format!("no such file: {}", p.display()));
            }
        }
        if self.vocab_size < 4 {
            return fail("vocab_size".into(), "must be at least 4".into());
        }
        if !self.suite.path.exists() {
            return fail("suite.path".into(), format!("no such path: {}", self.suite.path.display()));
        }
        if self.models.is_empty() && self.ngram_orders.is_empty() {
            return fail("models".into(), "nothing to train: no models and no ngram_orders".into());
        }
        for (i, &n) in self.ngram_orders.iter().enumerate() {
            if !(1..=trajlab::ngram::MAX_ORDER).contains(&n) {
                return fail(
                    format!("ngram_orders[{i}]"),
                    format!("order must be in 1..={}", trajlab::ngram::MAX_ORDER),
                );
            }
        }
        let mut ids = BTreeSet::new();
        for (i, m) in self.models.iter().enumerate() {
            let ok = !m.id.is_empty()
                && m.id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-');
            if !ok {
                return fail(format!("models[{i}].id"), "use letters, digits, '_', '.' or '-'".into());
            }
            if !ids.insert(&m.id) {
                return fail(format!("models[{i}].id"), format!("duplicate id {}", m.id));
            }
            if m.seeds.is_empty() {
                return fail(format!("models[{i}].seeds"), "at least one explicit seed".into());
            }
            if m.seeds.iter().collect::<BTreeSet<_>>().len() != m.seeds.len() {
                return fail(format!("models[{i}].seeds"), "seeds repeat".into());
            }
            if let Err(e) = m.config(self.vocab_size, 0).validate() {
                return fail(format!("models[{i}]"), e.to_string());
            }
        }
        match (&self.train, self.models.is_empty()) {
            (None, false) => return fail("train".into(), "required when models are given".into()),
            (Some(tc), _) => {
                if let Err(e) = tc.validate() {
                    return fail("train".into(), e.to_string());
                }
            }
            _ => {}
        }
        for (i, p) in self.analysis.references.iter().enumerate() {
            if !p.is_file() {
                return fail(
                    format!("analysis.references[{i}]"),
                    format!("no such file: {}", p.display()),
                );
            }
        }
        if let Some(c) = &self.analysis.cluster {
            if c.k == 0 {
                return fail("analysis.cluster.k".into(), "must be at least 1".into());
            }
            if let Some(run) = &c.run {
                if !self.runs().iter().any(|r| &r.run_id == run) {
                    return fail("analysis.cluster.run".into(), format!("no run named {run}"));
                }
            } else if self.models.is_empty() {
                return fail("analysis.cluster".into(), "needs a neural model".into());
            }
        }
        Ok(())
    }

    /// Every (model, seed) combination in manifest order.
    pub fn runs(&self) -> Vec<Run> {
        self.models
            .iter()
            .flat_map(|m| {
                m.seeds.iter().map(move |&seed| Run {
                    group: m.id.clone(),
                    run_id: m.run_id(seed),
                    seed,
                    spec: m.clone(),
                })
            })
            .collect()
    }

    pub fn train_config(&self, seed: u64) -> Option<TrainConfig> {
        self.train.clone().map(|tc| TrainConfig { data_seed: seed, ..tc })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub group: String,
    pub run_id: String,
    pub seed: u64,
    pub spec: ModelSpec,
}
