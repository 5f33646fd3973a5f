//! The single run configuration file.
//!
//! Relative paths resolve against the directory holding the file. Secrets
//! never live here; remote endpoints name an environment variable instead.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{ingest_products, Product};
use crate::embedding::{Encoder, HashedNgramEncoder, RemoteEncoder, RemoteEncoderConfig, BUILTIN_DIM};
use crate::error::{Error, Result};
use crate::fsio::sha256_hex;
use crate::generation::{Generator, MockGenerator, Pipeline, PipelineParams, RemoteGenerator, RemoteGeneratorConfig};
use crate::promptgen::PromptTemplate;
use crate::retrieval::{ProductIndex, ValueIndex};
use crate::taxonomy::Taxonomy;

fn default_builtin_dim() -> usize {
    BUILTIN_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EncoderConfig {
    Builtin {
        #[serde(default = "default_builtin_dim")]
        dim: usize,
    },
    Remote(RemoteEncoderConfig),
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig::Builtin { dim: BUILTIN_DIM }
    }
}

impl EncoderConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            EncoderConfig::Builtin { .. } => "builtin",
            EncoderConfig::Remote(_) => "remote",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Encoder>> {
        Ok(match self {
            EncoderConfig::Builtin { dim } => Box::new(HashedNgramEncoder::with_dim(*dim)),
            EncoderConfig::Remote(cfg) => Box::new(RemoteEncoder::new(cfg.clone())?),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorConfig {
    MockOracle,
    #[default]
    MockHeuristic,
    Remote(RemoteGeneratorConfig),
}

impl GeneratorConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            GeneratorConfig::MockOracle => "mock-oracle",
            GeneratorConfig::MockHeuristic => "mock-heuristic",
            GeneratorConfig::Remote(_) => "remote",
        }
    }

    /// `truth` feeds the oracle mock and is ignored otherwise.
    pub fn build(&self, truth: &[Product]) -> Result<Box<dyn Generator>> {
        Ok(match self {
            GeneratorConfig::MockOracle => Box::new(MockGenerator::oracle(truth.iter().cloned())),
            GeneratorConfig::MockHeuristic => Box::new(MockGenerator::heuristic()),
            GeneratorConfig::Remote(cfg) => Box::new(RemoteGenerator::new(cfg.clone())?),
        })
    }
}

fn default_k() -> usize {
    8
}
fn default_m() -> usize {
    2
}
fn default_concurrency() -> usize {
    4
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub taxonomy_path: PathBuf,
    pub corpus_path: PathBuf,
    /// Labelled products that serve as few-shot references.
    pub pool_path: PathBuf,
    /// Encodes value prompts, and product queries unless `product_encoder` is set.
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_encoder: Option<EncoderConfig>,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Only consumed by synthetic data generation.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be at least 1".into()));
        }
        for enc in std::iter::once(&self.encoder).chain(&self.product_encoder) {
            match enc {
                EncoderConfig::Builtin { dim } if *dim == 0 => {
                    return Err(Error::Config("builtin encoder dim must be at least 1".into()))
                }
                EncoderConfig::Remote(r) if r.endpoint.url.is_empty() => {
                    return Err(Error::Config("remote encoder needs a url".into()))
                }
                _ => {}
            }
        }
        if let GeneratorConfig::Remote(r) = &self.generator {
            if r.endpoint.url.is_empty() {
                return Err(Error::Config("remote generator needs a url".into()));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn taxonomy_file(&self) -> PathBuf {
        self.resolve(&self.taxonomy_path)
    }

    pub fn corpus_file(&self) -> PathBuf {
        self.resolve(&self.corpus_path)
    }

    pub fn pool_file(&self) -> PathBuf {
        self.resolve(&self.pool_path)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn params(&self) -> PipelineParams {
        PipelineParams { k: self.k, m: self.m }
    }

    pub fn product_encoder_config(&self) -> &EncoderConfig {
        self.product_encoder.as_ref().unwrap_or(&self.encoder)
    }

    /// Digest of every field that can change results. The output directory
    /// is excluded so the same run lands identically anywhere.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        sha256_hex(serde_json::to_string(&canonical).expect("config serializes").as_bytes())
    }

    /// Replaces the encoder kind named on the command line. Switching to
    /// `remote` needs an endpoint already present in the file.
    pub fn override_encoder(&mut self, kind: &str) -> Result<()> {
        self.encoder = match (kind, &self.encoder) {
            ("builtin", EncoderConfig::Builtin { dim }) => EncoderConfig::Builtin { dim: *dim },
            ("builtin", _) => EncoderConfig::default(),
            ("remote", EncoderConfig::Remote(r)) => EncoderConfig::Remote(r.clone()),
            ("remote", _) => {
                return Err(Error::Config("--encoder remote needs an [encoder] endpoint in the config file".into()))
            }
            (other, _) => return Err(Error::Config(format!("unknown encoder `{other}` (builtin or remote)"))),
        };
        Ok(())
    }

    pub fn override_generator(&mut self, kind: &str) -> Result<()> {
        self.generator = match (kind, &self.generator) {
            ("mock-oracle", _) => GeneratorConfig::MockOracle,
            ("mock-heuristic", _) => GeneratorConfig::MockHeuristic,
            ("remote", GeneratorConfig::Remote(r)) => GeneratorConfig::Remote(r.clone()),
            ("remote", _) => {
                return Err(Error::Config(
                    "--generator remote needs a [generator] endpoint in the config file".into(),
                ))
            }
            (other, _) => {
                return Err(Error::Config(format!(
                    "unknown generator `{other}` (mock-oracle, mock-heuristic or remote)"
                )))
            }
        };
        Ok(())
    }
}

/// Loads every input named by `config` and builds both indexes in memory.
/// Returns the pipeline and the corpus, which also feeds the oracle mock.
pub fn build_pipeline(config: &PipelineConfig) -> Result<(Pipeline, Vec<Product>)> {
    let taxonomy = Taxonomy::load(&config.taxonomy_file())?;
    let corpus = ingest_products(&config.corpus_file(), &taxonomy)?;
    let pool = ingest_products(&config.pool_file(), &taxonomy)?;
    let value_encoder = config.encoder.build()?;
    let product_encoder = config.product_encoder_config().build()?;
    let value_index = ValueIndex::build(&taxonomy, value_encoder.as_ref())?;
    let product_index = ProductIndex::build(&pool, &taxonomy, product_encoder.as_ref())?;
    let template = match &config.prompt_template {
        Some(p) => PromptTemplate::load(&config.resolve(p))?,
        None => PromptTemplate::default(),
    };
    let pipeline = Pipeline {
        generator: config.generator.build(&corpus)?,
        taxonomy,
        value_index,
        product_index,
        value_encoder,
        product_encoder,
        template,
        concurrency: config.concurrency,
    };
    Ok((pipeline, corpus))
}
