//! Seeded synthetic taxonomy and corpora for desk-scale runs.
//!
//! Values are pseudo-words so substring and n-gram overlap with the product
//! text comes only from deliberate embedding. `noise` controls both how
//! often a ground-truth value is left out of the text and how often a
//! distractor value from the same attribute is put in.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ProductRecord;
use crate::error::{Error, Result};
use crate::fsio::{to_jsonl, write_atomic};
use crate::taxonomy::TaxonomyRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub seed: u64,
    pub categories: usize,
    pub products: usize,
    pub pool_size: usize,
    pub min_attributes: usize,
    pub max_attributes: usize,
    pub min_values: usize,
    pub max_values: usize,
    /// Share of annotated attributes whose truth is the null marker.
    pub null_fraction: f64,
    /// Share of schema attributes left without any annotation.
    pub unannotated_fraction: f64,
    /// Share of non-null labels replaced by a value outside the taxonomy.
    pub ood_fraction: f64,
    pub multi_value_fraction: f64,
    pub noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 7,
            categories: 5,
            products: 200,
            pool_size: 100,
            min_attributes: 2,
            max_attributes: 4,
            min_values: 3,
            max_values: 8,
            null_fraction: 0.1,
            unannotated_fraction: 0.05,
            ood_fraction: 0.0,
            multi_value_fraction: 0.05,
            noise: 0.15,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("null_fraction", self.null_fraction),
            ("unannotated_fraction", self.unannotated_fraction),
            ("ood_fraction", self.ood_fraction),
            ("multi_value_fraction", self.multi_value_fraction),
            ("noise", self.noise),
        ];
        for (name, f) in fractions {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {f}")));
            }
        }
        if self.categories == 0 {
            return Err(Error::Config("at least one category is required".into()));
        }
        if self.min_attributes == 0 || self.min_attributes > self.max_attributes || self.max_attributes > ATTRIBUTES.len() {
            return Err(Error::Config(format!(
                "attribute range must satisfy 1 <= min <= max <= {}",
                ATTRIBUTES.len()
            )));
        }
        if self.min_values == 0 || self.min_values > self.max_values {
            return Err(Error::Config("value range must satisfy 1 <= min <= max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub taxonomy: Vec<TaxonomyRecord>,
    pub corpus: Vec<ProductRecord>,
    pub pool: Vec<ProductRecord>,
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ren", "to", "vash", "qui", "del", "sor", "bri", "nax", "pel", "zu", "tor", "fen", "gal", "hy",
    "jo", "wix", "mar", "tek", "ulo", "bre", "sna", "dov",
];
const NOUNS: &[&str] = &["kit", "case", "lens", "bag", "cover", "stand", "mount", "strap", "lamp", "mug"];
const ATTRIBUTES: &[&str] = &[
    "Brand", "Color", "Material", "Condition", "Style", "Size", "Pattern", "Origin", "Finish", "Series",
];
const FILLER: &[&str] = &[
    "original", "spare", "for", "with", "set", "genuine", "used", "clean", "fits", "model", "pack", "great",
];

struct Words {
    used: BTreeSet<String>,
}

impl Words {
    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let n = rng.random_range(2..=3);
            let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("syllables")).collect();
            w[..1].make_ascii_uppercase();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

pub fn generate(params: &SynthParams) -> Result<SynthCorpus> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut words = Words { used: BTreeSet::new() };

    let mut taxonomy = Vec::new();
    let mut schemas: Vec<Schema> = Vec::new();
    for _ in 0..params.categories {
        let category = format!("{} {}", words.fresh(&mut rng), NOUNS.choose(&mut rng).expect("nouns"));
        let n_attr = rng.random_range(params.min_attributes..=params.max_attributes);
        let mut names: Vec<&str> = ATTRIBUTES.to_vec();
        names.shuffle(&mut rng);
        let mut schema = Vec::new();
        for attr in names.into_iter().take(n_attr) {
            let n_val = rng.random_range(params.min_values..=params.max_values);
            let values: Vec<String> = (0..n_val).map(|_| words.fresh(&mut rng)).collect();
            taxonomy.push(TaxonomyRecord {
                category: category.clone(),
                attribute: attr.to_owned(),
                values: values.clone(),
            });
            schema.push((attr.to_owned(), values));
        }
        schemas.push((category, schema));
    }

    let mut make = |prefix: &str, count: usize, rng: &mut ChaCha8Rng| -> Vec<ProductRecord> {
        (0..count)
            .map(|i| product(&format!("{prefix}{:05}", i + 1), &schemas, params, &mut words, rng))
            .collect()
    };
    let corpus = make("p", params.products, &mut rng);
    let pool = make("r", params.pool_size, &mut rng);
    Ok(SynthCorpus { taxonomy, corpus, pool })
}

/// Category name with its attributes and their value lists.
type Schema = (String, Vec<(String, Vec<String>)>);

fn product(
    id: &str,
    schemas: &[Schema],
    params: &SynthParams,
    words: &mut Words,
    rng: &mut ChaCha8Rng,
) -> ProductRecord {
    let (category, schema) = schemas.choose(rng).expect("at least one category");
    let mut record = ProductRecord {
        id: id.to_owned(),
        title: String::new(),
        description: String::new(),
        category: category.clone(),
        labels: Default::default(),
    };
    let mut title = vec![category.clone()];
    let mut description: Vec<String> = Vec::new();
    for (attr, values) in schema {
        if rng.random_bool(params.unannotated_fraction) {
            continue;
        }
        if rng.random_bool(params.null_fraction) {
            record.labels.insert(attr.clone(), Vec::new());
            continue;
        }
        let mut truth = vec![if rng.random_bool(params.ood_fraction) {
            words.fresh(rng)
        } else {
            values.choose(rng).expect("non-empty values").clone()
        }];
        if values.len() > 1 && rng.random_bool(params.multi_value_fraction) {
            let extra = values.choose(rng).expect("values");
            if !truth.contains(extra) {
                truth.push(extra.clone());
            }
        }
        for v in &truth {
            if !rng.random_bool(params.noise) {
                if rng.random_bool(0.5) {
                    title.push(v.clone());
                } else {
                    description.push(v.clone());
                }
            }
        }
        if rng.random_bool(params.noise) {
            if let Some(d) = values.iter().filter(|v| !truth.contains(v)).collect::<Vec<_>>().choose(rng) {
                description.push((*d).clone());
            }
        }
        record.labels.insert(attr.clone(), truth);
    }
    for _ in 0..rng.random_range(1..=3) {
        let pos = rng.random_range(0..=description.len());
        description.insert(pos, FILLER.choose(rng).expect("filler").to_string());
    }
    title.shuffle(rng);
    record.title = title.join(" ");
    record.description = description.join(" ");
    record
}

pub const TAXONOMY_FILE: &str = "taxonomy.jsonl";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const POOL_FILE: &str = "pool.jsonl";
pub const CONFIG_FILE: &str = "pipeline.toml";

impl SynthCorpus {
    /// Starter config pointing at the written files, for the mock heuristic generator.
    pub fn config_toml(&self, seed: u64) -> String {
        format!(
            "taxonomy_path = \"{TAXONOMY_FILE}\"\ncorpus_path = \"{CORPUS_FILE}\"\npool_path = \"{POOL_FILE}\"\nout_dir = \"out\"\nk = 4\nm = 2\nconcurrency = 4\nseed = {seed}\n\n[encoder]\nkind = \"builtin\"\n\n[generator]\nkind = \"mock-heuristic\"\n"
        )
    }

    /// Writes the taxonomy, corpus, pool and a starter config; returns the paths written.
    pub fn write(&self, dir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            (TAXONOMY_FILE, to_jsonl(&self.taxonomy)),
            (CORPUS_FILE, to_jsonl(&self.corpus)),
            (POOL_FILE, to_jsonl(&self.pool)),
            (CONFIG_FILE, self.config_toml(seed)),
        ];
        files
            .into_iter()
            .map(|(name, text)| {
                let path = dir.join(name);
                write_atomic(&path, text.as_bytes())?;
                Ok(path)
            })
            .collect()
    }
}
