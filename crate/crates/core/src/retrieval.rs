//! Two-level retrieval: candidate values per (category, attribute) and
//! similar products within the query's category.
//!
//! Both indexes are searched exhaustively inside their partition. Results are
//! ordered by descending cosine score, ties broken by ascending key (value
//! text or product id), so every query has exactly one correct answer.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{Product, QueryText};
use crate::embedding::{cosine, EmbeddingVector, Encoder};
use crate::error::{Error, Result};
use crate::fsio;
use crate::taxonomy::{AttributeId, CategoryId, Taxonomy, ValueId, NULL_MARKER};

/// Corpus text for one taxonomy value: `a {category} with {attribute} being {value}`, lowercased.
pub fn value_prompt(category: &str, attribute: &str, value: &str) -> String {
    format!("a {category} with {attribute} being {value}").to_lowercase()
}

/// Total order used for ranking: higher score first, then ascending key.
pub fn rank_order(a_score: f64, a_key: &str, b_score: f64, b_key: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_key.cmp(b_key))
}

/// Keeps the best `k` of `items` under [`rank_order`], sorted.
fn top_k<T>(mut items: Vec<(f64, T)>, k: usize, key: impl Fn(&T) -> &str) -> Vec<(f64, T)> {
    let cmp = |a: &(f64, T), b: &(f64, T)| rank_order(a.0, key(&a.1), b.0, key(&b.1));
    if k == 0 {
        return Vec::new();
    }
    if k < items.len() {
        items.select_nth_unstable_by(k - 1, cmp);
        items.truncate(k);
    }
    items.sort_by(cmp);
    items
}

fn score(query: &EmbeddingVector, entry: &EmbeddingVector) -> Result<f64> {
    // Adding 0.0 folds -0.0 into 0.0 so total_cmp agrees with numeric equality.
    cosine(query, entry).map(|s| s + 0.0)
}

pub(crate) mod score_serde {
    use super::*;

    pub fn serialize<S: Serializer>(score: &f64, s: S) -> Result<S::Ok, S::Error> {
        if score.is_finite() {
            s.serialize_f64(*score)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// A ranked candidate. Unscorable entries (zero vectors, the null marker)
/// carry `-inf`, serialized as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub value: String,
    #[serde(with = "score_serde")]
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub attribute: AttributeId,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn values(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.value.as_str())
    }

    /// Candidate values other than the null marker.
    pub fn real_values(&self) -> impl Iterator<Item = &str> {
        self.values().filter(|v| *v != NULL_MARKER)
    }

    pub fn contains(&self, value: &str) -> bool {
        self.values().any(|v| v == value)
    }

    /// Removes `value` from the list. The null marker is never removed.
    pub fn without(&self, value: &str) -> CandidateSet {
        CandidateSet {
            attribute: self.attribute.clone(),
            candidates: self
                .candidates
                .iter()
                .filter(|c| c.value == NULL_MARKER || c.value != value)
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueCorpusEntry {
    pub category: CategoryId,
    pub attribute: AttributeId,
    pub value: ValueId,
    pub prompt: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq)]
struct ValuePartition {
    category: CategoryId,
    attribute: AttributeId,
    entries: Vec<ValueCorpusEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueIndex {
    encoder: String,
    dim: usize,
    partitions: Vec<ValuePartition>,
    lookup: HashMap<(String, String), usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotHeader {
    kind: String,
    encoder: String,
    dim: usize,
    rows: usize,
}

#[derive(Serialize, Deserialize)]
struct ValueRow {
    category: CategoryId,
    attribute: AttributeId,
    value: ValueId,
    prompt: String,
    vector: EmbeddingVector,
}

#[derive(Serialize, Deserialize)]
struct ProductRow {
    id: String,
    category: CategoryId,
    vector: EmbeddingVector,
}

const VALUE_KIND: &str = "value-index";
const PRODUCT_KIND: &str = "product-index";

fn check_dim(dim: &mut Option<usize>, v: &EmbeddingVector) -> Result<()> {
    match *dim {
        Some(d) if d != v.dim() => Err(Error::DimensionMismatch {
            expected: d,
            actual: v.dim(),
        }),
        Some(_) => Ok(()),
        None => {
            *dim = Some(v.dim());
            Ok(())
        }
    }
}

impl ValueIndex {
    pub fn build(taxonomy: &Taxonomy, encoder: &dyn Encoder) -> Result<Self> {
        let mut partitions = Vec::new();
        let mut dim = encoder.dim();
        for category in taxonomy.categories() {
            for attribute in taxonomy.attribute_set(category.as_str())? {
                let values = taxonomy.values_of(category.as_str(), attribute.as_str())?;
                let prompts: Vec<String> = values
                    .iter()
                    .map(|v| value_prompt(category.as_str(), attribute.as_str(), v.as_str()))
                    .collect();
                let refs: Vec<&str> = prompts.iter().map(String::as_str).collect();
                let vectors = encoder.encode_batch(&refs).map_err(|e| {
                    e.at_stage(format!("encoding ({category}, {attribute}, {})", values[0]))
                })?;
                let mut entries = Vec::with_capacity(values.len());
                for ((value, prompt), vector) in values.iter().zip(prompts).zip(vectors) {
                    check_dim(&mut dim, &vector)
                        .map_err(|e| e.at_stage(format!("encoding ({category}, {attribute}, {value})")))?;
                    entries.push(ValueCorpusEntry {
                        category: category.clone(),
                        attribute: attribute.clone(),
                        value: value.clone(),
                        prompt,
                        vector,
                    });
                }
                partitions.push(ValuePartition {
                    category: category.clone(),
                    attribute: attribute.clone(),
                    entries,
                });
            }
        }
        Ok(Self::assemble(encoder.identity(), dim.unwrap_or(0), partitions))
    }

    fn assemble(encoder: String, dim: usize, partitions: Vec<ValuePartition>) -> Self {
        let lookup = partitions
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.category.to_string(), p.attribute.to_string()), i))
            .collect();
        Self {
            encoder,
            dim,
            partitions,
            lookup,
        }
    }

    pub fn encoder_identity(&self) -> &str {
        &self.encoder
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.partitions.iter().map(|p| p.entries.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> impl Iterator<Item = &ValueCorpusEntry> {
        self.partitions.iter().flat_map(|p| &p.entries)
    }

    pub fn partition(&self, category: &str, attribute: &str) -> Result<&[ValueCorpusEntry]> {
        self.lookup
            .get(&(category.to_owned(), attribute.to_owned()))
            .map(|&i| self.partitions[i].entries.as_slice())
            .ok_or_else(|| Error::UnknownAttribute {
                category: category.to_owned(),
                attribute: attribute.to_owned(),
            })
    }

    /// Top-`k` values for one attribute followed by the null marker.
    pub fn retrieve(
        &self,
        query: &EmbeddingVector,
        category: &str,
        attribute: &str,
        k: usize,
    ) -> Result<CandidateSet> {
        let partition = self.partition(category, attribute)?;
        let scored = partition
            .iter()
            .map(|e| Ok((score(query, &e.vector)?, e.value.as_str())))
            .collect::<Result<Vec<_>>>()?;
        let mut candidates: Vec<Candidate> = top_k(scored, k, |v| v)
            .into_iter()
            .map(|(score, value)| Candidate {
                value: value.to_owned(),
                score,
            })
            .collect();
        if !candidates.iter().any(|c| c.value == NULL_MARKER) {
            candidates.push(Candidate {
                value: NULL_MARKER.to_owned(),
                score: f64::NEG_INFINITY,
            });
        }
        Ok(CandidateSet {
            attribute: partition[0].attribute.clone(),
            candidates,
        })
    }

    pub fn to_snapshot(&self) -> String {
        let header = SnapshotHeader {
            kind: VALUE_KIND.into(),
            encoder: self.encoder.clone(),
            dim: self.dim,
            rows: self.len(),
        };
        let mut out = fsio::to_jsonl([&header]);
        let rows: Vec<ValueRow> = self
            .entries()
            .map(|e| ValueRow {
                category: e.category.clone(),
                attribute: e.attribute.clone(),
                value: e.value.clone(),
                prompt: e.prompt.clone(),
                vector: e.vector.clone(),
            })
            .collect();
        out.push_str(&fsio::to_jsonl(&rows));
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, self.to_snapshot().as_bytes())
    }

    /// Loads a snapshot and checks it matches `encoder` and covers `taxonomy` exactly.
    pub fn load(path: &Path, taxonomy: &Taxonomy, encoder: &dyn Encoder) -> Result<Self> {
        let lines = fsio::read_jsonl::<serde_json::Value>(path)?;
        let (header, rows) = split_snapshot(lines, VALUE_KIND, encoder)?;
        let mut partitions: Vec<ValuePartition> = Vec::new();
        for (line, raw) in rows {
            let row: ValueRow = serde_json::from_value(raw).map_err(|e| Error::parse(line, e.to_string()))?;
            if row.vector.dim() != header.dim {
                return Err(Error::Snapshot(format!("line {line}: vector dimension {} != {}", row.vector.dim(), header.dim)));
            }
            let same = partitions
                .last()
                .is_some_and(|p| p.category == row.category && p.attribute == row.attribute);
            if !same {
                partitions.push(ValuePartition {
                    category: row.category.clone(),
                    attribute: row.attribute.clone(),
                    entries: Vec::new(),
                });
            }
            partitions.last_mut().expect("partition").entries.push(ValueCorpusEntry {
                category: row.category,
                attribute: row.attribute,
                value: row.value,
                prompt: row.prompt,
                vector: row.vector,
            });
        }
        let index = Self::assemble(header.encoder, header.dim, partitions);
        index.verify_against(taxonomy)?;
        Ok(index)
    }

    fn verify_against(&self, taxonomy: &Taxonomy) -> Result<()> {
        if self.len() != taxonomy.triple_count() || self.lookup.len() != self.partitions.len() {
            return Err(Error::Snapshot("value index does not match the taxonomy".into()));
        }
        for p in &self.partitions {
            let values = taxonomy
                .values_of(p.category.as_str(), p.attribute.as_str())
                .map_err(|e| Error::Snapshot(e.to_string()))?;
            let matches = values.len() == p.entries.len()
                && values.iter().zip(&p.entries).all(|(v, e)| {
                    *v == e.value && e.prompt == value_prompt(p.category.as_str(), p.attribute.as_str(), v.as_str())
                });
            if !matches {
                return Err(Error::Snapshot(format!(
                    "value index partition ({}, {}) does not match the taxonomy",
                    p.category, p.attribute
                )));
            }
        }
        Ok(())
    }
}

fn split_snapshot(
    mut lines: Vec<(usize, serde_json::Value)>,
    kind: &str,
    encoder: &dyn Encoder,
) -> Result<(SnapshotHeader, Vec<(usize, serde_json::Value)>)> {
    if lines.is_empty() {
        return Err(Error::Snapshot("empty snapshot".into()));
    }
    let (line, raw) = lines.remove(0);
    let header: SnapshotHeader = serde_json::from_value(raw).map_err(|e| Error::parse(line, e.to_string()))?;
    if header.kind != kind {
        return Err(Error::Snapshot(format!("expected a {kind} snapshot, found {}", header.kind)));
    }
    if header.encoder != encoder.identity() {
        return Err(Error::Snapshot(format!(
            "snapshot built with encoder `{}`, configured encoder is `{}`",
            header.encoder,
            encoder.identity()
        )));
    }
    if let Some(d) = encoder.dim() {
        if d != header.dim {
            return Err(Error::Snapshot(format!("snapshot dimension {} != encoder dimension {d}", header.dim)));
        }
    }
    if header.rows != lines.len() {
        return Err(Error::Snapshot(format!("header declares {} rows, found {}", header.rows, lines.len())));
    }
    Ok((header, lines))
}

/// A retrieved same-category product with its labels rendered for the prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotExample {
    pub product: Product,
    pub score: f64,
    /// One entry per attribute of the category schema, in schema order.
    pub rendered_labels: Vec<(AttributeId, String)>,
}

#[derive(Debug, Clone, PartialEq)]
struct ProductPartition {
    schema: Vec<AttributeId>,
    entries: Vec<(Product, EmbeddingVector)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductIndex {
    encoder: String,
    dim: usize,
    partitions: HashMap<CategoryId, ProductPartition>,
}

impl ProductIndex {
    /// Every taxonomy category gets a partition, possibly empty.
    pub fn build(pool: &[Product], taxonomy: &Taxonomy, encoder: &dyn Encoder) -> Result<Self> {
        let queries: Vec<QueryText> = pool.iter().map(Product::render_query).collect();
        let refs: Vec<&str> = queries.iter().map(QueryText::as_str).collect();
        let vectors = encoder
            .encode_batch(&refs)
            .map_err(|e| e.at_stage("encoding product pool"))?;
        if vectors.len() != pool.len() {
            return Err(Error::MalformedResponse {
                endpoint: encoder.identity(),
                message: format!("expected {} vectors, got {}", pool.len(), vectors.len()),
            });
        }
        let mut dim = encoder.dim();
        let mut index = Self::empty(encoder.identity(), taxonomy)?;
        for (product, vector) in pool.iter().zip(vectors) {
            check_dim(&mut dim, &vector).map_err(|e| e.at_stage(format!("encoding product `{}`", product.id)))?;
            index.insert(product.clone(), vector)?;
        }
        index.dim = dim.unwrap_or(0);
        Ok(index)
    }

    fn empty(encoder: String, taxonomy: &Taxonomy) -> Result<Self> {
        let mut partitions = HashMap::new();
        for c in taxonomy.categories() {
            let schema = taxonomy.attribute_set(c.as_str())?.into_iter().cloned().collect();
            partitions.insert(
                c.clone(),
                ProductPartition {
                    schema,
                    entries: Vec::new(),
                },
            );
        }
        Ok(Self {
            encoder,
            dim: 0,
            partitions,
        })
    }

    fn insert(&mut self, product: Product, vector: EmbeddingVector) -> Result<()> {
        let partition = self
            .partitions
            .get_mut(product.category.as_str())
            .ok_or_else(|| Error::UnknownCategory(product.category.to_string()))?;
        partition.entries.push((product, vector));
        Ok(())
    }

    pub fn encoder_identity(&self) -> &str {
        &self.encoder
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.partitions.values().map(|p| p.entries.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn partition(&self, category: &str) -> Result<&[(Product, EmbeddingVector)]> {
        self.partitions
            .get(category)
            .map(|p| p.entries.as_slice())
            .ok_or_else(|| Error::UnknownCategory(category.to_owned()))
    }

    /// Top-`m` products of `category`, skipping `exclude_id`.
    pub fn retrieve(
        &self,
        query: &EmbeddingVector,
        category: &str,
        m: usize,
        exclude_id: Option<&str>,
    ) -> Result<Vec<FewShotExample>> {
        let partition = self
            .partitions
            .get(category)
            .ok_or_else(|| Error::UnknownCategory(category.to_owned()))?;
        let scored = partition
            .entries
            .iter()
            .filter(|(p, _)| Some(p.id.as_str()) != exclude_id)
            .map(|(p, v)| Ok((score(query, v)?, p)))
            .collect::<Result<Vec<_>>>()?;
        Ok(top_k(scored, m, |p| p.id.as_str())
            .into_iter()
            .map(|(score, product)| FewShotExample {
                rendered_labels: partition
                    .schema
                    .iter()
                    .map(|a| (a.clone(), product.target_value(a.as_str()).to_owned()))
                    .collect(),
                product: product.clone(),
                score,
            })
            .collect())
    }

    pub fn to_snapshot(&self) -> String {
        let mut rows: Vec<ProductRow> = self
            .partitions
            .values()
            .flat_map(|p| &p.entries)
            .map(|(p, v)| ProductRow {
                id: p.id.clone(),
                category: p.category.clone(),
                vector: v.clone(),
            })
            .collect();
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        let header = SnapshotHeader {
            kind: PRODUCT_KIND.into(),
            encoder: self.encoder.clone(),
            dim: self.dim,
            rows: rows.len(),
        };
        let mut out = fsio::to_jsonl([&header]);
        out.push_str(&fsio::to_jsonl(&rows));
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, self.to_snapshot().as_bytes())
    }

    /// Loads vectors from a snapshot and reattaches the pool products by id.
    pub fn load(path: &Path, pool: &[Product], taxonomy: &Taxonomy, encoder: &dyn Encoder) -> Result<Self> {
        let lines = fsio::read_jsonl::<serde_json::Value>(path)?;
        let (header, rows) = split_snapshot(lines, PRODUCT_KIND, encoder)?;
        if rows.len() != pool.len() {
            return Err(Error::Snapshot(format!(
                "product index has {} rows, pool has {} products",
                rows.len(),
                pool.len()
            )));
        }
        let by_id: HashMap<&str, &Product> = pool.iter().map(|p| (p.id.as_str(), p)).collect();
        let mut index = Self::empty(header.encoder, taxonomy)?;
        index.dim = header.dim;
        let mut loaded: Vec<(Product, EmbeddingVector)> = Vec::with_capacity(rows.len());
        for (line, raw) in rows {
            let row: ProductRow = serde_json::from_value(raw).map_err(|e| Error::parse(line, e.to_string()))?;
            let product = by_id
                .get(row.id.as_str())
                .ok_or_else(|| Error::Snapshot(format!("product `{}` is not in the pool", row.id)))?;
            if product.category != row.category {
                return Err(Error::Snapshot(format!("product `{}` changed category", row.id)));
            }
            if row.vector.dim() != header.dim {
                return Err(Error::Snapshot(format!("line {line}: vector dimension {} != {}", row.vector.dim(), header.dim)));
            }
            loaded.push(((*product).clone(), row.vector));
        }
        // Restore pool order so snapshots and freshly built indexes compare equal.
        let order: HashMap<&str, usize> = pool.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
        loaded.sort_by_key(|(p, _)| order[p.id.as_str()]);
        for (p, v) in loaded {
            index.insert(p, v)?;
        }
        Ok(index)
    }
}

/// Pairing of the two indexes with the encoders that built them.
pub struct Retriever<'a> {
    pub values: &'a ValueIndex,
    pub products: &'a ProductIndex,
    pub value_encoder: &'a dyn Encoder,
    pub product_encoder: &'a dyn Encoder,
}

impl Retriever<'_> {
    pub fn retrieve_values(
        &self,
        query: &QueryText,
        category: &str,
        attribute: &str,
        k: usize,
    ) -> Result<CandidateSet> {
        let q = self.value_encoder.encode(query.as_str())?;
        self.values.retrieve(&q, category, attribute, k)
    }

    /// Candidate sets for every attribute of `category`, in schema order.
    pub fn retrieve_all_values(
        &self,
        query: &QueryText,
        taxonomy: &Taxonomy,
        category: &str,
        k: usize,
    ) -> Result<Vec<CandidateSet>> {
        let q = self.value_encoder.encode(query.as_str())?;
        taxonomy
            .attribute_set(category)?
            .into_iter()
            .map(|a| self.values.retrieve(&q, category, a.as_str(), k))
            .collect()
    }

    pub fn retrieve_products(
        &self,
        query: &QueryText,
        category: &str,
        m: usize,
        exclude_id: Option<&str>,
    ) -> Result<Vec<FewShotExample>> {
        if m == 0 {
            self.products.partition(category)?;
            return Ok(Vec::new());
        }
        let q = self.product_encoder.encode(query.as_str())?;
        self.products.retrieve(&q, category, m, exclude_id)
    }
}
