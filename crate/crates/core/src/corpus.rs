//! Product records: the query set and the retrieval pool share one format.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::taxonomy::{canonicalize, AttributeId, CategoryId, Taxonomy, NULL_MARKER};

/// A ground-truth value together with whether the taxonomy enumerates it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelValue {
    pub value: String,
    /// `false` marks an out-of-distribution ground-truth value.
    pub in_taxonomy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Product {
    pub id: String,
    pub title: String,
    pub description: String,
    pub category: CategoryId,
    /// Annotated attributes only. An empty vector is the null ground truth;
    /// a missing key means "not annotated".
    pub labels: BTreeMap<AttributeId, Vec<LabelValue>>,
}

/// The product text used as a retrieval query: `title description`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryText(String);

impl QueryText {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Product {
    pub fn render_query(&self) -> QueryText {
        let title = self.title.trim();
        let description = self.description.trim();
        let rendered = match (title.is_empty(), description.is_empty()) {
            (_, true) => title.to_owned(),
            (true, false) => description.to_owned(),
            (false, false) => format!("{title} {description}"),
        };
        QueryText(rendered)
    }

    /// Ground-truth values for `attribute`, or `None` when it is not annotated.
    pub fn ground_truth(&self, attribute: &str) -> Option<&[LabelValue]> {
        self.labels
            .iter()
            .find(|(a, _)| a.as_str() == attribute)
            .map(|(_, v)| v.as_slice())
    }

    /// Single supervision value for `attribute`: the lexicographically smallest
    /// ground-truth value, or the null marker when the set is empty or the
    /// attribute is not annotated.
    pub fn target_value(&self, attribute: &str) -> &str {
        self.ground_truth(attribute)
            .and_then(|values| values.iter().map(|v| v.value.as_str()).min())
            .unwrap_or(NULL_MARKER)
    }

    pub fn to_record(&self) -> ProductRecord {
        ProductRecord {
            id: self.id.clone(),
            title: self.title.clone(),
            description: self.description.clone(),
            category: self.category.to_string(),
            labels: self
                .labels
                .iter()
                .map(|(a, vs)| (a.to_string(), vs.iter().map(|v| v.value.clone()).collect()))
                .collect(),
        }
    }
}

/// One line of a product file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub category: String,
    #[serde(default)]
    pub labels: BTreeMap<String, Vec<String>>,
}

impl ProductRecord {
    /// Validates the record against `taxonomy` and computes OOD flags.
    pub fn into_product(self, taxonomy: &Taxonomy) -> Result<Product> {
        let id = self.id.trim().to_owned();
        if id.is_empty() {
            return Err(Error::product("", "empty product id"));
        }
        let category = CategoryId::new(&self.category)
            .map_err(|_| Error::product(&id, "empty category"))?;
        if !taxonomy.contains_category(category.as_str()) {
            return Err(Error::product(&id, format!("unknown category `{category}`")));
        }

        let mut labels = BTreeMap::new();
        for (raw_attribute, raw_values) in self.labels {
            let attribute = AttributeId::new(&raw_attribute)
                .map_err(|_| Error::product(&id, "empty attribute name in labels"))?;
            if !taxonomy.has_attribute(category.as_str(), attribute.as_str()) {
                return Err(Error::product(
                    &id,
                    format!("label attribute `{attribute}` is not in the schema of `{category}`"),
                ));
            }
            let mut seen = HashSet::new();
            let mut values = Vec::with_capacity(raw_values.len());
            for raw in raw_values {
                let value = canonicalize(&raw);
                if value.is_empty() {
                    return Err(Error::product(&id, format!("empty value for `{attribute}`")));
                }
                if value == NULL_MARKER {
                    return Err(Error::product(
                        &id,
                        format!("`{attribute}` uses the null marker; use an empty array for null ground truth"),
                    ));
                }
                if seen.insert(value.clone()) {
                    let in_taxonomy = taxonomy.contains_value(category.as_str(), attribute.as_str(), &value);
                    values.push(LabelValue { value, in_taxonomy });
                }
            }
            if labels.insert(attribute.clone(), values).is_some() {
                return Err(Error::product(&id, format!("attribute `{attribute}` labeled twice")));
            }
        }

        Ok(Product {
            id,
            title: self.title,
            description: self.description,
            category,
            labels,
        })
    }
}

pub fn ingest_products(path: &Path, taxonomy: &Taxonomy) -> Result<Vec<Product>> {
    let rows = fsio::read_jsonl::<ProductRecord>(path)?;
    from_numbered_records(rows, taxonomy)
}

pub fn ingest_from_reader<R: BufRead>(reader: R, taxonomy: &Taxonomy) -> Result<Vec<Product>> {
    from_numbered_records(fsio::parse_jsonl(reader)?, taxonomy)
}

fn from_numbered_records(
    rows: Vec<(usize, ProductRecord)>,
    taxonomy: &Taxonomy,
) -> Result<Vec<Product>> {
    let mut ids = HashSet::with_capacity(rows.len());
    let mut products = Vec::with_capacity(rows.len());
    for (line, record) in rows {
        let product = record.into_product(taxonomy).map_err(|e| match e {
            Error::Product { product_id, message } => Error::Product {
                product_id,
                message: format!("{message} (line {line})"),
            },
            other => other,
        })?;
        if !ids.insert(product.id.clone()) {
            return Err(Error::product(&product.id, format!("duplicate product id (line {line})")));
        }
        products.push(product);
    }
    Ok(products)
}

pub fn products_to_jsonl(products: &[Product]) -> String {
    let records: Vec<ProductRecord> = products.iter().map(Product::to_record).collect();
    fsio::to_jsonl(&records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub product_count: usize,
    pub pa_pair_count: usize,
    pub null_pair_count: usize,
}

pub fn corpus_stats(products: &[Product]) -> CorpusStats {
    products.iter().fold(CorpusStats::default(), |mut s, p| {
        s.product_count += 1;
        s.pa_pair_count += p.labels.len();
        s.null_pair_count += p.labels.values().filter(|v| v.is_empty()).count();
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::TaxonomyRecord;

    fn taxonomy() -> Taxonomy {
        Taxonomy::from_records([
            TaxonomyRecord {
                category: "Bag".into(),
                attribute: "Brand".into(),
                values: vec!["LV".into(), "Dior".into(), "Channel".into()],
            },
            TaxonomyRecord {
                category: "SLR body cover".into(),
                attribute: "Brand".into(),
                values: vec!["Nikon".into(), "Canon".into(), "Sony".into()],
            },
            TaxonomyRecord {
                category: "SLR body cover".into(),
                attribute: "Condition".into(),
                values: vec!["slight signs of use".into()],
            },
        ])
        .unwrap()
    }

    fn ingest(lines: &[&str]) -> Result<Vec<Product>> {
        ingest_from_reader(lines.join("\n").as_bytes(), &taxonomy())
    }

    #[test]
    fn in_taxonomy_label() {
        let ps = ingest(&[
            r#"{"id":"p1","title":"Chanel new sale S engraved 19 black gold small size","description":"","category":"Bag","labels":{"Brand":["Channel"]}}"#,
        ])
        .unwrap();
        let gt = ps[0].ground_truth("Brand").unwrap();
        assert_eq!(gt, [LabelValue { value: "Channel".into(), in_taxonomy: true }]);
    }

    #[test]
    fn empty_label_set_is_null_ground_truth() {
        let ps = ingest(&[r#"{"id":"p1","title":"t","category":"SLR body cover","labels":{"Condition":[]}}"#]).unwrap();
        assert_eq!(ps[0].ground_truth("Condition"), Some(&[][..]));
        assert_eq!(ps[0].ground_truth("Brand"), None);
    }

    #[test]
    fn ood_flag_is_complement_of_membership() {
        let ps = ingest(&[
            r#"{"id":"p1","title":"Tamron cover","category":"SLR body cover","labels":{"Brand":["Tamron","Nikon"]}}"#,
        ])
        .unwrap();
        let t = taxonomy();
        let values = t.values_of("SLR body cover", "Brand").unwrap();
        for label in ps[0].ground_truth("Brand").unwrap() {
            let scanned = values.iter().any(|v| v.as_str() == label.value);
            assert_eq!(label.in_taxonomy, scanned, "{}", label.value);
        }
        assert!(!ps[0].ground_truth("Brand").unwrap()[0].in_taxonomy);
    }

    #[test]
    fn errors_name_the_product() {
        let unknown_category = ingest(&[r#"{"id":"p9","title":"t","category":"Shoe","labels":{}}"#]).unwrap_err();
        assert!(matches!(&unknown_category, Error::Product { product_id, .. } if product_id == "p9"));
        let foreign_attr = ingest(&[r#"{"id":"p8","title":"t","category":"Bag","labels":{"Condition":[]}}"#]).unwrap_err();
        assert!(matches!(&foreign_attr, Error::Product { product_id, .. } if product_id == "p8"));
        let null_marker = ingest(&[r#"{"id":"p7","title":"t","category":"Bag","labels":{"Brand":["None"]}}"#]).unwrap_err();
        assert!(matches!(null_marker, Error::Product { .. }));
        let dup = ingest(&[
            r#"{"id":"p1","title":"t","category":"Bag"}"#,
            r#"{"id":"p1","title":"u","category":"Bag"}"#,
        ])
        .unwrap_err();
        assert!(matches!(dup, Error::Product { .. }));
        assert!(matches!(ingest(&["{oops"]), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn render_query_joins_title_and_description() {
        let ps = ingest(&[
            r#"{"id":"a","title":"Canon 60d back cover set","description":"button set button","category":"SLR body cover"}"#,
            r#"{"id":"b","title":"  only title ","description":"","category":"SLR body cover"}"#,
        ])
        .unwrap();
        assert_eq!(ps[0].render_query().as_str(), "Canon 60d back cover set button set button");
        assert_eq!(ps[1].render_query().as_str(), "only title");
        assert_eq!(ps[0].render_query(), ps[0].render_query());
    }

    #[test]
    fn stats_count_pairs() {
        let ps = ingest(&[
            r#"{"id":"a","title":"x","category":"SLR body cover","labels":{"Brand":["Nikon"],"Condition":[]}}"#,
            r#"{"id":"b","title":"y","category":"SLR body cover","labels":{"Brand":["Canon"],"Condition":["slight signs of use"]}}"#,
        ])
        .unwrap();
        assert_eq!(
            corpus_stats(&ps),
            CorpusStats { product_count: 2, pa_pair_count: 4, null_pair_count: 1 }
        );
        assert_eq!(corpus_stats(&[]), CorpusStats::default());
    }

    #[test]
    fn target_value_picks_smallest() {
        let ps = ingest(&[
            r#"{"id":"a","title":"x","category":"SLR body cover","labels":{"Brand":["Sony","Canon"],"Condition":[]}}"#,
        ])
        .unwrap();
        assert_eq!(ps[0].target_value("Brand"), "Canon");
        assert_eq!(ps[0].target_value("Condition"), NULL_MARKER);
    }
}
