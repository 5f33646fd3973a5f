//! The category → attribute → standardized value tree that defines the closed
//! value vocabulary.
//!
//! All identifiers are NFC-normalized and trimmed at ingest, so lookups are
//! exact byte comparisons on the canonical form. A loaded [`Taxonomy`] is
//! immutable; updating it means loading a new file.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::fsio;

/// Reserved protocol token meaning "this attribute has no value for the product".
pub const NULL_MARKER: &str = "None";

/// NFC-normalizes and trims `raw`.
pub fn canonicalize(raw: &str) -> String {
    let normalized: String = raw.nfc().collect();
    normalized.trim().to_owned()
}

macro_rules! text_id {
    ($(#[$meta:meta])* $name:ident, $label:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            /// Canonicalizes `raw`; fails if nothing is left after trimming.
            pub fn new(raw: &str) -> Result<Self> {
                let canonical = canonicalize(raw);
                if canonical.is_empty() {
                    return Err(Error::EmptyId($label));
                }
                Ok(Self(canonical))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = Error;
            fn try_from(raw: String) -> Result<Self> {
                Self::new(&raw)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

text_id!(
    /// Product category, e.g. `Bag`.
    CategoryId,
    "category"
);
text_id!(
    /// Attribute within a category schema, e.g. `Brand`.
    AttributeId,
    "attribute"
);
text_id!(
    /// Standardized attribute value, e.g. `LV`.
    ValueId,
    "value"
);

/// One line of the taxonomy file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyRecord {
    pub category: String,
    pub attribute: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct AttributeEntry {
    id: AttributeId,
    values: Vec<ValueId>,
    members: HashSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CategoryEntry {
    id: CategoryId,
    attributes: Vec<AttributeEntry>,
}

impl CategoryEntry {
    fn attribute(&self, attribute: &str) -> Option<&AttributeEntry> {
        self.attributes.iter().find(|a| a.id.as_str() == attribute)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    categories: Vec<CategoryEntry>,
    by_name: HashMap<CategoryId, usize>,
}

impl Taxonomy {
    pub fn load(path: &Path) -> Result<Self> {
        let rows = fsio::read_jsonl::<TaxonomyRecord>(path)?;
        Self::from_numbered_records(rows)
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        Self::from_numbered_records(fsio::parse_jsonl(reader)?)
    }

    pub fn from_records(records: impl IntoIterator<Item = TaxonomyRecord>) -> Result<Self> {
        Self::from_numbered_records(records.into_iter().enumerate().map(|(i, r)| (i + 1, r)))
    }

    fn from_numbered_records(
        records: impl IntoIterator<Item = (usize, TaxonomyRecord)>,
    ) -> Result<Self> {
        let mut categories: Vec<CategoryEntry> = Vec::new();
        let mut by_name: HashMap<CategoryId, usize> = HashMap::new();

        for (line, record) in records {
            let violation = |attribute: &str, value: &str, reason: &str| Error::TaxonomyInvariant {
                category: record.category.clone(),
                attribute: attribute.to_owned(),
                value: value.to_owned(),
                reason: format!("{reason} (line {line})"),
            };
            let category = CategoryId::new(&record.category)
                .map_err(|_| violation(&record.attribute, "", "empty category"))?;
            let attribute = AttributeId::new(&record.attribute)
                .map_err(|_| violation(&record.attribute, "", "empty attribute"))?;
            if record.values.is_empty() {
                return Err(violation(attribute.as_str(), "", "attribute has no values"));
            }

            let mut values = Vec::with_capacity(record.values.len());
            let mut members = HashSet::with_capacity(record.values.len());
            for raw in &record.values {
                let value = ValueId::new(raw)
                    .map_err(|_| violation(attribute.as_str(), raw, "empty value"))?;
                if value.as_str() == NULL_MARKER {
                    return Err(violation(
                        attribute.as_str(),
                        raw,
                        "the null marker is reserved and cannot be a value",
                    ));
                }
                if !members.insert(value.as_str().to_owned()) {
                    return Err(violation(attribute.as_str(), value.as_str(), "duplicate value"));
                }
                values.push(value);
            }

            let idx = *by_name.entry(category.clone()).or_insert_with(|| {
                categories.push(CategoryEntry {
                    id: category.clone(),
                    attributes: Vec::new(),
                });
                categories.len() - 1
            });
            let entry = &mut categories[idx];
            if entry.attribute(attribute.as_str()).is_some() {
                return Err(violation(attribute.as_str(), "", "duplicate attribute"));
            }
            entry.attributes.push(AttributeEntry {
                id: attribute,
                values,
                members,
            });
        }

        if categories.is_empty() {
            return Err(Error::EmptyTaxonomy);
        }
        Ok(Self {
            categories,
            by_name,
        })
    }

    /// Records in load order; feeding them back through [`Taxonomy::from_records`]
    /// reproduces `self`.
    pub fn records(&self) -> Vec<TaxonomyRecord> {
        self.categories
            .iter()
            .flat_map(|c| {
                c.attributes.iter().map(move |a| TaxonomyRecord {
                    category: c.id.to_string(),
                    attribute: a.id.to_string(),
                    values: a.values.iter().map(ToString::to_string).collect(),
                })
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        fsio::to_jsonl(&self.records())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, self.to_jsonl().as_bytes())
    }

    /// Categories in file order.
    pub fn categories(&self) -> impl Iterator<Item = &CategoryId> {
        self.categories.iter().map(|c| &c.id)
    }

    pub fn contains_category(&self, category: &str) -> bool {
        self.by_name.contains_key(category)
    }

    fn category(&self, category: &str) -> Result<&CategoryEntry> {
        self.by_name
            .get(category)
            .map(|&i| &self.categories[i])
            .ok_or_else(|| Error::UnknownCategory(category.to_owned()))
    }

    fn attribute(&self, category: &str, attribute: &str) -> Result<&AttributeEntry> {
        self.category(category)?
            .attribute(attribute)
            .ok_or_else(|| Error::UnknownAttribute {
                category: category.to_owned(),
                attribute: attribute.to_owned(),
            })
    }

    /// Attribute schema of `category`, in file order.
    pub fn attribute_set(&self, category: &str) -> Result<Vec<&AttributeId>> {
        Ok(self.category(category)?.attributes.iter().map(|a| &a.id).collect())
    }

    pub fn has_attribute(&self, category: &str, attribute: &str) -> bool {
        self.attribute(category, attribute).is_ok()
    }

    /// Enumerated values for `(category, attribute)`, in file order.
    pub fn values_of(&self, category: &str, attribute: &str) -> Result<&[ValueId]> {
        Ok(&self.attribute(category, attribute)?.values)
    }

    /// Exact membership after canonicalization. Unknown keys count as "not a member".
    pub fn contains_value(&self, category: &str, attribute: &str, value: &str) -> bool {
        self.attribute(category, attribute)
            .map(|a| a.members.contains(canonicalize(value).as_str()))
            .unwrap_or(false)
    }

    /// Number of (category, attribute, value) triples.
    pub fn triple_count(&self) -> usize {
        self.categories
            .iter()
            .flat_map(|c| &c.attributes)
            .map(|a| a.values.len())
            .sum()
    }

    /// Largest value-list length over all (category, attribute) pairs.
    pub fn max_partition_size(&self) -> usize {
        self.categories
            .iter()
            .flat_map(|c| &c.attributes)
            .map(|a| a.values.len())
            .max()
            .unwrap_or(0)
    }
}
