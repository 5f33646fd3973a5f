//! Generators and completion parsing.
//!
//! One completion covers every attribute of the product's category, one
//! `Attribute: value` line each. The parser is total: whatever the generator
//! returns, every schema attribute ends up with exactly one [`Outcome`].

mod mock;
mod pipeline;
mod remote;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use mock::{MockGenerator, MockMode};
pub use pipeline::{
    Pipeline, PipelineParams, PredictionRecord, PredictionRun, ShotTrace, TraceRecord,
};
pub use remote::{RemoteGenerator, RemoteGeneratorConfig};

use crate::error::Result;
use crate::promptgen::PromptBundle;
use crate::taxonomy::{canonicalize, AttributeId, CategoryId, Taxonomy, NULL_MARKER};

/// Produces a raw completion for an assembled prompt.
pub trait Generator: Send + Sync {
    fn identity(&self) -> String;

    fn generate(&self, bundle: &PromptBundle) -> Result<String>;
}

/// Abstention token for attributes the generator cannot recognize.
pub const UNKNOWN_TOKEN: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum Outcome {
    Value {
        value: String,
        /// `true` iff the value is not enumerated by the taxonomy.
        ood: bool,
    },
    /// The generator asserted the value does not exist.
    Null,
    /// The generator abstained, or said nothing about the attribute.
    Unknown,
}

impl Outcome {
    pub fn value(&self) -> Option<&str> {
        match self {
            Outcome::Value { value, .. } => Some(value),
            _ => None,
        }
    }

    /// Null and Unknown both count as predicting the empty set.
    pub fn is_empty_prediction(&self) -> bool {
        !matches!(self, Outcome::Value { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub category: CategoryId,
    /// One outcome per schema attribute, in schema order.
    pub outcomes: Vec<(AttributeId, Outcome)>,
}

impl Prediction {
    pub fn outcome(&self, attribute: &str) -> Option<&Outcome> {
        self.outcomes
            .iter()
            .find(|(a, _)| a.as_str() == attribute)
            .map(|(_, o)| o)
    }

    pub fn to_map(&self) -> BTreeMap<String, Outcome> {
        self.outcomes
            .iter()
            .map(|(a, o)| (a.to_string(), o.clone()))
            .collect()
    }
}

/// Lines the parser could not use.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostics {
    /// No `name: value` separator, or an empty value.
    pub malformed_lines: Vec<String>,
    /// Attribute name not in the schema.
    pub unknown_attribute_lines: Vec<String>,
    /// Attribute already answered by an earlier line.
    pub duplicate_lines: Vec<String>,
}

impl ParseDiagnostics {
    pub fn skipped(&self) -> usize {
        self.malformed_lines.len() + self.unknown_attribute_lines.len() + self.duplicate_lines.len()
    }
}

fn split_line(line: &str) -> Option<(&str, &str)> {
    let at = line.find([':', '：'])?;
    let sep_len = line[at..].chars().next().map_or(1, char::len_utf8);
    Some((line[..at].trim(), line[at + sep_len..].trim()))
}

fn classify_value(raw: &str, taxonomy: &Taxonomy, category: &str, attribute: &str) -> Outcome {
    let value = canonicalize(raw);
    if value == NULL_MARKER {
        Outcome::Null
    } else if value.eq_ignore_ascii_case(UNKNOWN_TOKEN) {
        Outcome::Unknown
    } else {
        let ood = !taxonomy.contains_value(category, attribute, &value);
        Outcome::Value { value, ood }
    }
}

/// Parses a completion into one outcome per attribute of `schema`.
///
/// Attribute names match case-insensitively. The first line for an attribute
/// wins. Attributes never mentioned are [`Outcome::Unknown`].
pub fn parse_completion(
    raw: &str,
    schema: &[AttributeId],
    taxonomy: &Taxonomy,
    category: &CategoryId,
) -> (Prediction, ParseDiagnostics) {
    let mut slots: Vec<Option<Outcome>> = vec![None; schema.len()];
    let mut diagnostics = ParseDiagnostics::default();
    for line in raw.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((name, value)) = split_line(line) else {
            diagnostics.malformed_lines.push(line.to_owned());
            continue;
        };
        let name = canonicalize(name).to_lowercase();
        let Some(i) = schema.iter().position(|a| a.as_str().to_lowercase() == name) else {
            diagnostics.unknown_attribute_lines.push(line.to_owned());
            continue;
        };
        if value.is_empty() {
            diagnostics.malformed_lines.push(line.to_owned());
            continue;
        }
        if slots[i].is_some() {
            diagnostics.duplicate_lines.push(line.to_owned());
            continue;
        }
        slots[i] = Some(classify_value(value, taxonomy, category.as_str(), schema[i].as_str()));
    }
    let outcomes = schema
        .iter()
        .cloned()
        .zip(slots.into_iter().map(|s| s.unwrap_or(Outcome::Unknown)))
        .collect();
    (
        Prediction {
            category: category.clone(),
            outcomes,
        },
        diagnostics,
    )
}
