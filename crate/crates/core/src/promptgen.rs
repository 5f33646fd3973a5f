//! Prompt assembly and supervised fine-tuning export.
//!
//! A prompt has exactly five sections, in order: task description, note,
//! reference (similar) products, product information, candidate values. Each
//! section is a header line followed by its body lines. Free text coming from
//! products is collapsed onto one line so headers stay unambiguous.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Product;
use crate::error::{Error, Result};
use crate::retrieval::{CandidateSet, FewShotExample};
use crate::taxonomy::{AttributeId, CategoryId, Taxonomy, NULL_MARKER};

const DEFAULT_TEMPLATE: &str = include_str!("../resources/prompt_template.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    pub task_header: String,
    pub task_description: String,
    pub note_header: String,
    pub notes: Vec<String>,
    pub reference_header: String,
    pub no_reference_line: String,
    pub product_header: String,
    pub candidate_header: String,
    pub description_label: String,
    pub category_label: String,
    pub attribute_value_label: String,
    pub attribute_collection_label: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TEMPLATE).expect("bundled template parses")
    }
}

impl PromptTemplate {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("prompt template: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    fn headers(&self) -> [&str; 5] {
        [
            &self.task_header,
            &self.note_header,
            &self.reference_header,
            &self.product_header,
            &self.candidate_header,
        ]
    }

    fn render_note(&self) -> String {
        self.notes
            .iter()
            .enumerate()
            .map(|(i, n)| format!("{}. {}", i + 1, one_line(n)))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Collapses all whitespace runs, including newlines, to single spaces.
fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Where each part of an assembled prompt came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptProvenance {
    pub product_id: String,
    pub category: CategoryId,
    pub description: String,
    /// Category schema, in order.
    pub attributes: Vec<AttributeId>,
    /// Candidate sets in schema order.
    pub candidates: Vec<CandidateSet>,
    pub shots: Vec<FewShotExample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub task_description: String,
    pub note: String,
    pub few_shots: Vec<String>,
    pub product_block: String,
    pub candidate_block: String,
    pub rendered: String,
    /// Present for assembled bundles, absent for parsed ones.
    pub provenance: Option<PromptProvenance>,
}

impl PromptBundle {
    /// Section-wise equality, ignoring provenance.
    pub fn same_sections(&self, other: &PromptBundle) -> bool {
        self.task_description == other.task_description
            && self.note == other.note
            && self.few_shots == other.few_shots
            && self.product_block == other.product_block
            && self.candidate_block == other.candidate_block
            && self.rendered == other.rendered
    }
}

fn render(template: &PromptTemplate, bodies: [&str; 5]) -> String {
    let mut out = String::new();
    for (header, body) in template.headers().iter().zip(bodies) {
        out.push_str(header);
        out.push('\n');
        out.push_str(body);
        out.push('\n');
    }
    out
}

fn reference_body(template: &PromptTemplate, few_shots: &[String]) -> String {
    if few_shots.is_empty() {
        template.no_reference_line.clone()
    } else {
        few_shots.join("\n")
    }
}

fn render_shot(template: &PromptTemplate, shot: &FewShotExample) -> String {
    let mut lines = vec![
        format!("{}: {}", template.description_label, one_line(shot.product.render_query().as_str())),
        format!("{}: {}", template.category_label, shot.product.category),
        format!("{}:", template.attribute_value_label),
    ];
    lines.extend(
        shot.rendered_labels
            .iter()
            .map(|(a, v)| format!("{a}: {}", one_line(v))),
    );
    lines.join("\n")
}

/// Builds the five-section prompt for `product`.
///
/// `candidates` may list the category attributes in any order; they are
/// rendered in schema order. Attributes outside the schema are rejected.
pub fn assemble_prompt(
    product: &Product,
    shots: &[FewShotExample],
    candidates: &[CandidateSet],
    taxonomy: &Taxonomy,
    template: &PromptTemplate,
) -> Result<PromptBundle> {
    let category = product.category.as_str();
    let schema: Vec<AttributeId> = taxonomy.attribute_set(category)?.into_iter().cloned().collect();
    if let Some(foreign) = candidates.iter().find(|c| !schema.contains(&c.attribute)) {
        return Err(Error::SchemaMismatch {
            category: category.to_owned(),
            attribute: foreign.attribute.to_string(),
        });
    }
    let ordered: Vec<CandidateSet> = schema
        .iter()
        .filter_map(|a| candidates.iter().find(|c| &c.attribute == a).cloned())
        .collect();

    let description = one_line(product.render_query().as_str());
    let few_shots: Vec<String> = shots.iter().map(|s| render_shot(template, s)).collect();
    let collection = schema
        .iter()
        .map(|a| a.as_str().to_lowercase())
        .collect::<Vec<_>>()
        .join(", ");
    let product_block = [
        format!("{}: {}", template.description_label, description),
        format!("{}: {}", template.category_label, product.category),
        format!("{}: {}", template.attribute_collection_label, collection),
    ]
    .join("\n");
    let candidate_block = ordered
        .iter()
        .map(|set| {
            let values: Vec<String> = set.values().map(one_line).collect();
            format!("{}: {}", set.attribute, values.join(", "))
        })
        .collect::<Vec<_>>()
        .join("\n");

    let task_description = one_line(&template.task_description);
    let note = template.render_note();
    let rendered = render(
        template,
        [
            &task_description,
            &note,
            &reference_body(template, &few_shots),
            &product_block,
            &candidate_block,
        ],
    );

    Ok(PromptBundle {
        task_description,
        note,
        few_shots,
        product_block,
        candidate_block,
        rendered,
        provenance: Some(PromptProvenance {
            product_id: product.id.clone(),
            category: product.category.clone(),
            description,
            attributes: schema,
            candidates: ordered,
            shots: shots.to_vec(),
        }),
    })
}

/// Recovers the five sections of a rendered prompt.
pub fn parse_prompt_sections(rendered: &str, template: &PromptTemplate) -> Result<PromptBundle> {
    let headers = template.headers();
    let lines: Vec<&str> = rendered.strip_suffix('\n').unwrap_or(rendered).split('\n').collect();
    let mut bodies: Vec<Vec<&str>> = Vec::with_capacity(5);
    let mut cursor = 0;
    for (i, header) in headers.iter().enumerate() {
        if lines.get(cursor) != Some(header) {
            return Err(Error::MalformedSection((*header).to_owned()));
        }
        cursor += 1;
        let start = cursor;
        let next = headers.get(i + 1);
        while cursor < lines.len() && next.is_none_or(|n| lines[cursor] != *n) {
            cursor += 1;
        }
        bodies.push(lines[start..cursor].to_vec());
    }

    let description_prefix = format!("{}: ", template.description_label);
    let reference = &bodies[2];
    let few_shots: Vec<String> = if reference.len() == 1 && reference[0] == template.no_reference_line {
        Vec::new()
    } else {
        let mut blocks: Vec<Vec<&str>> = Vec::new();
        for line in reference {
            if line.starts_with(&description_prefix) || blocks.is_empty() {
                blocks.push(Vec::new());
            }
            blocks.last_mut().expect("block").push(line);
        }
        blocks.into_iter().map(|b| b.join("\n")).collect()
    };

    let bundle = PromptBundle {
        task_description: bodies[0].join("\n"),
        note: bodies[1].join("\n"),
        few_shots,
        product_block: bodies[3].join("\n"),
        candidate_block: bodies[4].join("\n"),
        rendered: rendered.to_owned(),
        provenance: None,
    };
    let again = render(
        template,
        [
            &bundle.task_description,
            &bundle.note,
            &reference_body(template, &bundle.few_shots),
            &bundle.product_block,
            &bundle.candidate_block,
        ],
    );
    if again != rendered {
        return Err(Error::MalformedSection(format!("{} (unexpected trailing content)", template.candidate_header)));
    }
    Ok(bundle)
}

/// A prompt/target training pair. The loss covers only `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub prompt: String,
    pub target: String,
    /// Offset, in Unicode scalar values, where the target starts in `prompt + target`.
    pub loss_mask_boundary: usize,
    pub is_ood_sample: bool,
    pub product_id: String,
}

impl SftRecord {
    fn new(product_id: &str, prompt: String, target: String, is_ood_sample: bool) -> Self {
        Self {
            loss_mask_boundary: prompt.chars().count(),
            prompt,
            target,
            is_ood_sample,
            product_id: product_id.to_owned(),
        }
    }

    /// Splits `prompt + target` at `loss_mask_boundary`.
    pub fn split_concatenated(&self) -> (String, String) {
        let full = format!("{}{}", self.prompt, self.target);
        let at = full
            .char_indices()
            .nth(self.loss_mask_boundary)
            .map_or(full.len(), |(i, _)| i);
        (full[..at].to_owned(), full[at..].to_owned())
    }
}

/// `Attribute: value` lines for every schema attribute, from ground truth.
pub fn render_target(product: &Product, taxonomy: &Taxonomy) -> Result<String> {
    Ok(taxonomy
        .attribute_set(product.category.as_str())?
        .iter()
        .map(|a| format!("{a}: {}", one_line(product.target_value(a.as_str()))))
        .collect::<Vec<_>>()
        .join("\n"))
}

pub fn build_sft_record(product: &Product, bundle: &PromptBundle, taxonomy: &Taxonomy) -> Result<SftRecord> {
    if product.labels.is_empty() {
        return Err(Error::NoLabels(product.id.clone()));
    }
    let target = render_target(product, taxonomy)?;
    Ok(SftRecord::new(&product.id, bundle.rendered.clone(), target, false))
}

/// First schema attribute whose supervision value is among its retrieved candidates.
fn ood_eligible<'a>(product: &Product, provenance: &'a PromptProvenance) -> Option<(&'a AttributeId, String)> {
    provenance.attributes.iter().find_map(|a| {
        let target = product.target_value(a.as_str());
        if target == NULL_MARKER {
            return None;
        }
        let set = provenance.candidates.iter().find(|c| &c.attribute == a)?;
        set.real_values().any(|v| v == target).then(|| (a, target.to_owned()))
    })
}

/// Re-renders the prompt with one attribute's ground-truth value hidden from
/// the candidates and the reference labels, keeping the target unchanged.
pub fn build_ood_sample(
    product: &Product,
    bundle: &PromptBundle,
    taxonomy: &Taxonomy,
    template: &PromptTemplate,
) -> Result<SftRecord> {
    let provenance = bundle
        .provenance
        .as_ref()
        .ok_or_else(|| Error::Config("OOD samples need an assembled bundle with provenance".into()))?;
    if product.labels.is_empty() {
        return Err(Error::NoLabels(product.id.clone()));
    }
    let (attribute, value) =
        ood_eligible(product, provenance).ok_or_else(|| Error::NoEligibleAttribute(product.id.clone()))?;

    let candidates: Vec<CandidateSet> = provenance
        .candidates
        .iter()
        .map(|c| if &c.attribute == attribute { c.without(&value) } else { c.clone() })
        .collect();
    let shots: Vec<FewShotExample> = provenance
        .shots
        .iter()
        .map(|s| {
            let mut s = s.clone();
            for (a, v) in &mut s.rendered_labels {
                if a == attribute && *v == value {
                    *v = NULL_MARKER.to_owned();
                }
            }
            s
        })
        .collect();
    let hidden = assemble_prompt(product, &shots, &candidates, taxonomy, template)?;
    let target = render_target(product, taxonomy)?;
    Ok(SftRecord::new(&product.id, hidden.rendered, target, true))
}
