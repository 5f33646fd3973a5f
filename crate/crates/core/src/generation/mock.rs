use std::collections::HashMap;

use crate::corpus::Product;
use crate::error::{Error, Result};
use crate::promptgen::{PromptBundle, PromptProvenance};
use crate::taxonomy::NULL_MARKER;

use super::Generator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockMode {
    /// Emits the ground-truth value when it is among the candidates, else the null marker.
    Oracle,
    /// Emits the first candidate occurring verbatim in the product text, else the null marker.
    Heuristic,
}

/// Deterministic stand-in for a served model.
pub struct MockGenerator {
    mode: MockMode,
    truth: HashMap<String, Product>,
}

impl MockGenerator {
    pub fn heuristic() -> Self {
        Self {
            mode: MockMode::Heuristic,
            truth: HashMap::new(),
        }
    }

    /// `products` supplies the ground truth, looked up by product id.
    pub fn oracle(products: impl IntoIterator<Item = Product>) -> Self {
        Self {
            mode: MockMode::Oracle,
            truth: products.into_iter().map(|p| (p.id.clone(), p)).collect(),
        }
    }

    pub fn mode(&self) -> MockMode {
        self.mode
    }

    fn answer(&self, provenance: &PromptProvenance, attribute: &str) -> Result<String> {
        let candidates: Vec<&str> = provenance
            .candidates
            .iter()
            .find(|c| c.attribute.as_str() == attribute)
            .map(|c| c.values().collect())
            .unwrap_or_default();
        let answer = match self.mode {
            MockMode::Heuristic => candidates
                .iter()
                .find(|v| **v != NULL_MARKER && provenance.description.contains(**v))
                .copied()
                .unwrap_or(NULL_MARKER),
            MockMode::Oracle => {
                let product = self.truth.get(&provenance.product_id).ok_or_else(|| {
                    Error::product(&provenance.product_id, "no ground truth available to the oracle generator")
                })?;
                let truth = product.ground_truth(attribute).unwrap_or_default();
                candidates
                    .iter()
                    .find(|v| **v != NULL_MARKER && truth.iter().any(|t| t.value == **v))
                    .copied()
                    .unwrap_or(NULL_MARKER)
            }
        };
        Ok(answer.to_owned())
    }
}

impl Generator for MockGenerator {
    fn identity(&self) -> String {
        match self.mode {
            MockMode::Oracle => "mock-oracle".into(),
            MockMode::Heuristic => "mock-heuristic".into(),
        }
    }

    fn generate(&self, bundle: &PromptBundle) -> Result<String> {
        let provenance = bundle
            .provenance
            .as_ref()
            .ok_or_else(|| Error::Config("mock generator needs an assembled prompt bundle".into()))?;
        let lines = provenance
            .attributes
            .iter()
            .map(|a| Ok(format!("{a}: {}", self.answer(provenance, a.as_str())?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(lines.join("\n"))
    }
}
