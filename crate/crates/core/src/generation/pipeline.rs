use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::corpus::Product;
use crate::embedding::Encoder;
use crate::error::{Error, Result};
use crate::promptgen::{assemble_prompt, PromptBundle, PromptTemplate};
use crate::retrieval::{score_serde, CandidateSet, FewShotExample, ProductIndex, Retriever, ValueIndex};
use crate::taxonomy::{AttributeId, Taxonomy};

use super::{parse_completion, Generator, Outcome, ParseDiagnostics, Prediction};

/// Retrieval depth: `k` candidate values per attribute, `m` reference products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub k: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotTrace {
    pub id: String,
    #[serde(with = "score_serde")]
    pub score: f64,
}

/// Everything the pipeline saw while predicting one product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub product_id: String,
    pub k: usize,
    pub m: usize,
    pub candidates: Vec<CandidateSet>,
    pub shots: Vec<ShotTrace>,
    pub raw_completion: String,
    pub diagnostics: ParseDiagnostics,
}

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub product_id: String,
    pub predictions: BTreeMap<String, Outcome>,
    pub trace_ref: String,
    pub run_id: String,
}

#[derive(Debug, Clone)]
pub struct PredictionRun {
    pub product_id: String,
    pub prediction: Prediction,
    pub trace: TraceRecord,
    pub bundle: PromptBundle,
}

impl PredictionRun {
    pub fn record(&self, trace_ref: String, run_id: &str) -> PredictionRecord {
        PredictionRecord {
            product_id: self.product_id.clone(),
            predictions: self.prediction.to_map(),
            trace_ref,
            run_id: run_id.to_owned(),
        }
    }
}

/// Retrieval, prompting, generation and parsing wired together.
pub struct Pipeline {
    pub taxonomy: Taxonomy,
    pub value_index: ValueIndex,
    pub product_index: ProductIndex,
    pub value_encoder: Box<dyn Encoder>,
    pub product_encoder: Box<dyn Encoder>,
    pub generator: Box<dyn Generator>,
    pub template: PromptTemplate,
    /// Products predicted concurrently; also bounds requests to a remote generator.
    pub concurrency: usize,
}

impl Pipeline {
    pub fn retriever(&self) -> Retriever<'_> {
        Retriever {
            values: &self.value_index,
            products: &self.product_index,
            value_encoder: self.value_encoder.as_ref(),
            product_encoder: self.product_encoder.as_ref(),
        }
    }

    pub fn schema(&self, product: &Product) -> Result<Vec<AttributeId>> {
        Ok(self
            .taxonomy
            .attribute_set(product.category.as_str())?
            .into_iter()
            .cloned()
            .collect())
    }

    /// Retrieves context and assembles the prompt without calling the generator.
    pub fn prepare(
        &self,
        product: &Product,
        params: PipelineParams,
    ) -> Result<(Vec<CandidateSet>, Vec<FewShotExample>, PromptBundle)> {
        let retriever = self.retriever();
        let query = product.render_query();
        let category = product.category.as_str();
        let candidates = retriever
            .retrieve_all_values(&query, &self.taxonomy, category, params.k)
            .map_err(|e| e.at_stage("retrieve_values"))?;
        let shots = retriever
            .retrieve_products(&query, category, params.m, Some(&product.id))
            .map_err(|e| e.at_stage("retrieve_products"))?;
        let bundle = assemble_prompt(product, &shots, &candidates, &self.taxonomy, &self.template)
            .map_err(|e| e.at_stage("assemble_prompt"))?;
        Ok((candidates, shots, bundle))
    }

    pub fn predict(&self, product: &Product, params: PipelineParams) -> Result<PredictionRun> {
        self.predict_inner(product, params)
            .map_err(|e| e.at_stage(format!("product `{}`", product.id)))
    }

    fn predict_inner(&self, product: &Product, params: PipelineParams) -> Result<PredictionRun> {
        if params.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let (candidates, shots, bundle) = self.prepare(product, params)?;
        let raw = self.generator.generate(&bundle).map_err(|e| e.at_stage("generate"))?;
        let schema = self.schema(product)?;
        let (prediction, diagnostics) = parse_completion(&raw, &schema, &self.taxonomy, &product.category);
        let trace = TraceRecord {
            product_id: product.id.clone(),
            k: params.k,
            m: params.m,
            candidates,
            shots: shots
                .iter()
                .map(|s| ShotTrace {
                    id: s.product.id.clone(),
                    score: s.score,
                })
                .collect(),
            raw_completion: raw,
            diagnostics,
        };
        Ok(PredictionRun {
            product_id: product.id.clone(),
            prediction,
            trace,
            bundle,
        })
    }

    /// Predicts every product with up to `concurrency` in flight. Output order
    /// matches input order; the first failing product (by input order) is reported.
    pub fn predict_batch(&self, products: &[Product], params: PipelineParams) -> Result<Vec<PredictionRun>> {
        let slots: Vec<Mutex<Option<Result<PredictionRun>>>> = products.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.concurrency.max(1).min(products.len());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= products.len() {
                        break;
                    }
                    let run = self.predict(&products[i], params);
                    *slots[i].lock().expect("prediction slot") = Some(run);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("prediction slot").expect("product processed"))
            .collect()
    }
}
