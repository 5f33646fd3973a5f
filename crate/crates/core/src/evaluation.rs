//! Micro-averaged precision/recall/F1 at 1, candidate coverage, and
//! parameter sweeps.
//!
//! An evaluation instance is one annotated (product, attribute) pair. The
//! confusion rules:
//!
//! | ground truth | prediction        | cell        |
//! |--------------|-------------------|-------------|
//! | empty        | empty             | TN          |
//! | empty        | value             | FP          |
//! | non-empty    | value ∈ truth     | TP          |
//! | non-empty    | empty             | FN          |
//! | non-empty    | value ∉ truth     | FP **and** FN |
//!
//! Null and Unknown outcomes both count as an empty prediction.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Product;
use crate::error::{Error, Result};
use crate::fsio::sha256_hex;
use crate::generation::{Outcome, Pipeline, PipelineParams, PredictionRun};
use crate::taxonomy::NULL_MARKER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    TruePositive,
    TrueNegative,
    FalsePositive,
    FalseNegative,
    /// Wrong non-empty prediction against non-empty truth: one FP and one FN.
    Mismatch,
}

pub fn classify_instance<S: AsRef<str>>(ground_truth: &[S], outcome: &Outcome) -> Cell {
    match (ground_truth.is_empty(), outcome.value()) {
        (true, None) => Cell::TrueNegative,
        (true, Some(_)) => Cell::FalsePositive,
        (false, None) => Cell::FalseNegative,
        (false, Some(v)) if ground_truth.iter().any(|g| g.as_ref() == v) => Cell::TruePositive,
        (false, Some(_)) => Cell::Mismatch,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, cell: Cell) {
        match cell {
            Cell::TruePositive => self.tp += 1,
            Cell::TrueNegative => self.tn += 1,
            Cell::FalsePositive => self.fp += 1,
            Cell::FalseNegative => self.fn_ += 1,
            Cell::Mismatch => {
                self.fp += 1;
                self.fn_ += 1;
            }
        }
    }

    pub fn merge(self, other: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }

    fn ratio(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn precision(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// One annotated (product, attribute) pair with its prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalInstance {
    pub product_id: String,
    pub attribute: String,
    pub ground_truth: Vec<String>,
    pub outcome: Outcome,
    /// Retrieved candidates, including the null marker; needed for coverage.
    #[serde(default)]
    pub candidates: Option<Vec<String>>,
}

impl EvalInstance {
    pub fn cell(&self) -> Cell {
        classify_instance(&self.ground_truth, &self.outcome)
    }

    /// `None` when the instance has empty truth or no candidate list.
    pub fn is_covered(&self) -> Option<bool> {
        if self.ground_truth.is_empty() {
            return None;
        }
        let candidates = self.candidates.as_ref()?;
        Some(
            candidates
                .iter()
                .filter(|c| c.as_str() != NULL_MARKER)
                .any(|c| self.ground_truth.contains(c)),
        )
    }
}

/// Breakdown that does not enter the metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub null_predictions: u64,
    pub unknown_predictions: u64,
    pub ood_predictions: u64,
    /// True positives whose value is outside the taxonomy.
    pub ood_true_positives: u64,
    pub fp_only: u64,
    pub fn_only: u64,
    pub mismatches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when no instance has both non-empty truth and candidates.
    pub coverage: Option<f64>,
    pub counts: ConfusionCounts,
    pub instance_count: usize,
    pub diagnostics: Diagnostics,
    /// Digest of the sorted (product, attribute) keys.
    pub universe: String,
}

fn universe_digest(instances: &[EvalInstance]) -> String {
    let mut keys: Vec<String> = instances
        .iter()
        .map(|i| format!("{}\t{}", i.product_id, i.attribute))
        .collect();
    keys.sort();
    sha256_hex(keys.join("\n").as_bytes())
}

pub fn micro_scores(instances: &[EvalInstance]) -> Result<EvalReport> {
    if instances.is_empty() {
        return Err(Error::EmptyInstances);
    }
    let mut counts = ConfusionCounts::default();
    let mut diagnostics = Diagnostics::default();
    for instance in instances {
        let cell = instance.cell();
        counts.add(cell);
        match &instance.outcome {
            Outcome::Null => diagnostics.null_predictions += 1,
            Outcome::Unknown => diagnostics.unknown_predictions += 1,
            Outcome::Value { ood, .. } => {
                if *ood {
                    diagnostics.ood_predictions += 1;
                    if cell == Cell::TruePositive {
                        diagnostics.ood_true_positives += 1;
                    }
                }
            }
        }
        match cell {
            Cell::FalsePositive => diagnostics.fp_only += 1,
            Cell::FalseNegative => diagnostics.fn_only += 1,
            Cell::Mismatch => diagnostics.mismatches += 1,
            _ => {}
        }
    }
    Ok(EvalReport {
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        coverage: coverage(instances).ok(),
        counts,
        instance_count: instances.len(),
        diagnostics,
        universe: universe_digest(instances),
    })
}

/// Fraction of non-empty-truth instances whose candidates (null marker
/// excluded) intersect the truth.
pub fn coverage(instances: &[EvalInstance]) -> Result<f64> {
    let (covered, total) = instances
        .iter()
        .filter_map(EvalInstance::is_covered)
        .fold((0u64, 0u64), |(c, t), hit| (c + u64::from(hit), t + 1));
    if total == 0 {
        return Err(Error::NoNonEmptyGroundTruth);
    }
    Ok(covered as f64 / total as f64)
}

/// Pairs annotated attributes with predictions. Every listed product must
/// have an outcome map; `candidates` is keyed by product id then attribute.
pub fn build_instances(
    products: &[Product],
    outcomes: &HashMap<String, BTreeMap<String, Outcome>>,
    candidates: Option<&HashMap<String, BTreeMap<String, Vec<String>>>>,
) -> Result<Vec<EvalInstance>> {
    let mut out = Vec::new();
    for product in products {
        let predicted = outcomes
            .get(&product.id)
            .ok_or_else(|| Error::product(&product.id, "no prediction for product"))?;
        for (attribute, truth) in &product.labels {
            let outcome = predicted
                .get(attribute.as_str())
                .cloned()
                .unwrap_or(Outcome::Unknown);
            let cands = candidates
                .and_then(|c| c.get(&product.id))
                .and_then(|m| m.get(attribute.as_str()))
                .cloned();
            out.push(EvalInstance {
                product_id: product.id.clone(),
                attribute: attribute.to_string(),
                ground_truth: truth.iter().map(|v| v.value.clone()).collect(),
                outcome,
                candidates: cands,
            });
        }
    }
    Ok(out)
}

/// Evaluation instances straight from pipeline runs.
pub fn instances_from_runs(products: &[Product], runs: &[PredictionRun]) -> Result<Vec<EvalInstance>> {
    let outcomes: HashMap<String, BTreeMap<String, Outcome>> = runs
        .iter()
        .map(|r| (r.product_id.clone(), r.prediction.to_map()))
        .collect();
    let candidates: HashMap<String, BTreeMap<String, Vec<String>>> = runs
        .iter()
        .map(|r| {
            let per_attr = r
                .trace
                .candidates
                .iter()
                .map(|c| (c.attribute.to_string(), c.values().map(str::to_owned).collect()))
                .collect();
            (r.product_id.clone(), per_attr)
        })
        .collect();
    build_instances(products, &outcomes, Some(&candidates))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDelta {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub coverage: Option<f64>,
    pub tp: i64,
    pub fp: i64,
    #[serde(rename = "fn")]
    pub fn_: i64,
    pub tn: i64,
}

/// Signed `b - a` per metric. Both reports must cover the same instances.
pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<ReportDelta> {
    if a.instance_count != b.instance_count {
        return Err(Error::UniverseMismatch(format!(
            "{} vs {} instances",
            a.instance_count, b.instance_count
        )));
    }
    if a.universe != b.universe {
        return Err(Error::UniverseMismatch("instance keys differ".into()));
    }
    let d = |x: u64, y: u64| y as i64 - x as i64;
    Ok(ReportDelta {
        precision: b.precision - a.precision,
        recall: b.recall - a.recall,
        f1: b.f1 - a.f1,
        coverage: a.coverage.zip(b.coverage).map(|(x, y)| y - x),
        tp: d(a.counts.tp, b.counts.tp),
        fp: d(a.counts.fp, b.counts.fp),
        fn_: d(a.counts.fn_, b.counts.fn_),
        tn: d(a.counts.tn, b.counts.tn),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    K,
    M,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(SweepParam::K),
            "m" => Ok(SweepParam::M),
            other => Err(Error::Config(format!("unknown sweep parameter `{other}` (expected k or m)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: usize,
    pub coverage: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub const SWEEP_CSV_HEADER: &str = "param,coverage,precision,recall,f1";

/// Runs the full pipeline once per swept value, holding the other parameter at `fixed`.
pub fn sweep(
    pipeline: &Pipeline,
    products: &[Product],
    param: SweepParam,
    values: &[usize],
    fixed: PipelineParams,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("sweep values must be ascending".into()));
    }
    values
        .iter()
        .map(|&v| {
            let params = match param {
                SweepParam::K => PipelineParams { k: v, ..fixed },
                SweepParam::M => PipelineParams { m: v, ..fixed },
            };
            let label = |e: Error| e.at_stage(format!("sweep {param:?}={v}"));
            let runs = pipeline.predict_batch(products, params).map_err(label)?;
            let instances = instances_from_runs(products, &runs).map_err(label)?;
            let report = micro_scores(&instances).map_err(label)?;
            let coverage = coverage(&instances).map_err(label)?;
            Ok(SweepPoint {
                param: v,
                coverage,
                precision: report.precision,
                recall: report.recall,
                f1: report.f1,
            })
        })
        .collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(out, "{},{},{},{},{}", p.param, p.coverage, p.precision, p.recall, p.f1);
    }
    out
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepPoint>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SWEEP_CSV_HEADER => {}
        _ => return Err(Error::parse(1, format!("expected header `{SWEEP_CSV_HEADER}`"))),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |m: String| Error::parse(i + 1, m);
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad(format!("expected 5 fields, got {}", fields.len())));
            }
            let f = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(e.to_string()));
            Ok(SweepPoint {
                param: fields[0].trim().parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                coverage: f(fields[1])?,
                precision: f(fields[2])?,
                recall: f(fields[3])?,
                f1: f(fields[4])?,
            })
        })
        .collect()
}
