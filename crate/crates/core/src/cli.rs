//! The `pavi` command line.
//!
//! Every command writes its outputs atomically into the output directory
//! together with `manifest.<command>.json`, which records the run id, the
//! resolved configuration, component identities, input and output digests
//! and timestamps. The run id is a digest of everything except timestamps,
//! so repeating a run with identical inputs repeats its id.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::PipelineConfig;
use crate::corpus::{corpus_stats, ingest_products, Product};
use crate::error::{Error, ErrorClass, Result};
use crate::evaluation::{build_instances, micro_scores, sweep, sweep_csv, EvalReport, SweepParam};
use crate::fsio::{read_jsonl, sha256_hex, to_jsonl, write_atomic};
use crate::generation::{Outcome, Pipeline, PredictionRecord, ShotTrace, TraceRecord};
use crate::promptgen::{build_ood_sample, build_sft_record, PromptTemplate};
use crate::retrieval::{CandidateSet, ProductIndex, ValueIndex};
use crate::synth::{self, SynthParams};
use crate::taxonomy::Taxonomy;

pub const VALUE_INDEX_FILE: &str = "value_index.jsonl";
pub const PRODUCT_INDEX_FILE: &str = "product_index.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const TRACES_FILE: &str = "traces.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SFT_FILE: &str = "sft.jsonl";
pub const RETRIEVAL_FILE: &str = "retrieval.jsonl";
pub const INGEST_FILE: &str = "ingest.json";

#[derive(Debug, Parser)]
#[command(name = "pavi", version, about = "Retrieval-augmented product attribute value identification")]
pub struct Cli {
    /// Pipeline configuration file [default: ./pipeline.toml]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Candidate values retrieved per attribute
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Reference products retrieved per query
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// mock-oracle, mock-heuristic or remote
    #[arg(long, global = true)]
    pub generator: Option<String>,
    /// builtin or remote
    #[arg(long, global = true)]
    pub encoder: Option<String>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for synthetic data generation and OOD sample draws
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic taxonomy, corpus, pool and starter config
    Synth(SynthArgs),
    /// Validate the taxonomy, corpus and pool and report their statistics
    Ingest,
    /// Build the value and product index snapshots
    Index,
    /// Write retrieved candidates and reference products per product
    Retrieve {
        /// Restrict to these product ids (repeatable)
        #[arg(long = "product")]
        products: Vec<String>,
    },
    /// Predict attribute values for every corpus product
    Predict,
    /// Score the predictions of the last `predict` run
    Evaluate,
    /// Run predict+evaluate over a list of k or m values
    Sweep {
        /// k or m
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated ascending values; `all` means the largest partition
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Export supervised fine-tuning records
    ExportSft {
        /// Probability of turning an eligible product into an OOD sample
        #[arg(long, default_value_t = 0.0)]
        ood_ratio: f64,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    pub categories: usize,
    #[arg(long, default_value_t = 200)]
    pub products: usize,
    #[arg(long, default_value_t = 100)]
    pub pool: usize,
    #[arg(long, default_value_t = 2)]
    pub min_attributes: usize,
    #[arg(long, default_value_t = 4)]
    pub max_attributes: usize,
    #[arg(long, default_value_t = 3)]
    pub min_values: usize,
    #[arg(long, default_value_t = 8)]
    pub max_values: usize,
    #[arg(long, default_value_t = 0.1)]
    pub null_fraction: f64,
    #[arg(long, default_value_t = 0.05)]
    pub unannotated_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    pub ood_fraction: f64,
    #[arg(long, default_value_t = 0.05)]
    pub multi_value_fraction: f64,
    #[arg(long, default_value_t = 0.15)]
    pub noise: f64,
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Input => 3,
        ErrorClass::Stage => 4,
    }
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.class())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub command: String,
    pub tool_version: String,
    pub parameters: serde_json::Value,
    pub config_hash: Option<String>,
    pub config: Option<PipelineConfig>,
    pub components: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn manifest_name(command: &str) -> String {
    format!("manifest.{command}.json")
}

struct Run {
    command: &'static str,
    out_dir: PathBuf,
    started_at: String,
    parameters: serde_json::Value,
    config: Option<PipelineConfig>,
    components: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl Run {
    fn new(command: &'static str, out_dir: PathBuf, config: Option<&PipelineConfig>) -> Self {
        Self {
            command,
            out_dir,
            started_at: chrono::Utc::now().to_rfc3339(),
            parameters: json!({}),
            config: config.cloned(),
            components: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn input(&mut self, name: &str, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.insert(name.to_owned(), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn component(&mut self, role: &str, identity: impl Into<String>) {
        self.components.insert(role.to_owned(), identity.into());
    }

    fn run_id(&self) -> String {
        let identity = json!({
            "command": self.command,
            "parameters": self.parameters,
            "config": self.config.as_ref().map(PipelineConfig::hash),
            "components": self.components,
            "inputs": self.inputs,
        });
        sha256_hex(identity.to_string().as_bytes())[..16].to_owned()
    }

    fn manifest_ref(&self) -> String {
        manifest_name(self.command)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(name);
        write_atomic(&path, bytes)?;
        self.outputs.insert(name.to_owned(), sha256_hex(bytes));
        info!("wrote {}", path.display());
        Ok(())
    }

    fn finish(self) -> Result<PathBuf> {
        let manifest = Manifest {
            run_id: self.run_id(),
            command: self.command.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            parameters: self.parameters,
            config_hash: self.config.as_ref().map(PipelineConfig::hash),
            config: self.config,
            components: self.components,
            inputs: self.inputs,
            outputs: self.outputs,
            started_at: self.started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
        };
        let path = self.out_dir.join(manifest_name(self.command));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// Runs one command; returns the path of the manifest it wrote.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    if let Command::Synth(args) = &cli.command {
        return cmd_synth(cli, args);
    }
    let cfg = resolve_config(cli)?;
    std::fs::create_dir_all(cfg.output_dir()).map_err(|e| Error::io(cfg.output_dir(), e))?;
    match &cli.command {
        Command::Synth(_) => unreachable!("handled above"),
        Command::Ingest => cmd_ingest(&cfg),
        Command::Index => cmd_index(&cfg),
        Command::Retrieve { products } => cmd_retrieve(&cfg, products),
        Command::Predict => cmd_predict(&cfg),
        Command::Evaluate => cmd_evaluate(&cfg),
        Command::Sweep { param, values } => cmd_sweep(&cfg, *param, values),
        Command::ExportSft { ood_ratio } => cmd_export_sft(&cfg, *ood_ratio),
    }
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli.config.clone().unwrap_or_else(|| PathBuf::from("pipeline.toml"));
    let mut cfg = PipelineConfig::load(&path).map_err(|e| match e {
        Error::Io { path, source } => Error::Config(format!("cannot read config {}: {source}", path.display())),
        other => other,
    })?;
    if let Some(k) = cli.k {
        cfg.k = k;
    }
    if let Some(m) = cli.m {
        cfg.m = m;
    }
    if let Some(g) = &cli.generator {
        cfg.override_generator(g)?;
    }
    if let Some(e) = &cli.encoder {
        cfg.override_encoder(e)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
        cfg.out_dir = cwd.join(out);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_synth(cli: &Cli, args: &SynthArgs) -> Result<PathBuf> {
    let params = SynthParams {
        seed: cli.seed.unwrap_or(7),
        categories: args.categories,
        products: args.products,
        pool_size: args.pool,
        min_attributes: args.min_attributes,
        max_attributes: args.max_attributes,
        min_values: args.min_values,
        max_values: args.max_values,
        null_fraction: args.null_fraction,
        unannotated_fraction: args.unannotated_fraction,
        ood_fraction: args.ood_fraction,
        multi_value_fraction: args.multi_value_fraction,
        noise: args.noise,
    };
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let corpus = synth::generate(&params)?;
    let mut run = Run::new("synth", dir.clone(), None);
    run.parameters = serde_json::to_value(&params).expect("params serialize");
    for path in corpus.write(&dir, params.seed)? {
        let name = path.file_name().expect("file name").to_string_lossy().into_owned();
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        run.outputs.insert(name, sha256_hex(&bytes));
    }
    run.finish()
}

struct Inputs {
    taxonomy: Taxonomy,
    corpus: Vec<Product>,
    pool: Vec<Product>,
}

fn load_inputs(cfg: &PipelineConfig, run: &mut Run) -> Result<Inputs> {
    run.input("taxonomy", &cfg.taxonomy_file())?;
    run.input("corpus", &cfg.corpus_file())?;
    run.input("pool", &cfg.pool_file())?;
    let taxonomy = Taxonomy::load(&cfg.taxonomy_file()).map_err(|e| e.at_stage("load taxonomy"))?;
    let corpus = ingest_products(&cfg.corpus_file(), &taxonomy).map_err(|e| e.at_stage("load corpus"))?;
    let pool = ingest_products(&cfg.pool_file(), &taxonomy).map_err(|e| e.at_stage("load pool"))?;
    Ok(Inputs { taxonomy, corpus, pool })
}

fn load_template(cfg: &PipelineConfig, run: &mut Run) -> Result<PromptTemplate> {
    let template = match &cfg.prompt_template {
        Some(p) => {
            let path = cfg.resolve(p);
            run.input("prompt_template", &path)?;
            PromptTemplate::load(&path)?
        }
        None => PromptTemplate::default(),
    };
    run.component("prompt_template", format!("v{}", template.version));
    Ok(template)
}

/// Loads the index snapshots written by `index`, plus the configured generator.
fn open_pipeline(cfg: &PipelineConfig, run: &mut Run) -> Result<(Pipeline, Vec<Product>)> {
    let Inputs { taxonomy, corpus, pool } = load_inputs(cfg, run)?;
    let value_encoder = cfg.encoder.build()?;
    let product_encoder = cfg.product_encoder_config().build()?;
    let out = cfg.output_dir();
    let snapshot = |name: &str| {
        let path = out.join(name);
        if path.exists() {
            Ok(path)
        } else {
            Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "index snapshot missing; run `pavi index` first"),
            ))
        }
    };
    let value_path = snapshot(VALUE_INDEX_FILE)?;
    let product_path = snapshot(PRODUCT_INDEX_FILE)?;
    run.input("value_index", &value_path)?;
    run.input("product_index", &product_path)?;
    let value_index = ValueIndex::load(&value_path, &taxonomy, value_encoder.as_ref())?;
    let product_index = ProductIndex::load(&product_path, &pool, &taxonomy, product_encoder.as_ref())?;
    let generator = cfg.generator.build(&corpus)?;
    run.component("value_encoder", value_encoder.identity());
    run.component("product_encoder", product_encoder.identity());
    run.component("generator", generator.identity());
    let template = load_template(cfg, run)?;
    let pipeline = Pipeline {
        taxonomy,
        value_index,
        product_index,
        value_encoder,
        product_encoder,
        generator,
        template,
        concurrency: cfg.concurrency,
    };
    Ok((pipeline, corpus))
}

fn cmd_ingest(cfg: &PipelineConfig) -> Result<PathBuf> {
    let mut run = Run::new("ingest", cfg.output_dir(), Some(cfg));
    let inputs = load_inputs(cfg, &mut run)?;
    let ood_labels = inputs
        .corpus
        .iter()
        .flat_map(|p| p.labels.values().flatten())
        .filter(|l| !l.in_taxonomy)
        .count();
    let summary = json!({
        "run_id": run.run_id(),
        "manifest": run.manifest_ref(),
        "taxonomy": {
            "categories": inputs.taxonomy.categories().count(),
            "triples": inputs.taxonomy.triple_count(),
            "max_partition_size": inputs.taxonomy.max_partition_size(),
        },
        "corpus": corpus_stats(&inputs.corpus),
        "corpus_ood_labels": ood_labels,
        "pool": corpus_stats(&inputs.pool),
    });
    run.write(INGEST_FILE, pretty(&summary).as_bytes())?;
    run.finish()
}

fn cmd_index(cfg: &PipelineConfig) -> Result<PathBuf> {
    let mut run = Run::new("index", cfg.output_dir(), Some(cfg));
    let inputs = load_inputs(cfg, &mut run)?;
    let value_encoder = cfg.encoder.build()?;
    let product_encoder = cfg.product_encoder_config().build()?;
    let values = ValueIndex::build(&inputs.taxonomy, value_encoder.as_ref()).map_err(|e| e.at_stage("index values"))?;
    let products = ProductIndex::build(&inputs.pool, &inputs.taxonomy, product_encoder.as_ref())
        .map_err(|e| e.at_stage("index products"))?;
    run.component("value_encoder", value_encoder.identity());
    run.component("product_encoder", product_encoder.identity());
    run.write(VALUE_INDEX_FILE, values.to_snapshot().as_bytes())?;
    run.write(PRODUCT_INDEX_FILE, products.to_snapshot().as_bytes())?;
    run.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub product_id: String,
    pub candidates: Vec<CandidateSet>,
    pub shots: Vec<ShotTrace>,
    pub run_id: String,
}

fn cmd_retrieve(cfg: &PipelineConfig, only: &[String]) -> Result<PathBuf> {
    let mut run = Run::new("retrieve", cfg.output_dir(), Some(cfg));
    run.parameters = json!({ "k": cfg.k, "m": cfg.m, "products": only });
    let (pipeline, corpus) = open_pipeline(cfg, &mut run)?;
    let selected: Vec<&Product> = if only.is_empty() {
        corpus.iter().collect()
    } else {
        only.iter()
            .map(|id| {
                corpus
                    .iter()
                    .find(|p| &p.id == id)
                    .ok_or_else(|| Error::product(id, "not in the corpus"))
            })
            .collect::<Result<_>>()?
    };
    let run_id = run.run_id();
    let retriever = pipeline.retriever();
    let records = selected
        .into_iter()
        .map(|p| {
            let query = p.render_query();
            let candidates = retriever.retrieve_all_values(&query, &pipeline.taxonomy, p.category.as_str(), cfg.k)?;
            let shots = retriever
                .retrieve_products(&query, p.category.as_str(), cfg.m, Some(&p.id))?
                .iter()
                .map(|s| ShotTrace { id: s.product.id.clone(), score: s.score })
                .collect();
            Ok(RetrievalRecord { product_id: p.id.clone(), candidates, shots, run_id: run_id.clone() })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage("retrieve"))?;
    run.write(RETRIEVAL_FILE, to_jsonl(&records).as_bytes())?;
    run.finish()
}

fn cmd_predict(cfg: &PipelineConfig) -> Result<PathBuf> {
    let mut run = Run::new("predict", cfg.output_dir(), Some(cfg));
    run.parameters = json!({ "k": cfg.k, "m": cfg.m });
    let (pipeline, corpus) = open_pipeline(cfg, &mut run)?;
    let runs = pipeline.predict_batch(&corpus, cfg.params())?;
    let run_id = run.run_id();
    let predictions: Vec<PredictionRecord> = runs
        .iter()
        .enumerate()
        .map(|(i, r)| r.record(format!("{TRACES_FILE}:{}", i + 1), &run_id))
        .collect();
    let traces: Vec<&TraceRecord> = runs.iter().map(|r| &r.trace).collect();
    let skipped: usize = traces.iter().map(|t| t.diagnostics.skipped()).sum();
    if skipped > 0 {
        warn!("{skipped} completion lines were skipped while parsing; see {TRACES_FILE}");
    }
    run.write(PREDICTIONS_FILE, to_jsonl(&predictions).as_bytes())?;
    run.write(TRACES_FILE, to_jsonl(traces).as_bytes())?;
    run.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub run_id: String,
    pub manifest: String,
    pub predictions_run_id: Option<String>,
    pub report: EvalReport,
}

fn cmd_evaluate(cfg: &PipelineConfig) -> Result<PathBuf> {
    let mut run = Run::new("evaluate", cfg.output_dir(), Some(cfg));
    let Inputs { corpus, .. } = load_inputs(cfg, &mut run)?;
    let out = cfg.output_dir();
    run.input("predictions", &out.join(PREDICTIONS_FILE))?;
    run.input("traces", &out.join(TRACES_FILE))?;
    let predictions: Vec<PredictionRecord> =
        read_jsonl(&out.join(PREDICTIONS_FILE))?.into_iter().map(|(_, r)| r).collect();
    let traces: Vec<TraceRecord> = read_jsonl(&out.join(TRACES_FILE))?.into_iter().map(|(_, r)| r).collect();
    let outcomes: HashMap<String, BTreeMap<String, Outcome>> =
        predictions.iter().map(|p| (p.product_id.clone(), p.predictions.clone())).collect();
    let candidates: HashMap<String, BTreeMap<String, Vec<String>>> = traces
        .iter()
        .map(|t| {
            let per_attr = t
                .candidates
                .iter()
                .map(|c| (c.attribute.to_string(), c.values().map(str::to_owned).collect()))
                .collect();
            (t.product_id.clone(), per_attr)
        })
        .collect();
    let instances = build_instances(&corpus, &outcomes, Some(&candidates))?;
    let report = micro_scores(&instances).map_err(|e| e.at_stage("evaluate"))?;
    let file = ReportFile {
        run_id: run.run_id(),
        manifest: run.manifest_ref(),
        predictions_run_id: predictions.first().map(|p| p.run_id.clone()),
        report,
    };
    run.write(REPORT_FILE, pretty(&file).as_bytes())?;
    run.finish()
}

/// Resolves `all` to the largest partition for the swept parameter.
fn sweep_values(tokens: &[String], param: SweepParam, pipeline: &Pipeline) -> Result<Vec<usize>> {
    let all = match param {
        SweepParam::K => pipeline.taxonomy.max_partition_size(),
        SweepParam::M => pipeline
            .taxonomy
            .categories()
            .filter_map(|c| pipeline.product_index.partition(c.as_str()).ok())
            .map(<[_]>::len)
            .max()
            .unwrap_or(0),
    };
    tokens
        .iter()
        .map(|t| match t.trim() {
            "all" => Ok(all),
            n => n
                .parse()
                .map_err(|_| Error::Config(format!("sweep value `{n}` is neither a count nor `all`"))),
        })
        .collect()
}

fn cmd_sweep(cfg: &PipelineConfig, param: SweepParam, tokens: &[String]) -> Result<PathBuf> {
    let mut run = Run::new("sweep", cfg.output_dir(), Some(cfg));
    let (pipeline, corpus) = open_pipeline(cfg, &mut run)?;
    let values = sweep_values(tokens, param, &pipeline)?;
    run.parameters = json!({ "param": param, "values": values, "k": cfg.k, "m": cfg.m });
    let points = sweep(&pipeline, &corpus, param, &values, cfg.params())?;
    run.write(SWEEP_FILE, sweep_csv(&points).as_bytes())?;
    run.finish()
}

fn cmd_export_sft(cfg: &PipelineConfig, ood_ratio: f64) -> Result<PathBuf> {
    if !(0.0..=1.0).contains(&ood_ratio) {
        return Err(Error::Config(format!("--ood-ratio must lie in [0, 1], got {ood_ratio}")));
    }
    let mut run = Run::new("export-sft", cfg.output_dir(), Some(cfg));
    run.parameters = json!({ "k": cfg.k, "m": cfg.m, "ood_ratio": ood_ratio, "seed": cfg.seed });
    let (pipeline, corpus) = open_pipeline(cfg, &mut run)?;
    run.components.remove("generator");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut records, mut unlabelled, mut ineligible) = (Vec::new(), 0usize, 0usize);
    for product in &corpus {
        if product.labels.is_empty() {
            unlabelled += 1;
            continue;
        }
        let (_, _, bundle) = pipeline
            .prepare(product, cfg.params())
            .map_err(|e| e.at_stage(format!("product `{}`", product.id)))?;
        let want_ood = rng.random_bool(ood_ratio);
        let record = if want_ood {
            match build_ood_sample(product, &bundle, &pipeline.taxonomy, &pipeline.template) {
                Ok(r) => r,
                Err(Error::NoEligibleAttribute(_)) => {
                    ineligible += 1;
                    build_sft_record(product, &bundle, &pipeline.taxonomy)?
                }
                Err(e) => return Err(e),
            }
        } else {
            build_sft_record(product, &bundle, &pipeline.taxonomy)?
        };
        records.push(record);
    }
    if unlabelled > 0 || ineligible > 0 {
        info!("skipped {unlabelled} unlabelled products; {ineligible} OOD draws fell back to plain records");
    }
    run.write(SFT_FILE, to_jsonl(&records).as_bytes())?;
    run.finish()
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}
