//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pavi_core::config::{build_pipeline, PipelineConfig};
use pavi_core::corpus::{ingest_from_reader, Product};
use pavi_core::embedding::HashedNgramEncoder;
use pavi_core::evaluation::{instances_from_runs, micro_scores, sweep, EvalInstance, SweepParam};
use pavi_core::generation::{Outcome, Pipeline, PipelineParams};
use pavi_core::promptgen::{
    assemble_prompt, build_ood_sample, build_sft_record, parse_prompt_sections, PromptTemplate, SftRecord,
};
use pavi_core::retrieval::{Candidate, CandidateSet, FewShotExample, ProductIndex, Retriever, ValueIndex};
use pavi_core::synth::{generate, SynthParams, CONFIG_FILE};
use pavi_core::taxonomy::{AttributeId, Taxonomy, TaxonomyRecord, NULL_MARKER};
use pavi_core::Error;

use common::*;

type Check = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let held: bool = $cond;
        if !held {
            return Err(format!($($msg)+));
        }
    };
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    if took > limit {
        Err(format!("took {took:?}, budget {limit:?}"))
    } else {
        Ok(())
    }
}

fn synth_pipeline(dir: &Path, params: &SynthParams, generator: &str) -> (Pipeline, Vec<Product>) {
    generate(params).unwrap().write(dir, params.seed).unwrap();
    let mut cfg = PipelineConfig::load(&dir.join(CONFIG_FILE)).unwrap();
    cfg.override_generator(generator).unwrap();
    build_pipeline(&cfg).unwrap()
}

fn c1_metric_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pool = ["A", "B", "C", "D", "E"];
    let instances: Vec<EvalInstance> = (0..400)
        .map(|i| {
            let n = rng.random_range(0..=2);
            let mut gt: Vec<String> = (0..n).map(|_| pool.choose(&mut rng).unwrap().to_string()).collect();
            gt.sort();
            gt.dedup();
            let outcome = match rng.random_range(0..4) {
                0 => Outcome::Null,
                1 => Outcome::Unknown,
                _ => Outcome::Value { value: pool.choose(&mut rng).unwrap().to_string(), ood: rng.random_bool(0.1) },
            };
            EvalInstance { product_id: format!("p{i}"), attribute: "a".into(), ground_truth: gt, outcome, candidates: None }
        })
        .collect();
    let mut cells = BTreeSet::new();
    for inst in &instances {
        cells.insert(naive_cell(&inst.ground_truth, &inst.outcome));
    }
    ensure!(cells.len() == 5, "only {} of the five cells generated", cells.len());
    let report = micro_scores(&instances).map_err(|e| e.to_string())?;
    let naive = naive_totals(instances.iter().map(|i| (i.ground_truth.as_slice(), &i.outcome)));
    let got = [report.counts.tp, report.counts.fp, report.counts.fn_, report.counts.tn];
    ensure!(got == naive, "counts {got:?} != oracle {naive:?}");
    let (p, r, f) = naive_prf(naive);
    for (name, a, b) in [("P", report.precision, p), ("R", report.recall, r), ("F1", report.f1, f)] {
        ensure!((a - b).abs() <= 1e-12, "{name} {a} vs oracle {b}");
    }
    within(Duration::from_secs(1), start)?;
    Ok(format!("{} instances, counts {naive:?}", instances.len()))
}

fn c2_hand_fixture() -> Check {
    let mk = |id: &str, gt: &[&str], o: Outcome| EvalInstance {
        product_id: id.into(),
        attribute: "Brand".into(),
        ground_truth: gt.iter().map(|s| s.to_string()).collect(),
        outcome: o,
        candidates: None,
    };
    let v = |s: &str| Outcome::Value { value: s.into(), ood: false };
    let set = [
        mk("tp", &["A"], v("A")),
        mk("fn", &["B"], Outcome::Null),
        mk("mismatch", &["C"], v("D")),
        mk("tn", &[], Outcome::Null),
        mk("fp", &[], v("E")),
    ];
    let r = micro_scores(&set).map_err(|e| e.to_string())?;
    let c = r.counts;
    ensure!((c.tp, c.fp, c.fn_, c.tn) == (1, 2, 2, 1), "counts {c:?}");
    let third = 1.0 / 3.0;
    ensure!(r.precision == third && r.recall == third && r.f1 == third, "P={} R={} F1={}", r.precision, r.recall, r.f1);
    Ok("tp=1 fp=2 fn=2 tn=1, P=R=F1=1/3".into())
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    const SYL: &[&str] = &["ka", "ri", "mo", "tel", "van", "sku", "pe", "lor", "qi", "zan", "do", "bex"];
    (0..rng.random_range(2..=4)).map(|_| *SYL.choose(rng).unwrap()).collect()
}

fn c3_retrieval_exactness() -> Check {
    // The budget covers the library calls; the brute-force oracle is timed out of it.
    let mut spent = Duration::ZERO;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (category, attribute) = ("Test kit", "Brand");
    let mut values: BTreeSet<String> = BTreeSet::new();
    while values.len() < 950 {
        values.insert(pseudo_word(&mut rng));
    }
    // Upper-case twins render identical prompts, forcing exact score ties.
    let twins: Vec<String> = values.iter().take(50).map(|v| v.to_uppercase()).collect();
    let all_values: Vec<String> = values.iter().cloned().chain(twins).collect();
    ensure!(all_values.len() <= 1000, "partition too large");
    let taxonomy = Taxonomy::from_records([TaxonomyRecord {
        category: category.into(),
        attribute: attribute.into(),
        values: all_values.clone(),
    }])
    .map_err(|e| e.to_string())?;

    let vocab: Vec<&String> = values.iter().collect();
    let mut pool_lines = Vec::new();
    let mut titles: Vec<String> = Vec::new();
    for i in 0..300 {
        let title = match i % 10 {
            // duplicated titles tie on score and fall back to id order
            3 => titles[i - 1].clone(),
            7 => "ab".to_string(),
            _ => (0..rng.random_range(1..5)).map(|_| vocab.choose(&mut rng).unwrap().as_str()).collect::<Vec<_>>().join(" "),
        };
        titles.push(title.clone());
        pool_lines.push(serde_json::json!({"id": format!("r{:03}", 299 - i), "title": title, "category": category}).to_string());
    }
    let pool = ingest_from_reader(pool_lines.join("\n").as_bytes(), &taxonomy).map_err(|e| e.to_string())?;
    let enc = HashedNgramEncoder::default();
    let vindex = ValueIndex::build(&taxonomy, &enc).map_err(|e| e.to_string())?;
    let pindex = ProductIndex::build(&pool, &taxonomy, &enc).map_err(|e| e.to_string())?;
    let retriever = Retriever { values: &vindex, products: &pindex, value_encoder: &enc, product_encoder: &enc };

    let oracle_values: Vec<(String, String)> = all_values
        .iter()
        .map(|v| (v.clone(), oracle_value_text(category, attribute, v)))
        .collect();
    let oracle_pool: Vec<(String, String)> = pool.iter().map(|p| (p.id.clone(), query_of(p))).collect();

    for q in 0..100 {
        let product = if q % 4 == 0 {
            pool[rng.random_range(0..pool.len())].clone()
        } else {
            let title: Vec<&str> = (0..rng.random_range(1..4)).map(|_| vocab.choose(&mut rng).unwrap().as_str()).collect();
            let line = serde_json::json!({"id": format!("q{q}"), "title": title.join(" "), "description": "spare part", "category": category});
            ingest_from_reader(line.to_string().as_bytes(), &taxonomy).unwrap().remove(0)
        };
        let query = product.render_query();
        let k = *[1usize, 3, 10, 64, 1000].choose(&mut rng).unwrap();
        let t = Instant::now();
        let got = retriever.retrieve_values(&query, category, attribute, k).map_err(|e| e.to_string())?;
        spent += t.elapsed();
        let mut expected: Vec<Candidate> = full_sort(&query_of(&product), &oracle_values, &enc)
            .into_iter()
            .take(k)
            .map(|(value, score)| Candidate { value, score })
            .collect();
        expected.push(Candidate { value: NULL_MARKER.into(), score: f64::NEG_INFINITY });
        let got_json = serde_json::to_string(&got.candidates).unwrap();
        let exp_json = serde_json::to_string(&expected).unwrap();
        ensure!(got_json == exp_json, "query {q} k={k}: value ranking differs");

        let m = *[1usize, 2, 5, 20, 400].choose(&mut rng).unwrap();
        let exclude = Some(product.id.as_str());
        let t = Instant::now();
        let got = retriever.retrieve_products(&query, category, m, exclude).map_err(|e| e.to_string())?;
        spent += t.elapsed();
        let got: Vec<(String, u64)> = got
            .into_iter()
            .map(|s| (s.product.id, s.score.to_bits()))
            .collect();
        let expected: Vec<(String, u64)> = full_sort(&query_of(&product), &oracle_pool, &enc)
            .into_iter()
            .filter(|(id, _)| Some(id.as_str()) != exclude)
            .take(m)
            .map(|(id, s)| (id, s.to_bits()))
            .collect();
        ensure!(got == expected, "query {q} m={m}: product ranking differs");
    }
    ensure!(spent < Duration::from_secs(5), "retrieval took {spent:?}, budget 5s");
    Ok(format!("100 queries, {} values, {} pool products, retrieval {spent:?}", all_values.len(), pool.len()))
}

fn c4_coverage_monotone() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let params = SynthParams { seed: 4, max_values: 12, ..Default::default() };
    let (pipeline, corpus) = synth_pipeline(dir.path(), &params, "mock-oracle");
    let all = pipeline.taxonomy.max_partition_size();
    ensure!(all > 8, "largest partition {all} does not exceed 8");
    let values = [1, 2, 4, 8, all];
    let points = sweep(&pipeline, &corpus, SweepParam::K, &values, PipelineParams { k: 1, m: 2 })
        .map_err(|e| e.to_string())?;
    let cov: Vec<f64> = points.iter().map(|p| p.coverage).collect();
    ensure!(cov.windows(2).all(|w| w[0] <= w[1]), "coverage not monotone: {cov:?}");
    ensure!(*cov.last().unwrap() == 1.0, "coverage at k=all is {}", cov.last().unwrap());
    within(Duration::from_secs(30), start)?;
    Ok(format!("k={values:?} coverage={cov:?}"))
}

fn c5_oracle_ceiling() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let params = SynthParams { seed: 5, ..Default::default() };
    let (pipeline, corpus) = synth_pipeline(dir.path(), &params, "mock-oracle");
    let all = pipeline.taxonomy.max_partition_size();
    let score = |k: usize| {
        let runs = pipeline.predict_batch(&corpus, PipelineParams { k, m: 2 }).unwrap();
        micro_scores(&instances_from_runs(&corpus, &runs).unwrap()).unwrap()
    };
    let full = score(all);
    ensure!(full.f1 == 1.0, "F1 at exhaustive k is {}", full.f1);

    let enc = HashedNgramEncoder::default();
    let mut oracle = [0u64; 4];
    for p in &corpus {
        for (attr, truth) in &p.labels {
            if truth.is_empty() {
                oracle[3] += 1;
                continue;
            }
            let texts: Vec<(String, String)> = pipeline
                .taxonomy
                .values_of(p.category.as_str(), attr.as_str())
                .unwrap()
                .iter()
                .map(|v| (v.to_string(), oracle_value_text(p.category.as_str(), attr.as_str(), v.as_str())))
                .collect();
            let top = &full_sort(&query_of(p), &texts, &enc)[0].0;
            if truth.iter().any(|t| &t.value == top) {
                oracle[0] += 1;
            } else {
                oracle[2] += 1;
            }
        }
    }
    let k1 = score(1);
    let got = [k1.counts.tp, k1.counts.fp, k1.counts.fn_, k1.counts.tn];
    ensure!(got == oracle, "k=1 counts {got:?} != ceiling {oracle:?}");
    let (_, _, f) = naive_prf(oracle);
    ensure!(k1.f1 == f, "k=1 F1 {} != ceiling {f}", k1.f1);
    Ok(format!("F1(k=all)=1, F1(k=1)={f} with tp={} fn={}", oracle[0], oracle[2]))
}

fn candidate_lines(prompt: &str) -> BTreeMap<String, Vec<String>> {
    let block = &prompt[prompt.find("Attribute candidate value\n").unwrap() + "Attribute candidate value\n".len()..];
    block
        .lines()
        .filter_map(|l| l.split_once(": "))
        .map(|(a, vs)| (a.to_string(), vs.split(", ").map(str::to_owned).collect()))
        .collect()
}

fn reference_section(prompt: &str) -> &str {
    let s = prompt.find("Reference product information\n").unwrap();
    let e = prompt.find("Product information\n").unwrap();
    &prompt[s..e]
}

fn c6_ood_handling() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let params = SynthParams { seed: 6, ood_fraction: 0.2, ..Default::default() };
    let (pipeline, corpus) = synth_pipeline(dir.path(), &params, "mock-heuristic");
    let labels: Vec<_> = corpus.iter().flat_map(|p| p.labels.values().flatten()).collect();
    let ood_share = labels.iter().filter(|l| !l.in_taxonomy).count() as f64 / labels.len() as f64;
    ensure!((0.12..0.28).contains(&ood_share), "OOD label share {ood_share}");

    let (mut eligible, mut checked) = (0, 0);
    for p in corpus.iter().filter(|p| !p.labels.is_empty()) {
        let (cands, _, bundle) = pipeline.prepare(p, PipelineParams { k: 3, m: 2 }).unwrap();
        let plain = build_sft_record(p, &bundle, &pipeline.taxonomy).unwrap();
        let schema = pipeline.taxonomy.attribute_set(p.category.as_str()).unwrap();
        let target_of = |a: &str| -> String {
            p.labels
                .get(a)
                .and_then(|vs| vs.iter().map(|v| v.value.clone()).min())
                .unwrap_or_else(|| NULL_MARKER.to_string())
        };
        let choice = schema.iter().find(|a| {
            let t = target_of(a.as_str());
            t != NULL_MARKER && cands.iter().any(|c| &c.attribute == **a && c.real_values().any(|v| v == t))
        });
        let result = build_ood_sample(p, &bundle, &pipeline.taxonomy, &pipeline.template);
        checked += 1;
        let Some(attr) = choice else {
            ensure!(matches!(result, Err(Error::NoEligibleAttribute(_))), "{}: ineligible product produced a sample", p.id);
            continue;
        };
        eligible += 1;
        let ood = result.map_err(|e| format!("{}: {e}", p.id))?;
        let value = target_of(attr.as_str());
        ensure!(ood.is_ood_sample, "{}: flag not set", p.id);
        ensure!(ood.target == plain.target, "{}: target changed", p.id);
        let before = candidate_lines(&plain.prompt);
        let after = candidate_lines(&ood.prompt);
        for (a, vs) in &before {
            let expected: Vec<String> = if a == attr.as_str() {
                vs.iter().filter(|v| **v != value).cloned().collect()
            } else {
                vs.clone()
            };
            ensure!(after.get(a) == Some(&expected), "{}: candidates for {a} wrong", p.id);
        }
        ensure!(after[attr.as_str()].last().map(String::as_str) == Some(NULL_MARKER), "{}: null marker lost", p.id);
        let leaked = format!("\n{attr}: {value}\n");
        ensure!(!reference_section(&ood.prompt).contains(&leaked), "{}: value still in references", p.id);
    }
    ensure!(eligible > 0, "no eligible products");

    let instances: Vec<EvalInstance> = corpus
        .iter()
        .flat_map(|p| {
            p.labels.iter().map(move |(a, truth)| {
                let ood = truth.iter().find(|l| !l.in_taxonomy);
                EvalInstance {
                    product_id: p.id.clone(),
                    attribute: a.to_string(),
                    ground_truth: truth.iter().map(|l| l.value.clone()).collect(),
                    outcome: match ood {
                        Some(l) => Outcome::Value { value: l.value.clone(), ood: true },
                        None => Outcome::Null,
                    },
                    candidates: None,
                }
            })
        })
        .collect();
    let injected = instances.iter().filter(|i| matches!(i.outcome, Outcome::Value { .. })).count() as u64;
    let r = micro_scores(&instances).map_err(|e| e.to_string())?;
    ensure!(r.counts.tp == injected && r.diagnostics.ood_true_positives == injected, "OOD TPs {} / {} of {injected}", r.counts.tp, r.diagnostics.ood_true_positives);
    ensure!(r.counts.fp == 0, "injected OOD predictions produced {} FPs", r.counts.fp);
    Ok(format!("{eligible}/{checked} eligible samples verified, {injected} OOD TPs"))
}

fn camera_cover_fixture() -> (Taxonomy, Vec<Product>) {
    let t = Taxonomy::from_records([
        TaxonomyRecord { category: "SLR body cover".into(), attribute: "Brand".into(), values: vec!["Nikon".into(), "Canon".into(), "Sony".into()] },
        TaxonomyRecord { category: "SLR body cover".into(), attribute: "Condition".into(), values: vec!["slight signs of use".into()] },
    ])
    .unwrap();
    let lines = [
        r#"{"id":"q","title":"Nikon D series SLR camera front and rear covers, dust cover, body cover, suitable for Nikon SLR camera D810D7100/D610/D3200/D5100D800 body cover, lens rear cover","category":"SLR body cover","labels":{"Brand":["Nikon"],"Condition":[]}}"#,
        r#"{"id":"s1","title":"2 Sony E-mount Tamron back covers, 1 body front cover. New Year's sundries!","category":"SLR body cover","labels":{"Brand":["Sony"],"Condition":[]}}"#,
        r#"{"id":"s2","title":"Canon 60d back cover set","description":"button set button","category":"SLR body cover","labels":{"Brand":["Canon"],"Condition":[]}}"#,
    ];
    let ps = ingest_from_reader(lines.join("\n").as_bytes(), &t).unwrap();
    (t, ps)
}

fn shot_of(p: &Product, t: &Taxonomy, score: f64) -> FewShotExample {
    FewShotExample {
        product: p.clone(),
        score,
        rendered_labels: t
            .attribute_set(p.category.as_str())
            .unwrap()
            .into_iter()
            .map(|a| (a.clone(), p.target_value(a.as_str()).to_owned()))
            .collect(),
    }
}

fn set_of(attr: &str, values: &[&str]) -> CandidateSet {
    CandidateSet {
        attribute: AttributeId::new(attr).unwrap(),
        candidates: values.iter().map(|v| Candidate { value: v.to_string(), score: 0.5 }).collect(),
    }
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const PIECES: &[&str] = &[
        "Nikon", "cover", "相机", "Note", ",", ":", " ", "\n", "None", "unknown", "Ünïcødé", "  ", "Task Description", "é", "🙂", "set",
    ];
    (0..rng.random_range(1..12)).map(|_| *PIECES.choose(rng).unwrap()).collect()
}

fn c7_prompt_fidelity() -> Check {
    let (t, ps) = camera_cover_fixture();
    let template = PromptTemplate::default();
    let shots = [shot_of(&ps[1], &t, 0.9), shot_of(&ps[2], &t, 0.8)];
    let cands = [set_of("Brand", &["Nikon", "None"]), set_of("Condition", &["None", "slight signs of use"])];
    let b = assemble_prompt(&ps[0], &shots, &cands, &t, &template).map_err(|e| e.to_string())?;
    let headers = [
        "Task Description",
        "Note",
        "Reference product information",
        "Product information",
        "Attribute candidate value",
    ];
    let mut last = 0;
    for h in headers {
        let pos = b.rendered[last..].find(&format!("{h}\n")).map(|p| p + last);
        ensure!(pos.is_some(), "section {h} missing or out of order");
        last = pos.unwrap() + h.len();
    }
    ensure!(b.rendered.contains("\nBrand: Nikon, None\n"), "candidate line missing");

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ok = 0;
    for i in 0..100 {
        let category = format!("Cat {}", pseudo_word(&mut rng));
        let attrs: Vec<String> = (0..rng.random_range(1..4)).map(|j| format!("Attr{j} {}", pseudo_word(&mut rng))).collect();
        let records: Vec<TaxonomyRecord> = attrs
            .iter()
            .map(|a| {
                let mut vs: Vec<String> = (0..rng.random_range(1..5)).map(|_| pseudo_word(&mut rng)).collect();
                vs.sort();
                vs.dedup();
                TaxonomyRecord { category: category.clone(), attribute: a.clone(), values: vs }
            })
            .collect();
        let tax = Taxonomy::from_records(records.clone()).unwrap();
        let mk = |id: String, rng: &mut ChaCha8Rng| {
            let labels: BTreeMap<String, Vec<String>> = records
                .iter()
                .map(|r| (r.attribute.clone(), if rng.random_bool(0.3) { vec![] } else { vec![r.values.choose(rng).unwrap().clone()] }))
                .collect();
            let line = serde_json::json!({"id": id, "title": random_text(rng), "description": random_text(rng), "category": category, "labels": labels});
            ingest_from_reader(line.to_string().as_bytes(), &tax).unwrap().remove(0)
        };
        let product = mk(format!("p{i}"), &mut rng);
        let shots: Vec<FewShotExample> =
            (0..rng.random_range(0..4)).map(|j| shot_of(&mk(format!("s{i}-{j}"), &mut rng), &tax, 0.5)).collect();
        let cands: Vec<CandidateSet> = records
            .iter()
            .map(|r| {
                let mut vs: Vec<&str> = r.values.iter().map(String::as_str).take(rng.random_range(1..=r.values.len())).collect();
                vs.push(NULL_MARKER);
                set_of(&r.attribute, &vs)
            })
            .collect();
        let bundle = assemble_prompt(&product, &shots, &cands, &tax, &template).map_err(|e| e.to_string())?;
        let parsed = parse_prompt_sections(&bundle.rendered, &template).map_err(|e| format!("bundle {i}: {e}"))?;
        ensure!(parsed.same_sections(&bundle), "bundle {i} did not round-trip");
        ok += 1;
    }
    Ok(format!("five sections in order, candidate line present, {ok}/100 round-trips"))
}

fn full_run(dir: &Path) -> Result<(), String> {
    for args in [
        &["synth", "--seed", "8", "--out", "."][..],
        &["index"],
        &["predict"],
        &["evaluate"],
    ] {
        let out = pavi(dir, args);
        ensure!(out.code == 0, "pavi {args:?} exited {}: {}", out.code, out.stderr);
    }
    Ok(())
}

fn c8_determinism() -> Check {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    full_run(a.path())?;
    full_run(b.path())?;
    for f in ["taxonomy.jsonl", "corpus.jsonl", "out/predictions.jsonl", "out/traces.jsonl", "out/report.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        ensure!(x == y, "{f} differs between runs");
    }
    for m in ["manifest.predict.json", "manifest.evaluate.json"] {
        let x = manifest_without_timestamps(&std::fs::read_to_string(a.path().join("out").join(m)).unwrap());
        let y = manifest_without_timestamps(&std::fs::read_to_string(b.path().join("out").join(m)).unwrap());
        ensure!(x == y, "{m} differs beyond timestamps");
    }
    Ok("predictions, traces, reports and manifests identical across two runs".into())
}

fn split_ok(r: &SftRecord) -> bool {
    r.loss_mask_boundary == r.prompt.chars().count() && r.split_concatenated() == (r.prompt.clone(), r.target.clone())
}

fn c9_sft_integrity() -> Check {
    let dir = tempfile::tempdir().unwrap();
    full_run(dir.path())?;
    let out = pavi(dir.path(), &["export-sft", "--ood-ratio", "0.5"]);
    ensure!(out.code == 0, "export-sft exited {}: {}", out.code, out.stderr);
    let text = std::fs::read_to_string(dir.path().join("out/sft.jsonl")).unwrap();
    let records: Vec<SftRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    ensure!(!records.is_empty(), "no records exported");
    let ood = records.iter().filter(|r| r.is_ood_sample).count();
    ensure!(ood > 0, "no OOD samples drawn at ratio 0.5");
    let bad = records.iter().filter(|r| !split_ok(r)).count();
    ensure!(bad == 0, "{bad} exported records fail the split");

    let (t, ps) = camera_cover_fixture();
    let template = PromptTemplate::default();
    let mut unicode = 0;
    for (i, p) in ps.iter().enumerate() {
        let mut p = p.clone();
        p.title = format!("相机 {} ★ {i}", p.title);
        let cands = [set_of("Brand", &["Nikon", "Sony", "Canon", "None"])];
        let b = assemble_prompt(&p, &[], &cands, &t, &template).unwrap();
        for r in [build_sft_record(&p, &b, &t).unwrap(), build_ood_sample(&p, &b, &t, &template).unwrap()] {
            ensure!(split_ok(&r), "multibyte record {} fails the split", r.product_id);
            ensure!(r.loss_mask_boundary < r.prompt.len(), "boundary counted bytes");
            unicode += 1;
        }
    }
    Ok(format!("{} CLI records ({ood} OOD) and {unicode} multibyte records split exactly", records.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "metric oracle equivalence", c1_metric_oracle),
        (2, "hand-computed fixture", c2_hand_fixture),
        (3, "retrieval exactness", c3_retrieval_exactness),
        (4, "coverage monotonicity and limit", c4_coverage_monotone),
        (5, "oracle end-to-end ceiling", c5_oracle_ceiling),
        (6, "OOD handling", c6_ood_handling),
        (7, "prompt fidelity", c7_prompt_fidelity),
        (8, "determinism", c8_determinism),
        (9, "SFT export integrity", c9_sft_integrity),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let ms = start.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("acceptance {id} PASS {name}: {detail} [{ms} ms]"),
            Err(why) => {
                failed += 1;
                println!("acceptance {id} FAIL {name}: {why} [{ms} ms]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
