//! Independent oracles and fixtures shared by the integration suites.
#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

use pavi_core::corpus::Product;
use pavi_core::embedding::{cosine, Encoder};
use pavi_core::generation::Outcome;

/// Naive confusion tally written straight from the rule table:
/// returns `[tp, fp, fn, tn]` contributions of one instance.
pub fn naive_cell(ground_truth: &[String], outcome: &Outcome) -> [u64; 4] {
    let predicted: Option<String> = match outcome {
        Outcome::Value { value, .. } => Some(value.clone()),
        Outcome::Null | Outcome::Unknown => None,
    };
    let truth_empty = ground_truth.is_empty();
    match predicted {
        None if truth_empty => [0, 0, 0, 1],
        None => [0, 0, 1, 0],
        Some(_) if truth_empty => [0, 1, 0, 0],
        Some(v) => {
            let mut hit = false;
            for g in ground_truth {
                if *g == v {
                    hit = true;
                }
            }
            if hit {
                [1, 0, 0, 0]
            } else {
                [0, 1, 1, 0]
            }
        }
    }
}

pub fn naive_totals<'a>(rows: impl IntoIterator<Item = (&'a [String], &'a Outcome)>) -> [u64; 4] {
    let mut total = [0u64; 4];
    for (gt, o) in rows {
        let c = naive_cell(gt, o);
        for i in 0..4 {
            total[i] += c[i];
        }
    }
    total
}

/// Micro P/R/F1 from `[tp, fp, fn, tn]`, zero on empty denominators.
pub fn naive_prf(t: [u64; 4]) -> (f64, f64, f64) {
    let (tp, fp, fn_) = (t[0] as f64, t[1] as f64, t[2] as f64);
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

fn fold(score: f64) -> f64 {
    if score == 0.0 {
        0.0
    } else {
        score
    }
}

/// Scores every key against `query` and fully sorts: score descending, key ascending.
pub fn full_sort(query: &str, keyed_texts: &[(String, String)], encoder: &dyn Encoder) -> Vec<(String, f64)> {
    let q = encoder.encode(query).unwrap();
    let mut scored: Vec<(String, f64)> = keyed_texts
        .iter()
        .map(|(key, text)| (key.clone(), fold(cosine(&q, &encoder.encode(text).unwrap()).unwrap())))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored
}

/// Value-prompt text built independently of the library helper.
pub fn oracle_value_text(category: &str, attribute: &str, value: &str) -> String {
    let mut s = String::from("a ");
    s += category;
    s += " with ";
    s += attribute;
    s += " being ";
    s += value;
    s.to_lowercase()
}

pub fn query_of(p: &Product) -> String {
    let parts: Vec<&str> = [p.title.trim(), p.description.trim()]
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect();
    parts.join(" ")
}

pub struct CliOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn pavi(dir: &Path, args: &[&str]) -> CliOutput {
    let out = Command::new(env!("CARGO_BIN_EXE_pavi"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("pavi binary runs");
    CliOutput {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn pavi_ok(dir: &Path, args: &[&str]) -> CliOutput {
    let out = pavi(dir, args);
    assert_eq!(out.code, 0, "pavi {args:?} failed: {}", out.stderr);
    out
}

/// Drops the two timestamp fields from a manifest.
pub fn manifest_without_timestamps(text: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    let obj = v.as_object_mut().unwrap();
    obj.remove("started_at");
    obj.remove("finished_at");
    v
}

pub fn pavi_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> CliOutput {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pavi"));
    cmd.args(args).current_dir(dir).env("RUST_LOG", "warn");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("pavi binary runs");
    CliOutput {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Minimal HTTP/1.1 server answering every POST with `body`; records raw requests.
pub struct Stub {
    pub url: String,
    pub requests: std::sync::Arc<std::sync::Mutex<Vec<String>>>,
}

pub fn stub_server(body: String) -> Stub {
    use std::io::{BufRead, BufReader, Read, Write};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let requests = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
    let log = requests.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
                head.push_str(&line);
            }
            let mut payload = vec![0; length];
            let _ = reader.read_exact(&mut payload);
            head.push_str(&String::from_utf8_lossy(&payload));
            log.lock().unwrap().push(head);
            let reply = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    Stub { url, requests }
}
