//! Reference model server for the line-delimited JSON wire protocol.
//!
//! Answers every `predict_proba` request with uniform probabilities. Useful
//! as a protocol smoke test and as a template for wrapping real models.
//!
//! Usage: lux-stub-model [--features N] [--classes C] [--mode uniform|badsum|malformed]

use std::io::{BufRead, Write};

fn main() {
    let mut n_features = 2usize;
    let mut n_classes = 2usize;
    let mut mode = String::from("uniform");
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--features" => n_features = args.next().and_then(|v| v.parse().ok()).unwrap_or(2),
            "--classes" => n_classes = args.next().and_then(|v| v.parse().ok()).unwrap_or(2),
            "--mode" => mode = args.next().unwrap_or_default(),
            other => {
                eprintln!("unknown argument: {other}");
                std::process::exit(1);
            }
        }
    }

    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let line = match line {
            Ok(l) => l,
            Err(_) => break,
        };
        let req: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(_) => continue,
        };
        match req.get("op").and_then(|v| v.as_str()) {
            Some("schema") => {
                let resp = serde_json::json!({ "n_features": n_features, "n_classes": n_classes });
                writeln!(out, "{resp}").unwrap();
            }
            Some("predict_proba") => {
                let n = req
                    .get("instances")
                    .and_then(|v| v.as_array())
                    .map(|a| a.len())
                    .unwrap_or(0);
                match mode.as_str() {
                    "malformed" => writeln!(out, "not json at all").unwrap(),
                    "badsum" => {
                        let p = vec![vec![0.9 / n_classes as f64; n_classes]; n];
                        writeln!(out, "{}", serde_json::json!({ "proba": p })).unwrap();
                    }
                    _ => {
                        let p = vec![vec![1.0 / n_classes as f64; n_classes]; n];
                        writeln!(out, "{}", serde_json::json!({ "proba": p })).unwrap();
                    }
                }
            }
            _ => writeln!(out, "{}", serde_json::json!({ "error": "unknown op" })).unwrap(),
        }
        out.flush().unwrap();
    }
}
