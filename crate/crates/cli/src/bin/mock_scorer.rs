//! Test double for an external scorer.
//!
//! Modes: `constant <p>`, `keyword <word>` (p = 1 when the lowercased text
//! contains the word), `fail`, `drop-id`, `out-of-range`, `error`.

use std::io::{self, BufRead, Write};
use std::process::ExitCode;

use serde_json::{json, Value};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = args.first().map(String::as_str).unwrap_or("constant");
    let arg = args.get(1).cloned();
    if mode == "fail" {
        eprintln!("mock scorer: simulated model load failure");
        return ExitCode::from(3);
    }
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let mut first = true;
    for line in stdin.lock().lines() {
        let line = line.expect("stdin");
        if line.trim().is_empty() {
            continue;
        }
        let req: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("malformed request: {e}");
                return ExitCode::from(4);
            }
        };
        let id = req["id"].as_str().unwrap_or_default().to_string();
        let text = req["text"].as_str().unwrap_or_default().to_lowercase();
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let resp = match mode {
            "constant" => {
                let p: f64 = arg.as_deref().unwrap_or("0.5").parse().expect("probability");
                json!({"id": id, "p_adhominem": p})
            }
            "keyword" => {
                let word = arg.as_deref().unwrap_or("idiot");
                let scores: Vec<(String, f64)> = tokens
                    .iter()
                    .map(|t| (t.to_string(), if t.contains(word) { 1.0 } else { 0.0 }))
                    .collect();
                let p = if text.contains(word) { 1.0 } else { 0.0 };
                json!({"id": id, "p_adhominem": p, "token_scores": scores})
            }
            "drop-id" if first => {
                first = false;
                continue;
            }
            "drop-id" => json!({"id": id, "p_adhominem": 0.1}),
            "out-of-range" => json!({"id": id, "p_adhominem": 1.5}),
            "error" => json!({"id": id, "error": "cannot score"}),
            other => {
                eprintln!("unknown mode `{other}`");
                return ExitCode::from(2);
            }
        };
        writeln!(out, "{resp}").expect("stdout");
    }
    ExitCode::SUCCESS
}
