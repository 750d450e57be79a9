//! End-to-end exercise of the HTTP API against an in-process router:
//! concurrent issue, fetch and submit cycles with every response scanned
//! for answer material.

use std::collections::HashSet;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use evocaptcha_core::audio::MixSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower::ServiceExt;

use crate::audit::{Stats, Window};
use crate::service::{ChallengeKind, ChallengeService};

/// JSON keys no client response may carry.
pub const FORBIDDEN_KEYS: [&str; 9] =
    ["answer", "answer_key", "truth", "normalized_truth", "similarity", "digest", "salt", "seed", "challenge_id"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelfCheckReport {
    pub cycles: usize,
    pub distinct_tokens: usize,
    pub passed: usize,
    pub failed: usize,
    /// Second submissions that were accepted.
    pub reused_attempts: usize,
    /// Cycles whose verdict disagreed with the intended answer.
    pub wrong_verdicts: usize,
    pub leaks: Vec<String>,
    pub http_errors: Vec<String>,
    pub live: Stats,
    pub replayed: Stats,
}

impl SelfCheckReport {
    pub fn ok(&self) -> bool {
        self.distinct_tokens == self.cycles
            && self.passed + self.failed == self.cycles
            && self.reused_attempts == 0
            && self.wrong_verdicts == 0
            && self.leaks.is_empty()
            && self.http_errors.is_empty()
            && self.live == self.replayed
    }
}

/// Reports anything in `headers` or `body` that gives away `truth` or the
/// grading internals.
pub fn scan_response(headers: &HeaderMap, body: &[u8], truth: Option<&str>) -> Vec<String> {
    let mut found = Vec::new();
    if let Some(t) = truth.filter(|t| t.len() > 1) {
        if contains(body, t.as_bytes()) {
            found.push(format!("body contains the answer {t:?}"));
        }
        for (name, value) in headers {
            if contains(value.as_bytes(), t.as_bytes()) {
                found.push(format!("header {name} contains the answer"));
            }
        }
    }
    for (name, _) in headers {
        if FORBIDDEN_KEYS.iter().any(|k| name.as_str().contains(&k.replace('_', "-"))) {
            found.push(format!("header {name} names grading data"));
        }
    }
    if let Ok(json) = serde_json::from_slice::<Value>(body) {
        let mut keys = Vec::new();
        collect_keys(&json, &mut keys);
        for k in keys {
            if FORBIDDEN_KEYS.contains(&k.as_str()) {
                found.push(format!("json key {k:?}"));
            }
        }
    }
    found
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

fn collect_keys(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                out.push(k.clone());
                collect_keys(v, out);
            }
        }
        Value::Array(items) => items.iter().for_each(|v| collect_keys(v, out)),
        _ => {}
    }
}

struct Reply {
    status: StatusCode,
    headers: HeaderMap,
    body: Vec<u8>,
}

async fn call(app: &Router, method: Method, uri: &str, json: Option<Value>) -> Result<Reply, String> {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match json {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).map_err(|e| e.to_string())?).await.map_err(|e| e.to_string())?;
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = to_bytes(resp.into_body(), usize::MAX).await.map_err(|e| e.to_string())?.to_vec();
    Ok(Reply { status, headers, body })
}

struct CycleResult {
    token: String,
    passed: Option<bool>,
    reused: bool,
    wrong_verdict: bool,
    leaks: Vec<String>,
}

async fn cycle(app: Router, service: Arc<ChallengeService>, i: usize) -> Result<CycleResult, String> {
    let (kind, params) = match i % 4 {
        0 => ("ascii_text", serde_json::json!({})),
        1 => ("ascii_image", serde_json::json!({})),
        2 => ("audio", serde_json::json!({ "environment": MixSpec::all_defaults()[(i / 4) % 4].name() })),
        _ => ("ascii_text", serde_json::json!({ "client_tag": format!("client-{i}") })),
    };
    let issued =
        call(&app, Method::POST, "/v1/challenge", Some(serde_json::json!({ "kind": kind, "params": params }))).await?;
    if issued.status != StatusCode::OK {
        return Err(format!("issue {kind}: {}", issued.status));
    }
    let v: Value = serde_json::from_slice(&issued.body).map_err(|e| e.to_string())?;
    let token = v["token"].as_str().ok_or("issue response has no token")?.to_owned();
    let asset_url = v["asset_url"].as_str().ok_or("issue response has no asset_url")?.to_owned();

    // Server-side oracle: regenerate from the recorded seed.
    let record = service.inspect(&token).map_err(|e| e.to_string())?;
    let truth = service.pools().generate(record.kind, record.seed).map_err(|e| e.to_string())?.truth;
    let scan_truth = match record.kind {
        ChallengeKind::Audio { .. } => None,
        _ => Some(truth.as_str()),
    };
    let mut leaks = scan_response(&issued.headers, &issued.body, scan_truth);

    let asset = call(&app, Method::GET, &asset_url, None).await?;
    if asset.status != StatusCode::OK {
        return Err(format!("asset: {}", asset.status));
    }
    leaks.extend(scan_response(&asset.headers, &asset.body, scan_truth));

    let right = i.is_multiple_of(2);
    let answer = if right { truth.to_lowercase() } else { "wrong".to_owned() };
    let first =
        call(&app, Method::POST, "/v1/answer", Some(serde_json::json!({ "token": token, "answer": answer }))).await?;
    leaks.extend(scan_response(&first.headers, &first.body, scan_truth));
    let verdict: Value = serde_json::from_slice(&first.body).map_err(|e| e.to_string())?;
    let keys: HashSet<&str> = verdict.as_object().map(|m| m.keys().map(String::as_str).collect()).unwrap_or_default();
    if keys != HashSet::from(["passed", "attempts_remaining"]) {
        leaks.push(format!("answer response keys {keys:?}"));
    }
    let passed = verdict["passed"].as_bool();

    let second =
        call(&app, Method::POST, "/v1/answer", Some(serde_json::json!({ "token": token, "answer": truth }))).await?;
    leaks.extend(scan_response(&second.headers, &second.body, scan_truth));
    Ok(CycleResult {
        token,
        passed,
        reused: second.status != StatusCode::CONFLICT,
        wrong_verdict: passed != Some(right),
        leaks,
    })
}

/// Runs `cycles` issue, fetch, submit, resubmit cycles at once against
/// `app`, which must be backed by `service`. Kinds rotate through text,
/// image and audio; every other cycle answers correctly.
pub async fn run(app: Router, service: Arc<ChallengeService>, cycles: usize) -> SelfCheckReport {
    let handles: Vec<_> = (0..cycles).map(|i| tokio::spawn(cycle(app.clone(), service.clone(), i))).collect();
    let mut report = SelfCheckReport { cycles, ..SelfCheckReport::default() };
    let mut tokens = HashSet::new();
    for (i, h) in handles.into_iter().enumerate() {
        match h.await.map_err(|e| e.to_string()).and_then(|r| r) {
            Ok(r) => {
                tokens.insert(r.token);
                match r.passed {
                    Some(true) => report.passed += 1,
                    Some(false) => report.failed += 1,
                    None => report.http_errors.push(format!("cycle {i}: no verdict")),
                }
                report.reused_attempts += usize::from(r.reused);
                report.wrong_verdicts += usize::from(r.wrong_verdict);
                report.leaks.extend(r.leaks.into_iter().map(|l| format!("cycle {i}: {l}")));
            }
            Err(e) => report.http_errors.push(format!("cycle {i}: {e}")),
        }
    }
    report.distinct_tokens = tokens.len();
    report.live = service.live_stats();
    report.replayed = service.stats(Window::all()).unwrap_or_default();
    report
}
