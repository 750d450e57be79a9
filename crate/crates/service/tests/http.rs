use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use evocaptcha_service::*;
use tower::ServiceExt;

fn app(dir: &std::path::Path, config: ServiceConfig) -> (axum::Router, Arc<ChallengeService>, ServiceConfig) {
    let config = ServiceConfig { audit_log: dir.join("audit.jsonl"), ..config };
    let pools = ChallengePools::from_config(&config).unwrap();
    let service = Arc::new(ChallengeService::open(&config, pools, Arc::new(SystemTime)).unwrap());
    (router(service.clone(), &config, config.demo_dir()), service, config)
}

async fn send(app: &axum::Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, String, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let resp = app
        .clone()
        .oneshot(req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_owned()))).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    let ct = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_owned()).unwrap_or_default();
    (status, ct, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn thousand_concurrent_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let (app, service, _) = app(dir.path(), ServiceConfig::default());
    let report = selfcheck::run(app, service, 1000).await;
    assert!(report.ok(), "{report:#?}");
    assert_eq!((report.passed, report.failed), (500, 500));
    assert_eq!(report.live.issued, 1000);
    assert_eq!(report.live.passed, 500);
}

#[tokio::test]
async fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _, _) = app(dir.path(), ServiceConfig::default());
    let (status, ct, body) = send(&app, "GET", "/v1/asset/abc", None).await;
    assert_eq!((status, ct.as_str()), (StatusCode::NOT_FOUND, "application/json"));
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["error"], "unknown_token");
    let (status, _, _) = send(&app, "POST", "/v1/answer", Some(r#"{"token":"abc","answer":"x"}"#)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = send(&app, "POST", "/v1/challenge", Some(r#"{"kind":"video"}"#)).await;
    assert!(status.is_client_error());
    let (status, _, _) =
        send(&app, "POST", "/v1/challenge", Some(r#"{"kind":"ascii_text","params":{"environment":"gaussian"}}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _, _) =
        send(&app, "POST", "/v1/challenge", Some(r#"{"kind":"audio","params":{"environment":"rain"}}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _, _) =
        send(&app, "POST", "/v1/challenge", Some(r#"{"kind":"audio","params":{"environment":"overlap","gain_db":3}}"#))
            .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn audio_params_and_stats_window() {
    let dir = tempfile::tempdir().unwrap();
    let (app, service, _) = app(dir.path(), ServiceConfig { default_snr_db: 5.0, ..ServiceConfig::default() });
    let (status, _, body) =
        send(&app, "POST", "/v1/challenge", Some(r#"{"kind":"audio","params":{"environment":"background"}}"#)).await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["options"].as_array().unwrap().len(), 5);
    let token = v["token"].as_str().unwrap();
    let kind = service.inspect(token).unwrap().kind;
    assert_eq!(kind, ChallengeKind::Audio { environment: evocaptcha_core::audio::MixSpec::Background { snr_db: 5.0 } });
    let (_, ct, _) = send(&app, "GET", v["asset_url"].as_str().unwrap(), None).await;
    assert_eq!(ct, "audio/wav");

    let (_, _, body) = send(&app, "GET", "/v1/stats", None).await;
    let all: Stats = serde_json::from_slice(&body).unwrap();
    assert_eq!(all.issued, 1);
    let (_, _, body) = send(&app, "GET", "/v1/stats?window=3600", None).await;
    assert_eq!(serde_json::from_slice::<Stats>(&body).unwrap(), all);
}

#[tokio::test]
async fn demo_route_serves_static_files() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _, _) = app(dir.path(), ServiceConfig::default());
    let (status, ct, body) = send(&app, "GET", "/demo/", None).await;
    assert_eq!((status, ct.as_str()), (StatusCode::OK, "text/html; charset=utf-8"));
    assert!(String::from_utf8(body).unwrap().contains("/v1/challenge"));
    let (status, _, _) = send(&app, "GET", "/demo", None).await;
    assert!(status.is_redirection());
    let (status, _, _) = send(&app, "GET", "/demo/../Cargo.toml", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = send(&app, "GET", "/demo/missing.js", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

fn post_json(url: &str, v: serde_json::Value) -> Result<ureq::http::Response<ureq::Body>, ureq::Error> {
    ureq::post(url).header("content-type", "application/json").send(v.to_string().as_bytes())
}

#[test]
fn cycle_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let (app, _, _) = app(dir.path(), ServiceConfig::default());
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    rt.spawn(async move { axum::serve(listener, app).await.unwrap() });

    let mut r = post_json(&format!("{base}/v1/challenge"), serde_json::json!({"kind": "ascii_image"})).unwrap();
    let v: serde_json::Value = serde_json::from_str(&r.body_mut().read_to_string().unwrap()).unwrap();
    let token = v["token"].as_str().unwrap().to_owned();
    let mut asset = ureq::get(&format!("{base}{}", v["asset_url"].as_str().unwrap())).call().unwrap();
    assert_eq!(asset.headers()["content-type"], "image/png");
    assert_eq!(asset.headers()["cache-control"], "no-store");
    assert!(asset.body_mut().read_to_vec().unwrap().starts_with(b"\x89PNG"));
    let mut r =
        post_json(&format!("{base}/v1/answer"), serde_json::json!({"token": token, "answer": "definitely wrong"}))
            .unwrap();
    assert_eq!(r.body_mut().read_to_string().unwrap(), r#"{"passed":false,"attempts_remaining":0}"#);
    let again = post_json(&format!("{base}/v1/answer"), serde_json::json!({"token": token, "answer": "x"}));
    assert!(matches!(again, Err(ureq::Error::StatusCode(409))));
}

#[test]
fn scanner_flags_leaks() {
    let mut headers = axum::http::HeaderMap::new();
    headers.insert("x-answer-hint", "ABCDEFG".parse().unwrap());
    let found = scan_response(&headers, br#"{"passed":false,"similarity":0.5}"#, Some("ABCDEFG"));
    assert_eq!(found.len(), 3, "{found:?}");
    assert!(scan_response(&axum::http::HeaderMap::new(), br#"{"passed":true}"#, Some("ABCDEFG")).is_empty());
}
