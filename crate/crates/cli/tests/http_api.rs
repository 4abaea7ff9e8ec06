use std::path::{Path, PathBuf};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use kernbench_cli::server::{app, ServerConfig};
use kernbench_core::report::MachineSpec;
use serde_json::Value;
use tower::ServiceExt;

const SAMPLER: &str = env!("CARGO_BIN_EXE_kernbench-sampler");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn config(dir: &Path, sampler: &str) -> ServerConfig {
    ServerConfig {
        data_dir: dir.join("data"),
        sampler: sampler.into(),
        static_dir: Some(dir.join("static")),
        machine: MachineSpec::parse(
            &std::fs::read_to_string(fixture("sandybridge.machine")).unwrap(),
        )
        .unwrap(),
        port: 0,
    }
}

async fn send(router: &Router, method: &str, uri: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes)
        .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

#[tokio::test]
async fn kernels_carry_argument_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let (router, _) = app(&config(dir.path(), SAMPLER)).unwrap();
    let (status, body) = send(&router, "GET", "/api/kernels", "").await;
    assert_eq!(status, StatusCode::OK);
    let dgemm = body
        .as_array()
        .unwrap()
        .iter()
        .find(|k| k["name"] == "dgemm")
        .unwrap();
    let lda = dgemm["args"]
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["name"] == "ldA")
        .unwrap();
    assert_eq!(lda["kind"], "ld");
    assert_eq!(dgemm["args"].as_array().unwrap().len(), 13);
}

#[tokio::test]
async fn validate_matches_cli_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let (router, _) = app(&config(dir.path(), SAMPLER)).unwrap();
    let text = std::fs::read_to_string(fixture("bad_ld.kbe")).unwrap();
    let (status, body) = send(&router, "POST", "/api/validate", &text).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["valid"], false);
    let cli = kernbench_cli::check_experiment(&text).unwrap_err();
    let api: Vec<String> = body["diagnostics"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d.as_str().unwrap().to_string())
        .collect();
    assert_eq!(api, cli);
    assert!(api[0].contains("argument ldA, at n=2000"));
    let (_, ok) = send(
        &router,
        "POST",
        "/api/validate",
        &std::fs::read_to_string(fixture("gesv_sweep.kbe")).unwrap(),
    )
    .await;
    assert_eq!(ok["valid"], true);
}

#[tokio::test(flavor = "multi_thread")]
async fn job_lifecycle_reaches_done() {
    let dir = tempfile::tempdir().unwrap();
    std::env::set_var("KERNBENCH_TIMER", "clock");
    let (router, _) = app(&config(dir.path(), SAMPLER)).unwrap();
    let text = std::fs::read_to_string(fixture("dgemm_reps.kbe")).unwrap();
    let (status, job) = send(&router, "POST", "/api/jobs", &text).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let id = job["id"].as_str().unwrap().to_string();
    let mut state = job["state"].as_str().unwrap().to_string();
    for _ in 0..600 {
        if state == "done" || state == "failed" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
        let (_, j) = send(&router, "GET", &format!("/api/jobs/{id}"), "").await;
        state = j["state"].as_str().unwrap().to_string();
    }
    assert_eq!(state, "done");
    let (status, reports) = send(&router, "GET", "/api/reports", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(reports[0]["id"], id.as_str());
    let (status, report) = send(&router, "GET", &format!("/api/reports/{id}"), "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        report["report"]["ranges"][0]["reps"]
            .as_array()
            .unwrap()
            .len(),
        10
    );
    let (status, series) = send(
        &router,
        "GET",
        &format!("/api/reports/{id}/series?metric=cycles&stat=min"),
        "",
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(series["series"][0]["points"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let (router, state) = app(&config(dir.path(), SAMPLER)).unwrap();
    let bad = std::fs::read_to_string(fixture("bad_ld.kbe")).unwrap();
    let (status, body) = send(&router, "POST", "/api/jobs", &bad).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(!body["diagnostics"].as_array().unwrap().is_empty());
    assert_eq!(
        send(&router, "POST", "/api/jobs", "not an experiment")
            .await
            .0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        send(&router, "GET", "/api/jobs/999", "").await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        send(&router, "GET", "/api/reports/999", "").await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        send(&router, "GET", "/api/reports/999/series", "").await.0,
        StatusCode::NOT_FOUND
    );

    let id = state
        .store
        .import_report(&std::fs::read_to_string(fixture("lu_sweep.kbr")).unwrap())
        .unwrap();
    let (status, body) = send(
        &router,
        "GET",
        &format!("/api/reports/{id}/series?metric=speed"),
        "",
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("speed"));

    let (router, _) = app(&config(dir.path(), "/nonexistent/sampler")).unwrap();
    let good = std::fs::read_to_string(fixture("dgemm_reps.kbe")).unwrap();
    assert_eq!(
        send(&router, "POST", "/api/jobs", &good).await.0,
        StatusCode::CONFLICT
    );
}

#[tokio::test]
async fn breakdown_series_and_static_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("static")).unwrap();
    std::fs::write(dir.path().join("static/index.html"), "<html>viewer</html>").unwrap();
    let (router, state) = app(&config(dir.path(), SAMPLER)).unwrap();
    let id = state
        .store
        .import_report(&std::fs::read_to_string(fixture("lu_sweep.kbr")).unwrap())
        .unwrap();
    let uri = format!(
        "/api/reports/{id}/series?metric=efficiency&stat=median&discard_first=true&breakdown=true"
    );
    let (status, body) = send(&router, "GET", &uri, "").await;
    assert_eq!(status, StatusCode::OK);
    let labels: Vec<&str> = body["series"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["1 dgetrf", "2 dtrsm", "3 dtrsm", "total"]);
    let (status, page) = send(&router, "GET", "/index.html", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(page, Value::String("<html>viewer</html>".into()));
}
