use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use xtopo_cli::service::{router, AppState};

fn fixture(name: &str) -> String {
    std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)).unwrap()
}

fn app() -> Router {
    router(Arc::new(AppState::new(None).unwrap()), None)
}

async fn send(app: &Router, method: Method, uri: &str, content_type: Option<&str>, body: impl Into<Body>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(ct) = content_type {
        req = req.header("content-type", ct);
    }
    let res = app.clone().oneshot(req.body(body.into()).unwrap()).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call(app: &Router, method: Method, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let (status, bytes) = send(app, method, uri, None, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn multipart(files: &[(&str, String)]) -> (String, String) {
    let boundary = "xtopo-boundary-7f3a";
    let mut body = String::new();
    for (name, text) in files {
        body.push_str(&format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{name}\"\r\nContent-Type: application/octet-stream\r\n\r\n{text}\r\n"
        ));
    }
    body.push_str(&format!("--{boundary}--\r\n"));
    (format!("multipart/form-data; boundary={boundary}"), body)
}

/// Session with a biped source and two quadruped examples.
async fn loaded(app: &Router) -> String {
    let (status, v) = call(app, Method::POST, "/sessions", Body::empty()).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = v["id"].as_str().unwrap().to_string();

    let (status, v) = call(app, Method::POST, &format!("/sessions/{id}/source"), fixture("biped22.bvh")).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["joints"].as_array().unwrap().len(), 22);
    assert_eq!(v["frames"], 240);

    let (ct, body) = multipart(&[("a.bvh", fixture("quadruped23.bvh")), ("b.bvh", fixture("quadruped23_slow.bvh"))]);
    let (status, bytes) = send(app, Method::POST, &format!("/sessions/{id}/targets"), Some(&ct), body).await;
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["joints"].as_array().unwrap().len(), 23);
    assert_eq!(v["examples"].as_array().unwrap().len(), 2);
    assert_eq!(v["examples"][1]["frames"], 150);
    id
}

#[tokio::test]
async fn happy_path() {
    let app = app();
    let id = loaded(&app).await;

    let (status, v) = call(&app, Method::GET, &format!("/sessions/{id}/autobind?L=3&top_k=2"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["proposals"].as_array().unwrap().len(), 2);
    let bindings = v["bindings"].to_string();

    let (status, v) = call(&app, Method::PUT, &format!("/sessions/{id}/bindings"), bindings).await;
    assert_eq!(status, StatusCode::OK, "{v}");

    let config = json!({ "alpha": 0.8, "seed": 4, "iterations": 2 });
    let (status, v) = call(&app, Method::PUT, &format!("/sessions/{id}/config"), config.to_string()).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["patch_size"], 11);

    let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/transfer"), r#"{"variants": 2}"#).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["status"], "done");
    assert_eq!(v["energy"].as_array().unwrap().len(), 2);
    let job = v["job"].as_str().unwrap().to_string();
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}/jobs/{job}"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK);

    let (status, v) = call(&app, Method::GET, &format!("/sessions/{id}/result/frames?from=10&to=20"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["result"]["positions"].as_array().unwrap().len(), 10);
    assert_eq!(v["result"]["positions"][0].as_array().unwrap().len(), 23);
    assert_eq!(v["source"]["positions"][0].as_array().unwrap().len(), 22);
    assert_eq!(v["target"]["joints"].as_array().unwrap().len(), 23);

    let (status, bytes) = send(&app, Method::GET, &format!("/sessions/{id}/result/bvh?variant=1"), None, Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    let (_, raw) = xtopo_core::parse_bvh(std::str::from_utf8(&bytes).unwrap()).unwrap();
    assert_eq!(raw.frame_count(), 240);

    let (status, v) = call(&app, Method::GET, &format!("/sessions/{id}/metrics"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert!(v["diversity"].as_f64().unwrap() >= 0.0);
    assert!(v["binding_rate"].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn error_statuses() {
    let app = app();
    let (status, _) = call(&app, Method::POST, "/sessions/99/source", fixture("biped22.bvh")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::GET, "/sessions/nope/metrics", Body::empty()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let id = loaded(&app).await;
    let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/transfer"), Body::empty()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "NoBindings");

    let (status, _) = call(&app, Method::PUT, &format!("/sessions/{id}/bindings"), "{not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, v) = call(
        &app,
        Method::PUT,
        &format!("/sessions/{id}/bindings"),
        r#"[{"target": "Tail9", "source": "Hips"}]"#,
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "UnknownJoint");
    let (status, v) = call(
        &app,
        Method::PUT,
        &format!("/sessions/{id}/bindings"),
        r#"[{"target": "Tail1", "source": "Hips"}, {"target": "Tail1", "source": "Spine"}]"#,
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "DuplicateTarget");

    let (status, v) = call(&app, Method::PUT, &format!("/sessions/{id}/config"), r#"{"alpha": 2.0}"#).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "InvalidConfig");

    let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/source"), "HIERARCHY\nROOT x\n{").await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");

    let (status, v) = call(&app, Method::GET, &format!("/sessions/{id}/result/frames"), Body::empty()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "NoResult");

    let (status, _) = call(&app, Method::PUT, &format!("/sessions/{id}/bindings"), fixture("biped22_to_quadruped23.json")).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/transfer"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}/result/frames?from=20&to=10"), Body::empty()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}/result/frames?to=100000"), Body::empty()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn mixed_target_skeletons_are_rejected() {
    let app = app();
    let (_, v) = call(&app, Method::POST, "/sessions", Body::empty()).await;
    let id = v["id"].as_str().unwrap().to_string();
    let (ct, body) = multipart(&[("a.bvh", fixture("quadruped23.bvh")), ("b.bvh", fixture("snake12.bvh"))]);
    let (status, bytes) = send(&app, Method::POST, &format!("/sessions/{id}/targets"), Some(&ct), body).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["error"], "LayoutMismatch");
}

#[tokio::test]
async fn bindings_round_trip_losslessly() {
    let app = app();
    let id = loaded(&app).await;
    let file = json!({
        "pairs": [
            { "target": "BackLeftThigh", "source": "LeftUpLeg",
              "alignment": [[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]] },
            { "target": "BackRightThigh", "source": "RightUpLeg" }
        ],
        "bind_root_velocity": false,
        "contacts": [{ "source": "LeftFoot", "target": "BackLeftFoot" }]
    });
    let (status, _) = call(&app, Method::PUT, &format!("/sessions/{id}/bindings"), file.to_string()).await;
    assert_eq!(status, StatusCode::OK);
    let (status, back) = call(&app, Method::GET, &format!("/sessions/{id}/bindings"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(back, file);
    // Reloading what came back changes nothing.
    let (status, _) = call(&app, Method::PUT, &format!("/sessions/{id}/bindings"), back.to_string()).await;
    assert_eq!(status, StatusCode::OK);
    let (_, again) = call(&app, Method::GET, &format!("/sessions/{id}/bindings"), Body::empty()).await;
    assert_eq!(again, file);
}

#[tokio::test]
async fn alpha_one_playback_is_seed_independent() {
    let app = app();
    let id = loaded(&app).await;
    let (status, _) = call(&app, Method::PUT, &format!("/sessions/{id}/bindings"), fixture("biped22_to_quadruped23.json")).await;
    assert_eq!(status, StatusCode::OK);
    let mut feeds = Vec::new();
    for seed in [1, 2] {
        let config = json!({ "alpha": 1.0, "seed": seed });
        let (status, _) = call(&app, Method::PUT, &format!("/sessions/{id}/config"), config.to_string()).await;
        assert_eq!(status, StatusCode::OK);
        let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/transfer"), Body::empty()).await;
        assert_eq!(status, StatusCode::OK);
        let (status, bytes) = send(&app, Method::GET, &format!("/sessions/{id}/result/frames"), None, Body::empty()).await;
        assert_eq!(status, StatusCode::OK);
        feeds.push(bytes);
    }
    assert_eq!(feeds[0], feeds[1]);
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let first = router(Arc::new(AppState::new(Some(dir.path().to_path_buf())).unwrap()), None);
    let id = loaded(&first).await;
    let bindings = fixture("biped22_to_quadruped23.json");
    let (status, _) = call(&first, Method::PUT, &format!("/sessions/{id}/bindings"), bindings.clone()).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call(&first, Method::PUT, &format!("/sessions/{id}/config"), r#"{"seed": 17}"#).await;
    assert_eq!(status, StatusCode::OK);

    let second = router(Arc::new(AppState::new(Some(dir.path().to_path_buf())).unwrap()), None);
    let (status, v) = call(&second, Method::GET, &format!("/sessions/{id}/bindings"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, serde_json::from_str::<Value>(&bindings).unwrap());
    let (_, v) = call(&second, Method::GET, &format!("/sessions/{id}/config"), Body::empty()).await;
    assert_eq!(v["seed"], 17);
    let (status, _) = call(&second, Method::POST, &format!("/sessions/{id}/transfer"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    // New sessions do not reuse restored ids.
    let (_, v) = call(&second, Method::POST, "/sessions", Body::empty()).await;
    assert_ne!(v["id"].as_str().unwrap(), id);
}

#[tokio::test]
async fn static_assets_are_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>ui</html>").unwrap();
    let app = router(Arc::new(AppState::new(None).unwrap()), Some(dir.path()));
    let (status, bytes) = send(&app, Method::GET, "/index.html", None, Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bytes, b"<html>ui</html>");
}
