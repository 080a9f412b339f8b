use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::{Arc, RwLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use sdl_cli::serve::{router, Session};
use sdl_core::learner::tune_round;
use sdl_core::network::synth::{synth_dataset, Perturbation, Scenario};
use sdl_core::network::write_jsonl;
use sdl_core::{eval_dataset, sample_network, LearnerConfig, NetworkSpec};

fn state_dir(dir: &Path) -> (NetworkSpec, Vec<sdl_core::Frame>) {
    let sc = Scenario {
        episodes: 4,
        frames_per_episode: 400,
        perturb: vec![
            Perturbation {
                param: "speed_min".into(),
                shift: 0.6,
            },
            Perturbation {
                param: "ambient_max".into(),
                shift: -0.75,
            },
        ],
        ..Scenario::default()
    };
    let out = synth_dataset(&sample_network(), &sc, 11).unwrap();
    let net = out.perturbed.unwrap();
    fs::write(dir.join("network.json"), net.to_json()).unwrap();
    let mut data = Vec::new();
    write_jsonl(&mut data, &out.frames).unwrap();
    fs::write(dir.join("data.jsonl"), data).unwrap();
    (net, out.frames)
}

fn app(dir: &Path) -> Router {
    router(Arc::new(RwLock::new(Session::open(dir).unwrap())))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, v)
}

#[tokio::test]
async fn round_matches_batch_tuning() {
    let tmp = tempfile::tempdir().unwrap();
    let (net, frames) = state_dir(tmp.path());
    let app = app(tmp.path());

    let (code, r) = call(&app, "POST", "/round", None).await;
    assert_eq!(code, StatusCode::OK);
    let (report, next) = tune_round(&net, &frames, &LearnerConfig::default(), &BTreeSet::new()).unwrap();
    assert!(!report.updates.is_empty());
    assert_eq!(r["updates"], serde_json::to_value(&report.updates).unwrap());
    assert_eq!(r["after"], serde_json::to_value(report.after).unwrap());
    assert_eq!(r["round"], 1);

    let (_, state) = call(&app, "GET", "/state", None).await;
    assert_eq!(state["round"], 1);
    assert_eq!(state["error"], serde_json::to_value(report.after).unwrap());
    let (_, served) = call(&app, "GET", "/network", None).await;
    let expected: Value = serde_json::from_str(&next.to_json()).unwrap();
    assert_eq!(served, expected);
}

#[tokio::test]
async fn vetoing_everything_changes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    state_dir(tmp.path());
    let app = app(tmp.path());
    let (_, before) = call(&app, "GET", "/state", None).await;
    let (_, params) = call(&app, "GET", "/params", None).await;
    let params = params.as_array().unwrap();
    assert_eq!(params.len(), 20);
    for p in params {
        let id = p["id"].as_str().unwrap();
        let (code, v) = call(&app, "POST", &format!("/params/{id}"), Some(json!({ "veto": true }))).await;
        assert_eq!(code, StatusCode::OK);
        assert_eq!(v["vetoed"], true);
    }
    let (_, r) = call(&app, "POST", "/round", None).await;
    assert_eq!(r["updates"], json!([]));
    assert_eq!(r["vetoed"].as_array().unwrap().len(), 20);
    assert_eq!(r["before"], r["after"]);
    let (_, after) = call(&app, "GET", "/state", None).await;
    assert_eq!(before["error"], after["error"]);
}

#[tokio::test]
async fn manual_edits_are_validated_and_applied() {
    let tmp = tempfile::tempdir().unwrap();
    let (net, frames) = state_dir(tmp.path());
    let app = app(tmp.path());

    let (code, v) = call(&app, "POST", "/params/speed_min", Some(json!({ "value": 25.0, "tol_pos": 6.0 }))).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(v["spec"]["value"], 25.0);
    assert_eq!(v["spec"]["tol_pos"], 6.0);

    let id = net.param_id("speed_min").unwrap();
    let mut spec = net.param(id).clone();
    spec.value = 25.0;
    spec.tol_pos = 6.0;
    let edited = net.with_param_spec(id, spec).unwrap();
    let expect = eval_dataset(&edited, &frames)
        .unwrap()
        .summary(&LearnerConfig::default().weights);
    let (_, state) = call(&app, "GET", "/state", None).await;
    assert_eq!(state["error"], serde_json::to_value(expect).unwrap());

    let (code, _) = call(&app, "POST", "/params/speed_min", Some(json!({ "value": 1e6 }))).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    let (code, _) = call(&app, "POST", "/params/speed_min", Some(json!({ "tol_pos": -1.0 }))).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    let (code, _) = call(&app, "POST", "/params/warp", Some(json!({ "value": 1.0 }))).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    let (code, _) = call(&app, "POST", "/params/speed_min", Some(json!({ "speed": 1.0 }))).await;
    assert!(code.is_client_error());
    // rejected edits leave the parameter alone
    let (_, c) = call(&app, "GET", "/params/speed_min/curve", None).await;
    assert_eq!(c["spec"]["value"], 25.0);
    assert_eq!(c["curve"]["bins"].as_array().unwrap().len(), 129);
}

#[tokio::test]
async fn rollback_restores_an_earlier_round() {
    let tmp = tempfile::tempdir().unwrap();
    state_dir(tmp.path());
    let app = app(tmp.path());
    let (_, start) = call(&app, "GET", "/state", None).await;
    call(&app, "POST", "/round", None).await;
    let (_, one) = call(&app, "GET", "/state", None).await;
    assert_ne!(one["error"], start["error"]);

    let (code, s) = call(&app, "POST", "/rollback/0", None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(s["round"], 2);
    assert_eq!(s["error"], start["error"]);
    assert_eq!(s["history"][1]["kind"], "rollback");
    assert_eq!(s["history"][1]["rollback_to"], 0);

    let (code, _) = call(&app, "POST", "/rollback/9", None).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn journal_replays_to_the_same_state() {
    let tmp = tempfile::tempdir().unwrap();
    state_dir(tmp.path());
    let (state, network) = {
        let app = app(tmp.path());
        call(&app, "POST", "/params/red_min", Some(json!({ "veto": true }))).await;
        call(&app, "POST", "/params/yaw_max", Some(json!({ "value": 9.0 }))).await;
        call(&app, "POST", "/round", None).await;
        call(&app, "POST", "/round", None).await;
        call(&app, "POST", "/rollback/1", None).await;
        (
            call(&app, "GET", "/state", None).await.1,
            call(&app, "GET", "/network", None).await.1,
        )
    };
    let journal = fs::read_to_string(tmp.path().join("journal.jsonl")).unwrap();
    assert_eq!(journal.lines().count(), 5);

    let app = app(tmp.path());
    assert_eq!(call(&app, "GET", "/state", None).await.1, state);
    assert_eq!(call(&app, "GET", "/network", None).await.1, network);

    fs::write(tmp.path().join("journal.jsonl"), "{not json\n").unwrap();
    assert!(Session::open(tmp.path()).is_err());
}

#[tokio::test]
async fn frames_filter_by_class() {
    let tmp = tempfile::tempdir().unwrap();
    state_dir(tmp.path());
    let app = app(tmp.path());
    let (_, state) = call(&app, "GET", "/state", None).await;
    for class in ["FP", "FN", "tp"] {
        let (code, v) = call(&app, "GET", &format!("/frames?class={class}&limit=5"), None).await;
        assert_eq!(code, StatusCode::OK);
        let key = class.to_ascii_lowercase();
        assert_eq!(v["total"], state["error"][key.as_str()]);
        let frames = v["frames"].as_array().unwrap();
        assert!(frames.len() <= 5);
        assert!(frames.iter().all(|f| f["class"] == class.to_ascii_uppercase()));
    }
    let (_, all) = call(&app, "GET", "/frames?limit=1", None).await;
    assert_eq!(all["total"], 1600);
    let (code, _) = call(&app, "GET", "/frames?class=XX", None).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
}
