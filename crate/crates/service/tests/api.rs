use std::path::Path;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use gacm_core::authz::{axiom_par, project, resolve_conflicts, BaseRelations};
use gacm_core::config::PolicyBuilder;
use gacm_core::graph::{build_graph, check_well_typed};
use gacm_core::model::*;
use gacm_service::{router, AppState, ParsResponse, Snapshot, ELAPSED_HEADER};

fn hospital_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/hospital")
}

fn app() -> (Router, Arc<AppState>) {
    let state = Arc::new(AppState::load(hospital_dir()).unwrap());
    (router(state.clone(), None), state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(app, "GET", uri, None).await;
    (s, serde_json::from_slice(&b).unwrap())
}

fn assert_envelope(v: &Value, code: &str) {
    assert_eq!(v["code"], code, "{v}");
    assert!(v["message"].is_string());
    assert!(v.get("details").is_some());
}

#[tokio::test]
async fn entity_listings() {
    let (app, _) = app();
    let (s, v) = get_json(&app, "/principals").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 6);
    assert_eq!(v[0], json!({"id": "000001", "name": "P. Cox", "title": "MD"}));
    for (route, n) in [("/categories", 13), ("/actions", 3), ("/resources", 3), ("/sites", 2)] {
        let (s, v) = get_json(&app, route).await;
        assert_eq!(s, StatusCode::OK, "{route}");
        let ids: Vec<_> = v.as_array().unwrap().iter().map(|e| e["id"].as_str().unwrap().to_string()).collect();
        assert_eq!(ids.len(), n, "{route}");
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted, "{route}");
    }
    let (s, v) = get_json(&app, "/principals/000001").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["name"], "P. Cox");
    let (s, v) = get_json(&app, "/resources/record").await;
    assert_eq!((s, v["name"].as_str()), (StatusCode::OK, Some("Medical record")));
    let (s, v) = get_json(&app, "/principals/zzz").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_envelope(&v, "not_found");
}

#[tokio::test]
async fn empty_policy_lists_nothing() {
    let policy = PolicyBuilder::new().build().unwrap();
    let app = router(Arc::new(AppState::new(Snapshot::new(policy).unwrap())), None);
    for route in ["/actions", "/principals", "/customFacts"] {
        let (s, v) = get_json(&app, route).await;
        assert_eq!((s, v), (StatusCode::OK, json!([])));
    }
}

#[tokio::test]
async fn custom_fact_metadata() {
    let (app, _) = app();
    let (s, v) = get_json(&app, "/customFacts").await;
    assert_eq!(s, StatusCode::OK);
    let facts: Vec<_> = v.as_array().unwrap().iter().map(|d| d["fact"].as_str().unwrap()).collect();
    assert_eq!(facts, ["BREAK_THE_GLASS", "CRITICAL_STATE", "RESPONSIBLE_PHYSICIAN", "SEALED_RESOURCE", "SET_PCA"]);
    let rp = &v[2];
    assert_eq!(rp["parameters"].as_array().unwrap().len(), 1);
    assert_eq!(rp["parameters"][0]["type"], "SELECTION");
    assert_eq!(rp["parameters"][0]["optionType"], "PRINCIPAL");
    assert_eq!(rp["parameters"][0]["rank"], 0);

    let (s, v) = get_json(&app, "/customFacts/RESPONSIBLE_PHYSICIAN/params/0/options").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 6);
    assert_eq!(v[0], json!({"id": "000001", "label": "P. Cox"}));

    let (s, v) = get_json(&app, "/customFacts/SET_PCA/params/1/options").await;
    assert_eq!((s, v.as_array().unwrap().len()), (StatusCode::OK, 13));

    let (s, v) = get_json(&app, "/customFacts/NOPE/params/0/options").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_envelope(&v, "not_found");
    let (s, _) = get_json(&app, "/customFacts/SET_PCA/params/7/options").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = get_json(&app, "/customFacts/SET_PCA/params/x/options").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = get_json(&app, "/customFacts/SEALED_RESOURCE/params/1/options").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_envelope(&v, "invalid_parameter");
}

fn decode(body: &[u8]) -> ParsResponse {
    serde_json::from_slice(body).unwrap()
}

#[tokio::test]
async fn pars_without_facts_match_the_oracle() {
    let (app, state) = app();
    let (s, body) = call(&app, "POST", "/pars", Some(json!({"customFacts": []}))).await;
    assert_eq!(s, StatusCode::OK);
    let resp = decode(&body);
    let snap = state.snapshot();
    let oracle = axiom_par(&resolve_conflicts(&BaseRelations::from_policy(&snap.policy), Priority::Permissions));
    assert_eq!(project(&resp.pars.iter().cloned().collect()), oracle);
    assert_eq!(resp.graph, build_graph(&resp.pars, &snap.policy.registry));
    check_well_typed(&resp.graph).unwrap();
    assert!(resp.stats.fired_count >= resp.pars.len());

    let text = std::str::from_utf8(&body).unwrap();
    assert!(text.starts_with(r#"{"pars":["#));
    let graph_at = text.find(r#"],"graph":{"nodes":["#).unwrap();
    let stats_at = text.find(r#"]},"stats":{"firedCount":"#).unwrap();
    assert!(graph_at < stats_at);
    let raw: Value = serde_json::from_slice(&body).unwrap();
    assert!(raw["stats"]["iterations"].as_u64().unwrap() > 0);
    let par = &raw["pars"][0];
    assert!(par["chain"].is_array());
    assert!(par["sign"] == "grant" || par["sign"] == "deny");
    assert!(par["permission"]["action"].is_string());

    let (s, empty_body) = call(&app, "POST", "/pars", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(empty_body, body);
}

#[tokio::test]
async fn critical_state_adds_read_grants_for_clinicians() {
    let (app, _) = app();
    let (_, base) = call(&app, "POST", "/pars", Some(json!({}))).await;
    let body = json!({"customFacts": [{"fact": "CRITICAL_STATE", "parameters": [true]}]});
    let (s, crit) = call(&app, "POST", "/pars", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    let (base, crit) = (decode(&base), decode(&crit));
    for p in &base.pars {
        assert!(crit.pars.contains(p));
    }
    let new: Vec<_> = crit.pars.iter().filter(|p| !base.pars.contains(p)).collect();
    assert_eq!(new.len(), 5);
    for p in new {
        assert_eq!((p.sign, p.permission.action.as_str(), p.permission.resource.as_str()), (Sign::Grant, "read", "record"));
        assert_ne!(p.principal.as_str(), "000006");
    }
}

#[tokio::test]
async fn pars_validation_errors() {
    let (app, _) = app();
    let body = json!({"customFacts": [
        {"fact": "CRITICAL_STATE", "parameters": [true]},
        {"fact": "NOPE", "parameters": []},
        {"fact": "SEALED_RESOURCE", "parameters": ["record", "maybe"]},
        {"fact": "CRITICAL_STATE", "parameters": [false]}
    ]});
    let (s, b) = call(&app, "POST", "/pars", Some(body)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_envelope(&v, "invalid_custom_facts");
    let indices: Vec<_> = v["details"].as_array().unwrap().iter().map(|d| d["index"].as_u64().unwrap()).collect();
    assert_eq!(indices, [1, 2, 3]);

    let (s, b) = call(&app, "POST", "/pars", Some(json!({"priority": "sometimes"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_envelope(&serde_json::from_slice(&b).unwrap(), "invalid_request");
    let (s, _) = call(&app, "POST", "/pars", Some(json!({"facts": []}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "GET", "/pars", None).await;
    assert_eq!(s, StatusCode::METHOD_NOT_ALLOWED);
    let (s, b) = call(&app, "GET", "/nowhere", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_envelope(&serde_json::from_slice(&b).unwrap(), "not_found");
}

#[tokio::test]
async fn priority_switch() {
    let (app, _) = app();
    for priority in ["permissions", "prohibitions"] {
        let (s, b) = call(&app, "POST", "/pars", Some(json!({"priority": priority}))).await;
        assert_eq!(s, StatusCode::OK, "{priority}");
        check_well_typed(&decode(&b).graph).unwrap();
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_identical_requests_are_byte_identical() {
    let (app, _) = app();
    let bodies = [
        json!({}),
        json!({"customFacts": [{"fact": "CRITICAL_STATE", "parameters": [true]}], "priority": "prohibitions"}),
        json!({"customFacts": [{"fact": "SEALED_RESOURCE", "parameters": ["record", false]}, {"fact": "BREAK_THE_GLASS", "parameters": ["000001"]}]}),
    ];
    let mut tasks = Vec::new();
    for i in 0..24 {
        let app = app.clone();
        let body = bodies[i % bodies.len()].clone();
        tasks.push(tokio::spawn(async move { (i % 3, call(&app, "POST", "/pars", Some(body)).await) }));
    }
    let mut first: [Option<Vec<u8>>; 3] = Default::default();
    for t in tasks {
        let (k, (s, b)) = t.await.unwrap();
        assert_eq!(s, StatusCode::OK);
        match &first[k] {
            Some(prev) => assert_eq!(prev, &b),
            None => first[k] = Some(b),
        }
    }
}

#[tokio::test]
async fn elapsed_time_is_a_header() {
    let (app, _) = app();
    let req = Request::post("/pars").body(Body::empty()).unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert!(resp.headers()[ELAPSED_HEADER].to_str().unwrap().parse::<u64>().is_ok());
}

#[tokio::test]
async fn cors_preflight() {
    let (app, _) = app();
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/pars")
        .header("origin", "http://console.example")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}

#[tokio::test]
async fn reload_swaps_snapshot() {
    let (app, state) = app();
    let before = state.snapshot();
    state.reload().unwrap();
    assert!(!Arc::ptr_eq(&before, &state.snapshot()));
    let (s, _) = get_json(&app, "/principals").await;
    assert_eq!(s, StatusCode::OK);
}
