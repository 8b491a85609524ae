use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;
use viab_core::artifact;
use viab_core::grid::CellSet;
use viab_core::par::Execution;
use viab_core::scenario::{packaged, Scenario, ScenarioFile};
use viab_core::solver::Quiet;
use viab_service::{router, Config, JobRecord, JobState, SCENARIO_SCHEMA};

async fn call(app: &Router, method: Method, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, bytes.to_vec())
}

async fn call_json(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body.map(|b| b.to_string())).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn record(app: &Router, id: &str) -> JobRecord {
    let (status, body) = call_json(app, Method::GET, &format!("/jobs/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_value(body).unwrap()
}

async fn wait_until(app: &Router, id: &str, done: impl Fn(&JobState) -> bool) -> JobRecord {
    for _ in 0..6000 {
        let r = record(app, id).await;
        if done(&r.state) {
            return r;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("job {id} did not reach the expected state");
}

async fn submit(app: &Router, body: Value) -> JobRecord {
    let (status, body) = call_json(app, Method::POST, "/jobs", Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    serde_json::from_value(body).unwrap()
}

fn app(dir: &tempfile::TempDir) -> Router {
    router(Config::new(dir.path()))
}

#[tokio::test]
async fn schema_covers_every_scenario_field() {
    let dir = tempfile::tempdir().unwrap();
    let (status, schema) = call_json(&app(&dir), Method::GET, "/schema", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(schema, serde_json::from_str::<Value>(SCENARIO_SCHEMA).unwrap());
    let props = schema["properties"].as_object().unwrap();
    for name in viab_core::scenario::PACKAGED {
        let file: Value = serde_json::from_str(packaged(name).unwrap()).unwrap();
        for key in file.as_object().unwrap().keys() {
            assert!(props.contains_key(key), "{name}: `{key}` missing from schema");
        }
    }
}

#[tokio::test]
async fn scenario_is_validated_and_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let text = packaged("fig1").unwrap();
    let (status, body) = call(&app, Method::POST, "/scenarios", Some(text.to_string())).await;
    assert_eq!(status, StatusCode::OK);
    let echo: Value = serde_json::from_slice(&body).unwrap();
    let file = ScenarioFile::parse(text).unwrap();
    assert_eq!(echo["hash"], file.hash());
    let back: ScenarioFile = serde_json::from_value(echo["scenario"].clone()).unwrap();
    assert_eq!(back, file);

    let job = submit(&app, json!({ "hash": file.hash(), "grid": [21, 21] })).await;
    assert_ne!(job.scenario_hash, file.hash(), "grid override changes the hash");
}

#[tokio::test]
async fn missing_parameter_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let mut file: Value = serde_json::from_str(packaged("fig1").unwrap()).unwrap();
    file["members"][0]["params"].as_object_mut().unwrap().remove("q");
    let (status, body) = call_json(&app, Method::POST, "/scenarios", Some(file.clone())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["fields"][0]["field"], "members.lake.params.q");

    let (status, body) = call_json(&app, Method::POST, "/jobs", Some(json!({ "scenario": file }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["fields"][0]["field"], "members.lake.params.q");
}

#[tokio::test]
async fn malformed_and_unknown_requests() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (status, _) = call(&app, Method::POST, "/jobs", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(&app, Method::POST, "/jobs", Some(json!({}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(&app, Method::POST, "/jobs", Some(json!({ "packaged": "nope" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call_json(&app, Method::POST, "/scenarios", Some(json!({ "name": "x", "colour": 1 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    for uri in ["/jobs/42", "/jobs/abc", "/jobs/42/raster"] {
        let (status, _) = call(&app, Method::GET, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
    let (status, _) = call(&app, Method::DELETE, "/jobs/42", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn fig1_job_artifacts_match_a_direct_solve() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let job = submit(&app, json!({ "packaged": "fig1", "grid": [101, 101] })).await;
    let done = wait_until(&app, &job.id, JobState::is_terminal).await;
    let JobState::Done { kernel_cells, empty } = done.state else { panic!("{done:?}") };
    assert!(!empty);
    assert_eq!(done.artifacts, ["kernel.rst", "report.json", "boundary.csv", "trajectory.csv"]);

    let scenario = Scenario::packaged("fig1").unwrap().with_nodes([101, 101]).unwrap();
    assert_eq!(done.scenario_hash, scenario.hash);
    let (_, direct) = artifact::solve(&scenario, Execution::Sequential, &Quiet).unwrap();

    let (status, raster) = call(&app, Method::GET, &format!("/jobs/{}/raster", job.id), None).await;
    assert_eq!(status, StatusCode::OK);
    let (set, hash) = CellSet::from_raster(std::str::from_utf8(&raster).unwrap()).unwrap();
    assert_eq!(set.count(), kernel_cells);
    assert_eq!(hash, scenario.hash);
    assert_eq!(raster, direct.raster.as_bytes());

    let (_, boundary) = call(&app, Method::GET, &format!("/jobs/{}/boundary", job.id), None).await;
    assert_eq!(boundary, direct.boundary.as_bytes());
    let (_, traj) = call(&app, Method::GET, &format!("/jobs/{}/trajectory", job.id), None).await;
    assert_eq!(traj, direct.trajectory.unwrap().as_bytes());

    let (_, report) = call_json(&app, Method::GET, &format!("/jobs/{}/report", job.id), None).await;
    let mut expected = serde_json::to_value(&direct.report).unwrap();
    expected["wall_time_ms"] = report["wall_time_ms"].clone();
    assert_eq!(report, expected);

    let (status, _) = call(&app, Method::GET, &format!("/jobs/{}/colours", job.id), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn selector_probe_from_a_deep_kernel_state_stays_inside() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let job = submit(&app, json!({ "packaged": "fig1", "grid": [101, 101] })).await;
    wait_until(&app, &job.id, JobState::is_terminal).await;
    let (_, raster) = call(&app, Method::GET, &format!("/jobs/{}/raster", job.id), None).await;
    let (kernel, _) = CellSet::from_raster(std::str::from_utf8(&raster).unwrap()).unwrap();
    let depth = kernel.complement().distance_field();
    let deepest = kernel.iter().max_by_key(|&c| depth[c]).unwrap();
    let x = kernel.grid().node(deepest);

    let probe = json!({ "start": [x[0], x[1]], "policy": { "selector": "first-viable" }, "steps": 150 });
    let (status, body) = call_json(&app, Method::POST, "/probe", Some(json!({ "job": job.id, "probe": probe }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let traj = &body["trajectories"][0]["trajectory"];
    assert_eq!(body["trajectories"][0]["member"], "lake");
    assert!(traj["exit"].is_null());
    let states = traj["states"].as_array().unwrap();
    assert_eq!(states.len(), 151);
    let inside = traj["inside"].as_array().unwrap();
    for (s, flag) in states.iter().zip(inside) {
        let p = [s[0].as_f64().unwrap(), s[1].as_f64().unwrap()];
        let cell = kernel.grid().project_flat(&p).expect("state on the grid");
        assert!(kernel.contains(cell));
        assert_eq!(flag, true);
    }

    // probes without a job work for open-loop policies only
    let (status, _) = call_json(
        &app,
        Method::POST,
        "/probe",
        Some(json!({ "packaged": "fig1", "probe": { "start": [0.5, 0.4], "policy": { "constant": -0.09 }, "steps": 5 } })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call_json(&app, Method::POST, "/probe", Some(json!({ "packaged": "fig1", "probe": probe }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn cancellation_is_terminal_and_leaves_no_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let long = submit(&app, json!({ "packaged": "bourget_group" })).await;
    let queued = submit(&app, json!({ "packaged": "fig1", "grid": [21, 21] })).await;

    // one worker: the second job waits and cancels at once
    let (status, body) = call_json(&app, Method::DELETE, &format!("/jobs/{}", queued.id), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["state"], "cancelled");

    let running = wait_until(&app, &long.id, |s| matches!(s, JobState::Running { iteration, .. } if *iteration >= 1)).await;
    let JobState::Running { cells_remaining, .. } = running.state else { unreachable!() };
    assert!(cells_remaining > 0);
    call(&app, Method::DELETE, &format!("/jobs/{}", long.id), None).await;
    let end = wait_until(&app, &long.id, JobState::is_terminal).await;
    assert_eq!(end.state, JobState::Cancelled);
    assert!(end.artifacts.is_empty());
    let (status, _) = call(&app, Method::GET, &format!("/jobs/{}/raster", long.id), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(!dir.path().join("jobs").join(&long.id).exists());

    // a cancelled job stays cancelled
    let r = record(&app, &queued.id).await;
    assert_eq!(r.state, JobState::Cancelled);
}
