mod common;

use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::{glances_script, read, run, Fixture};
use eyecontact::server::{router, AppState};
use eyecontact::session::{load, SessionOptions};
use eyecontact_core::ingest::SessionManifest;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(fx: &Fixture) -> Router {
    let loaded = load(&SessionOptions::new(&fx.manifest)).unwrap();
    router(AppState::new(loaded.engine, loaded.warnings))
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = get(app, uri).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn post(app: &Router, expr: &str) -> (StatusCode, Value) {
    let req = Request::post("/filters")
        .header("content-type", "application/json")
        .body(Body::from(json!({ "expr": expr }).to_string()))
        .unwrap();
    let (s, b) = call(app, req).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn wait(app: &Router, id: u64) -> Value {
    for _ in 0..500 {
        let (_, info) = get_json(app, &format!("/filters/{id}")).await;
        if info["status"] == "done" || info["status"] == "failed" {
            return info;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("job {id} never finished");
}

async fn submit_and_wait(app: &Router, expr: &str) -> u64 {
    let (status, body) = post(app, expr).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    let id = body["job_id"].as_u64().unwrap();
    assert_eq!(wait(app, id).await["status"], "done");
    id
}

#[tokio::test]
async fn session_and_frames() {
    let fx = Fixture::new(glances_script(1, 20.0));
    let app = app(&fx);
    let (s, meta) = get_json(&app, "/session").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(meta["frames"], 500);
    assert_eq!(meta["fps"], 25.0);
    assert_eq!(meta["participants"][1]["id"], "B");

    let (s, f) = get_json(&app, "/frames/0").await;
    assert_eq!(s, StatusCode::OK);
    for p in f["participants"].as_array().unwrap() {
        assert_eq!(p["partner_face"]["landmarks"].as_array().unwrap().len(), 68);
        assert!(p["gaze_px"]["x"].is_f64());
        assert!(p["partner_face"]["au_intensity"]["AU12"].is_f64());
    }
    assert_eq!(get(&app, "/frames/500").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/frames/0/image").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn job_lifecycle_and_errors() {
    let fx = Fixture::new(glances_script(2, 20.0));
    let app = app(&fx);

    let id = submit_and_wait(&app, "eye(A)").await;
    let (s, sig) = get_json(&app, &format!("/filters/{id}/signal")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(sig["frames"].as_array().unwrap().len(), 500);

    let (s, dup) = post(&app, "( eye(A) )").await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(dup["job_id"], id);

    let (s, bad) = post(&app, "eye(A) &").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(bad["position"], 8);

    let bad_body = Request::post("/filters")
        .header("content-type", "application/json")
        .body(Body::from("{\"nope\": 1}"))
        .unwrap();
    assert_eq!(call(&app, bad_body).await.0, StatusCode::BAD_REQUEST);

    assert_eq!(get(&app, "/filters/unknown").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/filters/99").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/filters/99/events").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, &format!("/filters/{id}/events?format=xml")).await.0, StatusCode::BAD_REQUEST);

    let (_, failing) = post(&app, "au(A, AU03, c)").await;
    let fid = failing["job_id"].as_u64().unwrap();
    let info = wait(&app, fid).await;
    assert_eq!(info["status"], "failed");
    assert!(info["error"].as_str().unwrap().contains("AU03"));
    assert_eq!(get(&app, &format!("/filters/{fid}/signal")).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    let cid = submit_and_wait(&app, "face_score(A)").await;
    assert_eq!(get(&app, &format!("/filters/{cid}/signal")).await.0, StatusCode::OK);
    assert_eq!(get(&app, &format!("/filters/{cid}/events")).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn unfinished_jobs_answer_202() {
    let fx = Fixture::new(glances_script(3, 400.0));
    let app = app(&fx);
    let (_, body) = post(&app, "smooth(mutual(eye(A), eye(B)) | face(A) & face(B), 5, 5)").await;
    let id = body["job_id"].as_u64().unwrap();
    // a 10k-frame evaluation is normally still in flight right after submission
    let (s, info) = get_json(&app, &format!("/filters/{id}/events")).await;
    if s == StatusCode::ACCEPTED {
        assert!(info["status"] == "pending" || info["status"] == "running");
    } else {
        assert_eq!(s, StatusCode::OK);
    }
    assert_eq!(wait(&app, id).await["status"], "done");
}

#[tokio::test]
async fn exports_match_the_cli_byte_for_byte() {
    let fx = Fixture::new(glances_script(4, 30.0));
    let app = app(&fx);
    let expr = "mutual(eye(A), eye(B))";
    let id = submit_and_wait(&app, expr).await;

    let out = fx.path("cli.csv");
    let res = run(&["analyze", "-m", fx.manifest_str(), "-e", expr, "-o", out.to_str().unwrap()]);
    assert!(res.status.success());
    let (_, events) = get(&app, &format!("/filters/{id}/events?format=csv")).await;
    assert_eq!(events, read(&out));
    let (_, summary) = get(&app, &format!("/filters/{id}/summary")).await;
    assert_eq!(summary, read(&fx.path("cli.summary.json")));

    for (format, flag) in [("csv", "csv"), ("json", "json")] {
        let cli = run(&["export", "-m", fx.manifest_str(), "-e", expr, "--format", flag]);
        let (_, http) = get(&app, &format!("/filters/{id}/signal?format={format}")).await;
        assert_eq!(http, cli.stdout, "signal {format}");
        let cli = run(&["events", "-m", fx.manifest_str(), "-e", expr, "--format", flag]);
        let (_, http) = get(&app, &format!("/filters/{id}/events?format={format}")).await;
        assert_eq!(http, cli.stdout, "events {format}");
    }
}

#[tokio::test]
async fn distribution_over_jobs() {
    let fx = Fixture::new(glances_script(5, 30.0));
    let app = app(&fx);
    let mut ids = Vec::new();
    for e in ["eye(A)", "eye(B)", "face(A)", "face(B)"] {
        ids.push(submit_and_wait(&app, e).await);
    }
    let uri = format!("/distribution?eyeA={}&eyeB={}&faceA={}&faceB={}", ids[0], ids[1], ids[2], ids[3]);
    let (s, http) = get_json(&app, &uri).await;
    assert_eq!(s, StatusCode::OK);
    let cli = run(&["distribution", "-m", fx.manifest_str()]);
    let cli: Value = serde_json::from_slice(&cli.stdout).unwrap();
    assert_eq!(http["counts"], cli["counts"]);
    assert_eq!(http["mutual_eye"], cli["mutual_eye"]);

    let missing = format!("/distribution?eyeA={}&eyeB={}", ids[0], ids[1]);
    assert_eq!(get(&app, &missing).await.0, StatusCode::BAD_REQUEST);
    let unknown = format!("/distribution?eyeA=42&eyeB={}&faceA={}&faceB={}", ids[1], ids[2], ids[3]);
    assert_eq!(get(&app, &unknown).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn frame_images_are_served() {
    let fx = Fixture::new(glances_script(6, 10.0));
    let images = fx.path("frames_a");
    std::fs::create_dir(&images).unwrap();
    std::fs::write(images.join("000003.png"), b"\x89PNG fake").unwrap();
    let mut manifest = SessionManifest::parse(&std::fs::read_to_string(&fx.manifest).unwrap()).unwrap();
    manifest.recording_a.frame_images = Some("frames_a".into());
    std::fs::write(&fx.manifest, manifest.to_toml()).unwrap();
    let app = app(&fx);

    let res = app
        .clone()
        .oneshot(Request::get("/frames/3/image?participant=A").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    assert_eq!(res.headers()["content-type"], "image/png");
    assert_eq!(get(&app, "/frames/4/image?participant=A").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/frames/3/image?participant=B").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/frames/3/image?participant=Z").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn restart_gives_equivalent_results() {
    let fx = Fixture::new(glances_script(7, 20.0));
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let app = app(&fx);
        let id = submit_and_wait(&app, "eye(A) | eye(B)").await;
        outputs.push(get(&app, &format!("/filters/{id}/signal?format=csv")).await.1);
    }
    assert_eq!(outputs[0], outputs[1]);
}
